#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace spamri {

enum class MaskPattern { Gaussian, Uniform, Radial };

MaskPattern parse_mask_pattern(std::string_view name);
std::string_view to_string(MaskPattern p);

/// Fully sampled auto-calibration block, in k-space cell coordinates.
struct AcsRect {
  int row0 = 0;
  int col0 = 0;
  int rows = 0;
  int cols = 0;

  bool operator==(const AcsRect&) const = default;
};

/// Binary k-space selection. Construction checks that the ACS block lies
/// inside the grid and is fully kept; validate() additionally rejects masks
/// that keep nothing.
class SamplingMask {
 public:
  SamplingMask() = default;
  SamplingMask(int rows, int cols, std::vector<std::uint8_t> keep,
               std::optional<AcsRect> acs = std::nullopt, double nominal_accel = 1.0);

  static SamplingMask full(int rows, int cols);

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  bool kept(int row, int col) const noexcept {
    return keep_[static_cast<std::size_t>(row) * cols_ + col] != 0;
  }
  std::span<const std::uint8_t> keep() const noexcept { return keep_; }
  const std::optional<AcsRect>& acs() const noexcept { return acs_; }
  double nominal_accel() const noexcept { return nominal_accel_; }
  std::size_t kept_count() const noexcept;

  void validate() const;

  bool operator==(const SamplingMask&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::uint8_t> keep_;
  std::optional<AcsRect> acs_;
  double nominal_accel_ = 1.0;
};

/// Phase-encode (column) masks. Both keep exactly round(cols / accel)
/// columns, including a centred band of acs_cols fully sampled columns.
SamplingMask gen_uniform_mask(int rows, int cols, double accel, int acs_cols);
SamplingMask gen_gaussian_mask(int rows, int cols, double accel, int acs_cols, std::uint64_t seed);

/// Golden-angle spokes through the grid centre, rasterised to the nearest
/// cell. The spoke count is bisected so the kept fraction lands within 10%
/// of 1/accel; the seed only sets the first spoke's angle.
SamplingMask gen_radial_mask(int rows, int cols, double accel, std::uint64_t seed);

/// H*W / kept cells (infinity for a mask that keeps nothing).
double effective_acceleration(const SamplingMask& m);

/// Masks are stored as u8 CXG1 tensors with dims (rows, cols). The ACS block
/// and nominal acceleration are not stored; a loaded mask reports its
/// effective acceleration as nominal.
void save_mask(const std::filesystem::path& path, const SamplingMask& m);
SamplingMask load_mask(const std::filesystem::path& path);

}  // namespace spamri
