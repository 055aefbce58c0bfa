#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "spamri/grid.hpp"
#include "spamri/masks.hpp"
#include "spamri/tensor_io.hpp"

namespace spamri {

/// Per-coil complex weights, stored coil-major then row-major, pixel-wise
/// normalised so that sum_c |s_c(p)|^2 == 1.
class CoilSensitivities {
 public:
  CoilSensitivities() = default;
  /// Takes raw maps and normalises them pixel-wise. Pixels where every coil
  /// is zero are rejected.
  CoilSensitivities(int coils, int rows, int cols, std::vector<cplx> maps);

  static CoilSensitivities unit(int rows, int cols);

  int coils() const noexcept { return coils_; }
  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::span<const cplx> map(int coil) const;
  std::span<const cplx> data() const noexcept { return maps_; }

 private:
  int coils_ = 0;
  int rows_ = 0;
  int cols_ = 0;
  std::vector<cplx> maps_;
};

/// Smooth complex Gaussian bumps centred at evenly spaced positions on the
/// field-of-view boundary, normalised pixel-wise.
CoilSensitivities gen_coil_maps(int n_coils, int rows, int cols, std::uint64_t seed);

/// Multi-coil k-space, axis order (coil, frame, row, col).
class KSpaceData {
 public:
  KSpaceData() = default;
  KSpaceData(int coils, int frames, int rows, int cols);
  KSpaceData(int coils, int frames, int rows, int cols, std::vector<cplx> data);

  int coils() const noexcept { return coils_; }
  int frames() const noexcept { return frames_; }
  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(rows_) * static_cast<std::size_t>(cols_);
  }

  std::span<cplx> plane(int coil, int frame);
  std::span<const cplx> plane(int coil, int frame) const;
  std::span<cplx> data() noexcept { return data_; }
  std::span<const cplx> data() const noexcept { return data_; }

  bool same_shape(const KSpaceData& o) const noexcept {
    return coils_ == o.coils_ && frames_ == o.frames_ && rows_ == o.rows_ && cols_ == o.cols_;
  }

  KSpaceData& operator+=(const KSpaceData& rhs);
  KSpaceData& operator-=(const KSpaceData& rhs);
  KSpaceData& operator*=(double s);

  double squared_norm() const;
  double norm() const;

 private:
  int coils_ = 0;
  int frames_ = 0;
  int rows_ = 0;
  int cols_ = 0;
  std::vector<cplx> data_;
};

KSpaceData operator+(KSpaceData lhs, const KSpaceData& rhs);
KSpaceData operator-(KSpaceData lhs, const KSpaceData& rhs);
cplx inner(const KSpaceData& a, const KSpaceData& b);

/// A = M F S: coil weighting, centred orthonormal 2D DFT per frame, then the
/// sampling mask. The adjoint is the Hermitian one, sum_c conj(s_c) F^-1 M y_c.
class EncodingOperator {
 public:
  EncodingOperator(SamplingMask mask, CoilSensitivities coils);

  const SamplingMask& mask() const noexcept { return mask_; }
  const CoilSensitivities& coils() const noexcept { return coils_; }
  int rows() const noexcept { return mask_.rows(); }
  int cols() const noexcept { return mask_.cols(); }

  KSpaceData forward(const ComplexGrid& x) const;
  ComplexGrid adjoint(const KSpaceData& y) const;

  /// Zeroes every masked-out sample in place.
  void apply_mask(KSpaceData& y) const;

 private:
  void check(const ComplexGrid& x) const;
  void check(const KSpaceData& y) const;

  SamplingMask mask_;
  CoilSensitivities coils_;
};

inline KSpaceData forward(const EncodingOperator& op, const ComplexGrid& x) { return op.forward(x); }
inline ComplexGrid adjoint(const EncodingOperator& op, const KSpaceData& y) { return op.adjoint(y); }

/// The zero-filled reconstruction baseline (identical to the adjoint).
ComplexGrid zero_filled(const EncodingOperator& op, const KSpaceData& y);

/// Coils are stored as complex64 (coil, row, col); k-space as complex64
/// (coil, frame, row, col). Loading coils renormalises them pixel-wise.
Tensor coils_to_tensor(const CoilSensitivities& s);
CoilSensitivities coils_from_tensor(const Tensor& t);
Tensor kspace_to_tensor(const KSpaceData& y);
KSpaceData kspace_from_tensor(const Tensor& t);

void save_coils(const std::filesystem::path& path, const CoilSensitivities& s);
CoilSensitivities load_coils(const std::filesystem::path& path);
void save_kspace(const std::filesystem::path& path, const KSpaceData& y);
KSpaceData load_kspace(const std::filesystem::path& path);

}  // namespace spamri
