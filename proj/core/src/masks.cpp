#include "spamri/masks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "spamri/error.hpp"
#include "spamri/tensor_io.hpp"

namespace spamri {

namespace {

constexpr double kGoldenAngleDeg = 111.24611797498108;

void check_common(int rows, int cols, double accel) {
  if (rows < 1 || cols < 1) throw Error(ErrorCode::InvalidParameter, "mask dimensions must be positive");
  if (!(accel >= 1.0) || !std::isfinite(accel)) {
    throw Error(ErrorCode::InvalidParameter, "acceleration must be >= 1");
  }
}

int column_budget(int cols, double accel, int acs_cols) {
  if (acs_cols < 0) throw Error(ErrorCode::InvalidParameter, "acs width must be non-negative");
  if (acs_cols > 0 && !(acs_cols < cols / accel)) {
    throw Error(ErrorCode::InfeasibleMask,
                "ACS band of " + std::to_string(acs_cols) + " columns exceeds the budget of " +
                    std::to_string(cols / accel) + " columns");
  }
  const int budget = static_cast<int>(std::lround(cols / accel));
  return std::clamp(budget, std::max(1, acs_cols), cols);
}

std::optional<AcsRect> centred_band(int rows, int cols, int acs_cols) {
  if (acs_cols == 0) return std::nullopt;
  return AcsRect{0, cols / 2 - acs_cols / 2, rows, acs_cols};
}

SamplingMask from_columns(int rows, int cols, const std::vector<bool>& column_kept,
                          std::optional<AcsRect> acs, double accel) {
  std::vector<std::uint8_t> keep(static_cast<std::size_t>(rows) * cols, 0);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (column_kept[c]) keep[static_cast<std::size_t>(r) * cols + c] = 1;
    }
  }
  SamplingMask m(rows, cols, std::move(keep), acs, accel);
  m.validate();
  return m;
}

std::vector<bool> acs_columns(int cols, const std::optional<AcsRect>& acs) {
  std::vector<bool> kept(cols, false);
  if (acs) {
    for (int c = acs->col0; c < acs->col0 + acs->cols; ++c) kept[c] = true;
  }
  return kept;
}

}  // namespace

MaskPattern parse_mask_pattern(std::string_view name) {
  if (name == "gaussian") return MaskPattern::Gaussian;
  if (name == "uniform") return MaskPattern::Uniform;
  if (name == "radial") return MaskPattern::Radial;
  throw Error(ErrorCode::InvalidParameter, "unknown mask pattern '" + std::string(name) + "'");
}

std::string_view to_string(MaskPattern p) {
  switch (p) {
    case MaskPattern::Gaussian: return "gaussian";
    case MaskPattern::Uniform: return "uniform";
    case MaskPattern::Radial: return "radial";
  }
  return "unknown";
}

SamplingMask::SamplingMask(int rows, int cols, std::vector<std::uint8_t> keep,
                           std::optional<AcsRect> acs, double nominal_accel)
    : rows_(rows), cols_(cols), keep_(std::move(keep)), acs_(acs), nominal_accel_(nominal_accel) {
  if (rows < 1 || cols < 1 || keep_.size() != static_cast<std::size_t>(rows) * cols) {
    throw Error(ErrorCode::ShapeMismatch, "mask payload does not match its dimensions");
  }
  for (auto& k : keep_) k = k ? 1 : 0;
  if (!(nominal_accel > 0.0)) throw Error(ErrorCode::InvalidParameter, "nominal acceleration must be positive");
  if (acs_) {
    const auto& a = *acs_;
    if (a.row0 < 0 || a.col0 < 0 || a.rows < 1 || a.cols < 1 || a.row0 + a.rows > rows ||
        a.col0 + a.cols > cols) {
      throw Error(ErrorCode::InfeasibleMask, "ACS rectangle is not contained in the grid");
    }
    for (int r = a.row0; r < a.row0 + a.rows; ++r) {
      for (int c = a.col0; c < a.col0 + a.cols; ++c) {
        if (!kept(r, c)) throw Error(ErrorCode::InfeasibleMask, "ACS cell is not kept");
      }
    }
  }
}

SamplingMask SamplingMask::full(int rows, int cols) {
  return SamplingMask(rows, cols, std::vector<std::uint8_t>(static_cast<std::size_t>(rows) * cols, 1),
                      std::nullopt, 1.0);
}

std::size_t SamplingMask::kept_count() const noexcept {
  return static_cast<std::size_t>(std::count(keep_.begin(), keep_.end(), std::uint8_t{1}));
}

void SamplingMask::validate() const {
  if (kept_count() == 0) throw Error(ErrorCode::InfeasibleMask, "mask keeps no k-space cells");
}

SamplingMask gen_uniform_mask(int rows, int cols, double accel, int acs_cols) {
  check_common(rows, cols, accel);
  const int budget = column_budget(cols, accel, acs_cols);
  const auto acs = centred_band(rows, cols, acs_cols);
  auto kept = acs_columns(cols, acs);

  std::vector<int> candidates;
  for (int c = 0; c < cols; ++c) {
    if (!kept[c]) candidates.push_back(c);
  }
  const int extra = budget - acs_cols;
  // Equispaced picks over the non-ACS columns, first pick at column 0.
  for (int i = 0; i < extra; ++i) {
    const auto idx = static_cast<std::size_t>(
        (static_cast<long long>(i) * static_cast<long long>(candidates.size())) / extra);
    kept[candidates[idx]] = true;
  }
  return from_columns(rows, cols, kept, acs, accel);
}

SamplingMask gen_gaussian_mask(int rows, int cols, double accel, int acs_cols, std::uint64_t seed) {
  check_common(rows, cols, accel);
  const int budget = column_budget(cols, accel, acs_cols);
  const auto acs = centred_band(rows, cols, acs_cols);
  auto kept = acs_columns(cols, acs);

  const double centre = cols / 2.0;
  const double sd = cols / 6.0;
  std::vector<double> weight(cols, 0.0);
  for (int c = 0; c < cols; ++c) {
    if (!kept[c]) weight[c] = std::exp(-0.5 * ((c - centre) / sd) * ((c - centre) / sd));
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int drawn = acs_cols; drawn < budget; ++drawn) {
    const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
    double u = unit(rng) * total;
    int pick = -1;
    for (int c = 0; c < cols; ++c) {
      if (weight[c] <= 0.0) continue;
      pick = c;
      u -= weight[c];
      if (u < 0.0) break;
    }
    kept[pick] = true;
    weight[pick] = 0.0;
  }
  return from_columns(rows, cols, kept, acs, accel);
}

SamplingMask gen_radial_mask(int rows, int cols, double accel, std::uint64_t seed) {
  check_common(rows, cols, accel);
  const std::size_t cells = static_cast<std::size_t>(rows) * cols;
  const int max_spokes = 8 * (rows + cols);

  std::mt19937_64 rng(seed);
  const double theta0 = std::uniform_real_distribution<double>(0.0, std::numbers::pi)(rng);
  const double golden = kGoldenAngleDeg * std::numbers::pi / 180.0;
  const double cr = rows / 2;
  const double cc = cols / 2;
  const double radius = 0.5 * std::hypot(rows, cols) + 1.0;

  // first_spoke[i]: index of the first spoke that covers cell i. Spoke sets
  // are nested in the spoke count, so coverage is monotone.
  std::vector<int> first_spoke(cells, std::numeric_limits<int>::max());
  for (int k = 0; k < max_spokes; ++k) {
    const double theta = theta0 + k * golden;
    const double dr = std::sin(theta);
    const double dc = std::cos(theta);
    for (double s = -radius; s <= radius; s += 0.5) {
      const long r = std::lround(cr + s * dr);
      const long c = std::lround(cc + s * dc);
      if (r < 0 || r >= rows || c < 0 || c >= cols) continue;
      auto& f = first_spoke[static_cast<std::size_t>(r) * cols + c];
      f = std::min(f, k);
    }
  }
  auto fraction = [&](int n) {
    const auto covered = std::count_if(first_spoke.begin(), first_spoke.end(),
                                       [n](int f) { return f < n; });
    return static_cast<double>(covered) / static_cast<double>(cells);
  };

  const double target = 1.0 / accel;
  int lo = 1;
  int hi = max_spokes;
  if (fraction(hi) < target) {
    lo = hi;
  } else {
    while (lo < hi) {
      const int mid = lo + (hi - lo) / 2;
      if (fraction(mid) >= target) hi = mid; else lo = mid + 1;
    }
  }
  int n = lo;
  if (n > 1 && std::abs(fraction(n - 1) - target) < std::abs(fraction(n) - target)) --n;

  const double realised = fraction(n);
  const bool saturated = accel == 1.0 && realised >= 0.9;
  if (!saturated && std::abs(realised - target) > 0.1 * target) {
    throw Error(ErrorCode::InfeasibleMask,
                "radial mask cannot reach kept fraction " + std::to_string(target) +
                    " (closest " + std::to_string(realised) + ")");
  }
  std::vector<std::uint8_t> keep(cells, 0);
  for (std::size_t i = 0; i < cells; ++i) keep[i] = first_spoke[i] < n ? 1 : 0;
  SamplingMask m(rows, cols, std::move(keep), std::nullopt, accel);
  m.validate();
  return m;
}

double effective_acceleration(const SamplingMask& m) {
  const auto kept = m.kept_count();
  if (kept == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(m.rows()) * m.cols() / static_cast<double>(kept);
}

void save_mask(const std::filesystem::path& path, const SamplingMask& m) {
  save_tensor(path, make_u8_tensor({static_cast<std::uint64_t>(m.rows()),
                                    static_cast<std::uint64_t>(m.cols())},
                                   m.keep()));
}

SamplingMask load_mask(const std::filesystem::path& path) {
  const Tensor t = load_tensor(path);
  if (t.dtype != DType::U8 || t.dims.size() != 2) {
    throw Error(ErrorCode::Format, "mask file must hold a 2D u8 tensor");
  }
  SamplingMask probe(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), u8_values(t));
  SamplingMask m(probe.rows(), probe.cols(), std::vector<std::uint8_t>(probe.keep().begin(), probe.keep().end()),
                 std::nullopt, std::max(1.0, effective_acceleration(probe)));
  m.validate();
  return m;
}

}  // namespace spamri
