#include "spamri/encoding.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "spamri/error.hpp"
#include "spamri/fft.hpp"
#include "spamri/tensor_io.hpp"

namespace spamri {

CoilSensitivities::CoilSensitivities(int coils, int rows, int cols, std::vector<cplx> maps)
    : coils_(coils), rows_(rows), cols_(cols), maps_(std::move(maps)) {
  if (coils < 1 || rows < 1 || cols < 1 ||
      maps_.size() != static_cast<std::size_t>(coils) * rows * cols) {
    throw Error(ErrorCode::ShapeMismatch, "coil maps do not match (coils, rows, cols)");
  }
  const std::size_t plane = static_cast<std::size_t>(rows) * cols;
  for (std::size_t p = 0; p < plane; ++p) {
    double energy = 0.0;
    for (int c = 0; c < coils; ++c) energy += std::norm(maps_[c * plane + p]);
    if (!(energy > 0.0) || !std::isfinite(energy)) {
      throw Error(ErrorCode::DegenerateInput, "coil maps vanish at pixel " + std::to_string(p));
    }
    const double inv = 1.0 / std::sqrt(energy);
    for (int c = 0; c < coils; ++c) maps_[c * plane + p] *= inv;
  }
}

CoilSensitivities CoilSensitivities::unit(int rows, int cols) {
  return CoilSensitivities(1, rows, cols,
                           std::vector<cplx>(static_cast<std::size_t>(rows) * cols, cplx(1.0, 0.0)));
}

std::span<const cplx> CoilSensitivities::map(int coil) const {
  if (coil < 0 || coil >= coils_) throw Error(ErrorCode::IndexOutOfRange, "coil index");
  const std::size_t plane = static_cast<std::size_t>(rows_) * cols_;
  return std::span<const cplx>(maps_).subspan(coil * plane, plane);
}

CoilSensitivities gen_coil_maps(int n_coils, int rows, int cols, std::uint64_t seed) {
  if (n_coils < 1) throw Error(ErrorCode::InvalidParameter, "need at least one coil");
  if (rows < 1 || cols < 1) throw Error(ErrorCode::InvalidParameter, "coil map dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double offset = 2.0 * std::numbers::pi * unit(rng);
  const double width = 0.45 * std::max(rows, cols);
  const std::size_t plane = static_cast<std::size_t>(rows) * cols;
  std::vector<cplx> maps(static_cast<std::size_t>(n_coils) * plane);
  for (int c = 0; c < n_coils; ++c) {
    const double angle = offset + 2.0 * std::numbers::pi * c / n_coils;
    const double r0 = 0.5 * rows + 0.5 * rows * std::sin(angle);
    const double c0 = 0.5 * cols + 0.5 * cols * std::cos(angle);
    const double phase0 = 2.0 * std::numbers::pi * unit(rng);
    const double ramp_r = (unit(rng) - 0.5) * 2.0 * std::numbers::pi / rows;
    const double ramp_c = (unit(rng) - 0.5) * 2.0 * std::numbers::pi / cols;
    for (int r = 0; r < rows; ++r) {
      for (int k = 0; k < cols; ++k) {
        const double d2 = (r - r0) * (r - r0) + (k - c0) * (k - c0);
        const double mag = std::exp(-0.5 * d2 / (width * width));
        const double phase = phase0 + ramp_r * r + ramp_c * k;
        maps[c * plane + static_cast<std::size_t>(r) * cols + k] = std::polar(mag, phase);
      }
    }
  }
  return CoilSensitivities(n_coils, rows, cols, std::move(maps));
}

KSpaceData::KSpaceData(int coils, int frames, int rows, int cols)
    : coils_(coils), frames_(frames), rows_(rows), cols_(cols) {
  if (coils < 1 || frames < 1 || rows < 1 || cols < 1) {
    throw Error(ErrorCode::ShapeMismatch, "k-space dimensions must be positive");
  }
  data_.assign(static_cast<std::size_t>(coils) * frames * rows * cols, cplx{});
}

KSpaceData::KSpaceData(int coils, int frames, int rows, int cols, std::vector<cplx> data)
    : KSpaceData(coils, frames, rows, cols) {
  if (data.size() != data_.size()) throw Error(ErrorCode::ShapeMismatch, "k-space payload size");
  data_ = std::move(data);
}

std::span<cplx> KSpaceData::plane(int coil, int frame) {
  if (coil < 0 || coil >= coils_ || frame < 0 || frame >= frames_) {
    throw Error(ErrorCode::IndexOutOfRange, "k-space plane index");
  }
  return std::span<cplx>(data_).subspan((static_cast<std::size_t>(coil) * frames_ + frame) * plane_size(),
                                        plane_size());
}

std::span<const cplx> KSpaceData::plane(int coil, int frame) const {
  return const_cast<KSpaceData*>(this)->plane(coil, frame);
}

KSpaceData& KSpaceData::operator+=(const KSpaceData& rhs) {
  if (!same_shape(rhs)) throw Error(ErrorCode::ShapeMismatch, "KSpaceData::operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
  return *this;
}

KSpaceData& KSpaceData::operator-=(const KSpaceData& rhs) {
  if (!same_shape(rhs)) throw Error(ErrorCode::ShapeMismatch, "KSpaceData::operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
  return *this;
}

KSpaceData& KSpaceData::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

double KSpaceData::squared_norm() const {
  double acc = 0.0;
  for (const auto& v : data_) acc += std::norm(v);
  return acc;
}

double KSpaceData::norm() const { return std::sqrt(squared_norm()); }

KSpaceData operator+(KSpaceData lhs, const KSpaceData& rhs) { return lhs += rhs; }
KSpaceData operator-(KSpaceData lhs, const KSpaceData& rhs) { return lhs -= rhs; }

cplx inner(const KSpaceData& a, const KSpaceData& b) {
  if (!a.same_shape(b)) throw Error(ErrorCode::ShapeMismatch, "inner(KSpaceData)");
  cplx acc{};
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) acc += std::conj(da[i]) * db[i];
  return acc;
}

EncodingOperator::EncodingOperator(SamplingMask mask, CoilSensitivities coils)
    : mask_(std::move(mask)), coils_(std::move(coils)) {
  if (mask_.rows() != coils_.rows() || mask_.cols() != coils_.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "mask and coil maps disagree on grid size");
  }
}

void EncodingOperator::check(const ComplexGrid& x) const {
  if (x.rows() != rows() || x.cols() != cols()) {
    throw Error(ErrorCode::ShapeMismatch, "image grid does not match the encoding operator");
  }
  if (x.domain() != Domain::Image) {
    throw Error(ErrorCode::InvalidParameter, "encoding operator expects an image-space grid");
  }
}

void EncodingOperator::check(const KSpaceData& y) const {
  if (y.coils() != coils_.coils() || y.rows() != rows() || y.cols() != cols()) {
    throw Error(ErrorCode::ShapeMismatch, "k-space data does not match the encoding operator");
  }
}

void EncodingOperator::apply_mask(KSpaceData& y) const {
  check(y);
  const auto keep = mask_.keep();
  for (int c = 0; c < y.coils(); ++c) {
    for (int f = 0; f < y.frames(); ++f) {
      auto p = y.plane(c, f);
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (!keep[i]) p[i] = cplx{};
      }
    }
  }
}

KSpaceData EncodingOperator::forward(const ComplexGrid& x) const {
  check(x);
  KSpaceData y(coils_.coils(), x.frames(), rows(), cols());
  const auto keep = mask_.keep();
  for (int c = 0; c < coils_.coils(); ++c) {
    const auto s = coils_.map(c);
    for (int f = 0; f < x.frames(); ++f) {
      auto p = y.plane(c, f);
      const auto img = x.frame(f);
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = s[i] * img[i];
      fft2c_inplace(p, rows(), cols());
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (!keep[i]) p[i] = cplx{};
      }
    }
  }
  return y;
}

ComplexGrid EncodingOperator::adjoint(const KSpaceData& y) const {
  check(y);
  ComplexGrid x(y.frames(), rows(), cols(), Domain::Image);
  const auto keep = mask_.keep();
  std::vector<cplx> buf(y.plane_size());
  for (int c = 0; c < coils_.coils(); ++c) {
    const auto s = coils_.map(c);
    for (int f = 0; f < y.frames(); ++f) {
      const auto p = y.plane(c, f);
      for (std::size_t i = 0; i < p.size(); ++i) buf[i] = keep[i] ? p[i] : cplx{};
      ifft2c_inplace(buf, rows(), cols());
      auto img = x.frame(f);
      for (std::size_t i = 0; i < buf.size(); ++i) img[i] += std::conj(s[i]) * buf[i];
    }
  }
  return x;
}

ComplexGrid zero_filled(const EncodingOperator& op, const KSpaceData& y) { return op.adjoint(y); }

Tensor coils_to_tensor(const CoilSensitivities& s) {
  return make_complex_tensor({static_cast<std::uint64_t>(s.coils()), static_cast<std::uint64_t>(s.rows()),
                              static_cast<std::uint64_t>(s.cols())},
                             s.data());
}

CoilSensitivities coils_from_tensor(const Tensor& t) {
  if (t.dims.size() != 3) throw Error(ErrorCode::Format, "coil tensor must be (coil, row, col)");
  return CoilSensitivities(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]),
                           static_cast<int>(t.dims[2]), complex_values(t));
}

Tensor kspace_to_tensor(const KSpaceData& y) {
  return make_complex_tensor({static_cast<std::uint64_t>(y.coils()), static_cast<std::uint64_t>(y.frames()),
                              static_cast<std::uint64_t>(y.rows()), static_cast<std::uint64_t>(y.cols())},
                             y.data());
}

KSpaceData kspace_from_tensor(const Tensor& t) {
  if (t.dims.size() != 4) throw Error(ErrorCode::Format, "k-space tensor must be (coil, frame, row, col)");
  return KSpaceData(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]),
                    static_cast<int>(t.dims[2]), static_cast<int>(t.dims[3]), complex_values(t));
}

void save_coils(const std::filesystem::path& path, const CoilSensitivities& s) {
  save_tensor(path, coils_to_tensor(s));
}

CoilSensitivities load_coils(const std::filesystem::path& path) { return coils_from_tensor(load_tensor(path)); }

void save_kspace(const std::filesystem::path& path, const KSpaceData& y) {
  save_tensor(path, kspace_to_tensor(y));
}

KSpaceData load_kspace(const std::filesystem::path& path) { return kspace_from_tensor(load_tensor(path)); }

}  // namespace spamri
