#include "spamri/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spamri/error.hpp"

namespace spamri {

namespace {

void check_dims(int a, int b, int c, const char* what) {
  if (a < 1 || b < 1 || c < 1) {
    throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": dimensions must be positive, got (" +
                                              std::to_string(a) + ", " + std::to_string(b) + ", " +
                                              std::to_string(c) + ")");
  }
}

std::size_t volume(int a, int b, int c) {
  return static_cast<std::size_t>(a) * static_cast<std::size_t>(b) * static_cast<std::size_t>(c);
}

}  // namespace

ComplexGrid::ComplexGrid(int frames, int rows, int cols, Domain domain)
    : frames_(frames), rows_(rows), cols_(cols), domain_(domain) {
  check_dims(frames, rows, cols, "ComplexGrid");
  data_.assign(volume(frames, rows, cols), cplx{});
}

ComplexGrid::ComplexGrid(int frames, int rows, int cols, std::vector<cplx> data, Domain domain)
    : frames_(frames), rows_(rows), cols_(cols), domain_(domain), data_(std::move(data)) {
  check_dims(frames, rows, cols, "ComplexGrid");
  if (data_.size() != volume(frames, rows, cols)) {
    throw Error(ErrorCode::ShapeMismatch, "ComplexGrid: payload size does not match shape");
  }
}

cplx& ComplexGrid::at(int frame, int row, int col) {
  if (frame < 0 || frame >= frames_ || row < 0 || row >= rows_ || col < 0 || col >= cols_) {
    throw Error(ErrorCode::IndexOutOfRange, "ComplexGrid::at");
  }
  return data_[index(frame, row, col)];
}

const cplx& ComplexGrid::at(int frame, int row, int col) const {
  return const_cast<ComplexGrid*>(this)->at(frame, row, col);
}

std::span<cplx> ComplexGrid::frame(int f) {
  if (f < 0 || f >= frames_) throw Error(ErrorCode::IndexOutOfRange, "ComplexGrid::frame");
  return std::span<cplx>(data_).subspan(static_cast<std::size_t>(f) * plane_size(), plane_size());
}

std::span<const cplx> ComplexGrid::frame(int f) const {
  if (f < 0 || f >= frames_) throw Error(ErrorCode::IndexOutOfRange, "ComplexGrid::frame");
  return std::span<const cplx>(data_).subspan(static_cast<std::size_t>(f) * plane_size(),
                                              plane_size());
}

ComplexGrid ComplexGrid::retagged(Domain domain) const {
  ComplexGrid out = *this;
  out.domain_ = domain;
  return out;
}

ComplexGrid& ComplexGrid::operator+=(const ComplexGrid& rhs) {
  require_same_shape(*this, rhs, "ComplexGrid::operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
  return *this;
}

ComplexGrid& ComplexGrid::operator-=(const ComplexGrid& rhs) {
  require_same_shape(*this, rhs, "ComplexGrid::operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
  return *this;
}

ComplexGrid& ComplexGrid::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

ComplexGrid& ComplexGrid::operator*=(cplx s) {
  for (auto& v : data_) v *= s;
  return *this;
}

double ComplexGrid::squared_norm() const {
  double acc = 0.0;
  for (const auto& v : data_) acc += std::norm(v);
  return acc;
}

double ComplexGrid::norm() const { return std::sqrt(squared_norm()); }

ComplexGrid operator+(ComplexGrid lhs, const ComplexGrid& rhs) { return lhs += rhs; }
ComplexGrid operator-(ComplexGrid lhs, const ComplexGrid& rhs) { return lhs -= rhs; }
ComplexGrid operator*(double s, ComplexGrid g) { return g *= s; }

cplx inner(const ComplexGrid& a, const ComplexGrid& b) {
  require_same_shape(a, b, "inner");
  cplx acc{};
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) acc += std::conj(da[i]) * db[i];
  return acc;
}

PseudoRealStack::PseudoRealStack(int channels, int rows, int cols)
    : channels_(channels), rows_(rows), cols_(cols) {
  check_dims(channels, rows, cols, "PseudoRealStack");
  data_.assign(volume(channels, rows, cols), 0.0);
}

PseudoRealStack::PseudoRealStack(int channels, int rows, int cols, std::vector<double> data)
    : channels_(channels), rows_(rows), cols_(cols), data_(std::move(data)) {
  check_dims(channels, rows, cols, "PseudoRealStack");
  if (data_.size() != volume(channels, rows, cols)) {
    throw Error(ErrorCode::ShapeMismatch, "PseudoRealStack: payload size does not match shape");
  }
}

PseudoRealStack& PseudoRealStack::operator+=(const PseudoRealStack& rhs) {
  require_same_shape(*this, rhs, "PseudoRealStack::operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
  return *this;
}

PseudoRealStack& PseudoRealStack::operator-=(const PseudoRealStack& rhs) {
  require_same_shape(*this, rhs, "PseudoRealStack::operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
  return *this;
}

PseudoRealStack& PseudoRealStack::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

double PseudoRealStack::squared_norm() const {
  double acc = 0.0;
  for (double v : data_) acc += v * v;
  return acc;
}

bool PseudoRealStack::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

PseudoRealStack operator+(PseudoRealStack lhs, const PseudoRealStack& rhs) { return lhs += rhs; }
PseudoRealStack operator-(PseudoRealStack lhs, const PseudoRealStack& rhs) { return lhs -= rhs; }
PseudoRealStack operator*(double s, PseudoRealStack x) { return x *= s; }

void require_same_shape(const PseudoRealStack& a, const PseudoRealStack& b, const char* what) {
  if (!a.same_shape(b)) throw Error(ErrorCode::ShapeMismatch, what);
}

void require_same_shape(const ComplexGrid& a, const ComplexGrid& b, const char* what) {
  if (!a.same_shape(b)) throw Error(ErrorCode::ShapeMismatch, what);
}

PseudoRealStack to_pseudo_real(const ComplexGrid& g) {
  PseudoRealStack s(2 * g.frames(), g.rows(), g.cols());
  const std::size_t plane = g.plane_size();
  auto src = g.data();
  auto dst = s.data();
  for (int f = 0; f < g.frames(); ++f) {
    const std::size_t in0 = static_cast<std::size_t>(f) * plane;
    const std::size_t re0 = static_cast<std::size_t>(2 * f) * plane;
    const std::size_t im0 = re0 + plane;
    for (std::size_t i = 0; i < plane; ++i) {
      dst[re0 + i] = src[in0 + i].real();
      dst[im0 + i] = src[in0 + i].imag();
    }
  }
  return s;
}

ComplexGrid from_pseudo_real(const PseudoRealStack& s) {
  if (s.channels() % 2 != 0) {
    throw Error(ErrorCode::MalformedStack,
                "channel count " + std::to_string(s.channels()) + " is odd");
  }
  ComplexGrid g(s.channels() / 2, s.rows(), s.cols(), Domain::Image);
  const std::size_t plane = g.plane_size();
  auto src = s.data();
  auto dst = g.data();
  for (int f = 0; f < g.frames(); ++f) {
    const std::size_t out0 = static_cast<std::size_t>(f) * plane;
    const std::size_t re0 = static_cast<std::size_t>(2 * f) * plane;
    const std::size_t im0 = re0 + plane;
    for (std::size_t i = 0; i < plane; ++i) dst[out0 + i] = cplx(src[re0 + i], src[im0 + i]);
  }
  return g;
}

double complex_std(const ComplexGrid& g) {
  auto d = g.data();
  cplx mean{};
  for (const auto& v : d) mean += v;
  mean /= static_cast<double>(d.size());
  double acc = 0.0;
  for (const auto& v : d) acc += std::norm(v - mean);
  return std::sqrt(acc / static_cast<double>(d.size()));
}

double max_magnitude(const ComplexGrid& g) {
  double m = 0.0;
  for (const auto& v : g.data()) m = std::max(m, std::abs(v));
  return m;
}

void validate(const NormParams& p) {
  if (!(p.std_scale > 0.0) || !(p.max_magnitude > 0.0) || !std::isfinite(p.std_scale) ||
      !std::isfinite(p.max_magnitude)) {
    throw Error(ErrorCode::InvalidParams, "normalization parameters must be finite and positive");
  }
}

std::pair<ComplexGrid, NormParams> normalize(const ComplexGrid& g) {
  const double sigma = complex_std(g);
  if (!(sigma > 0.0)) throw Error(ErrorCode::DegenerateInput, "standard deviation is zero");
  NormParams p;
  p.std_scale = sigma;
  p.max_magnitude = max_magnitude(g) / sigma;
  validate(p);
  ComplexGrid out = g;
  out *= 1.0 / sigma;
  out *= 1.0 / p.max_magnitude;
  return {std::move(out), p};
}

ComplexGrid denormalize(const ComplexGrid& g, const NormParams& p) {
  validate(p);
  ComplexGrid out = g;
  out *= p.max_magnitude;
  out *= p.std_scale;
  return out;
}

}  // namespace spamri
