#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace spamri {

using cplx = std::complex<double>;

enum class Domain : unsigned char { Image, KSpace };

/// A stack of 2D complex planes stored frame-major, row-major within a frame.
/// The shape is fixed at construction; only element values may change.
class ComplexGrid {
 public:
  ComplexGrid() = default;
  ComplexGrid(int frames, int rows, int cols, Domain domain = Domain::Image);
  ComplexGrid(int frames, int rows, int cols, std::vector<cplx> data,
              Domain domain = Domain::Image);

  int frames() const noexcept { return frames_; }
  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(rows_) * static_cast<std::size_t>(cols_);
  }
  std::size_t size() const noexcept { return data_.size(); }
  Domain domain() const noexcept { return domain_; }

  cplx& operator()(int frame, int row, int col) { return data_[index(frame, row, col)]; }
  const cplx& operator()(int frame, int row, int col) const {
    return data_[index(frame, row, col)];
  }
  cplx& at(int frame, int row, int col);
  const cplx& at(int frame, int row, int col) const;

  std::span<cplx> data() noexcept { return data_; }
  std::span<const cplx> data() const noexcept { return data_; }
  std::span<cplx> frame(int f);
  std::span<const cplx> frame(int f) const;

  bool same_shape(const ComplexGrid& other) const noexcept {
    return frames_ == other.frames_ && rows_ == other.rows_ && cols_ == other.cols_;
  }

  /// Copy of this grid carrying a different domain tag. Only the FFT layer
  /// and file loaders should need this.
  ComplexGrid retagged(Domain domain) const;

  ComplexGrid& operator+=(const ComplexGrid& rhs);
  ComplexGrid& operator-=(const ComplexGrid& rhs);
  ComplexGrid& operator*=(double s);
  ComplexGrid& operator*=(cplx s);

  double norm() const;
  double squared_norm() const;

 private:
  std::size_t index(int frame, int row, int col) const noexcept {
    return (static_cast<std::size_t>(frame) * rows_ + row) * cols_ + col;
  }

  int frames_ = 0;
  int rows_ = 0;
  int cols_ = 0;
  Domain domain_ = Domain::Image;
  std::vector<cplx> data_;
};

ComplexGrid operator+(ComplexGrid lhs, const ComplexGrid& rhs);
ComplexGrid operator-(ComplexGrid lhs, const ComplexGrid& rhs);
ComplexGrid operator*(double s, ComplexGrid g);

/// Inner product <a, b> = sum conj(a) * b.
cplx inner(const ComplexGrid& a, const ComplexGrid& b);

/// Real-valued channel stack; channel 2k is Re(frame k), 2k+1 is Im(frame k).
class PseudoRealStack {
 public:
  PseudoRealStack() = default;
  PseudoRealStack(int channels, int rows, int cols);
  PseudoRealStack(int channels, int rows, int cols, std::vector<double> data);

  int channels() const noexcept { return channels_; }
  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(int ch, int row, int col) {
    return data_[(static_cast<std::size_t>(ch) * rows_ + row) * cols_ + col];
  }
  double operator()(int ch, int row, int col) const {
    return data_[(static_cast<std::size_t>(ch) * rows_ + row) * cols_ + col];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool same_shape(const PseudoRealStack& other) const noexcept {
    return channels_ == other.channels_ && rows_ == other.rows_ && cols_ == other.cols_;
  }

  PseudoRealStack& operator+=(const PseudoRealStack& rhs);
  PseudoRealStack& operator-=(const PseudoRealStack& rhs);
  PseudoRealStack& operator*=(double s);

  double squared_norm() const;
  bool all_finite() const;

 private:
  int channels_ = 0;
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

PseudoRealStack operator+(PseudoRealStack lhs, const PseudoRealStack& rhs);
PseudoRealStack operator-(PseudoRealStack lhs, const PseudoRealStack& rhs);
PseudoRealStack operator*(double s, PseudoRealStack x);

/// Throws ShapeMismatch unless a and b have identical shapes.
void require_same_shape(const PseudoRealStack& a, const PseudoRealStack& b, const char* what);
void require_same_shape(const ComplexGrid& a, const ComplexGrid& b, const char* what);

PseudoRealStack to_pseudo_real(const ComplexGrid& g);
ComplexGrid from_pseudo_real(const PseudoRealStack& s);

/// Scalars that map a grid into the unit range and back:
/// normalized = raw / (std_scale * max_magnitude).
struct NormParams {
  double std_scale = 1.0;
  double max_magnitude = 1.0;

  double factor() const noexcept { return std_scale * max_magnitude; }
};

/// Standard deviation of the complex samples (sqrt of mean |z - mean|^2),
/// pooled over every frame.
double complex_std(const ComplexGrid& g);
double max_magnitude(const ComplexGrid& g);

/// Divides by the pooled standard deviation, then by the resulting maximum
/// magnitude, so every real and imaginary part lands in [-1, 1].
std::pair<ComplexGrid, NormParams> normalize(const ComplexGrid& g);
ComplexGrid denormalize(const ComplexGrid& g, const NormParams& p);
void validate(const NormParams& p);

}  // namespace spamri
