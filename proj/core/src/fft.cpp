#include "spamri/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "spamri/error.hpp"

namespace spamri {

namespace {

// FFTW planning is not thread-safe; execution of an existing plan on new
// arrays is. Plans are created once per (rows, cols, sign) and kept for the
// lifetime of the process.
class PlanCache {
 public:
  fftw_plan get(int rows, int cols, int sign) {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto key = std::make_tuple(rows, cols, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    std::vector<fftw_complex> scratch(static_cast<std::size_t>(rows) * cols);
    fftw_plan p = fftw_plan_dft_2d(rows, cols, scratch.data(), scratch.data(), sign,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (p == nullptr) throw Error(ErrorCode::InvalidParameter, "FFTW planning failed");
    plans_.emplace(key, p);
    return p;
  }

  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

// Circular shift moving index i to (i + shift) mod n along both axes.
void circshift(std::span<cplx> plane, int rows, int cols, int shift_r, int shift_c,
               std::vector<cplx>& scratch) {
  scratch.assign(plane.begin(), plane.end());
  for (int r = 0; r < rows; ++r) {
    const int rr = (r + shift_r) % rows;
    for (int c = 0; c < cols; ++c) {
      const int cc = (c + shift_c) % cols;
      plane[static_cast<std::size_t>(rr) * cols + cc] = scratch[static_cast<std::size_t>(r) * cols + c];
    }
  }
}

void transform(std::span<cplx> plane, int rows, int cols, int sign) {
  if (rows < 1 || cols < 1 || plane.size() != static_cast<std::size_t>(rows) * cols) {
    throw Error(ErrorCode::ShapeMismatch, "fft plane size does not match dimensions");
  }
  std::vector<cplx> scratch;
  // ifftshift: move the centre sample to index 0.
  circshift(plane, rows, cols, (rows + 1) / 2, (cols + 1) / 2, scratch);
  auto* data = reinterpret_cast<fftw_complex*>(plane.data());
  fftw_execute_dft(plan_cache().get(rows, cols, sign), data, data);
  // fftshift: move index 0 back to the centre.
  circshift(plane, rows, cols, rows / 2, cols / 2, scratch);
  const double scale = 1.0 / std::sqrt(static_cast<double>(rows) * cols);
  for (auto& v : plane) v *= scale;
}

}  // namespace

void fft2c_inplace(std::span<cplx> plane, int rows, int cols) {
  transform(plane, rows, cols, FFTW_FORWARD);
}

void ifft2c_inplace(std::span<cplx> plane, int rows, int cols) {
  transform(plane, rows, cols, FFTW_BACKWARD);
}

ComplexGrid fft2c(const ComplexGrid& image) {
  if (image.domain() != Domain::Image) {
    throw Error(ErrorCode::InvalidParameter, "fft2c expects an image-space grid");
  }
  ComplexGrid out = image.retagged(Domain::KSpace);
  for (int f = 0; f < out.frames(); ++f) fft2c_inplace(out.frame(f), out.rows(), out.cols());
  return out;
}

ComplexGrid ifft2c(const ComplexGrid& kspace) {
  if (kspace.domain() != Domain::KSpace) {
    throw Error(ErrorCode::InvalidParameter, "ifft2c expects a k-space grid");
  }
  ComplexGrid out = kspace.retagged(Domain::Image);
  for (int f = 0; f < out.frames(); ++f) ifft2c_inplace(out.frame(f), out.rows(), out.cols());
  return out;
}

}  // namespace spamri
