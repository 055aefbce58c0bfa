#pragma once

#include <span>

#include "spamri/grid.hpp"

namespace spamri {

/// Centered, orthonormal 2D DFT of one row-major plane, in place. DC sits at
/// (rows/2, cols/2) on both sides and both directions scale by 1/sqrt(rows*cols).
void fft2c_inplace(std::span<cplx> plane, int rows, int cols);
void ifft2c_inplace(std::span<cplx> plane, int rows, int cols);

/// Per-frame transforms. fft2c expects an image-space grid and returns a
/// k-space grid; ifft2c is the reverse. Passing the wrong domain throws.
ComplexGrid fft2c(const ComplexGrid& image);
ComplexGrid ifft2c(const ComplexGrid& kspace);

}  // namespace spamri
