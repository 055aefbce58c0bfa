#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "spamri/error.hpp"
#include "spamri/grid.hpp"

namespace spamri::testing {

inline ComplexGrid random_grid(int frames, int rows, int cols, std::uint64_t seed,
                               Domain domain = Domain::Image) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  ComplexGrid g(frames, rows, cols, domain);
  for (auto& v : g.data()) v = {n(rng), n(rng)};
  return g;
}

inline PseudoRealStack random_stack(int channels, int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  PseudoRealStack s(channels, rows, cols);
  for (auto& v : s.data()) v = n(rng);
  return s;
}

inline double rel_error(const ComplexGrid& a, const ComplexGrid& b) { return (a - b).norm() / b.norm(); }

inline double rel_error(const PseudoRealStack& a, const PseudoRealStack& b) {
  return std::sqrt((a - b).squared_norm() / b.squared_norm());
}

// Centred orthonormal DFT evaluated term by term.
inline std::vector<cplx> naive_dft2c(const std::vector<cplx>& x, int rows, int cols, int sign) {
  std::vector<cplx> out(x.size());
  const double scale = 1.0 / std::sqrt(static_cast<double>(rows) * cols);
  const int hr = rows / 2;
  const int hc = cols / 2;
  for (int kr = 0; kr < rows; ++kr) {
    for (int kc = 0; kc < cols; ++kc) {
      cplx acc = 0.0;
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          const double phase = sign * 2.0 * std::numbers::pi *
                               (static_cast<double>((kr - hr) * (r - hr)) / rows +
                                static_cast<double>((kc - hc) * (c - hc)) / cols);
          acc += x[r * cols + c] * std::polar(1.0, phase);
        }
      }
      out[kr * cols + kc] = acc * scale;
    }
  }
  return out;
}

}  // namespace spamri::testing

#define EXPECT_SPAMRI_ERROR(stmt, expected_code)                        \
  do {                                                                  \
    try {                                                               \
      stmt;                                                             \
      ADD_FAILURE() << "expected " << ::spamri::to_string(expected_code); \
    } catch (const ::spamri::Error& e) {                                \
      EXPECT_EQ(e.code(), expected_code) << e.what();                   \
    }                                                                   \
  } while (0)
