#include <gtest/gtest.h>

#include <cmath>

#include "spamri/consistency.hpp"
#include "spamri/fft.hpp"
#include "test_util.hpp"

namespace spamri {
namespace {

using testing::random_grid;
using testing::random_stack;
using testing::rel_error;

KSpaceData random_kspace(int coils, int rows, int cols, std::uint64_t seed) {
  const ComplexGrid g = random_grid(coils, rows, cols, seed);
  return KSpaceData(coils, 1, rows, cols, std::vector<cplx>(g.data().begin(), g.data().end()));
}

SamplingMask random_point_mask(int rows, int cols, std::uint64_t seed, double p = 0.4) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(p);
  std::vector<std::uint8_t> m(static_cast<std::size_t>(rows) * cols);
  for (auto& v : m) v = keep(rng);
  return SamplingMask(rows, cols, m);
}

EncodingOperator unit_op(const SamplingMask& m) { return EncodingOperator(m, CoilSensitivities::unit(m.rows(), m.cols())); }

FrequencyWeights flat_weights() { return FrequencyWeights{1.0, 1.0, 32, 32}; }

TEST(Residual, ZeroAtTruthAndMinusYAtZero) {
  const EncodingOperator op(gen_gaussian_mask(16, 16, 4.0, 2, 1), gen_coil_maps(4, 16, 16, 1));
  const ComplexGrid x = random_grid(1, 16, 16, 1);
  const KSpaceData y = op.forward(x);
  EXPECT_EQ(residual(x, y, op).norm(), 0.0);
  const KSpaceData r0 = residual(ComplexGrid(1, 16, 16), y, op);
  for (std::size_t i = 0; i < y.data().size(); ++i) EXPECT_EQ(r0.data()[i], -y.data()[i]);
}

TEST(Residual, MatchesForwardMinusYOnMask) {
  const SamplingMask m = random_point_mask(16, 16, 2);
  const EncodingOperator op(m, gen_coil_maps(3, 16, 16, 2));
  const ComplexGrid x = random_grid(1, 16, 16, 3);
  const KSpaceData y = random_kspace(3, 16, 16, 4);
  const KSpaceData r = residual(x, y, op);
  const KSpaceData ax = op.forward(x);
  for (int c = 0; c < 3; ++c) {
    for (int p = 0; p < 256; ++p) {
      const cplx expected = m.keep()[p] ? ax.plane(c, 0)[p] - y.plane(c, 0)[p] : cplx(0.0);
      EXPECT_NEAR(std::abs(r.plane(c, 0)[p] - expected), 0.0, 1e-14);
    }
  }
}

TEST(Residual, IsLinear) {
  const EncodingOperator op(random_point_mask(16, 16, 5), gen_coil_maps(2, 16, 16, 5));
  const ComplexGrid a = random_grid(1, 16, 16, 6);
  const ComplexGrid b = random_grid(1, 16, 16, 7);
  const KSpaceData y1 = random_kspace(2, 16, 16, 8);
  const KSpaceData y2 = random_kspace(2, 16, 16, 9);
  const KSpaceData lhs = residual(a + b, y1 + y2, op);
  const KSpaceData rhs = residual(a, y1, op) + residual(b, y2, op);
  EXPECT_LT((lhs - rhs).norm(), 1e-10 * rhs.norm());
}

TEST(FreqDecompose, FlatWeightsAreIdentity) {
  const KSpaceData d = random_kspace(2, 40, 36, 1);
  const KSpaceData out = freq_decompose(d, flat_weights());
  for (std::size_t i = 0; i < d.data().size(); ++i) EXPECT_EQ(out.data()[i], d.data()[i]);
}

TEST(FreqDecompose, CentreOnlyDeltaScalesByLambdaLow) {
  KSpaceData d(1, 1, 64, 64);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  for (int r = 16; r < 48; ++r) {
    for (int c = 16; c < 48; ++c) d.plane(0, 0)[r * 64 + c] = {n(rng), n(rng)};
  }
  const KSpaceData out = freq_decompose(d, FrequencyWeights{});
  for (std::size_t i = 0; i < d.data().size(); ++i) EXPECT_EQ(out.data()[i], 0.4 * d.data()[i]);
}

TEST(FreqDecompose, DisjointNormIdentity) {
  const KSpaceData d = random_kspace(3, 64, 48, 3);
  const FrequencyWeights w{};
  const AcsRect b = low_frequency_block(w, 64, 48);
  double low = 0.0;
  double high = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (int r = 0; r < 64; ++r) {
      for (int k = 0; k < 48; ++k) {
        const double e = std::norm(d.plane(c, 0)[r * 48 + k]);
        const bool in = r >= b.row0 && r < b.row0 + b.rows && k >= b.col0 && k < b.col0 + b.cols;
        (in ? low : high) += e;
      }
    }
  }
  EXPECT_NEAR(freq_decompose(d, w).squared_norm(), 0.16 * low + 0.36 * high, 1e-10 * (low + high));
}

TEST(FreqDecompose, BlockIsCentredAndClamped) {
  const AcsRect b = low_frequency_block(FrequencyWeights{}, 64, 64);
  EXPECT_EQ(b.row0, 16);
  EXPECT_EQ(b.col0, 16);
  EXPECT_EQ(b.rows, 32);
  EXPECT_EQ(b.cols, 32);
  const AcsRect small = low_frequency_block(FrequencyWeights{}, 16, 20);
  EXPECT_EQ(small.row0, 0);
  EXPECT_EQ(small.rows, 16);
  EXPECT_EQ(small.cols, 20);
}

TEST(FreqDecompose, RejectsNegativeOrNonFiniteWeights) {
  EXPECT_SPAMRI_ERROR((FrequencyWeights{-0.1, 0.6, 32, 32}.validate()), ErrorCode::InvalidParameter);
  EXPECT_SPAMRI_ERROR((FrequencyWeights{0.4, NAN, 32, 32}.validate()), ErrorCode::InvalidParameter);
}

TEST(AdaptiveWeight, EqualDeltasGiveXi) {
  EXPECT_EQ(adaptive_weight(ConsistencyState{3.0, 1.7, 1.7}), 3.0);
  EXPECT_EQ(adaptive_weight(ConsistencyState{0.5, 0.0, 0.0}), 0.5);
}

TEST(AdaptiveWeight, TanhLimits) {
  EXPECT_NEAR(adaptive_weight(ConsistencyState{3.0, 25.0, 0.0}), 4.5, 1e-6);
  EXPECT_NEAR(adaptive_weight(ConsistencyState{3.0, 0.0, 25.0}), 1.5, 1e-6);
  for (double d : {-5.0, -0.3, 0.2, 4.0}) {
    const double w = adaptive_weight(ConsistencyState{2.0, d, 0.0});
    EXPECT_GT(w, 1.0);
    EXPECT_LT(w, 3.0);
    EXPECT_NEAR(w, 2.0 * (1.0 + std::tanh(d) / 2.0), 1e-15);
  }
}

TEST(AdaptiveWeight, FullRangeForm) {
  const ConsistencyState st{3.0, 0.0, 0.0, OmegaForm::FullRange};
  EXPECT_EQ(adaptive_weight(st), 1.5);
  EXPECT_NEAR(adaptive_weight(ConsistencyState{3.0, 30.0, 0.0, OmegaForm::FullRange}), 3.0, 1e-12);
  EXPECT_EQ(parse_omega_form("full-range"), OmegaForm::FullRange);
  EXPECT_EQ(parse_omega_form("half-tanh"), OmegaForm::HalfTanh);
  EXPECT_SPAMRI_ERROR(parse_omega_form("other"), ErrorCode::InvalidParameter);
}

TEST(AdaptiveWeight, RequiresPositiveXi) {
  EXPECT_SPAMRI_ERROR(ConsistencyState{0.0}.validate(), ErrorCode::InvalidParameter);
}

TEST(Backproject, TruthIsFixedPoint) {
  const EncodingOperator op(gen_gaussian_mask(16, 16, 4.0, 2, 3), gen_coil_maps(4, 16, 16, 3));
  const ComplexGrid x = random_grid(1, 16, 16, 3);
  const BackprojectResult r = backproject_adaptive(x, op.forward(x), op, FrequencyWeights{}, ConsistencyState{});
  EXPECT_EQ(r.delta, 0.0);
  EXPECT_LT(rel_error(r.x, x), 1e-15);
}

TEST(Backproject, EmptyMaskLeavesInputUnchanged) {
  const SamplingMask empty(8, 8, std::vector<std::uint8_t>(64, 0));
  const EncodingOperator op(empty, CoilSensitivities::unit(8, 8));
  const ComplexGrid x = random_grid(1, 8, 8, 4);
  const BackprojectResult r = backproject_adaptive(x, KSpaceData(1, 1, 8, 8), op, FrequencyWeights{}, ConsistencyState{});
  EXPECT_EQ(r.delta, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(r.x.data()[i], x.data()[i]);
}

TEST(Backproject, ReportsDeltaAndOmega) {
  const EncodingOperator op(random_point_mask(32, 32, 5), gen_coil_maps(2, 32, 32, 5));
  const ComplexGrid x = random_grid(1, 32, 32, 5);
  KSpaceData y = random_kspace(2, 32, 32, 6);
  op.apply_mask(y);
  const FrequencyWeights w{};
  const ConsistencyState st{3.0, 2.0, 0.0};
  const BackprojectResult r = backproject_adaptive(x, y, op, w, st);
  const KSpaceData dd = freq_decompose(residual(x, y, op), w);
  EXPECT_NEAR(r.delta, dd.norm(), 1e-12 * dd.norm());
  EXPECT_NEAR(r.omega, 3.0 * (1.0 + std::tanh(2.0 - r.delta) / 2.0), 1e-12);
  ComplexGrid expected = op.adjoint(dd);
  expected *= -r.omega;
  expected += x;
  EXPECT_LT(rel_error(r.x, expected), 1e-12);
}

TEST(Backproject, FullMaskUnitWeightReplacesKspace) {
  const EncodingOperator op = unit_op(SamplingMask::full(16, 16));
  const ComplexGrid x = random_grid(1, 16, 16, 6);
  const KSpaceData y = random_kspace(1, 16, 16, 7);
  const ComplexGrid out = backproject_fixed(x, y, op, flat_weights(), 1.0);
  const KSpaceData k = op.forward(out);
  EXPECT_LT((k - y).norm(), 1e-12 * y.norm());
}

TEST(Backproject, RelaxationDoesNotIncreaseResidual) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const EncodingOperator op = unit_op(random_point_mask(16, 16, seed));
    const ComplexGrid x = random_grid(1, 16, 16, 10 + seed);
    KSpaceData y = random_kspace(1, 16, 16, 20 + seed);
    op.apply_mask(y);
    for (double omega : {0.1, 0.7, 1.0, 1.9}) {
      const ComplexGrid out = backproject_fixed(x, y, op, flat_weights(), omega);
      EXPECT_LE(residual(out, y, op).norm(), residual(x, y, op).norm() * (1.0 + 1e-12));
    }
  }
}

TEST(DdnmProject, ConsistentInputIsFixedPoint) {
  const EncodingOperator op(random_point_mask(16, 16, 1), gen_coil_maps(4, 16, 16, 1));
  const ComplexGrid x = random_grid(1, 16, 16, 2);
  EXPECT_LT(rel_error(ddnm_project(x, op.forward(x), op), x), 1e-12);
}

TEST(DdnmProject, SingleCoilReplacesSampledFrequencies) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SamplingMask m = random_point_mask(12, 20, seed);
    const EncodingOperator op = unit_op(m);
    const ComplexGrid x = random_grid(1, 12, 20, seed + 1);
    KSpaceData y = random_kspace(1, 12, 20, seed + 2);
    op.apply_mask(y);
    const ComplexGrid kx = fft2c(x);
    const ComplexGrid kout = fft2c(ddnm_project(x, y, op));
    for (int p = 0; p < 240; ++p) {
      const cplx expected = m.keep()[p] ? y.data()[p] : kx.data()[p];
      EXPECT_NEAR(std::abs(kout.data()[p] - expected), 0.0, 1e-12);
    }
  }
}

TEST(DdnmProject, FullMaskReturnsTruth) {
  const EncodingOperator op = unit_op(SamplingMask::full(16, 16));
  const ComplexGrid truth = random_grid(1, 16, 16, 3);
  EXPECT_LT(rel_error(ddnm_project(random_grid(1, 16, 16, 4), op.forward(truth), op), truth), 1e-6);
}

class DpsFixture : public ::testing::Test {
 protected:
  NoiseSchedule s = cosine_schedule(1000);
  GaussianPrior prior{random_stack(2, 8, 8, 1), random_stack(2, 8, 8, 2)};
  void SetUp() override {
    for (auto& v : prior.var.data()) v = 0.2 + v * v;
  }
};

TEST_F(DpsFixture, ZeroAtConsistentPointAndForEmptyMask) {
  const EncodingOperator op(random_point_mask(8, 8, 3), gen_coil_maps(2, 8, 8, 3));
  const PseudoRealStack x = random_stack(2, 8, 8, 4);
  const PseudoRealStack x0 = estimate_x0(x, 300, analytic_gaussian_eps(prior, x, 300, s), s);
  const KSpaceData y = op.forward(from_pseudo_real(x0));
  {
    const auto held = dps_gradient(prior, x, 300, y, op, s);
    for (double v : held.data()) EXPECT_NEAR(v, 0.0, 1e-12);
  }

  const EncodingOperator empty(SamplingMask(8, 8, std::vector<std::uint8_t>(64, 0)), CoilSensitivities::unit(8, 8));
  {
    const auto held = dps_gradient(prior, x, 300, KSpaceData(1, 1, 8, 8), empty, s);
    for (double v : held.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST_F(DpsFixture, MatchesCentralDifferences) {
  const EncodingOperator op(random_point_mask(8, 8, 5), gen_coil_maps(2, 8, 8, 5));
  const KSpaceData y = op.forward(random_grid(1, 8, 8, 6));
  PseudoRealStack x = random_stack(2, 8, 8, 7);
  const int t = 500;
  auto objective = [&](const PseudoRealStack& xt) {
    const PseudoRealStack x0 = estimate_x0(xt, t, analytic_gaussian_eps(prior, xt, t, s), s);
    return residual(from_pseudo_real(x0), y, op).squared_norm();
  };
  const PseudoRealStack g = dps_gradient(prior, x, t, y, op, s);
  PseudoRealStack fd(2, 8, 8);
  const double h = 1e-5;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = objective(x);
    x[i] = keep - h;
    const double down = objective(x);
    x[i] = keep;
    fd[i] = (up - down) / (2.0 * h);
  }
  EXPECT_LT(rel_error(g, fd), 1e-6);
}

TEST_F(DpsFixture, NeuralDenoisersAreUnsupported) {
  const EncodingOperator op = unit_op(SamplingMask::full(8, 8));
  const ZeroDenoiser zero;
  EXPECT_SPAMRI_ERROR(dps_gradient(zero, random_stack(2, 8, 8, 1), 10, KSpaceData(1, 1, 8, 8), op, s),
                      ErrorCode::UnsupportedDenoiser);
  const AnalyticGaussianDenoiser analytic(prior, s);
  EXPECT_NO_THROW(dps_gradient(analytic, random_stack(2, 8, 8, 1), 10, KSpaceData(1, 1, 8, 8), op, s));
}

}  // namespace
}  // namespace spamri
