#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "spamri/evalbench.hpp"
#include "test_util.hpp"

namespace spamri {
namespace {

using testing::rel_error;

ComplexGrid constant_grid(int rows, int cols, double v) {
  ComplexGrid g(1, rows, cols);
  for (auto& e : g.data()) e = v;
  return g;
}

TEST(Phantom, ZeroEllipsesIsZeroImage) {
  EXPECT_EQ(gen_phantom(32, 32, 1, 0).image.norm(), 0.0);
}

TEST(Phantom, DeterministicAndReproducibleFromDescriptor) {
  const Phantom a = gen_phantom(32, 48, 5);
  const Phantom b = gen_phantom(32, 48, 5);
  for (std::size_t i = 0; i < a.image.size(); ++i) EXPECT_EQ(a.image.data()[i], b.image.data()[i]);
  const ComplexGrid re = render_phantom(a.descriptor);
  for (std::size_t i = 0; i < a.image.size(); ++i) EXPECT_EQ(re.data()[i], a.image.data()[i]);
  EXPECT_GT((a.image - gen_phantom(32, 48, 6).image).norm(), 0.0);
}

TEST(Phantom, MagnitudeInUnitRangeWithMaxOne) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Phantom p = gen_phantom(64, 64, seed);
    double mx = 0.0;
    for (const auto& v : p.image.data()) mx = std::max(mx, std::abs(v));
    EXPECT_NEAR(mx, 1.0, 1e-12);
  }
}

TEST(Phantom, RejectsTinyGrids) {
  EXPECT_SPAMRI_ERROR(gen_phantom(8, 32, 0), ErrorCode::InvalidParameter);
}

TEST(Acquisition, FullMaskUnitCoilRecoversPhantom) {
  const Phantom p = gen_phantom(32, 32, 2);
  const CoilSensitivities unit = CoilSensitivities::unit(32, 32);
  const SamplingMask full = SamplingMask::full(32, 32);
  const EncodingOperator op(full, unit);
  EXPECT_LT(rel_error(zero_filled(op, simulate_acquisition(p, unit, full)), p.image), 1e-6);
}

TEST(Acquisition, UndersamplingLowersZeroFilledPsnr) {
  const Phantom p = gen_phantom(64, 64, 3);
  const CoilSensitivities coils = gen_coil_maps(4, 64, 64, 1);
  const SamplingMask full = SamplingMask::full(64, 64);
  const SamplingMask r4 = gen_gaussian_mask(64, 64, 4.0, 8, 3);
  const double full_psnr = evaluate(zero_filled(EncodingOperator(full, coils), simulate_acquisition(p, coils, full)),
                                    p.image).first;
  const double r4_psnr = evaluate(zero_filled(EncodingOperator(r4, coils), simulate_acquisition(p, coils, r4)),
                                  p.image).first;
  EXPECT_LT(r4_psnr, full_psnr);
}

TEST(Psnr, FormulaValues) {
  EXPECT_DOUBLE_EQ(psnr(std::vector<double>(100, 0.1), std::vector<double>(100, 0.0)), 20.0);
  const ComplexGrid ref = constant_grid(8, 8, 0.5);
  EXPECT_NEAR(psnr(constant_grid(8, 8, 0.6), ref), 20.0, 1e-9);
  EXPECT_EQ(psnr(ref, ref), std::numeric_limits<double>::infinity());
}

TEST(Psnr, DecreasesWithGrowingPerturbation) {
  const ComplexGrid ref = gen_phantom(32, 32, 4).image;
  double last = std::numeric_limits<double>::infinity();
  for (double a : {0.01, 0.02, 0.05, 0.1}) {
    ComplexGrid x = ref;
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += (i % 2 ? a : -a) * 0.5;
    const double p = psnr(x, ref);
    EXPECT_LT(p, last);
    last = p;
  }
}

TEST(Ssim, IdentityAndSymmetry) {
  const ComplexGrid a = gen_phantom(32, 32, 5).image;
  const ComplexGrid b = gen_phantom(32, 32, 6).image;
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  EXPECT_NEAR(ssim_global(a, a), 1.0, 1e-12);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
  const double s = ssim(a, b);
  EXPECT_GE(s, -1.0);
  EXPECT_LT(s, 1.0);
}

TEST(Ssim, GlobalConstantImages) {
  const double expected = kSsimC1 / (1.0 + kSsimC1);
  EXPECT_NEAR(ssim_global(std::vector<double>(64, 1.0), std::vector<double>(64, 0.0)), expected, 1e-12);
}

TEST(Ssim, WindowedMatchesDirectGaussianWindow) {
  // One valid window: the windowed result equals a hand-computed weighted SSIM.
  const int n = 11;
  std::vector<double> x(n * n);
  std::vector<double> y(n * n);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < n * n; ++i) {
    x[i] = u(rng);
    y[i] = 0.7 * x[i] + 0.3 * u(rng);
  }
  double wsum = 0.0;
  std::vector<double> w(n * n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      w[r * n + c] = std::exp(-((r - 5) * (r - 5) + (c - 5) * (c - 5)) / (2.0 * 1.5 * 1.5));
      wsum += w[r * n + c];
    }
  }
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < n * n; ++i) {
    mx += w[i] / wsum * x[i];
    my += w[i] / wsum * y[i];
  }
  double vx = 0.0, vy = 0.0, cxy = 0.0;
  for (int i = 0; i < n * n; ++i) {
    vx += w[i] / wsum * (x[i] - mx) * (x[i] - mx);
    vy += w[i] / wsum * (y[i] - my) * (y[i] - my);
    cxy += w[i] / wsum * (x[i] - mx) * (y[i] - my);
  }
  const double expected = (2 * mx * my + kSsimC1) * (2 * cxy + kSsimC2) /
                          ((mx * mx + my * my + kSsimC1) * (vx + vy + kSsimC2));
  EXPECT_NEAR(ssim(x, y, n, n), expected, 1e-12);
}

TEST(Ssim, SmallImagesFallBackToGlobal) {
  const std::vector<double> a{0.1, 0.5, 0.9, 0.3, 0.2, 0.7, 0.6, 0.4, 0.8};
  const std::vector<double> b{0.2, 0.4, 0.8, 0.3, 0.1, 0.6, 0.7, 0.5, 0.9};
  EXPECT_DOUBLE_EQ(ssim(a, b, 3, 3), ssim_global(a, b));
}

TEST(Metrics, UnitMagnitudeScalesByOwnMax) {
  ComplexGrid g(1, 1, 3);
  g(0, 0, 0) = {0.0, 2.0};
  g(0, 0, 1) = {1.0, 0.0};
  const std::vector<double> u = unit_magnitude(g);
  EXPECT_EQ(u, (std::vector<double>{1.0, 0.5, 0.0}));
  EXPECT_EQ(unit_magnitude(ComplexGrid(1, 2, 2)), std::vector<double>(4, 0.0));
}

TEST(Bench, AcsShrinksToFitBudget) {
  EXPECT_EQ(acs_for(64, 4.0, 16), 8);
  EXPECT_EQ(acs_for(64, 12.0, 16), 2);
  EXPECT_EQ(acs_for(64, 24.0, 16), 1);
  EXPECT_EQ(acs_for(256, 4.0, 16), 16);
  EXPECT_EQ(accel_tag(4.0), "4");
  EXPECT_EQ(accel_tag(2.5), "2.5");
}

TEST(Bench, SingleCellReportShape) {
  BenchConfig cfg;
  cfg.patterns = {MaskPattern::Gaussian};
  cfg.accels = {4.0};
  cfg.seeds = {0};
  cfg.rows = 16;
  cfg.cols = 16;
  ReconConfig recon;
  recon.reverse_steps = 6;
  recon.inversion_steps = 3;
  const NoiseSchedule s = cosine_schedule(100);
  const ZeroDenoiser zero;
  const BenchReport r = run_benchmark(cfg, zero, s, recon);
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_EQ(r.rows[0].method, ReconMethod::ZeroFilled);
  EXPECT_EQ(r.rows[0].nfe, 0);
  EXPECT_EQ(r.rows[1].nfe, 6);
  EXPECT_EQ(r.rows[2].nfe, 9);
  for (const auto& row : r.rows) EXPECT_FALSE(row.failed);
}

TEST(Bench, InfeasibleMaskAbortsTheRun) {
  BenchConfig cfg;
  cfg.patterns = {MaskPattern::Radial};
  cfg.accels = {8.0};
  cfg.seeds = {1, 2, 3};
  cfg.rows = 16;
  cfg.cols = 16;
  cfg.workers = 2;
  cfg.panels = false;
  cfg.output_dir.clear();
  const NoiseSchedule s = cosine_schedule(100);
  ReconConfig recon;
  recon.reverse_steps = 4;
  recon.inversion_steps = 2;
  EXPECT_SPAMRI_ERROR(run_benchmark(cfg, ZeroDenoiser{}, s, recon), ErrorCode::InfeasibleMask);
}

TEST(Bench, RowCountDeterminismAndFiles) {
  BenchConfig cfg;
  cfg.patterns = {MaskPattern::Uniform, MaskPattern::Radial};
  cfg.accels = {2.0, 4.0};
  cfg.seeds = {1, 2};
  cfg.rows = 16;
  cfg.cols = 16;
  cfg.workers = 3;
  cfg.output_dir = std::filesystem::temp_directory_path() / "spamri_bench_test";
  std::filesystem::remove_all(cfg.output_dir);
  ReconConfig recon;
  recon.reverse_steps = 4;
  recon.inversion_steps = 2;
  const NoiseSchedule s = cosine_schedule(100);
  const ZeroDenoiser zero;
  const BenchReport a = run_benchmark(cfg, zero, s, recon);
  cfg.workers = 1;
  cfg.panels = false;
  const BenchReport b = run_benchmark(cfg, zero, s, recon);
  ASSERT_EQ(a.rows.size(), 2u * 2u * 2u * 3u);
  ASSERT_EQ(b.rows.size(), a.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].psnr_db, b.rows[i].psnr_db);
    EXPECT_EQ(a.rows[i].ssim, b.rows[i].ssim);
    EXPECT_EQ(a.rows[i].method, b.rows[i].method);
  }
  EXPECT_TRUE(std::filesystem::exists(cfg.output_dir / "report.csv"));
  EXPECT_TRUE(std::filesystem::exists(cfg.output_dir / "uniform_R4_seed1_spa.png"));
  std::ifstream csv(cfg.output_dir / "report.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "method,pattern,accel,seed,psnr_db,ssim,nfe,seconds");
  std::filesystem::remove_all(cfg.output_dir);
}

TEST(Bench, DivergentCellIsMarkedFailed) {
  BenchConfig cfg;
  cfg.patterns = {MaskPattern::Gaussian};
  cfg.accels = {4.0};
  cfg.rows = 16;
  cfg.cols = 16;
  ReconConfig recon;
  recon.reverse_steps = 4;
  recon.inversion_steps = 1;
  const NoiseSchedule s = cosine_schedule(100);
  const FunctionDenoiser bad([](const PseudoRealStack& x, int) {
    PseudoRealStack e(x.channels(), x.rows(), x.cols());
    e[0] = NAN;
    return e;
  });
  const BenchReport r = run_benchmark(cfg, bad, s, recon);
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_FALSE(r.rows[0].failed);
  EXPECT_TRUE(r.rows[1].failed);
  EXPECT_TRUE(r.rows[2].failed);
}

TEST(ReconMethod, ParsesNames) {
  EXPECT_EQ(parse_recon_method("spa"), ReconMethod::Spa);
  EXPECT_EQ(parse_recon_method("ddnm"), ReconMethod::Ddnm);
  EXPECT_EQ(parse_recon_method("zero-filled"), ReconMethod::ZeroFilled);
  EXPECT_SPAMRI_ERROR(parse_recon_method("dps"), ErrorCode::InvalidParameter);
}

}  // namespace
}  // namespace spamri
