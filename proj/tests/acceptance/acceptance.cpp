// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails, except those named with
// --unattainable=N,M: they still run and print FAIL, but are reported as
// known failures and do not affect the exit status.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cli.hpp"
#include "spamri/consistency.hpp"
#include "spamri/denoiser.hpp"
#include "spamri/encoding.hpp"
#include "spamri/evalbench.hpp"
#include "spamri/fft.hpp"
#include "spamri/masks.hpp"
#include "spamri/sampler.hpp"
#include "spamri/schedule.hpp"
#include "spamri/tiny_unet.hpp"

namespace fs = std::filesystem;
using namespace spamri;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ComplexGrid random_grid(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  ComplexGrid g(1, rows, cols);
  for (auto& v : g.data()) v = {n(rng), n(rng)};
  return g;
}

KSpaceData random_kspace(int coils, int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  KSpaceData y(coils, 1, rows, cols);
  for (auto& v : y.data()) v = {n(rng), n(rng)};
  return y;
}

PseudoRealStack random_stack(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  PseudoRealStack s(2, rows, cols);
  for (auto& v : s.data()) v = n(rng);
  return s;
}

SamplingMask random_point_mask(int rows, int cols, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(0.4);
  std::vector<std::uint8_t> m(static_cast<std::size_t>(rows) * cols);
  for (auto& v : m) v = keep(rng) ? 1 : 0;
  m[0] = 1;
  return SamplingMask(rows, cols, std::move(m));
}

// Masked k-space of an image with a single unit coil, computed from the FFT
// directly rather than through the encoding operator.
std::vector<cplx> masked_kspace(const ComplexGrid& x, const SamplingMask& m) {
  const ComplexGrid k = fft2c(x);
  std::vector<cplx> out;
  for (std::size_t i = 0; i < k.size(); ++i) {
    if (m.keep()[i]) out.push_back(k.data()[i]);
  }
  return out;
}

double rel_diff(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  return std::sqrt(num / den);
}

// 1. <Ax, y> = <x, A^H y> on random multi-coil instances.
Outcome adjoint_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const EncodingOperator op(random_point_mask(16, 16, rng), gen_coil_maps(4, 16, 16, 1000 + i));
    const ComplexGrid x = random_grid(16, 16, rng);
    const KSpaceData y = random_kspace(4, 16, 16, rng);
    const cplx lhs = inner(op.forward(x), y);
    const cplx rhs = inner(x, op.adjoint(y));
    worst = std::max(worst, std::abs(lhs - rhs) / std::abs(lhs));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-6 && secs < 5.0, fmt("max relative error %.3g (< 1e-6), %.2f s (< 5 s)", worst, secs)};
}

// 2. Near-deterministic prior: the sampler output equals y on measured
// frequencies and the prior mean elsewhere.
Outcome gaussian_posterior() {
  const auto t0 = std::chrono::steady_clock::now();
  const NoiseSchedule s = cosine_schedule(1000);
  ReconConfig cfg;
  cfg.reverse_steps = 50;
  cfg.inversion_steps = 10;
  cfg.xi = 1.0;
  cfg.freq.lambda_low = 1.0;
  cfg.freq.lambda_high = 1.0;
  cfg.clip_x0 = false;
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 10; ++i) {
    SamplingMask m;
    switch (i % 3) {
      case 0: m = gen_gaussian_mask(32, 32, 4.0, 4, i); break;
      case 1: m = gen_uniform_mask(32, 32, 3.0, 4); break;
      default: m = gen_radial_mask(32, 32, 4.0, i); break;
    }
    const EncodingOperator op(m, CoilSensitivities::unit(32, 32));
    const ComplexGrid prior_mean = gen_phantom(32, 32, 500 + i).image;
    ComplexGrid truth = gen_phantom(32, 32, 600 + i).image;
    truth *= 0.3;
    truth += prior_mean;
    const KSpaceData y = op.forward(truth);

    // The sampler works on data normalized by the zero-filled image.
    const NormParams p = normalize(zero_filled(op, y)).second;
    ComplexGrid scaled_mean = prior_mean;
    scaled_mean *= 1.0 / p.factor();
    const AnalyticGaussianDenoiser den(GaussianPrior::isotropic(to_pseudo_real(scaled_mean), 1e-9), s);
    cfg.seed = i;
    const ComplexGrid out = spa_mri_sample(y, op, den, s, cfg).image;

    ComplexGrid k = fft2c(prior_mean);
    const ComplexGrid ky = fft2c(truth);
    for (std::size_t j = 0; j < k.size(); ++j) {
      if (m.keep()[j]) k.data()[j] = ky.data()[j];
    }
    const ComplexGrid expected = ifft2c(k);
    worst = std::max(worst, (out - expected).norm() / expected.norm());
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-2 && secs < 120.0, fmt("max relative L2 %.3g (< 1e-2), %.1f s (< 120 s)", worst, secs)};
}

// 3. ddnm_project restores measured k-space exactly.
Outcome ddnm_replacement() {
  std::mt19937_64 rng(303);
  double worst = 0.0;
  int cases = 0;
  for (int n : {16, 32, 64}) {
    for (double r : {2.0, 4.0, 8.0}) {
      const int acs = n / r > 2.0 ? 2 : 0;
      std::vector<SamplingMask> masks{gen_gaussian_mask(n, n, r, acs, 7), gen_uniform_mask(n, n, r, acs)};
      try {
        masks.push_back(gen_radial_mask(n, n, r, 7));
      } catch (const Error&) {
        // too few cells for this acceleration on a small grid
      }
      masks.push_back(random_point_mask(n, n, rng));
      for (const auto& m : masks) {
        const EncodingOperator op(m, CoilSensitivities::unit(n, n));
        const ComplexGrid truth = random_grid(n, n, rng);
        const KSpaceData y = op.forward(truth);
        const ComplexGrid out = ddnm_project(random_grid(n, n, rng), y, op);
        worst = std::max(worst, rel_diff(masked_kspace(out, m), masked_kspace(truth, m)));
        ++cases;
      }
    }
  }
  return {worst < 1e-6, fmt("%d masks over 16/32/64 grids, max relative error %.3g (< 1e-6)", cases, worst)};
}

// 4. omega = xi (1 + tanh(delta_prev - delta_curr) / 2).
Outcome omega_law() {
  const double centre = adaptive_weight({3.0, 5.0, 5.0});
  double hi_err = 0.0;
  double lo_err = 0.0;
  for (double d : {20.0, 25.0, 50.0, 1000.0}) {
    hi_err = std::max(hi_err, std::abs(adaptive_weight({3.0, d, 0.0}) - 4.5));
    lo_err = std::max(lo_err, std::abs(adaptive_weight({3.0, 0.0, d}) - 1.5));
  }
  const bool pass = centre == 3.0 && hi_err < 1e-6 && lo_err < 1e-6;
  return {pass, fmt("omega(0) = %.17g, |omega - 4.5| <= %.2g, |omega - 1.5| <= %.2g", centre, hi_err, lo_err)};
}

// 5. Frequency decomposition identities.
Outcome frequency_decomposition() {
  std::mt19937_64 rng(505);
  bool bitwise = true;
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const int n = 16 << (i % 3);
    const EncodingOperator op(random_point_mask(n, n, rng), gen_coil_maps(3, n, n, i));
    const KSpaceData r = residual(random_grid(n, n, rng), random_kspace(3, n, n, rng), op);

    FrequencyWeights unit{1.0, 1.0, 8 + 4 * (i % 4), 8 + 4 * (i % 4)};
    const KSpaceData same = freq_decompose(r, unit);
    bitwise = bitwise && std::equal(same.data().begin(), same.data().end(), r.data().begin());

    const double l1 = 0.1 + 0.1 * (i % 7);
    const double l2 = 1.3 - 0.1 * (i % 5);
    const FrequencyWeights w{l1, l2, unit.center_rows, unit.center_cols};
    const AcsRect blk = low_frequency_block(w, n, n);
    double low = 0.0;
    double high = 0.0;
    for (int c = 0; c < r.coils(); ++c) {
      const auto plane = r.plane(c, 0);
      for (int row = 0; row < n; ++row) {
        for (int col = 0; col < n; ++col) {
          const bool inside = row >= blk.row0 && row < blk.row0 + blk.rows && col >= blk.col0 && col < blk.col0 + blk.cols;
          (inside ? low : high) += std::norm(plane[static_cast<std::size_t>(row) * n + col]);
        }
      }
    }
    const double lhs = freq_decompose(r, w).squared_norm();
    const double rhs = l1 * l1 * low + l2 * l2 * high;
    worst = std::max(worst, std::abs(lhs - rhs) / rhs);
  }
  return {bitwise && worst < 1e-10,
          fmt("unit weights bit-identical: %s, norm identity max relative error %.3g (< 1e-10)",
              bitwise ? "yes" : "no", worst)};
}

// 6. Analytic DPS gradient against central differences.
Outcome dps_gradient_check() {
  const NoiseSchedule s = cosine_schedule(1000);
  std::mt19937_64 rng(606);
  std::uniform_int_distribution<int> pick_t(50, 950);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    GaussianPrior prior{random_stack(16, 16, rng), random_stack(16, 16, rng)};
    for (auto& v : prior.var.data()) v = 0.2 + v * v;
    const EncodingOperator op(random_point_mask(16, 16, rng), gen_coil_maps(2, 16, 16, 60 + i));
    const KSpaceData y = op.forward(random_grid(16, 16, rng));
    PseudoRealStack x = random_stack(16, 16, rng);
    const int t = pick_t(rng);
    auto objective = [&](const PseudoRealStack& xt) {
      const PseudoRealStack x0 = estimate_x0(xt, t, analytic_gaussian_eps(prior, xt, t, s), s);
      return residual(from_pseudo_real(x0), y, op).squared_norm();
    };
    const PseudoRealStack g = dps_gradient(prior, x, t, y, op, s);
    double num = 0.0;
    double den = 0.0;
    const double h = 1e-5;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double keep = x[k];
      x[k] = keep + h;
      const double up = objective(x);
      x[k] = keep - h;
      const double down = objective(x);
      x[k] = keep;
      const double fd = (up - down) / (2.0 * h);
      num += (g[k] - fd) * (g[k] - fd);
      den += fd * fd;
    }
    worst = std::max(worst, std::sqrt(num / den));
  }
  return {worst < 1e-4, fmt("20 instances, max relative error %.3g (< 1e-4)", worst)};
}

// Settings for the end-to-end comparison.
constexpr int kTrainPhantoms = 200;
constexpr int kTrainEpochs = 400;
constexpr double kTrainLr = 1e-3;
constexpr int kHeldOut = 20;
constexpr int kSpaStart = 2000;

struct EndToEnd {
  TinyDenoiserWeights weights;
  double train_seconds = 0.0;
};

EndToEnd train_denoiser(const NoiseSchedule& s) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<PseudoRealStack> data;
  for (int i = 0; i < kTrainPhantoms; ++i) {
    data.push_back(to_pseudo_real(normalize(gen_phantom(64, 64, static_cast<std::uint64_t>(i)).image).first));
  }
  TrainOptions opts;
  opts.epochs = kTrainEpochs;
  opts.lr = kTrainLr;
  opts.seed = 1;
  opts.on_epoch = [](int epoch, double loss) {
    if ((epoch + 1) % 50 == 0) std::printf("  train epoch %d loss %.4f\n", epoch + 1, loss);
    std::fflush(stdout);
  };
  EndToEnd e{train_tiny_denoiser(data, s, opts).weights, 0.0};
  e.train_seconds = seconds_since(t0);
  return e;
}

using Medians = std::map<std::pair<ReconMethod, double>, double>;

Medians run_cells(MaskPattern pattern, const std::vector<double>& accels, const Denoiser& den, const NoiseSchedule& s,
                  const fs::path& out_dir) {
  BenchConfig b;
  b.patterns = {pattern};
  b.accels = accels;
  b.seeds.clear();
  for (int i = 0; i < kHeldOut; ++i) b.seeds.push_back(static_cast<std::uint64_t>(i));
  b.panels = false;
  b.output_dir = out_dir;
  ReconConfig rc;
  rc.t_start = kSpaStart;
  const BenchReport rep = run_benchmark(b, den, s, rc);

  std::map<std::pair<ReconMethod, double>, std::vector<double>> groups;
  for (const auto& r : rep.rows) groups[{r.method, r.accel}].push_back(r.failed ? -1e300 : r.psnr_db);
  Medians med;
  for (auto& [key, v] : groups) {
    std::sort(v.begin(), v.end());
    med[key] = v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  }
  return med;
}

bool ordered(const Medians& m, double r) {
  return m.at({ReconMethod::Spa, r}) > m.at({ReconMethod::Ddnm, r}) &&
         m.at({ReconMethod::Ddnm, r}) > m.at({ReconMethod::ZeroFilled, r});
}

std::string describe(const Medians& m, double r) {
  return fmt("R%g spa %.2f ddnm %.2f zf %.2f", r, m.at({ReconMethod::Spa, r}), m.at({ReconMethod::Ddnm, r}),
             m.at({ReconMethod::ZeroFilled, r}));
}

// 7. Directional ordering on Gaussian masks.
Outcome gaussian_ordering(const EndToEnd& e, const Denoiser& den, const NoiseSchedule& s, const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<double> accels{4.0, 12.0, 24.0};
  const Medians m = run_cells(MaskPattern::Gaussian, accels, den, s, dir / "gaussian");
  const double secs = e.train_seconds + seconds_since(t0);
  bool pass = secs < 1800.0;
  std::string detail;
  for (double r : accels) {
    pass = pass && ordered(m, r);
    detail += describe(m, r) + "; ";
  }
  for (ReconMethod meth : {ReconMethod::Spa, ReconMethod::Ddnm, ReconMethod::ZeroFilled}) {
    const bool mono = m.at({meth, 4.0}) >= m.at({meth, 12.0}) && m.at({meth, 12.0}) >= m.at({meth, 24.0});
    if (!mono) detail += std::string(to_string(meth)) + " not monotone in R; ";
    pass = pass && mono;
  }
  detail += fmt("%.0f s incl. training (< 1800 s)", secs);
  return {pass, detail};
}

// 8. Same ordering on uniform and radial masks with the same weights.
Outcome pattern_agnostic(const Denoiser& den, const NoiseSchedule& s, const fs::path& dir) {
  bool pass = true;
  std::string detail;
  for (MaskPattern p : {MaskPattern::Uniform, MaskPattern::Radial}) {
    const Medians m = run_cells(p, {4.0}, den, s, dir / std::string(to_string(p)));
    pass = pass && ordered(m, 4.0);
    detail += std::string(to_string(p)) + " " + describe(m, 4.0) + "; ";
  }
  detail.resize(detail.size() - 2);
  return {pass, detail};
}

// 9. NFE equals the number of denoiser calls.
Outcome nfe_accounting() {
  const NoiseSchedule s = cosine_schedule(4000);
  const EncodingOperator op(gen_gaussian_mask(16, 16, 4.0, 2, 9), gen_coil_maps(2, 16, 16, 9));
  const KSpaceData y = op.forward(gen_phantom(16, 16, 9).image);
  const AnalyticGaussianDenoiser base(GaussianPrior::isotropic(PseudoRealStack(2, 16, 16), 0.5), s);
  long calls = 0;
  const FunctionDenoiser counted([&](const PseudoRealStack& x, int t) {
    ++calls;
    return base.eps(x, t);
  });
  const ReconConfig cfg;
  const long spa = spa_mri_sample(y, op, counted, s, cfg).trace.nfe;
  const long spa_calls = calls;
  calls = 0;
  const long ddnm = ddnm_sample(y, op, counted, s, cfg).trace.nfe;
  const long ddnm_calls = calls;
  const bool pass = spa == spa_calls && ddnm == ddnm_calls && spa == 225 && ddnm == 200;
  return {pass, fmt("spa reported %ld / counted %ld (225), ddnm reported %ld / counted %ld (200)", spa, spa_calls,
                    ddnm, ddnm_calls)};
}

// 10. Metric formulas.
Outcome metric_formulas() {
  // One unit error in 100 pixels: the MSE is exactly the double nearest 0.01,
  // which 0.1 * 0.1 is not.
  std::vector<double> hit(100, 0.0);
  hit[0] = 1.0;
  const double p = psnr(hit, std::vector<double>(100, 0.0));
  const double g = ssim_global(std::vector<double>(64, 1.0), std::vector<double>(64, 0.0));
  const double expected = kSsimC1 / (1.0 + kSsimC1);
  const ComplexGrid x = gen_phantom(32, 32, 10).image;
  const double self = ssim(x, x);
  const bool pass = p == 20.0 && std::abs(g - expected) < 1e-12 && self == 1.0;
  return {pass, fmt("psnr(mse 0.01) = %.17g, global ssim(1, 0) - c1/(1+c1) = %.3g, ssim(x, x) = %.17g", p,
                    g - expected, self)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 11. Two identical reconstruct invocations write identical bytes.
Outcome cli_determinism(const fs::path& dir) {
  fs::create_directories(dir);
  auto path = [&](const char* name) { return (dir / name).string(); };
  TinyDenoiserConfig model;
  model.base_width = 4;
  model.levels = 3;
  save_weights(path("w.spaw"), init_tiny_denoiser(model, 11));
  std::ostringstream sink;
  auto run = [&](std::vector<std::string> args) { return cli::dispatch(args, sink, sink); };
  int rc = run({"phantom", "--h", "32", "--w", "32", "--seed", "11", "-o", path("gt.cxg")});
  rc |= run({"coils", "--n", "4", "--h", "32", "--w", "32", "--seed", "11", "-o", path("c.cxg")});
  rc |= run({"mask", "--pattern", "gaussian", "--accel", "4", "--acs", "4", "--h", "32", "--w", "32", "--seed", "11",
             "-o", path("m.cxg")});
  rc |= run({"acquire", "--image", path("gt.cxg"), "--mask", path("m.cxg"), "--coils", path("c.cxg"), "-o",
             path("y.cxg")});
  for (const char* out : {"a.cxg", "b.cxg"}) {
    rc |= run({"--weights", path("w.spaw"), "--reverse-steps", "20", "--inversion-steps", "5", "reconstruct",
               "--method", "spa", "--kspace", path("y.cxg"), "--mask", path("m.cxg"), "--coils", path("c.cxg"),
               "--seed", "11", "-o", path(out)});
  }
  const std::string a = slurp(path("a.cxg"));
  const std::string b = slurp(path("b.cxg"));
  const bool pass = rc == 0 && !a.empty() && a == b;
  return {pass, fmt("exit status %d, outputs %zu and %zu bytes, identical: %s", rc, a.size(), b.size(),
                    a == b ? "yes" : "no")};
}

std::set<int> parse_ids(std::string_view list) {
  std::set<int> out;
  while (!list.empty()) {
    const auto comma = list.find(',');
    out.insert(std::stoi(std::string(list.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    list.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> unattainable;
  for (int i = 1; i < argc; ++i) {
    const std::string_view arg = argv[i];
    constexpr std::string_view flag = "--unattainable=";
    if (arg.starts_with(flag)) unattainable = parse_ids(arg.substr(flag.size()));
  }
  cli::tune_allocator();
  const fs::path work = fs::temp_directory_path() / "spamri_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  int failures = 0;
  int known = 0;
  auto record = [&](int id, const char* name, const std::function<Outcome()>& check) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const bool excused = !o.pass && unattainable.contains(id);
    if (!o.pass) ++(excused ? known : failures);
    std::printf("criterion %2d %s  %s: %s [%.1f s]%s\n", id, o.pass ? "PASS" : "FAIL", name, o.detail.c_str(),
                seconds_since(t0), excused ? " (known unattainable, excluded from exit status)" : "");
    std::fflush(stdout);
  };

  record(1, "adjoint", adjoint_identity);
  record(2, "gaussian-posterior", gaussian_posterior);
  record(3, "ddnm-replacement", ddnm_replacement);
  record(4, "omega-law", omega_law);
  record(5, "frequency-decomposition", frequency_decomposition);
  record(6, "dps-gradient", dps_gradient_check);

  const NoiseSchedule s = cosine_schedule(4000);
  std::optional<EndToEnd> e;
  std::optional<TinyDenoiser> den;
  try {
    e = train_denoiser(s);
    den.emplace(e->weights);
    save_weights(work / "denoiser.spaw", e->weights);
  } catch (const std::exception& ex) {
    std::printf("training failed: %s\n", ex.what());
  }
  record(7, "gaussian-ordering", [&]() -> Outcome {
    if (!den) return {false, "no trained denoiser"};
    return gaussian_ordering(*e, *den, s, work);
  });
  record(8, "pattern-agnostic", [&]() -> Outcome {
    if (!den) return {false, "no trained denoiser"};
    return pattern_agnostic(*den, s, work);
  });
  record(9, "nfe-accounting", nfe_accounting);
  record(10, "metric-formulas", metric_formulas);
  record(11, "cli-determinism", [&] { return cli_determinism(work / "cli"); });

  std::printf("%d of 11 criteria failed (%d known unattainable, %d unexpected)\n", failures + known, known, failures);
  return failures == 0 ? 0 : 1;
}
