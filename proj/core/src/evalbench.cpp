#include "spamri/evalbench.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "spamri/error.hpp"

namespace spamri {

ComplexGrid render_phantom(const PhantomDescriptor& d) {
  ComplexGrid img(1, d.rows, d.cols);
  if (d.ellipses.empty()) return img;
  std::vector<double> mag(static_cast<std::size_t>(d.rows) * d.cols, 0.0);
  for (int r = 0; r < d.rows; ++r) {
    const double y = 2.0 * (r + 0.5) / d.rows - 1.0;
    for (int c = 0; c < d.cols; ++c) {
      const double x = 2.0 * (c + 0.5) / d.cols - 1.0;
      double v = 0.0;
      for (const auto& e : d.ellipses) {
        const double ca = std::cos(e.angle);
        const double sa = std::sin(e.angle);
        const double u = ((x - e.cx) * ca + (y - e.cy) * sa) / e.ax;
        const double w = (-(x - e.cx) * sa + (y - e.cy) * ca) / e.ay;
        if (u * u + w * w <= 1.0) v += e.intensity;
      }
      mag[static_cast<std::size_t>(r) * d.cols + c] = std::max(0.0, v);
    }
  }
  const double peak = *std::max_element(mag.begin(), mag.end());
  if (!(peak > 0.0)) return img;
  for (int r = 0; r < d.rows; ++r) {
    const double y = 2.0 * (r + 0.5) / d.rows - 1.0;
    for (int c = 0; c < d.cols; ++c) {
      const double x = 2.0 * (c + 0.5) / d.cols - 1.0;
      const double phase = d.phase0 + d.phase_x * x + d.phase_y * y;
      img(0, r, c) = std::polar(mag[static_cast<std::size_t>(r) * d.cols + c] / peak, phase);
    }
  }
  return img;
}

Phantom gen_phantom(int rows, int cols, std::uint64_t seed, int n_ellipses) {
  if (rows < 16 || cols < 16) throw Error(ErrorCode::InvalidParameter, "phantoms need at least 16x16 pixels");
  if (n_ellipses < 0) throw Error(ErrorCode::InvalidParameter, "ellipse count must be non-negative");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto in = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

  PhantomDescriptor d;
  d.rows = rows;
  d.cols = cols;
  d.seed = seed;
  if (n_ellipses > 0) {
    // Body outline, then inner structures of either sign.
    d.ellipses.push_back({in(-0.05, 0.05), in(-0.05, 0.05), in(0.7, 0.9), in(0.75, 0.95), in(-0.3, 0.3),
                          in(0.5, 0.8)});
    for (int i = 1; i < n_ellipses; ++i) {
      Ellipse e;
      e.cx = in(-0.5, 0.5);
      e.cy = in(-0.5, 0.5);
      e.ax = in(0.06, 0.35);
      e.ay = in(0.06, 0.35);
      e.angle = in(0.0, std::numbers::pi);
      e.intensity = u(rng) < 0.3 ? in(-0.4, -0.1) : in(0.1, 0.5);
      d.ellipses.push_back(e);
    }
    d.phase0 = in(-std::numbers::pi, std::numbers::pi);
    d.phase_x = in(-std::numbers::pi / 2, std::numbers::pi / 2);
    d.phase_y = in(-std::numbers::pi / 2, std::numbers::pi / 2);
  }
  return {render_phantom(d), std::move(d)};
}

KSpaceData simulate_acquisition(const Phantom& ph, const CoilSensitivities& coils, const SamplingMask& mask) {
  const EncodingOperator op(mask, coils);
  return op.forward(ph.image);
}

std::vector<double> unit_magnitude(const ComplexGrid& x) {
  std::vector<double> m(x.size());
  double peak = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = std::abs(x.data()[i]);
    peak = std::max(peak, m[i]);
  }
  if (peak > 0.0) {
    for (auto& v : m) v /= peak;
  }
  return m;
}

namespace {

std::vector<double> magnitudes(const ComplexGrid& x) {
  std::vector<double> m(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) m[i] = std::abs(x.data()[i]);
  return m;
}

void require_equal_size(std::size_t a, std::size_t b) {
  if (a != b || a == 0) throw Error(ErrorCode::ShapeMismatch, "metric inputs must be non-empty and equal in size");
}

}  // namespace

double psnr(const std::vector<double>& x, const std::vector<double>& ref) {
  require_equal_size(x.size(), ref.size());
  double se = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) se += (x[i] - ref[i]) * (x[i] - ref[i]);
  const double mse = se / static_cast<double>(x.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

double psnr(const ComplexGrid& x, const ComplexGrid& ref) {
  require_same_shape(x, ref, "psnr");
  return psnr(magnitudes(x), magnitudes(ref));
}

double ssim_global(const std::vector<double>& x, const std::vector<double>& ref) {
  require_equal_size(x.size(), ref.size());
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += ref[i];
  }
  mx /= n;
  my /= n;
  double vx = 0.0;
  double vy = 0.0;
  double cxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (ref[i] - my) * (ref[i] - my);
    cxy += (x[i] - mx) * (ref[i] - my);
  }
  vx /= n;
  vy /= n;
  cxy /= n;
  return ((2 * mx * my + kSsimC1) * (2 * cxy + kSsimC2)) / ((mx * mx + my * my + kSsimC1) * (vx + vy + kSsimC2));
}

double ssim_global(const ComplexGrid& x, const ComplexGrid& ref) {
  require_same_shape(x, ref, "ssim");
  return ssim_global(magnitudes(x), magnitudes(ref));
}

double ssim(const std::vector<double>& x, const std::vector<double>& ref, int rows, int cols) {
  require_equal_size(x.size(), ref.size());
  constexpr int kWin = 11;
  constexpr int kHalf = kWin / 2;
  if (rows < kWin || cols < kWin) return ssim_global(x, ref);
  if (x.size() % (static_cast<std::size_t>(rows) * cols) != 0) {
    throw Error(ErrorCode::ShapeMismatch, "ssim: size is not a multiple of rows * cols");
  }

  std::array<double, kWin> g{};
  double gsum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    g[i] = std::exp(-0.5 * (i - kHalf) * (i - kHalf) / (1.5 * 1.5));
    gsum += g[i];
  }
  for (auto& v : g) v /= gsum;

  const std::size_t plane = static_cast<std::size_t>(rows) * cols;
  const int frames = static_cast<int>(x.size() / plane);
  double total = 0.0;
  long count = 0;
  for (int f = 0; f < frames; ++f) {
    const double* a = x.data() + f * plane;
    const double* b = ref.data() + f * plane;
    // Valid windows only, as in the common reference implementation.
    for (int r = kHalf; r < rows - kHalf; ++r) {
      for (int c = kHalf; c < cols - kHalf; ++c) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (int i = 0; i < kWin; ++i) {
          for (int j = 0; j < kWin; ++j) {
            const double wgt = g[i] * g[j];
            const std::size_t idx = static_cast<std::size_t>(r + i - kHalf) * cols + (c + j - kHalf);
            mx += wgt * a[idx];
            my += wgt * b[idx];
            xx += wgt * a[idx] * a[idx];
            yy += wgt * b[idx] * b[idx];
            xy += wgt * a[idx] * b[idx];
          }
        }
        const double vx = xx - mx * mx;
        const double vy = yy - my * my;
        const double cxy = xy - mx * my;
        total += ((2 * mx * my + kSsimC1) * (2 * cxy + kSsimC2)) /
                 ((mx * mx + my * my + kSsimC1) * (vx + vy + kSsimC2));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

double ssim(const ComplexGrid& x, const ComplexGrid& ref) {
  require_same_shape(x, ref, "ssim");
  return ssim(magnitudes(x), magnitudes(ref), x.rows(), x.cols());
}

void write_png(const std::filesystem::path& path, const std::vector<double>& values, int rows, int cols) {
  if (values.size() != static_cast<std::size_t>(rows) * cols) {
    throw Error(ErrorCode::ShapeMismatch, "png: value count does not match rows * cols");
  }
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (fp == nullptr) throw Error(ErrorCode::Io, "cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw Error(ErrorCode::Io, "libpng failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, cols, rows, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double v = std::clamp(values[static_cast<std::size_t>(r) * cols + c], 0.0, 1.0);
      row[c] = static_cast<png_byte>(std::lround(255.0 * v));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

ReconMethod parse_recon_method(std::string_view name) {
  if (name == "zero-filled") return ReconMethod::ZeroFilled;
  if (name == "ddnm") return ReconMethod::Ddnm;
  if (name == "spa") return ReconMethod::Spa;
  throw Error(ErrorCode::InvalidParameter, "unknown method '" + std::string(name) + "'");
}

std::string_view to_string(ReconMethod m) {
  switch (m) {
    case ReconMethod::ZeroFilled: return "zero-filled";
    case ReconMethod::Ddnm: return "ddnm";
    case ReconMethod::Spa: return "spa";
  }
  return "?";
}

void BenchConfig::validate() const {
  if (patterns.empty() || accels.empty() || seeds.empty() || methods.empty()) {
    throw Error(ErrorCode::InvalidParameter, "benchmark needs patterns, accels, seeds and methods");
  }
  for (double a : accels) {
    if (!(a >= 1.0)) throw Error(ErrorCode::InvalidParameter, "accelerations must be >= 1");
  }
  if (rows < 16 || cols < 16) throw Error(ErrorCode::InvalidParameter, "benchmark grids must be at least 16x16");
  if (coils < 1 || acs < 0 || n_ellipses < 1 || workers < 1) {
    throw Error(ErrorCode::InvalidParameter, "coils >= 1, acs >= 0, n_ellipses >= 1 and workers >= 1 are required");
  }
}

int acs_for(int cols, double accel, int requested) {
  const int budget = static_cast<int>(std::lround(cols / accel));
  return std::max(0, std::min(requested, std::max(1, budget / 2)));
}

SamplingMask bench_mask(MaskPattern p, int rows, int cols, double accel, int acs, std::uint64_t seed) {
  switch (p) {
    case MaskPattern::Gaussian: return gen_gaussian_mask(rows, cols, accel, acs_for(cols, accel, acs), seed);
    case MaskPattern::Uniform: return gen_uniform_mask(rows, cols, accel, acs_for(cols, accel, acs));
    case MaskPattern::Radial: return gen_radial_mask(rows, cols, accel, seed);
  }
  throw Error(ErrorCode::InvalidParameter, "unknown mask pattern");
}

std::pair<double, double> evaluate(const ComplexGrid& recon, const ComplexGrid& truth) {
  require_same_shape(recon, truth, "evaluate");
  const auto a = unit_magnitude(recon);
  const auto b = unit_magnitude(truth);
  return {psnr(a, b), ssim(a, b, recon.rows(), recon.cols())};
}

std::string accel_tag(double accel) {
  std::ostringstream os;
  os << accel;
  return os.str();
}

namespace {

// Cells see exactly what the file-based CLI pipeline would: every array
// passes through complex64 storage once.
ComplexGrid storage_roundtrip(const ComplexGrid& g) { return grid_from_tensor(grid_to_tensor(g), g.domain()); }

struct CellOutput {
  std::vector<BenchRow> rows;
};

void write_panel(const std::filesystem::path& path, const ComplexGrid& recon, const ComplexGrid& truth) {
  // Reconstruction on the left, 5x amplified absolute error on the right.
  const auto a = unit_magnitude(recon);
  const auto b = unit_magnitude(truth);
  const int h = recon.rows();
  const int w = recon.cols();
  std::vector<double> panel(static_cast<std::size_t>(h) * 2 * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * w + c;
      panel[static_cast<std::size_t>(r) * 2 * w + c] = a[i];
      panel[static_cast<std::size_t>(r) * 2 * w + w + c] = 5.0 * std::abs(a[i] - b[i]);
    }
  }
  write_png(path, panel, h, 2 * w);
}

CellOutput run_cell(const BenchConfig& cfg, MaskPattern pattern, double accel, std::uint64_t seed,
                    const CoilSensitivities& coils, const Denoiser& den, const NoiseSchedule& s,
                    const ReconConfig& recon) {
  CellOutput out;
  Phantom ph = gen_phantom(cfg.rows, cfg.cols, seed + cfg.phantom_seed_offset, cfg.n_ellipses);
  ph.image = storage_roundtrip(ph.image);
  const SamplingMask mask = bench_mask(pattern, cfg.rows, cfg.cols, accel, cfg.acs, seed);
  const EncodingOperator op(mask, coils);
  const KSpaceData y = kspace_from_tensor(kspace_to_tensor(op.forward(ph.image)));
  const std::string stem = std::string(to_string(pattern)) + "_R" + accel_tag(accel) + "_seed" + std::to_string(seed);
  if (cfg.panels && !cfg.output_dir.empty()) {
    write_png(cfg.output_dir / (stem + "_gt.png"), unit_magnitude(ph.image), cfg.rows, cfg.cols);
  }

  for (ReconMethod m : cfg.methods) {
    BenchRow row;
    row.method = m;
    row.pattern = pattern;
    row.accel = accel;
    row.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      ComplexGrid img;
      ReconConfig rc = recon;
      rc.seed = seed;
      switch (m) {
        case ReconMethod::ZeroFilled:
          img = zero_filled(op, y);
          break;
        case ReconMethod::Ddnm: {
          auto r = ddnm_sample(y, op, den, s, rc);
          img = std::move(r.image);
          row.nfe = r.trace.nfe;
          break;
        }
        case ReconMethod::Spa: {
          auto r = spa_mri_sample(y, op, den, s, rc);
          img = std::move(r.image);
          row.nfe = r.trace.nfe;
          break;
        }
      }
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      img = storage_roundtrip(img);
      std::tie(row.psnr_db, row.ssim) = evaluate(img, ph.image);
      if (cfg.panels && !cfg.output_dir.empty()) {
        write_panel(cfg.output_dir / (stem + "_" + std::string(to_string(m)) + ".png"), img, ph.image);
      }
    } catch (const Error& e) {
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      row.failed = true;
      row.error = e.what();
      row.psnr_db = std::numeric_limits<double>::quiet_NaN();
      row.ssim = std::numeric_limits<double>::quiet_NaN();
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace

BenchReport run_benchmark(const BenchConfig& cfg, const Denoiser& den, const NoiseSchedule& s,
                          const ReconConfig& recon) {
  cfg.validate();
  recon.validate(s);
  if (!cfg.output_dir.empty()) std::filesystem::create_directories(cfg.output_dir);
  const CoilSensitivities coils =
      coils_from_tensor(coils_to_tensor(gen_coil_maps(cfg.coils, cfg.rows, cfg.cols, cfg.coil_seed)));

  struct Cell {
    MaskPattern pattern;
    double accel;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (auto p : cfg.patterns) {
    for (double a : cfg.accels) {
      for (auto sd : cfg.seeds) cells.push_back({p, a, sd});
    }
  }

  std::vector<CellOutput> outputs(cells.size());
  std::atomic<std::size_t> next{0};
  // Setup errors (for example an infeasible mask) abort the run; the first one
  // is rethrown on the calling thread once the workers have drained.
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
      try {
        outputs[i] = run_cell(cfg, cells[i].pattern, cells[i].accel, cells[i].seed, coils, den, s, recon);
      } catch (...) {
        const std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next = cells.size();
      }
    }
  };
  const int n = std::min<int>(cfg.workers, static_cast<int>(cells.size()));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);

  BenchReport report;
  for (auto& o : outputs) {
    for (auto& r : o.rows) report.rows.push_back(std::move(r));
  }
  if (!cfg.output_dir.empty()) save_report_csv(cfg.output_dir / "report.csv", report);
  return report;
}

void write_report_csv(std::ostream& os, const BenchReport& r) {
  os << "method,pattern,accel,seed,psnr_db,ssim,nfe,seconds\n";
  os.precision(10);
  for (const auto& row : r.rows) {
    os << to_string(row.method) << ',' << to_string(row.pattern) << ',' << accel_tag(row.accel) << ',' << row.seed
       << ',';
    if (row.failed) {
      os << "failed,failed";
    } else {
      os << row.psnr_db << ',' << row.ssim;
    }
    os << ',' << row.nfe << ',' << row.seconds << '\n';
  }
}

void save_report_csv(const std::filesystem::path& path, const BenchReport& r) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::Io, "cannot open " + path.string());
  write_report_csv(os, r);
}

}  // namespace spamri
