#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "spamri/denoiser.hpp"
#include "spamri/encoding.hpp"
#include "spamri/grid.hpp"
#include "spamri/masks.hpp"
#include "spamri/sampler.hpp"
#include "spamri/schedule.hpp"

namespace spamri {

/// Ellipse in normalised coordinates: x and y span [-1, 1] over the grid.
struct Ellipse {
  double cx = 0.0;
  double cy = 0.0;
  double ax = 0.5;
  double ay = 0.5;
  double angle = 0.0;
  double intensity = 1.0;
};

struct PhantomDescriptor {
  int rows = 0;
  int cols = 0;
  std::uint64_t seed = 0;
  std::vector<Ellipse> ellipses;
  // phase(x, y) = phase0 + phase_x * x + phase_y * y
  double phase0 = 0.0;
  double phase_x = 0.0;
  double phase_y = 0.0;
};

struct Phantom {
  ComplexGrid image;
  PhantomDescriptor descriptor;
};

/// Overlapping random ellipses inside a body outline, scaled so the largest
/// magnitude is 1, times a smooth linear phase ramp.
Phantom gen_phantom(int rows, int cols, std::uint64_t seed, int n_ellipses = 8);
ComplexGrid render_phantom(const PhantomDescriptor& d);

KSpaceData simulate_acquisition(const Phantom& ph, const CoilSensitivities& coils, const SamplingMask& mask);

/// |x| divided by its own maximum (all zeros stays zero).
std::vector<double> unit_magnitude(const ComplexGrid& x);

/// PSNR in dB on magnitude images that are already in [0, 1]; +inf when
/// the images are identical.
double psnr(const ComplexGrid& x, const ComplexGrid& ref);
double psnr(const std::vector<double>& x, const std::vector<double>& ref);

/// Mean SSIM over 11x11 Gaussian windows (sigma 1.5), c1 = 1e-4, c2 = 9e-4.
/// Falls back to ssim_global when the image is smaller than the window.
double ssim(const ComplexGrid& x, const ComplexGrid& ref);
double ssim(const std::vector<double>& x, const std::vector<double>& ref, int rows, int cols);
/// Single-window SSIM over whole images.
double ssim_global(const ComplexGrid& x, const ComplexGrid& ref);
double ssim_global(const std::vector<double>& x, const std::vector<double>& ref);

constexpr double kSsimC1 = 1e-4;
constexpr double kSsimC2 = 9e-4;

/// 8-bit greyscale PNG; values are clipped to [0, 1].
void write_png(const std::filesystem::path& path, const std::vector<double>& values, int rows, int cols);

enum class ReconMethod { ZeroFilled, Ddnm, Spa };
ReconMethod parse_recon_method(std::string_view name);
std::string_view to_string(ReconMethod m);

struct BenchConfig {
  std::vector<MaskPattern> patterns{MaskPattern::Gaussian, MaskPattern::Uniform, MaskPattern::Radial};
  std::vector<double> accels{4.0, 12.0, 24.0};
  std::vector<std::uint64_t> seeds{0};
  std::vector<ReconMethod> methods{ReconMethod::ZeroFilled, ReconMethod::Ddnm, ReconMethod::Spa};
  int rows = 64;
  int cols = 64;
  int coils = 4;
  /// Requested ACS width; shrunk per acceleration so it fits the column budget.
  int acs = 16;
  int n_ellipses = 8;
  std::uint64_t coil_seed = 1;
  /// Added to each bench seed to derive the phantom seed, keeping test
  /// phantoms apart from training phantoms.
  std::uint64_t phantom_seed_offset = 1000000;
  int workers = 1;
  std::filesystem::path output_dir;  // empty: no CSV or PNG output
  bool panels = true;

  void validate() const;
};

/// ACS width actually used for a Cartesian mask at this acceleration.
int acs_for(int cols, double accel, int requested);

/// Builds a mask for one benchmark cell.
SamplingMask bench_mask(MaskPattern p, int rows, int cols, double accel, int acs, std::uint64_t seed);

struct BenchRow {
  ReconMethod method = ReconMethod::ZeroFilled;
  MaskPattern pattern = MaskPattern::Gaussian;
  double accel = 1.0;
  std::uint64_t seed = 0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  long nfe = 0;
  double seconds = 0.0;
  bool failed = false;
  std::string error;
};

struct BenchReport {
  std::vector<BenchRow> rows;
};

/// Evaluates one reconstruction against ground truth after scaling both to
/// unit maximum magnitude.
std::pair<double, double> evaluate(const ComplexGrid& recon, const ComplexGrid& truth);

/// Runs every (pattern, accel, seed, method) cell. A reconstruction error marks
/// its row failed; a setup error such as an infeasible mask aborts the run.
BenchReport run_benchmark(const BenchConfig& cfg, const Denoiser& den, const NoiseSchedule& s,
                          const ReconConfig& recon);

void write_report_csv(std::ostream& os, const BenchReport& r);
void save_report_csv(const std::filesystem::path& path, const BenchReport& r);

/// Human-readable accel tag used in file names, e.g. "4" or "2.5".
std::string accel_tag(double accel);

}  // namespace spamri
