#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <vector>

#include "spamri/consistency.hpp"
#include "spamri/denoiser.hpp"
#include "spamri/encoding.hpp"
#include "spamri/error.hpp"
#include "spamri/grid.hpp"
#include "spamri/schedule.hpp"

namespace spamri {

using Rng = std::mt19937_64;

struct ReconConfig {
  int reverse_steps = 200;
  int inversion_steps = 25;
  double eta = 0.0;
  double inversion_noise_scale = 1.0;
  int t_start = -1;  // negative means T - 1
  std::uint64_t seed = 0;
  /// Base back-projection scale. Zero disables back-projection entirely.
  double xi = 3.0;
  /// Clamp every pseudo-real entry of the x0 estimate to [-1, 1], the range
  /// of normalized data, before consistency is enforced.
  bool clip_x0 = true;
  OmegaForm omega_form = OmegaForm::HalfTanh;
  FrequencyWeights freq;

  int resolved_t_start(const NoiseSchedule& s) const;
  void validate(const NoiseSchedule& s) const;
};

struct TraceRecord {
  int step_index = 0;
  int t = 0;
  double delta = 0.0;
  double omega = 0.0;
  double x0_norm = 0.0;
  long cum_nfe = 0;
};

/// One record per reverse step. cum_nfe counts inversion calls too.
struct SampleTrace {
  std::vector<TraceRecord> records;
  long nfe = 0;
};

void write_trace_csv(std::ostream& os, const SampleTrace& trace);
void save_trace_csv(const std::filesystem::path& path, const SampleTrace& trace);

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, SampleTrace trace)
      : Error(ErrorCode::Divergence, what), trace_(std::move(trace)) {}
  const SampleTrace& trace() const noexcept { return trace_; }

 private:
  SampleTrace trace_;
};

PseudoRealStack standard_normal(int channels, int rows, int cols, Rng& rng);

/// DDIM update from a clean estimate and its noise prediction. t_prev == -1
/// returns x0_hat unchanged.
PseudoRealStack ddim_update(const PseudoRealStack& x0_hat, const PseudoRealStack& eps_hat, int t, int t_prev,
                            const NoiseSchedule& s, double eta, Rng& rng);

PseudoRealStack ddim_reverse_step(const PseudoRealStack& x_t, int t, int t_prev, const Denoiser& den,
                                  const NoiseSchedule& s, double eta, Rng& rng);

/// Deterministic ascent: sqrt(abar_next) x0(x_t) + sqrt(1 - abar_next) eps.
PseudoRealStack ddim_forward_naive(const PseudoRealStack& x_t, int t, int t_next, const Denoiser& den,
                                   const NoiseSchedule& s);

/// Perturbed ascent: sqrt(abar_next) x0(x_t) + sqrt(1 - abar_next - l beta_next) eps
/// + sqrt(l beta_next) z with l = noise_scale.
PseudoRealStack dai_forward_step(const PseudoRealStack& x_t, int t, int t_next, const Denoiser& den,
                                 const NoiseSchedule& s, double noise_scale, Rng& rng);

/// Maps a normalised image onto the trajectory at t_start. With zero
/// inversion steps the seed is pure N(0, I) noise.
PseudoRealStack invert(const ComplexGrid& x0_prime, const ReconConfig& cfg, const Denoiser& den,
                       const NoiseSchedule& s, Rng& rng);

/// Unconditional DDIM over a plan, starting from x at plan.steps.front().
PseudoRealStack ddim_sample(PseudoRealStack x, const TimestepPlan& plan, const Denoiser& den,
                            const NoiseSchedule& s, Rng& rng);

struct SampleResult {
  ComplexGrid image;
  SampleTrace trace;
};

/// Inversion from the normalised zero-filled image, then DDIM with adaptive
/// back-projection. A single generator seeded with cfg.seed drives the
/// inversion and then the reverse loop.
SampleResult spa_mri_sample(const KSpaceData& y, const EncodingOperator& op, const Denoiser& den,
                            const NoiseSchedule& s, const ReconConfig& cfg);

/// DDIM from pure noise at t = T-1 with a null-space projection at every step;
/// cfg.t_start and the inversion settings are ignored.
SampleResult ddnm_sample(const KSpaceData& y, const EncodingOperator& op, const Denoiser& den,
                         const NoiseSchedule& s, const ReconConfig& cfg);

}  // namespace spamri
