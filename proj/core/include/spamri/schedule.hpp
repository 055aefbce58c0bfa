#pragma once

#include <string_view>
#include <vector>

namespace spamri {

enum class ScheduleKind { Cosine, Linear };

ScheduleKind parse_schedule_kind(std::string_view name);
std::string_view to_string(ScheduleKind k);

/// Discrete variance-preserving diffusion coefficients over T steps:
/// beta_t, alpha_t = 1 - beta_t and alpha_bar_t = prod_{s<=t} alpha_s.
class NoiseSchedule {
 public:
  explicit NoiseSchedule(std::vector<double> betas);

  int steps() const noexcept { return static_cast<int>(beta_.size()); }
  double beta(int t) const;
  double alpha(int t) const;
  double alpha_bar(int t) const;
  /// alpha_bar with the convention alpha_bar(-1) == 1 (the clean endpoint).
  double alpha_bar_or_one(int t) const;

  const std::vector<double>& betas() const noexcept { return beta_; }
  const std::vector<double>& alpha_bars() const noexcept { return alpha_bar_; }

 private:
  void check(int t) const;

  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
};

/// Improved-DDPM cosine schedule: alpha_bar(t) = f(t)/f(0) with
/// f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2), s = 0.008, betas clipped at 0.999.
NoiseSchedule cosine_schedule(int T);
NoiseSchedule linear_schedule(int T, double beta_start = 1e-4, double beta_end = 2e-2);
NoiseSchedule make_schedule(ScheduleKind kind, int T);

/// eta * sqrt(beta_t (1 - alpha_bar_{t_prev}) / (1 - alpha_bar_t)).
double ddim_sigma(const NoiseSchedule& s, int t, int t_prev, double eta);

/// Reverse-time schedule indices, strictly decreasing and ending at 0.
struct TimestepPlan {
  std::vector<int> steps;
  double eta = 0.0;
};

/// n_steps indices spaced evenly (rounded) from t_start down to 0.
TimestepPlan uniform_plan(const NoiseSchedule& s, int n_steps, int t_start, double eta);

/// n_steps + 1 indices spaced evenly from 0 up to t_end (inclusive), used by
/// the inversion loop. Empty when n_steps == 0.
std::vector<int> ascending_plan(const NoiseSchedule& s, int n_steps, int t_end);

}  // namespace spamri
