#include "spamri/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "spamri/error.hpp"

namespace spamri {

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "cosine") return ScheduleKind::Cosine;
  if (name == "linear") return ScheduleKind::Linear;
  throw Error(ErrorCode::InvalidParameter, "unknown schedule type '" + std::string(name) + "'");
}

std::string_view to_string(ScheduleKind k) {
  return k == ScheduleKind::Cosine ? "cosine" : "linear";
}

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : beta_(std::move(betas)) {
  if (beta_.size() < 2) throw Error(ErrorCode::InvalidParameter, "schedule needs T >= 2");
  alpha_.resize(beta_.size());
  alpha_bar_.resize(beta_.size());
  double cumulative = 1.0;
  for (std::size_t t = 0; t < beta_.size(); ++t) {
    if (!(beta_[t] > 0.0 && beta_[t] < 1.0)) {
      throw Error(ErrorCode::InvalidParameter, "beta must lie in (0, 1)");
    }
    alpha_[t] = 1.0 - beta_[t];
    cumulative *= alpha_[t];
    alpha_bar_[t] = cumulative;
  }
}

void NoiseSchedule::check(int t) const {
  if (t < 0 || t >= steps()) {
    throw Error(ErrorCode::IndexOutOfRange,
                "timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps()) + ")");
  }
}

double NoiseSchedule::beta(int t) const { check(t); return beta_[t]; }
double NoiseSchedule::alpha(int t) const { check(t); return alpha_[t]; }
double NoiseSchedule::alpha_bar(int t) const { check(t); return alpha_bar_[t]; }

double NoiseSchedule::alpha_bar_or_one(int t) const {
  if (t == -1) return 1.0;
  return alpha_bar(t);
}

NoiseSchedule cosine_schedule(int T) {
  if (T < 2) throw Error(ErrorCode::InvalidParameter, "cosine schedule needs T >= 2");
  constexpr double s = 0.008;
  auto f = [T](double t) {
    const double v = std::cos(((t / T + s) / (1.0 + s)) * std::numbers::pi / 2.0);
    return v * v;
  };
  std::vector<double> betas(T);
  const double f0 = f(0.0);
  for (int t = 0; t < T; ++t) {
    const double ab_next = f(t + 1.0) / f0;
    const double ab = f(static_cast<double>(t)) / f0;
    betas[t] = std::min(1.0 - ab_next / ab, 0.999);
  }
  return NoiseSchedule(std::move(betas));
}

NoiseSchedule linear_schedule(int T, double beta_start, double beta_end) {
  if (T < 2) throw Error(ErrorCode::InvalidParameter, "linear schedule needs T >= 2");
  if (!(beta_start > 0.0 && beta_end >= beta_start && beta_end < 1.0)) {
    throw Error(ErrorCode::InvalidParameter, "linear schedule needs 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(T);
  for (int t = 0; t < T; ++t) betas[t] = beta_start + (beta_end - beta_start) * t / (T - 1);
  return NoiseSchedule(std::move(betas));
}

NoiseSchedule make_schedule(ScheduleKind kind, int T) {
  return kind == ScheduleKind::Cosine ? cosine_schedule(T) : linear_schedule(T);
}

double ddim_sigma(const NoiseSchedule& s, int t, int t_prev, double eta) {
  if (t_prev < -1 || t_prev >= t || t >= s.steps()) {
    throw Error(ErrorCode::IndexOutOfRange, "ddim_sigma needs t > t_prev >= -1 and t < T");
  }
  if (eta == 0.0) return 0.0;
  const double ab_t = s.alpha_bar(t);
  const double ab_prev = s.alpha_bar_or_one(t_prev);
  return eta * std::sqrt(s.beta(t) * (1.0 - ab_prev) / (1.0 - ab_t));
}

TimestepPlan uniform_plan(const NoiseSchedule& s, int n_steps, int t_start, double eta) {
  if (t_start < 0 || t_start >= s.steps()) {
    throw Error(ErrorCode::InvalidParameter, "t_start must lie in [0, T)");
  }
  if (n_steps < 1 || n_steps > t_start + 1) {
    throw Error(ErrorCode::InvalidParameter,
                "reverse step count must lie in [1, t_start + 1], got " + std::to_string(n_steps));
  }
  if (!(eta >= 0.0)) throw Error(ErrorCode::InvalidParameter, "eta must be non-negative");
  TimestepPlan plan;
  plan.eta = eta;
  if (n_steps == 1) {
    plan.steps = {0};
    return plan;
  }
  plan.steps.reserve(n_steps);
  for (int i = 0; i < n_steps; ++i) {
    const double pos = static_cast<double>(t_start) * (n_steps - 1 - i) / (n_steps - 1);
    plan.steps.push_back(static_cast<int>(std::lround(pos)));
  }
  return plan;
}

std::vector<int> ascending_plan(const NoiseSchedule& s, int n_steps, int t_end) {
  if (t_end < 0 || t_end >= s.steps()) {
    throw Error(ErrorCode::InvalidParameter, "inversion endpoint must lie in [0, T)");
  }
  if (n_steps < 0 || n_steps > t_end) {
    throw Error(ErrorCode::InvalidParameter,
                "inversion step count must lie in [0, t_end], got " + std::to_string(n_steps));
  }
  if (n_steps == 0) return {};
  std::vector<int> ts;
  ts.reserve(n_steps + 1);
  for (int i = 0; i <= n_steps; ++i) {
    ts.push_back(static_cast<int>(std::lround(static_cast<double>(t_end) * i / n_steps)));
  }
  return ts;
}

}  // namespace spamri
