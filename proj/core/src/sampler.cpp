#include "spamri/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

namespace spamri {

int ReconConfig::resolved_t_start(const NoiseSchedule& s) const { return t_start < 0 ? s.steps() - 1 : t_start; }

void ReconConfig::validate(const NoiseSchedule& s) const {
  const int ts = resolved_t_start(s);
  if (ts >= s.steps()) throw Error(ErrorCode::InvalidParameter, "t_start must be below T");
  if (reverse_steps < 1 || reverse_steps > ts + 1) {
    throw Error(ErrorCode::InvalidParameter, "reverse_steps must lie in [1, t_start + 1]");
  }
  if (inversion_steps < 0 || inversion_steps > ts) {
    throw Error(ErrorCode::InvalidParameter, "inversion_steps must lie in [0, t_start]");
  }
  if (!(inversion_noise_scale >= 0.0 && inversion_noise_scale <= 1.0)) {
    throw Error(ErrorCode::InvalidParameter, "inversion_noise_scale must lie in [0, 1]");
  }
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw Error(ErrorCode::InvalidParameter, "eta must be >= 0");
  if (!(xi >= 0.0) || !std::isfinite(xi)) throw Error(ErrorCode::InvalidParameter, "xi must be >= 0");
  freq.validate();
}

void write_trace_csv(std::ostream& os, const SampleTrace& trace) {
  os << "step_index,t,delta,omega,x0_norm,cum_nfe\n";
  os.precision(17);
  for (const auto& r : trace.records) {
    os << r.step_index << ',' << r.t << ',' << r.delta << ',' << r.omega << ',' << r.x0_norm << ','
       << r.cum_nfe << '\n';
  }
}

void save_trace_csv(const std::filesystem::path& path, const SampleTrace& trace) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::Io, "cannot open " + path.string());
  write_trace_csv(os, trace);
}

PseudoRealStack standard_normal(int channels, int rows, int cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  PseudoRealStack z(channels, rows, cols);
  for (auto& v : z.data()) v = n(rng);
  return z;
}

PseudoRealStack ddim_update(const PseudoRealStack& x0_hat, const PseudoRealStack& eps_hat, int t, int t_prev,
                            const NoiseSchedule& s, double eta, Rng& rng) {
  require_same_shape(x0_hat, eps_hat, "ddim_update");
  if (t_prev < 0) return x0_hat;
  const double ab_prev = s.alpha_bar(t_prev);
  const double sigma = ddim_sigma(s, t, t_prev, eta);
  const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
  PseudoRealStack out = std::sqrt(ab_prev) * x0_hat;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += dir * eps_hat[i];
  if (sigma > 0.0) {
    const PseudoRealStack z = standard_normal(out.channels(), out.rows(), out.cols(), rng);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += sigma * z[i];
  }
  return out;
}

PseudoRealStack ddim_reverse_step(const PseudoRealStack& x_t, int t, int t_prev, const Denoiser& den,
                                  const NoiseSchedule& s, double eta, Rng& rng) {
  if (!(t > t_prev)) throw Error(ErrorCode::IndexOutOfRange, "reverse step needs t > t_prev");
  const PseudoRealStack eps = den.eps(x_t, t);
  return ddim_update(estimate_x0(x_t, t, eps, s), eps, t, t_prev, s, eta, rng);
}

PseudoRealStack ddim_forward_naive(const PseudoRealStack& x_t, int t, int t_next, const Denoiser& den,
                                   const NoiseSchedule& s) {
  if (!(t_next > t)) throw Error(ErrorCode::IndexOutOfRange, "forward step needs t_next > t");
  const PseudoRealStack eps = den.eps(x_t, t);
  const PseudoRealStack x0 = estimate_x0(x_t, t, eps, s);
  const double ab = s.alpha_bar(t_next);
  PseudoRealStack out = std::sqrt(ab) * x0;
  const double dir = std::sqrt(1.0 - ab);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += dir * eps[i];
  return out;
}

PseudoRealStack dai_forward_step(const PseudoRealStack& x_t, int t, int t_next, const Denoiser& den,
                                 const NoiseSchedule& s, double noise_scale, Rng& rng) {
  if (!(t_next > t)) throw Error(ErrorCode::IndexOutOfRange, "forward step needs t_next > t");
  const double ab = s.alpha_bar(t_next);
  const double kick = noise_scale * s.beta(t_next);
  const double radicand = 1.0 - ab - kick;
  if (radicand < 0.0) {
    throw Error(ErrorCode::InfeasibleSchedule,
                "1 - alpha_bar - noise_scale * beta is negative at t = " + std::to_string(t_next));
  }
  const PseudoRealStack eps = den.eps(x_t, t);
  const PseudoRealStack x0 = estimate_x0(x_t, t, eps, s);
  PseudoRealStack out = std::sqrt(ab) * x0;
  const double dir = std::sqrt(radicand);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += dir * eps[i];
  if (kick > 0.0) {
    const PseudoRealStack z = standard_normal(out.channels(), out.rows(), out.cols(), rng);
    const double amp = std::sqrt(kick);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += amp * z[i];
  }
  return out;
}

PseudoRealStack invert(const ComplexGrid& x0_prime, const ReconConfig& cfg, const Denoiser& den,
                       const NoiseSchedule& s, Rng& rng) {
  PseudoRealStack x = to_pseudo_real(x0_prime);
  if (cfg.inversion_steps == 0) return standard_normal(x.channels(), x.rows(), x.cols(), rng);
  const std::vector<int> ts = ascending_plan(s, cfg.inversion_steps, cfg.resolved_t_start(s));
  for (std::size_t k = 1; k < ts.size(); ++k) {
    x = dai_forward_step(x, ts[k - 1], ts[k], den, s, cfg.inversion_noise_scale, rng);
  }
  return x;
}

PseudoRealStack ddim_sample(PseudoRealStack x, const TimestepPlan& plan, const Denoiser& den,
                            const NoiseSchedule& s, Rng& rng) {
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const int t = plan.steps[i];
    const int t_prev = i + 1 < plan.steps.size() ? plan.steps[i + 1] : -1;
    x = ddim_reverse_step(x, t, t_prev, den, s, plan.eta, rng);
  }
  return x;
}

namespace {

struct Normalized {
  ComplexGrid x0_prime;
  KSpaceData y;
  NormParams params;
};

Normalized normalize_problem(const KSpaceData& y, const EncodingOperator& op) {
  auto [x0n, params] = normalize(zero_filled(op, y));
  KSpaceData yn = y;
  yn *= 1.0 / params.factor();
  return {std::move(x0n), std::move(yn), params};
}

// Clamps the x0 estimate and re-derives eps from the clamped estimate so the
// following DDIM step stays on a consistent trajectory.
PseudoRealStack clipped_x0(const PseudoRealStack& x, int t, PseudoRealStack& eps, const NoiseSchedule& s,
                           bool on) {
  PseudoRealStack x0 = estimate_x0(x, t, eps, s);
  if (!on) return x0;
  const double ab = s.alpha_bar(t);
  const double sa = std::sqrt(ab);
  const double sb = std::sqrt(1.0 - ab);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double c = std::clamp(x0[i], -1.0, 1.0);
    if (c != x0[i]) {
      x0[i] = c;
      eps[i] = (x[i] - sa * c) / sb;
    }
  }
  return x0;
}

void check_finite(const PseudoRealStack& x, int t, const SampleTrace& trace) {
  if (!x.all_finite()) {
    throw DivergenceError("non-finite state at t = " + std::to_string(t), trace);
  }
}

}  // namespace

SampleResult spa_mri_sample(const KSpaceData& y, const EncodingOperator& op, const Denoiser& den,
                            const NoiseSchedule& s, const ReconConfig& cfg) {
  cfg.validate(s);
  const CountingDenoiser counted(den);
  const Normalized prob = normalize_problem(y, op);
  Rng rng(cfg.seed);

  SampleResult result;
  SampleTrace& trace = result.trace;
  PseudoRealStack x = invert(prob.x0_prime, cfg, counted, s, rng);
  check_finite(x, cfg.resolved_t_start(s), trace);

  const TimestepPlan plan = uniform_plan(s, cfg.reverse_steps, cfg.resolved_t_start(s), cfg.eta);
  double delta_prev = 0.0;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const int t = plan.steps[i];
    const int t_prev = i + 1 < plan.steps.size() ? plan.steps[i + 1] : -1;
    PseudoRealStack eps = counted.eps(x, t);
    const PseudoRealStack x0_est = clipped_x0(x, t, eps, s, cfg.clip_x0);
    check_finite(x0_est, t, trace);
    ComplexGrid x0 = from_pseudo_real(x0_est);

    TraceRecord rec{static_cast<int>(i), t, 0.0, 0.0, 0.0, 0};
    if (cfg.xi > 0.0) {
      const ConsistencyState st{cfg.xi, delta_prev, 0.0, cfg.omega_form};
      BackprojectResult bp = backproject_adaptive(x0, prob.y, op, cfg.freq, st);
      x0 = std::move(bp.x);
      rec.delta = bp.delta;
      rec.omega = bp.omega;
      delta_prev = bp.delta;
    } else {
      rec.delta = freq_decompose(residual(x0, prob.y, op), cfg.freq).norm();
    }
    rec.x0_norm = x0.norm();
    rec.cum_nfe = counted.calls();
    trace.records.push_back(rec);

    x = ddim_update(to_pseudo_real(x0), eps, t, t_prev, s, cfg.eta, rng);
    check_finite(x, t, trace);
  }
  trace.nfe = counted.calls();
  result.image = denormalize(from_pseudo_real(x), prob.params);
  return result;
}

SampleResult ddnm_sample(const KSpaceData& y, const EncodingOperator& op, const Denoiser& den,
                         const NoiseSchedule& s, const ReconConfig& cfg) {
  cfg.validate(s);
  const CountingDenoiser counted(den);
  const Normalized prob = normalize_problem(y, op);
  Rng rng(cfg.seed);

  SampleResult result;
  SampleTrace& trace = result.trace;
  const PseudoRealStack shape = to_pseudo_real(prob.x0_prime);
  PseudoRealStack x = standard_normal(shape.channels(), shape.rows(), shape.cols(), rng);

  // A pure-noise seed only matches the marginal at the last timestep, so
  // t_start does not apply here.
  const TimestepPlan plan = uniform_plan(s, cfg.reverse_steps, s.steps() - 1, cfg.eta);
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const int t = plan.steps[i];
    const int t_prev = i + 1 < plan.steps.size() ? plan.steps[i + 1] : -1;
    PseudoRealStack eps = counted.eps(x, t);
    const PseudoRealStack x0_est = clipped_x0(x, t, eps, s, cfg.clip_x0);
    check_finite(x0_est, t, trace);
    const ComplexGrid x0_raw = from_pseudo_real(x0_est);
    TraceRecord rec{static_cast<int>(i), t, residual(x0_raw, prob.y, op).norm(), 1.0, 0.0, 0};
    const ComplexGrid x0 = ddnm_project(x0_raw, prob.y, op);
    rec.x0_norm = x0.norm();
    rec.cum_nfe = counted.calls();
    trace.records.push_back(rec);

    x = ddim_update(to_pseudo_real(x0), eps, t, t_prev, s, cfg.eta, rng);
    check_finite(x, t, trace);
  }
  trace.nfe = counted.calls();
  result.image = denormalize(from_pseudo_real(x), prob.params);
  return result;
}

}  // namespace spamri
