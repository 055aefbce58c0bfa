#include "spamri/denoiser.hpp"

#include <cmath>
#include <numbers>

#include "spamri/error.hpp"

namespace spamri {

PseudoRealStack estimate_x0(const PseudoRealStack& x_t, int t, const PseudoRealStack& eps_hat,
                            const NoiseSchedule& s) {
  require_same_shape(x_t, eps_hat, "estimate_x0");
  const double ab = s.alpha_bar(t);
  const double noise = std::sqrt(1.0 - ab);
  const double inv_signal = 1.0 / std::sqrt(ab);
  PseudoRealStack out(x_t.channels(), x_t.rows(), x_t.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - noise * eps_hat[i]) * inv_signal;
  return out;
}

PseudoRealStack score_from_eps(const PseudoRealStack& eps_hat, int t, const NoiseSchedule& s) {
  const double ab = s.alpha_bar(t);
  if (!(ab < 1.0)) throw Error(ErrorCode::DegenerateDivision, "alpha_bar == 1 has no score scale");
  return (-1.0 / std::sqrt(1.0 - ab)) * eps_hat;
}

PseudoRealStack eps_from_score(const PseudoRealStack& score, int t, const NoiseSchedule& s) {
  const double ab = s.alpha_bar(t);
  return (-std::sqrt(1.0 - ab)) * score;
}

GaussianPrior GaussianPrior::isotropic(PseudoRealStack mean, double var) {
  PseudoRealStack v(mean.channels(), mean.rows(), mean.cols());
  for (auto& e : v.data()) e = var;
  GaussianPrior p{std::move(mean), std::move(v)};
  p.validate();
  return p;
}

void GaussianPrior::validate() const {
  require_same_shape(mean, var, "GaussianPrior");
  for (double v : var.data()) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::InvalidParameter, "prior variance must be positive and finite");
    }
  }
}

PseudoRealStack analytic_gaussian_eps(const GaussianPrior& prior, const PseudoRealStack& x_t, int t,
                                      const NoiseSchedule& s) {
  require_same_shape(prior.mean, x_t, "analytic_gaussian_eps");
  const double ab = s.alpha_bar(t);
  const double sab = std::sqrt(ab);
  const double noise = std::sqrt(1.0 - ab);
  PseudoRealStack out(x_t.channels(), x_t.rows(), x_t.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double marginal_var = ab * prior.var[i] + (1.0 - ab);
    const double score = -(x_t[i] - sab * prior.mean[i]) / marginal_var;
    out[i] = -noise * score;
  }
  return out;
}

double gaussian_log_marginal(const GaussianPrior& prior, const PseudoRealStack& x_t, int t,
                             const NoiseSchedule& s) {
  require_same_shape(prior.mean, x_t, "gaussian_log_marginal");
  const double ab = s.alpha_bar(t);
  const double sab = std::sqrt(ab);
  double acc = 0.0;
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    const double v = ab * prior.var[i] + (1.0 - ab);
    const double d = x_t[i] - sab * prior.mean[i];
    acc += -0.5 * d * d / v - 0.5 * std::log(2.0 * std::numbers::pi * v);
  }
  return acc;
}

AnalyticGaussianDenoiser::AnalyticGaussianDenoiser(GaussianPrior prior, NoiseSchedule schedule)
    : prior_(std::move(prior)), schedule_(std::move(schedule)) {
  prior_.validate();
}

PseudoRealStack AnalyticGaussianDenoiser::eps(const PseudoRealStack& x_t, int t) const {
  return analytic_gaussian_eps(prior_, x_t, t, schedule_);
}

}  // namespace spamri
