#pragma once

#include <atomic>
#include <cstdint>
#include <functional>

#include "spamri/grid.hpp"
#include "spamri/schedule.hpp"

namespace spamri {

/// Noise-prediction model eps(x_t, t). Implementations must be pure: the
/// same input gives the same output, and concurrent calls are allowed.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual PseudoRealStack eps(const PseudoRealStack& x_t, int t) const = 0;
};

/// x0 = (x_t - sqrt(1 - abar_t) eps) / sqrt(abar_t).
PseudoRealStack estimate_x0(const PseudoRealStack& x_t, int t, const PseudoRealStack& eps_hat,
                            const NoiseSchedule& s);

/// score = -eps / sqrt(1 - abar_t).
PseudoRealStack score_from_eps(const PseudoRealStack& eps_hat, int t, const NoiseSchedule& s);
PseudoRealStack eps_from_score(const PseudoRealStack& score, int t, const NoiseSchedule& s);

/// Independent Gaussian prior on every pseudo-real element.
struct GaussianPrior {
  PseudoRealStack mean;
  PseudoRealStack var;

  static GaussianPrior isotropic(PseudoRealStack mean, double var);
  void validate() const;
};

/// Closed-form noise prediction for a Gaussian data distribution: the
/// marginal at step t is N(sqrt(abar) mean, abar var + 1 - abar), whose score
/// is converted to eps.
PseudoRealStack analytic_gaussian_eps(const GaussianPrior& prior, const PseudoRealStack& x_t, int t,
                                      const NoiseSchedule& s);

/// log p_t(x_t) for the Gaussian marginal above, used by finite-difference checks.
double gaussian_log_marginal(const GaussianPrior& prior, const PseudoRealStack& x_t, int t,
                             const NoiseSchedule& s);

class AnalyticGaussianDenoiser final : public Denoiser {
 public:
  AnalyticGaussianDenoiser(GaussianPrior prior, NoiseSchedule schedule);

  PseudoRealStack eps(const PseudoRealStack& x_t, int t) const override;

  const GaussianPrior& prior() const noexcept { return prior_; }
  const NoiseSchedule& schedule() const noexcept { return schedule_; }

 private:
  GaussianPrior prior_;
  NoiseSchedule schedule_;
};

/// Wraps another denoiser and counts evaluations (the NFE).
class CountingDenoiser final : public Denoiser {
 public:
  explicit CountingDenoiser(const Denoiser& inner) : inner_(inner) {}

  PseudoRealStack eps(const PseudoRealStack& x_t, int t) const override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_.eps(x_t, t);
  }

  long calls() const noexcept { return calls_.load(std::memory_order_relaxed); }
  void reset() noexcept { calls_.store(0, std::memory_order_relaxed); }

 private:
  const Denoiser& inner_;
  mutable std::atomic<long> calls_{0};
};

/// Adapter for lambdas; handy for oracles and tests.
class FunctionDenoiser final : public Denoiser {
 public:
  using Fn = std::function<PseudoRealStack(const PseudoRealStack&, int)>;
  explicit FunctionDenoiser(Fn fn) : fn_(std::move(fn)) {}
  PseudoRealStack eps(const PseudoRealStack& x_t, int t) const override { return fn_(x_t, t); }

 private:
  Fn fn_;
};

/// Predicts zero noise everywhere.
class ZeroDenoiser final : public Denoiser {
 public:
  PseudoRealStack eps(const PseudoRealStack& x_t, int) const override {
    return PseudoRealStack(x_t.channels(), x_t.rows(), x_t.cols());
  }
};

}  // namespace spamri
