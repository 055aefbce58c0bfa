#pragma once

#include <string_view>

#include "spamri/denoiser.hpp"
#include "spamri/encoding.hpp"
#include "spamri/grid.hpp"
#include "spamri/schedule.hpp"

namespace spamri {

/// Residual weights for the centred low-frequency block and the rest of
/// k-space. The block is clamped to the grid when the grid is smaller.
struct FrequencyWeights {
  double lambda_low = 0.4;
  double lambda_high = 0.6;
  int center_rows = 32;
  int center_cols = 32;

  void validate() const;
};

enum class OmegaForm {
  HalfTanh,   // xi * (1 + tanh(d)/2), range (xi/2, 3xi/2)
  FullRange,  // xi * (1 + tanh(d)) / 2, range (0, xi)
};

OmegaForm parse_omega_form(std::string_view name);
std::string_view to_string(OmegaForm f);

struct ConsistencyState {
  double xi = 3.0;
  double delta_prev = 0.0;
  double delta_curr = 0.0;
  OmegaForm form = OmegaForm::HalfTanh;

  void validate() const;
};

/// A(x) - y, zero outside the mask.
KSpaceData residual(const ComplexGrid& x, const KSpaceData& y, const EncodingOperator& op);

/// Scales the centred block by lambda_low and everything else by lambda_high.
KSpaceData freq_decompose(const KSpaceData& delta, const FrequencyWeights& w);

/// Low-frequency block actually used for a rows x cols grid.
AcsRect low_frequency_block(const FrequencyWeights& w, int rows, int cols);

double adaptive_weight(const ConsistencyState& st);

struct BackprojectResult {
  ComplexGrid x;
  double delta = 0.0;
  double omega = 0.0;
};

/// One adaptive data-consistency step. st.delta_curr is ignored; the step
/// computes delta_t = ||freq_decompose(residual)|| itself and uses it for omega.
BackprojectResult backproject_adaptive(const ComplexGrid& x0_hat, const KSpaceData& y,
                                       const EncodingOperator& op, const FrequencyWeights& w,
                                       const ConsistencyState& st);

/// Same step with omega fixed by the caller.
ComplexGrid backproject_fixed(const ComplexGrid& x0_hat, const KSpaceData& y, const EncodingOperator& op,
                              const FrequencyWeights& w, double omega);

/// x0 - A^H A x0 + A^H y.
ComplexGrid ddnm_project(const ComplexGrid& x0_hat, const KSpaceData& y, const EncodingOperator& op);

/// Gradient of ||y - A(x0(x_t))||^2 with respect to the pseudo-real x_t, where
/// x0(x_t) is the Tweedie estimate under a Gaussian prior. The 1/sigma^2
/// weighting is left to the caller.
PseudoRealStack dps_gradient(const GaussianPrior& prior, const PseudoRealStack& x_t, int t,
                             const KSpaceData& y, const EncodingOperator& op, const NoiseSchedule& s);

/// Accepts only AnalyticGaussianDenoiser; anything else throws UnsupportedDenoiser.
PseudoRealStack dps_gradient(const Denoiser& den, const PseudoRealStack& x_t, int t, const KSpaceData& y,
                             const EncodingOperator& op, const NoiseSchedule& s);

}  // namespace spamri
