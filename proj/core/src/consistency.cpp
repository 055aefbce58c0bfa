#include "spamri/consistency.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spamri/error.hpp"

namespace spamri {

void FrequencyWeights::validate() const {
  if (!std::isfinite(lambda_low) || !std::isfinite(lambda_high) || lambda_low < 0.0 || lambda_high < 0.0) {
    throw Error(ErrorCode::InvalidParameter, "frequency weights must be finite and non-negative");
  }
  if (center_rows < 0 || center_cols < 0) {
    throw Error(ErrorCode::InvalidParameter, "low-frequency block size must be non-negative");
  }
}

OmegaForm parse_omega_form(std::string_view name) {
  if (name == "half-tanh") return OmegaForm::HalfTanh;
  if (name == "full-range") return OmegaForm::FullRange;
  throw Error(ErrorCode::InvalidParameter, "unknown omega form '" + std::string(name) + "'");
}

std::string_view to_string(OmegaForm f) { return f == OmegaForm::HalfTanh ? "half-tanh" : "full-range"; }

void ConsistencyState::validate() const {
  if (!(xi > 0.0) || !std::isfinite(xi)) throw Error(ErrorCode::InvalidParameter, "xi must be positive");
  if (!std::isfinite(delta_prev) || !std::isfinite(delta_curr)) {
    throw Error(ErrorCode::InvalidParameter, "deltas must be finite");
  }
}

KSpaceData residual(const ComplexGrid& x, const KSpaceData& y, const EncodingOperator& op) {
  KSpaceData r = op.forward(x);
  if (!r.same_shape(y)) throw Error(ErrorCode::ShapeMismatch, "residual: measurement shape differs from A(x)");
  r -= y;
  op.apply_mask(r);
  return r;
}

AcsRect low_frequency_block(const FrequencyWeights& w, int rows, int cols) {
  AcsRect b;
  b.rows = std::min(rows, w.center_rows);
  b.cols = std::min(cols, w.center_cols);
  b.row0 = rows / 2 - b.rows / 2;
  b.col0 = cols / 2 - b.cols / 2;
  return b;
}

KSpaceData freq_decompose(const KSpaceData& delta, const FrequencyWeights& w) {
  w.validate();
  const AcsRect b = low_frequency_block(w, delta.rows(), delta.cols());
  KSpaceData out = delta;
  for (int c = 0; c < out.coils(); ++c) {
    for (int f = 0; f < out.frames(); ++f) {
      auto plane = out.plane(c, f);
      for (int r = 0; r < out.rows(); ++r) {
        const bool row_in = r >= b.row0 && r < b.row0 + b.rows;
        for (int k = 0; k < out.cols(); ++k) {
          const bool in = row_in && k >= b.col0 && k < b.col0 + b.cols;
          plane[static_cast<std::size_t>(r) * out.cols() + k] *= in ? w.lambda_low : w.lambda_high;
        }
      }
    }
  }
  return out;
}

double adaptive_weight(const ConsistencyState& st) {
  st.validate();
  const double th = std::tanh(st.delta_prev - st.delta_curr);
  if (st.form == OmegaForm::FullRange) return st.xi * (1.0 + th) / 2.0;
  return st.xi * (1.0 + th / 2.0);
}

ComplexGrid backproject_fixed(const ComplexGrid& x0_hat, const KSpaceData& y, const EncodingOperator& op,
                              const FrequencyWeights& w, double omega) {
  const KSpaceData dd = freq_decompose(residual(x0_hat, y, op), w);
  ComplexGrid back = op.adjoint(dd);
  back *= omega;
  return x0_hat - back;
}

BackprojectResult backproject_adaptive(const ComplexGrid& x0_hat, const KSpaceData& y,
                                       const EncodingOperator& op, const FrequencyWeights& w,
                                       const ConsistencyState& st) {
  const KSpaceData dd = freq_decompose(residual(x0_hat, y, op), w);
  ConsistencyState now = st;
  now.delta_curr = dd.norm();
  const double omega = adaptive_weight(now);
  ComplexGrid back = op.adjoint(dd);
  back *= omega;
  return {x0_hat - back, now.delta_curr, omega};
}

ComplexGrid ddnm_project(const ComplexGrid& x0_hat, const KSpaceData& y, const EncodingOperator& op) {
  // x0 - A^H (A x0 - y); the residual is already masked.
  return x0_hat - op.adjoint(residual(x0_hat, y, op));
}

PseudoRealStack dps_gradient(const GaussianPrior& prior, const PseudoRealStack& x_t, int t,
                             const KSpaceData& y, const EncodingOperator& op, const NoiseSchedule& s) {
  prior.validate();
  require_same_shape(prior.mean, x_t, "dps_gradient");
  const PseudoRealStack eps = analytic_gaussian_eps(prior, x_t, t, s);
  const ComplexGrid x0 = from_pseudo_real(estimate_x0(x_t, t, eps, s));
  // d||A x0 - y||^2 / d(Re, Im) = 2 (Re, Im) of A^H (A x0 - y).
  PseudoRealStack g = to_pseudo_real(op.adjoint(residual(x0, y, op)));
  const double ab = s.alpha_bar(t);
  const double sab = std::sqrt(ab);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double jac = sab * prior.var[i] / (ab * prior.var[i] + 1.0 - ab);
    g[i] *= 2.0 * jac;
  }
  return g;
}

PseudoRealStack dps_gradient(const Denoiser& den, const PseudoRealStack& x_t, int t, const KSpaceData& y,
                             const EncodingOperator& op, const NoiseSchedule& s) {
  const auto* analytic = dynamic_cast<const AnalyticGaussianDenoiser*>(&den);
  if (analytic == nullptr) {
    throw Error(ErrorCode::UnsupportedDenoiser, "DPS gradients need the analytic Gaussian denoiser");
  }
  return dps_gradient(analytic->prior(), x_t, t, y, op, s);
}

}  // namespace spamri
