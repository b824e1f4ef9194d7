#ifndef MHPO_RATIO_TRANSFORMS_HPP
#define MHPO_RATIO_TRANSFORMS_HPP

#include <cmath>
#include <stdexcept>

#include "mhpo/common.hpp"

// Scalar transforms applied to per-token importance ratios. Everything here
// is pure and reentrant. Internally the transforms work on the log-ratio
// (callers that already hold logpi_new - logpi_old should use the *_from_log
// entry points and skip the log(exp(.)) round trip).

namespace mhpo {

/// Width of the smooth saturation band: the modulated log-ratio lives in
/// (-c, c) and the effective ratio operator in [exp(-c), exp(c)].
struct LfmParams {
  double c = 1.5;

  void validate() const { require_positive(c, "LfmParams.c"); }
};

/// Weibull hazard shaping, one (shape, scale) pair per shift direction.
/// lambda marks the onset of unit penalty; k controls how fast the penalty
/// accelerates past it. k >= 1 is required (k == 1 gives a constant hazard
/// rate and is the edge of the admissible grid).
struct DhpParams {
  double k_pos = 1.5;
  double lambda_pos = 1.0;
  double k_neg = 2.0;
  double lambda_neg = 0.8;

  static DhpParams symmetric(double k, double lambda) {
    return DhpParams{k, lambda, k, lambda};
  }

  void validate() const {
    require_positive(lambda_pos, "DhpParams.lambda_pos");
    require_positive(lambda_neg, "DhpParams.lambda_neg");
    if (!(k_pos >= 1.0) || !std::isfinite(k_pos)) {
      throw std::domain_error("DhpParams.k_pos must be >= 1");
    }
    if (!(k_neg >= 1.0) || !std::isfinite(k_neg)) {
      throw std::domain_error("DhpParams.k_neg must be >= 1");
    }
  }
};

/// Everything derived from one token's ratio, bundled for logging and tests.
struct TokenCredit {
  double ratio = 1.0;
  double log_ratio = 0.0;
  double psi = 0.0;
  double zeta = 0.0;
  double survival_weight = 1.0;
  double multiplier = 0.0;
  double advantage = 0.0;
};

/// log(1 + e^x), overflow-safe on both tails.
inline double softplus(double x) {
  require_finite(x, "softplus input");
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  if (x < -30.0) return std::log1p(std::exp(x));
  return std::log1p(std::exp(x));
}

/// sech^2(x) = 4 e^{-2|x|} / (1 + e^{-2|x|})^2. This form never overflows
/// and loses nothing to cancellation on either tail.
inline double sech_squared(double x) {
  const double e = std::exp(-2.0 * std::fabs(x));
  const double denom = 1.0 + e;
  return 4.0 * e / (denom * denom);
}

inline double lfm_from_log(double log_r, const LfmParams& p) {
  require_finite(log_r, "log-ratio");
  return p.c * std::tanh(log_r / p.c);
}

/// psi(r) = c * tanh(log r / c). Strictly inside (-c, c) for finite r > 0.
inline double lfm(double r, const LfmParams& p) {
  if (!(r > 0.0) || !std::isfinite(r)) {
    throw std::domain_error("lfm: ratio must be a positive finite real");
  }
  return lfm_from_log(std::log(r), p);
}

inline double lfm_derivative_from_log(double log_r, const LfmParams& p) {
  require_finite(log_r, "log-ratio");
  // (1/r) sech^2(log r / c) evaluated as exp(log sech^2 - log r) so the 1/r
  // factor cannot overflow before the sech^2 tail cancels it.
  const double ax = std::fabs(log_r / p.c);
  const double log_sech2 =
      std::log(4.0) - 2.0 * ax - 2.0 * std::log1p(std::exp(-2.0 * ax));
  return std::exp(log_sech2 - log_r);
}

/// d psi / d r = (1/r) * sech^2(log r / c). Strictly positive.
inline double lfm_derivative(double r, const LfmParams& p) {
  if (!(r > 0.0) || !std::isfinite(r)) {
    throw std::domain_error("lfm_derivative: ratio must be a positive finite real");
  }
  return lfm_derivative_from_log(std::log(r), p);
}

/// zeta(psi) = (s(psi)/lambda_+)^{k_+} + (s(-psi)/lambda_-)^{k_-}.
/// Accepts any finite psi so the penalty is testable in isolation; callers
/// normally pass LFM output, which is already confined to [-c, c].
inline double dhp_penalty(double psi, const DhpParams& d) {
  require_finite(psi, "dhp_penalty psi");
  const double pos = std::pow(softplus(psi) / d.lambda_pos, d.k_pos);
  const double neg = std::pow(softplus(-psi) / d.lambda_neg, d.k_neg);
  return pos + neg;
}

/// w = exp(-zeta) in (0, 1]; the penalty can only attenuate, never amplify.
inline double survival_weight(double psi, const DhpParams& d) {
  return std::exp(-dhp_penalty(psi, d));
}

inline double gradient_multiplier_from_log(double log_r, const LfmParams& p,
                                           const DhpParams& d) {
  const double psi = lfm_from_log(log_r, p);
  const double zeta = dhp_penalty(psi, d);
  return std::exp(psi - zeta) * sech_squared(log_r / p.c);
}

/// M(r) = exp(psi - zeta) * sech^2(log r / c): the scalar that rescales the
/// score-function gradient of each token under the semi-gradient scheme.
inline double gradient_multiplier(double r, const LfmParams& p, const DhpParams& d) {
  if (!(r > 0.0) || !std::isfinite(r)) {
    throw std::domain_error("gradient_multiplier: ratio must be a positive finite real");
  }
  return gradient_multiplier_from_log(std::log(r), p, d);
}

/// Closed-form supremum of exp(psi(r)) * sech^2(log r / c) over r > 0:
///   M_psi(c) = [2 / (1 + sqrt(1 + c^2))] * exp(c^2 / (1 + sqrt(1 + c^2)))
/// Always <= e^c, and an upper bound on gradient_multiplier for any hazard
/// parameters since exp(-zeta) <= 1.
inline double multiplier_bound(double c) {
  require_positive(c, "multiplier_bound c");
  const double root = std::sqrt(1.0 + c * c);
  return 2.0 / (1.0 + root) * std::exp(c * c / (1.0 + root));
}

inline double multiplier_bound(const LfmParams& p) { return multiplier_bound(p.c); }

/// Derives the full per-token credit record from a log-ratio and advantage.
inline TokenCredit make_token_credit(double log_ratio, double advantage,
                                     const LfmParams& p, const DhpParams& d) {
  TokenCredit tc;
  tc.log_ratio = log_ratio;
  tc.ratio = std::exp(log_ratio);
  tc.psi = lfm_from_log(log_ratio, p);
  tc.zeta = dhp_penalty(tc.psi, d);
  tc.survival_weight = std::exp(-tc.zeta);
  tc.multiplier = std::exp(tc.psi - tc.zeta) * sech_squared(log_ratio / p.c);
  tc.advantage = advantage;
  return tc;
}

}  // namespace mhpo

#endif  // MHPO_RATIO_TRANSFORMS_HPP
