#ifndef MHPO_OBJECTIVES_HPP
#define MHPO_OBJECTIVES_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mhpo/common.hpp"
#include "mhpo/ratio_transforms.hpp"

// Per-token surrogate terms for the four methods under study, plus the
// group-level loss aggregation. Each term reports both its contribution to
// the objective and the scalar grad_coefficient that multiplies
// (score gradient * advantage) in the parameter update.

namespace mhpo {

enum class Method { mhpo, grpo_clip, dapo_clip, naive_pg };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::mhpo: return "mhpo";
    case Method::grpo_clip: return "grpo_clip";
    case Method::dapo_clip: return "dapo_clip";
    case Method::naive_pg: return "naive_pg";
  }
  return "?";
}

struct MethodConfig {
  Method method = Method::mhpo;
  LfmParams lfm;          // mhpo
  DhpParams dhp;          // mhpo
  double eps = 0.0;       // grpo_clip, required in (0,1)
  double eps_low = 0.0;   // dapo_clip
  double eps_high = 0.0;  // dapo_clip

  void validate() const {
    switch (method) {
      case Method::mhpo:
        lfm.validate();
        dhp.validate();
        break;
      case Method::grpo_clip:
        if (!(eps > 0.0 && eps < 1.0)) {
          throw ConfigError("method.eps must be in (0, 1) for grpo_clip");
        }
        break;
      case Method::dapo_clip:
        if (!(eps_low > 0.0 && eps_low < 1.0)) {
          throw ConfigError("method.eps_low must be in (0, 1) for dapo_clip");
        }
        if (!(eps_high > 0.0 && eps_high < 1.0)) {
          throw ConfigError("method.eps_high must be in (0, 1) for dapo_clip");
        }
        break;
      case Method::naive_pg:
        break;
    }
  }
};

struct TokenTerm {
  double objective_value = 0.0;   // contribution before sign and averaging
  double grad_coefficient = 0.0;  // scalar multiplying score-grad * advantage
};

namespace detail {
inline void require_positive_ratio(double r, const char* who) {
  if (!(r > 0.0) || !std::isfinite(r)) {
    throw std::domain_error(std::string(who) + ": ratio must be a positive finite real");
  }
}

// min(r*adv, clip(r, lo, hi)*adv) with the tie resolved toward the unclipped
// branch. When the clipped branch is strictly smaller, r sits outside
// [lo, hi] and the clip constant contributes zero gradient.
inline TokenTerm clipped_term(double r, double adv, double lo, double hi) {
  const double unclipped = r * adv;
  const double clipped = std::clamp(r, lo, hi) * adv;
  if (unclipped <= clipped) return {unclipped, r};
  return {clipped, 0.0};
}
}  // namespace detail

inline TokenTerm mhpo_token_term_from_log(double log_r, double adv,
                                          const MethodConfig& cfg) {
  const double psi = lfm_from_log(log_r, cfg.lfm);
  const double zeta = dhp_penalty(psi, cfg.dhp);
  const double weighted = std::exp(psi - zeta);
  // zeta (and the psi inside it) is a stop-gradient constant, so the
  // parameter gradient of exp(psi - zeta)*adv reduces to M(r)*scoregrad*adv.
  return {weighted * adv, weighted * sech_squared(log_r / cfg.lfm.c)};
}

/// exp(psi(r) - zeta(r)) * adv, with grad_coefficient = M(r).
inline TokenTerm mhpo_token_term(double r, double adv, const MethodConfig& cfg) {
  detail::require_positive_ratio(r, "mhpo_token_term");
  return mhpo_token_term_from_log(std::log(r), adv, cfg);
}

/// min(r*adv, clip(r, 1-eps, 1+eps)*adv); zero coefficient in the dead zone.
inline TokenTerm grpo_token_term(double r, double adv, const MethodConfig& cfg) {
  detail::require_positive_ratio(r, "grpo_token_term");
  return detail::clipped_term(r, adv, 1.0 - cfg.eps, 1.0 + cfg.eps);
}

/// Same structure with asymmetric bounds [1-eps_low, 1+eps_high].
inline TokenTerm dapo_token_term(double r, double adv, const MethodConfig& cfg) {
  detail::require_positive_ratio(r, "dapo_token_term");
  return detail::clipped_term(r, adv, 1.0 - cfg.eps_low, 1.0 + cfg.eps_high);
}

/// Unregularized control arm: r*adv with pass-through coefficient r.
inline TokenTerm naive_pg_token_term(double r, double adv) {
  detail::require_positive_ratio(r, "naive_pg_token_term");
  return {r * adv, r};
}

/// Dispatch on the configured method, taking the log-ratio as carried by the
/// rollout path (the ratio itself is recovered by exponentiation).
inline TokenTerm token_term_from_log(double log_r, double adv, const MethodConfig& cfg) {
  switch (cfg.method) {
    case Method::mhpo:
      return mhpo_token_term_from_log(log_r, adv, cfg);
    case Method::grpo_clip:
      return grpo_token_term(std::exp(log_r), adv, cfg);
    case Method::dapo_clip:
      return dapo_token_term(std::exp(log_r), adv, cfg);
    case Method::naive_pg:
      return naive_pg_token_term(std::exp(log_r), adv);
  }
  return {};
}

struct BatchLossResult {
  double value = 0.0;
  std::size_t skipped_empty = 0;  // degenerate zero-length responses
};

/// -(1/K) sum_i (1/T_i) sum_t term, over one group's K responses of per-token
/// objective values. Empty responses are skipped and counted instead of
/// poisoning the mean.
inline BatchLossResult batch_loss(const std::vector<std::vector<double>>& response_terms) {
  BatchLossResult out;
  double acc = 0.0;
  std::size_t counted = 0;
  for (const auto& resp : response_terms) {
    if (resp.empty()) {
      ++out.skipped_empty;
      continue;
    }
    double token_mean = 0.0;
    for (double v : resp) token_mean += v;
    token_mean /= static_cast<double>(resp.size());
    acc += token_mean;
    ++counted;
  }
  if (counted > 0) out.value = -acc / static_cast<double>(counted);
  return out;
}

}  // namespace mhpo

#endif  // MHPO_OBJECTIVES_HPP
