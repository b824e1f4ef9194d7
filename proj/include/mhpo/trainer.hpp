#ifndef MHPO_TRAINER_HPP
#define MHPO_TRAINER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mhpo/advantage.hpp"
#include "mhpo/common.hpp"
#include "mhpo/objectives.hpp"
#include "mhpo/policy_env.hpp"
#include "mhpo/ratio_transforms.hpp"
#include "mhpo/rng.hpp"

// The training loop: snapshot -> rollout -> group advantages -> several
// gradient updates against the fixed snapshot (this is where off-policy
// ratio drift comes from) -> diagnostics. Single writer; everything is
// deterministic for a fixed config and seed.

namespace mhpo {

enum class OptimizerKind { sgd, adaptive_moment };

inline const char* optimizer_name(OptimizerKind o) {
  return o == OptimizerKind::sgd ? "sgd" : "adaptive_moment";
}

struct TrainConfig {
  MethodConfig method;
  EnvSpec env;
  int group_size = 8;
  int prompts_per_batch = 16;
  int updates_per_rollout = 4;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double learning_rate = 0.05;
  double beta1 = 0.9;   // adaptive only
  double beta2 = 0.999; // adaptive only
  double adam_epsilon = 1e-8;
  int total_steps = 500;
  int eval_every = 10;
  std::uint64_t seed = 1;
  int order = 2;
  int max_len = 16;
  double degeneracy_tol = 1e-8;
  int eval_prompts = 0;  // 0 = all prompts of the environment

  void validate() const {
    method.validate();
    env.validate();
    if (group_size < 2) throw ConfigError("train.group_size must be >= 2");
    if (prompts_per_batch < 1) throw ConfigError("train.prompts_per_batch must be >= 1");
    if (updates_per_rollout < 1) throw ConfigError("train.updates_per_rollout must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("train.beta1 must be in (0, 1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("train.beta2 must be in (0, 1)");
    if (!(adam_epsilon > 0.0)) throw ConfigError("train.adam_epsilon must be > 0");
    if (total_steps < 1) throw ConfigError("train.total_steps must be >= 1");
    if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
    if (order < 0 || order > kMaxOrder) throw ConfigError("train.order out of range");
    if (max_len < 1) throw ConfigError("train.max_len must be >= 1");
    if (!(degeneracy_tol > 0.0)) throw ConfigError("train.degeneracy_tol must be > 0");
    if (eval_prompts < 0) throw ConfigError("train.eval_prompts must be >= 0");
  }
};

/// Bias-corrected first/second moment accumulators, tracked per logit row and
/// advanced only when the row receives gradient (lazy sparse variant).
struct OptimizerState {
  struct MomentRow {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step_count = 0;
  };
  std::unordered_map<RowKey, MomentRow, RowKeyHash> rows;
};

/// One row of the step-indexed diagnostics log.
struct StepRecord {
  int step = 0;
  double mean_reward = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;        // max L2 norm across the step's inner updates
  double max_multiplier = 0.0;   // max |grad_coefficient| across inner updates
  double ratio_min = 1.0;        // ratio stats from the last inner update
  double ratio_med = 1.0;
  double ratio_max = 1.0;
  int degenerate_groups = 0;
  std::optional<double> eval_success;
};

struct RunLog {
  std::vector<StepRecord> records;
  double best_eval = -1.0;
  int best_step = -1;
  double latest_eval = 0.0;
  PolicyParams best_params;
  int incidents = 0;
  std::vector<std::string> incident_notes;
  std::size_t malformed_responses = 0;
  std::vector<std::string> assumptions;
};

/// theta <- theta - lr * grad, applied to the touched rows only.
inline void sgd_update(PolicyParams& params, const SparseGrad& grad, double lr) {
  for (const auto& [key, gvec] : grad.rows) {
    std::vector<double>& row = params.row_for_update(key);
    for (std::size_t i = 0; i < gvec.size(); ++i) row[i] -= lr * gvec[i];
  }
}

/// Bias-corrected moment update with per-parameter rescaling. Rows with no
/// gradient this step keep their moments and parameters untouched.
inline void adaptive_update(PolicyParams& params, const SparseGrad& grad,
                            OptimizerState& state, double lr, double beta1,
                            double beta2, double epsilon_hat) {
  for (const auto& [key, gvec] : grad.rows) {
    auto [it, inserted] = state.rows.try_emplace(key);
    OptimizerState::MomentRow& mom = it->second;
    if (inserted) {
      mom.m.assign(gvec.size(), 0.0);
      mom.v.assign(gvec.size(), 0.0);
    }
    ++mom.step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(mom.step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(mom.step_count));
    std::vector<double>& row = params.row_for_update(key);
    for (std::size_t i = 0; i < gvec.size(); ++i) {
      mom.m[i] = beta1 * mom.m[i] + (1.0 - beta1) * gvec[i];
      mom.v[i] = beta2 * mom.v[i] + (1.0 - beta2) * gvec[i] * gvec[i];
      const double m_hat = mom.m[i] / bc1;
      const double v_hat = mom.v[i] / bc2;
      row[i] -= lr * m_hat / (std::sqrt(v_hat) + epsilon_hat);
    }
  }
}

/// Greedy-decode success rate over the first n_prompts prompts (all prompts
/// when n_prompts <= 0). Deterministic.
inline double evaluate(const PolicyParams& params, const EnvSpec& env, int n_prompts = 0) {
  const int n = (n_prompts <= 0) ? env.num_prompts : std::min(n_prompts, env.num_prompts);
  int hits = 0;
  for (int pid = 0; pid < n; ++pid) {
    const Response resp = greedy_decode(params, pid);
    hits += verify_reward(env, pid, resp);
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

class Trainer {
 public:
  explicit Trainer(TrainConfig cfg) : cfg_(std::move(cfg)), root_(cfg_.seed) {
    cfg_.validate();
    policy_.vocab_size = cfg_.env.vocab_size;
    policy_.order = cfg_.order;
    policy_.max_len = cfg_.max_len;
    policy_.validate();
    log_.assumptions = {
        "advantage std is the population (divide-by-K) form",
        "groups with reward std below " + format_double(cfg_.degeneracy_tol) +
            " yield zero advantages",
        "ratio drift comes from " + std::to_string(cfg_.updates_per_rollout) +
            " gradient updates per rollout batch",
    };
  }

  const TrainConfig& config() const { return cfg_; }
  const PolicyParams& policy() const { return policy_; }
  PolicyParams& mutable_policy() { return policy_; }
  const RunLog& log() const { return log_; }

  /// One full cycle: snapshot, rollout, advantages, inner updates, logging.
  StepRecord train_step(int step) {
    const PolicyParams snapshot = policy_.snapshot();
    StepRecord rec;
    rec.step = step;

    // Rollout phase: prompts cycle deterministically through the task set.
    std::vector<RolloutGroup> groups;
    std::vector<AdvantageVector> advantages;
    groups.reserve(static_cast<std::size_t>(cfg_.prompts_per_batch));
    double reward_sum = 0.0;
    std::size_t reward_count = 0;
    const RngStream step_stream = root_.child(static_cast<std::uint64_t>(step));
    for (int b = 0; b < cfg_.prompts_per_batch; ++b) {
      const int prompt_id =
          (step * cfg_.prompts_per_batch + b) % cfg_.env.num_prompts;
      RolloutGroup g = sample_group(snapshot, cfg_.env, prompt_id, cfg_.group_size,
                                    step_stream.child(static_cast<std::uint64_t>(b)));
      log_.malformed_responses += g.malformed;
      for (double r : g.rewards) {
        reward_sum += r;
        ++reward_count;
      }
      AdvantageVector adv = group_normalize(RewardGroup{g.rewards}, cfg_.degeneracy_tol);
      if (adv.degenerate) ++rec.degenerate_groups;
      groups.push_back(std::move(g));
      advantages.push_back(std::move(adv));
    }
    rec.mean_reward = reward_count ? reward_sum / static_cast<double>(reward_count) : 0.0;

    // Inner updates against the fixed snapshot. Ratios are recomputed from
    // the current parameters before every update, so update u sees the drift
    // produced by updates 1..u-1.
    for (int u = 0; u < cfg_.updates_per_rollout; ++u) {
      InnerUpdate inner = compute_update(groups, advantages);
      rec.loss = inner.loss;
      rec.grad_norm = std::max(rec.grad_norm, inner.grad_norm);
      rec.max_multiplier = std::max(rec.max_multiplier, inner.max_multiplier);
      rec.ratio_min = inner.ratio_min;
      rec.ratio_med = inner.ratio_med;
      rec.ratio_max = inner.ratio_max;
      if (!std::isfinite(inner.loss) || !inner.grad.all_finite()) {
        ++log_.incidents;
        log_.incident_notes.push_back(
            "step " + std::to_string(step) + " inner update " + std::to_string(u) +
            ": non-finite loss or gradient; step aborted, pre-step parameters restored");
        policy_ = snapshot;  // restore pre-step parameters
        break;
      }
      if (cfg_.optimizer == OptimizerKind::sgd) {
        sgd_update(policy_, inner.grad, cfg_.learning_rate);
      } else {
        adaptive_update(policy_, inner.grad, opt_state_, cfg_.learning_rate,
                        cfg_.beta1, cfg_.beta2, cfg_.adam_epsilon);
      }
    }

    if ((step + 1) % cfg_.eval_every == 0 || step + 1 == cfg_.total_steps) {
      const double success = evaluate(policy_, cfg_.env, cfg_.eval_prompts);
      rec.eval_success = success;
      log_.latest_eval = success;
      if (success > log_.best_eval) {
        log_.best_eval = success;
        log_.best_step = step;
        log_.best_params = policy_.snapshot();
      }
    }

    log_.records.push_back(rec);
    return rec;
  }

  /// Runs the configured number of steps and returns the final log.
  const RunLog& run() {
    for (int step = 0; step < cfg_.total_steps; ++step) {
      train_step(step);
    }
    return log_;
  }

 private:
  struct InnerUpdate {
    SparseGrad grad;
    double loss = 0.0;
    double grad_norm = 0.0;
    double max_multiplier = 0.0;
    double ratio_min = 1.0;
    double ratio_med = 1.0;
    double ratio_max = 1.0;
  };

  /// Loss and gradient of the configured surrogate over the whole batch.
  /// Loss = mean over groups of -(1/K) sum_i (1/T_i) sum_t term(r, A_i);
  /// the gradient accumulates -coeff * A_i / (B*K*T_i) * score rows.
  /// Ratios use the old_logprobs frozen at rollout time, never a mid-batch
  /// policy.
  InnerUpdate compute_update(const std::vector<RolloutGroup>& groups,
                             const std::vector<AdvantageVector>& advantages) {
    InnerUpdate out;
    std::vector<double> ratios;
    const double batch_scale = 1.0 / static_cast<double>(groups.size());
    double loss_acc = 0.0;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      const RolloutGroup& g = groups[gi];
      const AdvantageVector& adv = advantages[gi];
      const double group_scale = 1.0 / static_cast<double>(g.responses.size());
      double group_loss = 0.0;
      for (std::size_t i = 0; i < g.responses.size(); ++i) {
        const Response& resp = g.responses[i];
        if (resp.empty()) continue;
        const double a = adv.values[i];
        const double token_scale = 1.0 / static_cast<double>(resp.size());
        double token_mean = 0.0;
        for (std::size_t t = 0; t < resp.size(); ++t) {
          const std::span<const Token> prefix(resp.data(), t);
          const double lp_new = policy_.token_logprob(g.prompt_id, prefix, resp[t]);
          const double log_ratio = lp_new - g.old_logprobs[i][t];
          ratios.push_back(std::exp(log_ratio));
          const TokenTerm term = token_term_from_log(log_ratio, a, cfg_.method);
          token_mean += term.objective_value;
          out.max_multiplier = std::max(out.max_multiplier, std::fabs(term.grad_coefficient));
          if (a != 0.0 && term.grad_coefficient != 0.0) {
            const TokenScore ts = token_score(policy_, g.prompt_id, prefix, resp[t]);
            const double w = -term.grad_coefficient * a * batch_scale * group_scale * token_scale;
            out.grad.add_scaled(ts.row, ts.grad, w, policy_.vocab_size);
          }
        }
        group_loss += token_mean * token_scale;
      }
      loss_acc += -group_loss * group_scale;
    }
    out.loss = loss_acc * batch_scale;
    out.grad_norm = out.grad.l2_norm();
    if (!ratios.empty()) {
      std::sort(ratios.begin(), ratios.end());
      out.ratio_min = ratios.front();
      out.ratio_max = ratios.back();
      out.ratio_med = ratios[ratios.size() / 2];
    }
    return out;
  }

  TrainConfig cfg_;
  PolicyParams policy_;
  OptimizerState opt_state_;
  RngStream root_;
  RunLog log_;
};

}  // namespace mhpo

#endif  // MHPO_TRAINER_HPP
