#ifndef MHPO_POLICY_ENV_HPP
#define MHPO_POLICY_ENV_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mhpo/common.hpp"
#include "mhpo/rng.hpp"

// A small-order Markov autoregressive categorical policy over a logit table,
// plus rule-verifiable synthetic environments and the group rollout engine.
// The policy conditions on (prompt id, last `order` tokens); unvisited
// contexts read as all-zero logits, i.e. maximum entropy.

namespace mhpo {

using Token = int;
using Response = std::vector<Token>;

constexpr int kMaxOrder = 8;

/// Identifies one logit row: a prompt and up to kMaxOrder trailing tokens.
struct RowKey {
  std::int32_t prompt_id = 0;
  std::uint8_t ctx_len = 0;
  std::array<Token, kMaxOrder> ctx{};

  friend bool operator==(const RowKey& a, const RowKey& b) {
    if (a.prompt_id != b.prompt_id || a.ctx_len != b.ctx_len) return false;
    return std::equal(a.ctx.begin(), a.ctx.begin() + a.ctx_len, b.ctx.begin());
  }
  friend auto operator<=>(const RowKey& a, const RowKey& b) {
    if (auto c = a.prompt_id <=> b.prompt_id; c != 0) return c;
    if (auto c = a.ctx_len <=> b.ctx_len; c != 0) return c;
    for (std::uint8_t i = 0; i < a.ctx_len; ++i) {
      if (auto c = a.ctx[i] <=> b.ctx[i]; c != 0) return c;
    }
    return std::strong_ordering::equal;
  }
};

struct RowKeyHash {
  std::size_t operator()(const RowKey& k) const {
    std::uint64_t h = detail::splitmix64(static_cast<std::uint64_t>(k.prompt_id) + 1);
    for (std::uint8_t i = 0; i < k.ctx_len; ++i) {
      h = detail::splitmix64(h ^ static_cast<std::uint64_t>(k.ctx[i] + 1));
    }
    return static_cast<std::size_t>(h);
  }
};

/// Logit table of the policy. Copyable; a plain copy is a snapshot.
struct PolicyParams {
  int vocab_size = 3;  // token vocab_size-1 is end-of-sequence
  int order = 2;       // context window of trailing tokens
  int max_len = 16;    // forced end-of-sequence bound per response
  std::unordered_map<RowKey, std::vector<double>, RowKeyHash> logits;

  Token eos_token() const { return vocab_size - 1; }

  void validate() const {
    if (vocab_size < 2) throw ConfigError("policy vocab_size must be >= 2");
    if (order < 0 || order > kMaxOrder) {
      throw ConfigError("policy order must be in [0, " + std::to_string(kMaxOrder) + "]");
    }
    if (max_len < 1) throw ConfigError("policy max_len must be >= 1");
  }

  /// Trailing-`order` window of `prefix` as a row key.
  RowKey context_key(int prompt_id, std::span<const Token> prefix) const {
    RowKey key;
    key.prompt_id = prompt_id;
    const std::size_t take = std::min(prefix.size(), static_cast<std::size_t>(order));
    key.ctx_len = static_cast<std::uint8_t>(take);
    for (std::size_t i = 0; i < take; ++i) {
      key.ctx[i] = prefix[prefix.size() - take + i];
    }
    return key;
  }

  /// Read-only row lookup; missing rows behave as all zeros (uniform policy)
  /// without being materialized.
  const std::vector<double>* find_row(const RowKey& key) const {
    auto it = logits.find(key);
    return it == logits.end() ? nullptr : &it->second;
  }

  /// Materializes the row so an update can write to it.
  std::vector<double>& row_for_update(const RowKey& key) {
    auto [it, inserted] = logits.try_emplace(key);
    if (inserted) it->second.assign(static_cast<std::size_t>(vocab_size), 0.0);
    return it->second;
  }

  /// Softmax probabilities of one row (max-subtracted).
  std::vector<double> row_probs(const RowKey& key) const {
    std::vector<double> p(static_cast<std::size_t>(vocab_size), 0.0);
    const std::vector<double>* row = find_row(key);
    double max_logit = row ? *std::max_element(row->begin(), row->end()) : 0.0;
    double z = 0.0;
    for (int t = 0; t < vocab_size; ++t) {
      const double logit = row ? (*row)[static_cast<std::size_t>(t)] : 0.0;
      p[static_cast<std::size_t>(t)] = std::exp(logit - max_logit);
      z += p[static_cast<std::size_t>(t)];
    }
    for (double& v : p) v /= z;
    return p;
  }

  /// log softmax(logits[row])[token], with log-sum-exp max subtraction.
  double token_logprob(int prompt_id, std::span<const Token> prefix, Token token) const {
    if (token < 0 || token >= vocab_size) {
      throw std::domain_error("token_logprob: token outside vocabulary");
    }
    const RowKey key = context_key(prompt_id, prefix);
    const std::vector<double>* row = find_row(key);
    double max_logit = row ? *std::max_element(row->begin(), row->end()) : 0.0;
    double z = 0.0;
    for (int t = 0; t < vocab_size; ++t) {
      const double logit = row ? (*row)[static_cast<std::size_t>(t)] : 0.0;
      z += std::exp(logit - max_logit);
    }
    const double logit = row ? (*row)[static_cast<std::size_t>(token)] : 0.0;
    return logit - max_logit - std::log(z);
  }

  /// Deep immutable copy used as the rollout-time denominator policy.
  PolicyParams snapshot() const { return *this; }
};

// ---------------------------------------------------------------------------
// Environments
// ---------------------------------------------------------------------------

enum class EnvKind { bandit, parity, digit_sum };

inline const char* env_kind_name(EnvKind k) {
  switch (k) {
    case EnvKind::bandit: return "bandit";
    case EnvKind::parity: return "parity";
    case EnvKind::digit_sum: return "digit_sum";
  }
  return "?";
}

/// Rule-verifiable reward environment; rewards are binary by construction.
struct EnvSpec {
  EnvKind kind = EnvKind::parity;
  int num_prompts = 16;
  int vocab_size = 3;  // shared with the policy; EOS is vocab_size-1

  void validate() const {
    if (num_prompts < 1) throw ConfigError("env.num_prompts must be >= 1");
    switch (kind) {
      case EnvKind::parity:
        if (vocab_size < 3) throw ConfigError("parity env needs vocab_size >= 3");
        break;
      case EnvKind::digit_sum:
        if (vocab_size != 11) throw ConfigError("digit_sum env needs vocab_size == 11");
        break;
      case EnvKind::bandit:
        if (vocab_size < 3) throw ConfigError("bandit env needs vocab_size >= 3 (>= 2 arms)");
        break;
    }
  }

  /// Task target for a prompt: parity bit, digit-sum residue, or bandit arm.
  int target(int prompt_id) const {
    switch (kind) {
      case EnvKind::parity: return prompt_id % 2;
      case EnvKind::digit_sum: return prompt_id % 10;
      case EnvKind::bandit: return prompt_id % (vocab_size - 1);
    }
    return 0;
  }
};

inline bool response_well_formed(const EnvSpec& env, const Response& resp) {
  if (resp.empty()) return false;
  const Token eos = env.vocab_size - 1;
  if (resp.back() != eos) return false;
  for (std::size_t i = 0; i < resp.size(); ++i) {
    if (resp[i] < 0 || resp[i] >= env.vocab_size) return false;
    if (resp[i] == eos && i + 1 != resp.size()) return false;
  }
  return true;
}

/// Binary reward per the environment rule. Malformed responses earn 0 and
/// bump *malformed when provided.
inline int verify_reward(const EnvSpec& env, int prompt_id, const Response& resp,
                         std::size_t* malformed = nullptr) {
  if (!response_well_formed(env, resp)) {
    if (malformed) ++*malformed;
    return 0;
  }
  switch (env.kind) {
    case EnvKind::parity: {
      int ones = 0;
      for (std::size_t i = 0; i + 1 < resp.size(); ++i) {
        if (resp[i] == 1) ++ones;
      }
      return (ones % 2 == env.target(prompt_id)) ? 1 : 0;
    }
    case EnvKind::digit_sum: {
      int sum = 0;
      for (std::size_t i = 0; i + 1 < resp.size(); ++i) sum += resp[i];
      return (sum % 10 == env.target(prompt_id)) ? 1 : 0;
    }
    case EnvKind::bandit:
      return (resp.front() == env.target(prompt_id)) ? 1 : 0;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Rollouts
// ---------------------------------------------------------------------------

/// One prompt with K sampled responses, the sampling-time log-probabilities,
/// and the rule rewards.
struct RolloutGroup {
  int prompt_id = 0;
  std::vector<Response> responses;
  std::vector<std::vector<double>> old_logprobs;
  std::vector<double> rewards;
  std::size_t malformed = 0;
};

/// Ancestral sampling of one response; terminates on EOS or by forcing EOS at
/// max_len. The recorded logprob of a forced EOS is still the policy's own.
inline Response sample_response(const PolicyParams& params, int prompt_id,
                                RngStream& rng, std::vector<double>& logprobs_out) {
  Response resp;
  logprobs_out.clear();
  const Token eos = params.eos_token();
  for (int t = 0; t < params.max_len; ++t) {
    const RowKey key = params.context_key(prompt_id, resp);
    const std::vector<double> probs = params.row_probs(key);
    Token tok;
    if (t + 1 == params.max_len) {
      tok = eos;
    } else {
      tok = static_cast<Token>(rng.categorical(probs));
    }
    resp.push_back(tok);
    logprobs_out.push_back(params.token_logprob(prompt_id, std::span<const Token>(resp.data(), resp.size() - 1), tok));
    if (tok == eos) break;
  }
  return resp;
}

/// K i.i.d. responses from `params` with rewards from `env`. Each response
/// draws from its own derived stream, so results do not depend on sampling
/// order and are identical for identical seeds.
inline RolloutGroup sample_group(const PolicyParams& params, const EnvSpec& env,
                                 int prompt_id, int k, const RngStream& group_stream) {
  if (k < 2) throw ConfigError("sample_group: group size must be >= 2");
  RolloutGroup g;
  g.prompt_id = prompt_id;
  g.responses.reserve(static_cast<std::size_t>(k));
  g.old_logprobs.reserve(static_cast<std::size_t>(k));
  g.rewards.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    RngStream rng = group_stream.child(static_cast<std::uint64_t>(i));
    std::vector<double> lps;
    Response resp = sample_response(params, prompt_id, rng, lps);
    g.rewards.push_back(static_cast<double>(verify_reward(env, prompt_id, resp, &g.malformed)));
    g.responses.push_back(std::move(resp));
    g.old_logprobs.push_back(std::move(lps));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Score gradients
// ---------------------------------------------------------------------------

/// Sparse per-row parameter vector (same keying as the logit table).
struct SparseGrad {
  std::unordered_map<RowKey, std::vector<double>, RowKeyHash> rows;

  void add_scaled(const RowKey& key, std::span<const double> values, double scale,
                  int vocab_size) {
    auto [it, inserted] = rows.try_emplace(key);
    if (inserted) it->second.assign(static_cast<std::size_t>(vocab_size), 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      it->second[i] += scale * values[i];
    }
  }

  /// Keys in deterministic (sorted) order, for order-stable reductions.
  std::vector<const RowKey*> sorted_keys() const {
    std::vector<const RowKey*> keys;
    keys.reserve(rows.size());
    for (const auto& [k, v] : rows) keys.push_back(&k);
    std::sort(keys.begin(), keys.end(),
              [](const RowKey* a, const RowKey* b) { return *a < *b; });
    return keys;
  }

  double l2_norm() const {
    double sq = 0.0;
    for (const RowKey* k : sorted_keys()) {
      for (double v : rows.at(*k)) sq += v * v;
    }
    return std::sqrt(sq);
  }

  bool all_finite() const {
    for (const auto& [k, vec] : rows) {
      for (double v : vec) {
        if (!std::isfinite(v)) return false;
      }
    }
    return true;
  }
};

/// Gradient of one token's log-probability with respect to its logit row:
/// one_hot(token) - softmax(row). Rows not touched by the token are zero.
struct TokenScore {
  RowKey row;
  std::vector<double> grad;
};

inline TokenScore token_score(const PolicyParams& params, int prompt_id,
                              std::span<const Token> prefix, Token token) {
  TokenScore ts;
  ts.row = params.context_key(prompt_id, prefix);
  ts.grad = params.row_probs(ts.row);
  for (double& v : ts.grad) v = -v;
  ts.grad[static_cast<std::size_t>(token)] += 1.0;
  return ts;
}

/// Per-token score rows for a whole response, aligned with its tokens.
inline std::vector<TokenScore> score_gradient(const PolicyParams& params, int prompt_id,
                                              const Response& resp) {
  std::vector<TokenScore> out;
  out.reserve(resp.size());
  for (std::size_t t = 0; t < resp.size(); ++t) {
    out.push_back(token_score(params, prompt_id,
                              std::span<const Token>(resp.data(), t), resp[t]));
  }
  return out;
}

/// Greedy (argmax, lowest index on ties) decode of one prompt.
inline Response greedy_decode(const PolicyParams& params, int prompt_id) {
  Response resp;
  const Token eos = params.eos_token();
  for (int t = 0; t < params.max_len; ++t) {
    Token tok;
    if (t + 1 == params.max_len) {
      tok = eos;
    } else {
      const std::vector<double> probs =
          params.row_probs(params.context_key(prompt_id, resp));
      tok = static_cast<Token>(
          std::max_element(probs.begin(), probs.end()) - probs.begin());
    }
    resp.push_back(tok);
    if (tok == eos) break;
  }
  return resp;
}

}  // namespace mhpo

#endif  // MHPO_POLICY_ENV_HPP
