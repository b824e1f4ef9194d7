#ifndef MHPO_CONFIG_HPP
#define MHPO_CONFIG_HPP

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mhpo/common.hpp"
#include "mhpo/trainer.hpp"

// Run configuration files: TOML-style sections with typed scalar values,
// one file per run. Parsing is strict - unknown sections or keys are
// rejected by name - and the fully resolved configuration (defaults filled)
// can be rendered back out, where parse(render(cfg)) == cfg.

namespace mhpo {

/// Raw parse tree: section -> key -> value token. Values keep their source
/// spelling until typed by the schema.
struct ParsedConfig {
  std::map<std::string, std::map<std::string, std::string>> sections;

  static ParsedConfig from_text(const std::string& text) {
    ParsedConfig out;
    std::istringstream is(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const std::string stripped = strip_comment(line);
      const std::string trimmed = trim(stripped);
      if (trimmed.empty()) continue;
      if (trimmed.front() == '[') {
        if (trimmed.back() != ']' || trimmed.size() < 3) {
          throw ConfigError("config line " + std::to_string(lineno) +
                            ": malformed section header");
        }
        section = trim(trimmed.substr(1, trimmed.size() - 2));
        out.sections.try_emplace(section);
        continue;
      }
      const std::size_t eq = trimmed.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": expected key = value");
      }
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty() || value.empty()) {
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": empty key or value");
      }
      if (section.empty()) {
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": key outside any [section]");
      }
      if (!out.sections[section].try_emplace(key, value).second) {
        throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key " +
                          section + "." + key);
      }
    }
    return out;
  }

  static ParsedConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
  }

  /// Applies a dotted override like ("method.c", "2.0").
  void set(const std::string& dotted, const std::string& value) {
    const std::size_t dot = dotted.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == dotted.size()) {
      throw ConfigError("override key must be section.key, got: " + dotted);
    }
    sections[dotted.substr(0, dot)][dotted.substr(dot + 1)] = value;
  }

  const std::string* find(const std::string& section, const std::string& key) const {
    auto sit = sections.find(section);
    if (sit == sections.end()) return nullptr;
    auto kit = sit->second.find(key);
    return kit == sit->second.end() ? nullptr : &kit->second;
  }

 private:
  static std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  }

  // Drops a trailing "# ..." comment that is not inside a quoted string.
  static std::string strip_comment(const std::string& s) {
    bool in_quotes = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') in_quotes = !in_quotes;
      if (s[i] == '#' && !in_quotes) return s.substr(0, i);
    }
    return s;
  }
};

namespace detail {

inline double parse_double_value(const std::string& raw, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(raw.c_str(), &end);
  if (end != raw.c_str() + raw.size() || raw.empty()) {
    throw ConfigError(where + ": expected a number, got '" + raw + "'");
  }
  return v;
}

inline std::int64_t parse_int_value(const std::string& raw, const std::string& where) {
  char* end = nullptr;
  const long long v = std::strtoll(raw.c_str(), &end, 10);
  if (end != raw.c_str() + raw.size() || raw.empty()) {
    throw ConfigError(where + ": expected an integer, got '" + raw + "'");
  }
  return v;
}

inline std::string parse_string_value(const std::string& raw) {
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
    return raw.substr(1, raw.size() - 2);
  }
  return raw;  // bare words accepted (handy for CLI overrides)
}

}  // namespace detail

/// Schema-checked view over one section with presence tracking.
class SectionReader {
 public:
  SectionReader(const ParsedConfig& cfg, std::string section)
      : cfg_(cfg), section_(std::move(section)) {}

  bool has(const std::string& key) {
    seen_.insert(key);
    return cfg_.find(section_, key) != nullptr;
  }

  double number(const std::string& key, double fallback) {
    seen_.insert(key);
    const std::string* raw = cfg_.find(section_, key);
    return raw ? detail::parse_double_value(*raw, where(key)) : fallback;
  }

  double required_number(const std::string& key) {
    seen_.insert(key);
    const std::string* raw = cfg_.find(section_, key);
    if (!raw) throw ConfigError(where(key) + " is required for this configuration");
    return detail::parse_double_value(*raw, where(key));
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) {
    seen_.insert(key);
    const std::string* raw = cfg_.find(section_, key);
    return raw ? detail::parse_int_value(*raw, where(key)) : fallback;
  }

  std::string word(const std::string& key, const std::string& fallback) {
    seen_.insert(key);
    const std::string* raw = cfg_.find(section_, key);
    return raw ? detail::parse_string_value(*raw) : fallback;
  }

  /// Every key present in the file but never consumed is an error.
  void reject_unknown() const {
    auto sit = cfg_.sections.find(section_);
    if (sit == cfg_.sections.end()) return;
    for (const auto& [key, value] : sit->second) {
      if (!seen_.count(key)) {
        throw ConfigError("unknown key '" + section_ + "." + key + "'");
      }
    }
  }

 private:
  std::string where(const std::string& key) const { return section_ + "." + key; }

  const ParsedConfig& cfg_;
  std::string section_;
  std::set<std::string> seen_;
};

/// Builds and validates a TrainConfig from a parse tree, filling defaults.
inline TrainConfig build_train_config(const ParsedConfig& cfg) {
  for (const auto& [name, kv] : cfg.sections) {
    if (name != "method" && name != "env" && name != "train" && name != "report") {
      throw ConfigError("unknown section '[" + name + "]'");
    }
  }
  TrainConfig tc;

  SectionReader env(cfg, "env");
  const std::string kind = env.word("kind", "parity");
  if (kind == "parity") {
    tc.env.kind = EnvKind::parity;
  } else if (kind == "digit_sum") {
    tc.env.kind = EnvKind::digit_sum;
  } else if (kind == "bandit") {
    tc.env.kind = EnvKind::bandit;
  } else {
    throw ConfigError("env.kind must be one of parity|digit_sum|bandit, got '" + kind + "'");
  }
  const int default_vocab =
      tc.env.kind == EnvKind::digit_sum ? 11 : (tc.env.kind == EnvKind::bandit ? 5 : 3);
  tc.env.num_prompts = static_cast<int>(env.integer("num_prompts", 16));
  tc.env.vocab_size = static_cast<int>(env.integer("vocab_size", default_vocab));
  env.reject_unknown();

  SectionReader method(cfg, "method");
  const std::string mname = method.word("name", "mhpo");
  if (mname == "mhpo") {
    tc.method.method = Method::mhpo;
    tc.method.lfm.c = method.number("c", 1.5);
    tc.method.dhp.k_pos = method.number("k_pos", 1.5);
    tc.method.dhp.lambda_pos = method.number("lambda_pos", 1.0);
    tc.method.dhp.k_neg = method.number("k_neg", 2.0);
    tc.method.dhp.lambda_neg = method.number("lambda_neg", 0.8);
  } else if (mname == "grpo_clip") {
    tc.method.method = Method::grpo_clip;
    tc.method.eps = method.required_number("eps");
  } else if (mname == "dapo_clip") {
    tc.method.method = Method::dapo_clip;
    tc.method.eps_low = method.required_number("eps_low");
    tc.method.eps_high = method.required_number("eps_high");
  } else if (mname == "naive_pg") {
    tc.method.method = Method::naive_pg;
  } else {
    throw ConfigError("method.name must be one of mhpo|grpo_clip|dapo_clip|naive_pg, got '" +
                      mname + "'");
  }
  method.reject_unknown();

  SectionReader train(cfg, "train");
  tc.group_size = static_cast<int>(train.integer("group_size", 8));
  tc.prompts_per_batch = static_cast<int>(train.integer("prompts_per_batch", 16));
  tc.updates_per_rollout = static_cast<int>(train.integer("updates_per_rollout", 4));
  const std::string opt = train.word("optimizer", "sgd");
  if (opt == "sgd") {
    tc.optimizer = OptimizerKind::sgd;
  } else if (opt == "adaptive_moment") {
    tc.optimizer = OptimizerKind::adaptive_moment;
  } else {
    throw ConfigError("train.optimizer must be sgd|adaptive_moment, got '" + opt + "'");
  }
  tc.learning_rate =
      train.number("learning_rate", tc.optimizer == OptimizerKind::sgd ? 0.05 : 0.01);
  tc.beta1 = train.number("beta1", 0.9);
  tc.beta2 = train.number("beta2", 0.999);
  tc.adam_epsilon = train.number("adam_epsilon", 1e-8);
  tc.total_steps = static_cast<int>(train.integer("total_steps", 500));
  tc.eval_every = static_cast<int>(train.integer("eval_every", 10));
  tc.seed = static_cast<std::uint64_t>(train.integer("seed", 1));
  tc.order = static_cast<int>(train.integer("order", 2));
  tc.max_len = static_cast<int>(train.integer("max_len", 16));
  tc.degeneracy_tol = train.number("degeneracy_tol", 1e-8);
  train.reject_unknown();

  SectionReader report(cfg, "report");
  tc.eval_prompts = static_cast<int>(report.integer("eval_prompts", 0));
  report.reject_unknown();

  tc.validate();
  return tc;
}

/// Canonical rendering of a resolved configuration. Only the fields that
/// apply to the configured method are emitted.
inline std::string render_config(const TrainConfig& tc) {
  std::ostringstream os;
  os << "[method]\n";
  os << "name = \"" << method_name(tc.method.method) << "\"\n";
  switch (tc.method.method) {
    case Method::mhpo:
      os << "c = " << format_double(tc.method.lfm.c) << "\n";
      os << "k_pos = " << format_double(tc.method.dhp.k_pos) << "\n";
      os << "lambda_pos = " << format_double(tc.method.dhp.lambda_pos) << "\n";
      os << "k_neg = " << format_double(tc.method.dhp.k_neg) << "\n";
      os << "lambda_neg = " << format_double(tc.method.dhp.lambda_neg) << "\n";
      break;
    case Method::grpo_clip:
      os << "eps = " << format_double(tc.method.eps) << "\n";
      break;
    case Method::dapo_clip:
      os << "eps_low = " << format_double(tc.method.eps_low) << "\n";
      os << "eps_high = " << format_double(tc.method.eps_high) << "\n";
      break;
    case Method::naive_pg:
      break;
  }
  os << "\n[env]\n";
  os << "kind = \"" << env_kind_name(tc.env.kind) << "\"\n";
  os << "num_prompts = " << tc.env.num_prompts << "\n";
  os << "vocab_size = " << tc.env.vocab_size << "\n";
  os << "\n[train]\n";
  os << "group_size = " << tc.group_size << "\n";
  os << "prompts_per_batch = " << tc.prompts_per_batch << "\n";
  os << "updates_per_rollout = " << tc.updates_per_rollout << "\n";
  os << "optimizer = \"" << optimizer_name(tc.optimizer) << "\"\n";
  os << "learning_rate = " << format_double(tc.learning_rate) << "\n";
  os << "beta1 = " << format_double(tc.beta1) << "\n";
  os << "beta2 = " << format_double(tc.beta2) << "\n";
  os << "adam_epsilon = " << format_double(tc.adam_epsilon) << "\n";
  os << "total_steps = " << tc.total_steps << "\n";
  os << "eval_every = " << tc.eval_every << "\n";
  os << "seed = " << tc.seed << "\n";
  os << "order = " << tc.order << "\n";
  os << "max_len = " << tc.max_len << "\n";
  os << "degeneracy_tol = " << format_double(tc.degeneracy_tol) << "\n";
  os << "\n[report]\n";
  os << "eval_prompts = " << tc.eval_prompts << "\n";
  return os.str();
}

}  // namespace mhpo

#endif  // MHPO_CONFIG_HPP
