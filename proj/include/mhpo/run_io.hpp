#ifndef MHPO_RUN_IO_HPP
#define MHPO_RUN_IO_HPP

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhpo/common.hpp"
#include "mhpo/policy_env.hpp"
#include "mhpo/trainer.hpp"

// On-disk run artifacts: the step-indexed CSV log, flat key-value parameter
// checkpoints with a version header, and the summary JSON. All float output
// goes through format_double so identical runs write identical bytes.

namespace mhpo {

inline constexpr const char* kRunLogHeader =
    "step,mean_reward,loss,grad_norm,max_multiplier,ratio_min,ratio_med,ratio_max,"
    "degenerate_groups,eval_success";

inline constexpr const char* kCheckpointMagic = "mhpo.ckpt.v1";

inline std::string run_log_csv(const std::vector<StepRecord>& records) {
  std::ostringstream os;
  os << kRunLogHeader << "\n";
  for (const StepRecord& r : records) {
    os << r.step << "," << format_double(r.mean_reward) << "," << format_double(r.loss)
       << "," << format_double(r.grad_norm) << "," << format_double(r.max_multiplier)
       << "," << format_double(r.ratio_min) << "," << format_double(r.ratio_med) << ","
       << format_double(r.ratio_max) << "," << r.degenerate_groups << ",";
    if (r.eval_success) os << format_double(*r.eval_success);
    os << "\n";
  }
  return os.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Reads a run log back. Rows may carry extra trailing columns from newer
/// schema versions; the named columns above are positional and required.
inline std::vector<StepRecord> read_run_log_csv(const std::string& path) {
  std::istringstream is(read_text_file(path));
  std::string line;
  if (!std::getline(is, line)) throw IoError("empty run log: " + path);
  std::vector<StepRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      if (comma == std::string::npos) {
        cells.push_back(line.substr(start));
        break;
      }
      cells.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    if (cells.size() < 10) throw IoError("short row in run log: " + path);
    StepRecord r;
    r.step = std::atoi(cells[0].c_str());
    r.mean_reward = std::strtod(cells[1].c_str(), nullptr);
    r.loss = std::strtod(cells[2].c_str(), nullptr);
    r.grad_norm = std::strtod(cells[3].c_str(), nullptr);
    r.max_multiplier = std::strtod(cells[4].c_str(), nullptr);
    r.ratio_min = std::strtod(cells[5].c_str(), nullptr);
    r.ratio_med = std::strtod(cells[6].c_str(), nullptr);
    r.ratio_max = std::strtod(cells[7].c_str(), nullptr);
    r.degenerate_groups = std::atoi(cells[8].c_str());
    if (!cells[9].empty()) r.eval_success = std::strtod(cells[9].c_str(), nullptr);
    out.push_back(r);
  }
  return out;
}

/// Flat key-value checkpoint: one line per logit row, rows sorted so the
/// bytes are reproducible.
inline std::string checkpoint_text(const PolicyParams& params) {
  std::ostringstream os;
  os << kCheckpointMagic << "\n";
  os << "vocab_size " << params.vocab_size << "\n";
  os << "order " << params.order << "\n";
  os << "max_len " << params.max_len << "\n";
  os << "rows " << params.logits.size() << "\n";
  std::vector<const RowKey*> keys;
  keys.reserve(params.logits.size());
  for (const auto& [k, v] : params.logits) keys.push_back(&k);
  std::sort(keys.begin(), keys.end(),
            [](const RowKey* a, const RowKey* b) { return *a < *b; });
  for (const RowKey* k : keys) {
    os << "row " << k->prompt_id << " " << static_cast<int>(k->ctx_len);
    for (std::uint8_t i = 0; i < k->ctx_len; ++i) os << " " << k->ctx[i];
    for (double v : params.logits.at(*k)) os << " " << format_double(v);
    os << "\n";
  }
  return os.str();
}

inline void write_checkpoint(const std::string& path, const PolicyParams& params) {
  write_text_file(path, checkpoint_text(params));
}

inline PolicyParams read_checkpoint(const std::string& path) {
  std::istringstream is(read_text_file(path));
  std::string magic;
  if (!(is >> magic) || magic != kCheckpointMagic) {
    throw IoError("not a checkpoint file (bad version header): " + path);
  }
  PolicyParams params;
  std::string tag;
  std::size_t n_rows = 0;
  while (is >> tag) {
    if (tag == "vocab_size") {
      is >> params.vocab_size;
    } else if (tag == "order") {
      is >> params.order;
    } else if (tag == "max_len") {
      is >> params.max_len;
    } else if (tag == "rows") {
      is >> n_rows;
    } else if (tag == "row") {
      RowKey key;
      int ctx_len = 0;
      is >> key.prompt_id >> ctx_len;
      key.ctx_len = static_cast<std::uint8_t>(ctx_len);
      for (int i = 0; i < ctx_len; ++i) is >> key.ctx[static_cast<std::size_t>(i)];
      std::vector<double> row(static_cast<std::size_t>(params.vocab_size));
      for (double& v : row) is >> v;
      params.logits.emplace(key, std::move(row));
    } else {
      throw IoError("unexpected checkpoint tag '" + tag + "' in " + path);
    }
  }
  if (params.logits.size() != n_rows) {
    throw IoError("checkpoint row count mismatch in " + path);
  }
  return params;
}

/// Run summary mirroring the best-vs-latest bookkeeping.
inline nlohmann::json make_summary(const TrainConfig& cfg, const RunLog& log) {
  nlohmann::json j;
  j["method"] = method_name(cfg.method.method);
  j["env"] = env_kind_name(cfg.env.kind);
  j["seed"] = cfg.seed;
  j["total_steps"] = cfg.total_steps;
  j["best_eval"] = log.best_eval;
  j["best_step"] = log.best_step;
  j["latest_eval"] = log.latest_eval;
  j["latest_step"] = cfg.total_steps - 1;
  j["delta_latest_minus_best"] = log.latest_eval - log.best_eval;
  j["incidents"] = log.incidents;
  j["malformed_responses"] = log.malformed_responses;
  int degenerate_total = 0;
  double max_mult = 0.0;
  for (const StepRecord& r : log.records) {
    degenerate_total += r.degenerate_groups;
    max_mult = std::max(max_mult, r.max_multiplier);
  }
  j["degenerate_groups_total"] = degenerate_total;
  j["max_token_multiplier"] = max_mult;
  j["assumptions"] = log.assumptions;
  return j;
}

}  // namespace mhpo

#endif  // MHPO_RUN_IO_HPP
