#ifndef MHPO_REPORT_HPP
#define MHPO_REPORT_HPP

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhpo/common.hpp"
#include "mhpo/run_io.hpp"
#include "mhpo/svg.hpp"

// Cross-run reporting: overlaid reward / gradient-norm charts and the
// best-vs-latest table with the per-method eval gap.

namespace mhpo {

struct LoadedRun {
  std::string label;
  std::vector<StepRecord> records;
  nlohmann::json summary;
};

/// Loads log.csv + summary.json from a run directory; returns false (with a
/// warning on stderr) when either file is missing or unreadable.
inline bool load_run(const std::string& dir, LoadedRun& out) {
  namespace fs = std::filesystem;
  try {
    out.records = read_run_log_csv((fs::path(dir) / "log.csv").string());
    out.summary = nlohmann::json::parse(read_text_file((fs::path(dir) / "summary.json").string()));
  } catch (const std::exception& e) {
    std::cerr << "warning: skipping run dir '" << dir << "': " << e.what() << "\n";
    return false;
  }
  std::string label = fs::path(dir).filename().string();
  if (label.empty()) label = fs::path(dir).parent_path().filename().string();
  if (out.summary.contains("method")) {
    out.label = out.summary["method"].get<std::string>() + " (" + label + ")";
  } else {
    out.label = label;
  }
  return true;
}

inline std::string best_latest_table_csv(const std::vector<LoadedRun>& runs) {
  std::ostringstream os;
  os << "run,method,best_eval,latest_eval,delta\n";
  for (const auto& r : runs) {
    os << r.label << "," << r.summary.value("method", std::string("?")) << ","
       << format_double(r.summary.value("best_eval", 0.0)) << ","
       << format_double(r.summary.value("latest_eval", 0.0)) << ","
       << format_double(r.summary.value("delta_latest_minus_best", 0.0)) << "\n";
  }
  return os.str();
}

inline std::string best_latest_table_text(const std::vector<LoadedRun>& runs) {
  std::ostringstream os;
  os << "run                                      best    latest  delta\n";
  for (const auto& r : runs) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-40s %-7.4f %-7.4f %+.4f\n", r.label.c_str(),
                  r.summary.value("best_eval", 0.0), r.summary.value("latest_eval", 0.0),
                  r.summary.value("delta_latest_minus_best", 0.0));
    os << buf;
  }
  return os.str();
}

/// Emits reward.svg, grad_norm.svg, best_latest.csv and best_latest.txt for
/// the runs that loaded successfully. Throws IoError when none did.
inline void emit_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (run_dirs.empty()) throw ConfigError("report: at least one run directory is required");
  std::vector<LoadedRun> runs;
  for (const std::string& dir : run_dirs) {
    LoadedRun run;
    if (load_run(dir, run)) runs.push_back(std::move(run));
  }
  if (runs.empty()) throw IoError("report: no readable runs among the given directories");

  fs::create_directories(out_dir);
  LineChart reward("Mean reward per step", "step", "mean reward");
  LineChart grad("Gradient norm per step", "step", "gradient L2 norm");
  for (const auto& r : runs) {
    std::vector<double> xs, rew, gn;
    xs.reserve(r.records.size());
    for (const StepRecord& rec : r.records) {
      xs.push_back(static_cast<double>(rec.step));
      rew.push_back(rec.mean_reward);
      gn.push_back(rec.grad_norm);
    }
    reward.add_series(r.label, xs, rew);
    grad.add_series(r.label, xs, gn);
  }
  write_text_file((fs::path(out_dir) / "reward.svg").string(), reward.render());
  write_text_file((fs::path(out_dir) / "grad_norm.svg").string(), grad.render());
  write_text_file((fs::path(out_dir) / "best_latest.csv").string(), best_latest_table_csv(runs));
  write_text_file((fs::path(out_dir) / "best_latest.txt").string(), best_latest_table_text(runs));
}

}  // namespace mhpo

#endif  // MHPO_REPORT_HPP
