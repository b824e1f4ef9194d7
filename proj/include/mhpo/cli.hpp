#ifndef MHPO_CLI_HPP
#define MHPO_CLI_HPP

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "mhpo/config.hpp"
#include "mhpo/report.hpp"
#include "mhpo/run_io.hpp"
#include "mhpo/trainer.hpp"
#include "mhpo/verification.hpp"

// Command-line entry points. Exit codes: 0 success, 1 validation error,
// 2 certification-check failure, 3 I/O error.

namespace mhpo::cli {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitCheckFailure = 2;
constexpr int kExitIo = 3;

constexpr std::uint64_t kDefaultVerifySeed = 20240;

/// Root directory for outputs when --out is not given; overridable through
/// the MHPO_OUT_ROOT environment variable.
inline std::string default_out_root() {
  if (const char* env = std::getenv("MHPO_OUT_ROOT"); env && *env) return env;
  return "runs";
}

using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Runs one training job and writes the full run directory: config.resolved,
/// log.csv, summary.json, ckpt.best, ckpt.latest, incidents.log.
inline int cmd_train(const std::string& config_path, std::string out_dir,
                     const Overrides& overrides) {
  namespace fs = std::filesystem;
  TrainConfig cfg;
  try {
    ParsedConfig parsed = ParsedConfig::from_file(config_path);
    for (const auto& [key, value] : overrides) parsed.set(key, value);
    cfg = build_train_config(parsed);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    if (out_dir.empty()) {
      out_dir = (fs::path(default_out_root()) /
                 (std::string(method_name(cfg.method.method)) + "-" +
                  env_kind_name(cfg.env.kind) + "-seed" + std::to_string(cfg.seed)))
                    .string();
    }
    fs::create_directories(out_dir);
    write_text_file((fs::path(out_dir) / "config.resolved").string(), render_config(cfg));

    Trainer trainer(cfg);
    const RunLog& log = trainer.run();

    write_text_file((fs::path(out_dir) / "log.csv").string(), run_log_csv(log.records));
    write_text_file((fs::path(out_dir) / "summary.json").string(),
                    make_summary(cfg, log).dump(2) + "\n");
    write_checkpoint((fs::path(out_dir) / "ckpt.best").string(), log.best_params);
    write_checkpoint((fs::path(out_dir) / "ckpt.latest").string(), trainer.policy());
    std::string incidents;
    for (const std::string& note : log.incident_notes) incidents += note + "\n";
    write_text_file((fs::path(out_dir) / "incidents.log").string(), incidents);

    std::cout << "run written to " << out_dir << " (best_eval=" << format_double(log.best_eval)
              << ", latest_eval=" << format_double(log.latest_eval)
              << ", incidents=" << log.incidents << ")\n";
    return kExitOk;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}

inline StressSpec default_stress_spec(std::uint64_t seed) {
  StressSpec spec;
  spec.ratio_distribution = RatioDist::lognormal;
  spec.lognormal_mu = 0.0;
  spec.lognormal_sigma = 1.0;
  spec.n_samples = 100000;
  spec.advantage_distribution = AdvDist::rademacher;
  spec.seed = seed;
  MethodConfig mhpo_cfg;
  mhpo_cfg.method = Method::mhpo;
  MethodConfig grpo_cfg;
  grpo_cfg.method = Method::grpo_clip;
  grpo_cfg.eps = 0.2;
  MethodConfig dapo_cfg;
  dapo_cfg.method = Method::dapo_clip;
  dapo_cfg.eps_low = 0.2;
  dapo_cfg.eps_high = 0.28;
  MethodConfig naive_cfg;
  naive_cfg.method = Method::naive_pg;
  spec.transforms_under_test = {mhpo_cfg, grpo_cfg, dapo_cfg, naive_cfg};
  return spec;
}

/// Assertion-class checks over a stress run: the smooth transform must have
/// no dead zone and must respect the closed-form bound; the hard clip must
/// exhibit a dead zone.
inline CertReport stress_assertions(const StressReport& stress, double c) {
  CertReport report;
  report.suite = "stress";
  for (const StressRow& row : stress.rows) {
    if (row.method == "mhpo") {
      CheckResult dead;
      dead.name = "stress/mhpo_zero_coefficient_fraction";
      dead.measured = row.zero_fraction;
      dead.bound = 0.0;
      dead.tolerance = 0.0;
      dead.passed = row.zero_fraction == 0.0;
      dead.invariant = "the smooth multiplier never produces exact-zero coefficients";
      report.checks.push_back(dead);

      CheckResult bound;
      bound.name = "stress/mhpo_max_coefficient_bound";
      bound.measured = row.max_coefficient;
      bound.bound = multiplier_bound(c);
      bound.tolerance = 1e-9;
      bound.passed = row.max_coefficient <= multiplier_bound(c) + 1e-9;
      bound.invariant = "max |coefficient| under stress stays within the closed-form bound";
      report.checks.push_back(bound);
    }
    if (row.method == "grpo_clip") {
      CheckResult dead;
      dead.name = "stress/grpo_clip_dead_zone_present";
      dead.measured = row.zero_fraction;
      dead.bound = 0.0;
      dead.tolerance = 0.0;
      dead.passed = row.zero_fraction > 0.0;
      dead.invariant = "hard clipping produces a strictly positive zero-coefficient fraction";
      report.checks.push_back(dead);
    }
  }
  return report;
}

/// Runs the named certification suite and writes its reports to out_dir.
/// The JSON is byte-reproducible; wall-clock timings go to the text report.
inline int cmd_verify(const std::string& suite, std::string out_dir,
                      std::uint64_t seed = kDefaultVerifySeed) {
  namespace fs = std::filesystem;
  if (suite != "bounds" && suite != "gradcheck" && suite != "moment" && suite != "stress" &&
      suite != "all") {
    std::cerr << "error: unknown verify suite '" << suite
              << "' (expected bounds|gradcheck|moment|stress|all)\n";
    return kExitValidation;
  }
  try {
    if (out_dir.empty()) {
      out_dir = (fs::path(default_out_root()) / ("verify-" + suite)).string();
    }
    fs::create_directories(out_dir);

    CertReport report;
    report.suite = suite;
    if (suite == "bounds" || suite == "all") {
      const std::vector<double> c_grid = {0.5, 1.0, 1.5, 2.0};
      report.append(certify_multiplier_bound(c_grid));
      report.append(certify_transform_properties(1.5));
    }
    if (suite == "gradcheck" || suite == "all") {
      report.append(certify_semi_gradient(seed));
    }
    if (suite == "moment" || suite == "all") {
      for (double sigma : {0.5, 1.0, 2.0, 3.0}) {
        StressSpec spec = default_stress_spec(seed);
        spec.lognormal_sigma = sigma;
        report.append(certify_second_moment(spec, LfmParams{1.5}, DhpParams{}));
      }
    }
    if (suite == "stress" || suite == "all") {
      const StressSpec spec = default_stress_spec(seed);
      const StressReport stress = stress_compare(spec);
      write_text_file((fs::path(out_dir) / "stress.csv").string(), stress.to_csv());
      report.append(stress_assertions(stress, 1.5));
    }

    write_text_file((fs::path(out_dir) / ("report_" + suite + ".json")).string(),
                    report.to_json().dump(2) + "\n");
    write_text_file((fs::path(out_dir) / ("report_" + suite + ".txt")).string(),
                    report.to_text());
    std::cout << report.to_text();
    return report.all_passed() ? kExitOk : kExitCheckFailure;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}

inline int cmd_report(const std::vector<std::string>& run_dirs, std::string out_path) {
  try {
    if (out_path.empty()) {
      out_path = (std::filesystem::path(default_out_root()) / "report").string();
    }
    emit_report(run_dirs, out_path);
    std::cout << "report written to " << out_path << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
}

inline int cmd_stress(const StressSpec& spec, std::string out_dir) {
  namespace fs = std::filesystem;
  try {
    if (out_dir.empty()) {
      out_dir = (fs::path(default_out_root()) / "stress").string();
    }
    fs::create_directories(out_dir);
    const StressReport stress = stress_compare(spec);
    write_text_file((fs::path(out_dir) / "stress.csv").string(), stress.to_csv());
    std::cout << stress.to_csv();
    return kExitOk;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}

/// Interprets leftover CLI tokens as dotted config overrides:
/// --method.c 2.0  or  --method.c=2.0
inline Overrides parse_overrides(const std::vector<std::string>& extras) {
  Overrides out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    std::string token = extras[i];
    if (token.rfind("--", 0) != 0 || token.find('.') == std::string::npos) {
      throw ConfigError("unrecognized argument '" + token +
                        "' (config overrides look like --section.key value)");
    }
    token = token.substr(2);
    const std::size_t eq = token.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(token.substr(0, eq), token.substr(eq + 1));
    } else {
      if (i + 1 >= extras.size()) {
        throw ConfigError("override '--" + token + "' is missing a value");
      }
      out.emplace_back(token, extras[++i]);
    }
  }
  return out;
}

inline int run_main(int argc, char** argv) {
  CLI::App app{"Hazard-modulated policy optimization on synthetic verifiable-reward tasks"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "run one training job from a config file");
  std::string config_path, train_out;
  std::int64_t seed_flag = -1;
  train->add_option("--config", config_path, "run configuration file")->required();
  train->add_option("--out", train_out, "output run directory");
  train->add_option("--seed", seed_flag, "override train.seed");
  train->allow_extras();

  // verify
  auto* verify = app.add_subcommand("verify", "run a certification suite");
  std::string suite = "all", verify_out;
  std::uint64_t verify_seed = kDefaultVerifySeed;
  verify->add_option("suite", suite, "bounds|gradcheck|moment|stress|all");
  verify->add_option("--out", verify_out, "output directory for reports");
  verify->add_option("--seed", verify_seed, "seed for randomized checks");

  // report
  auto* report = app.add_subcommand("report", "charts and best-vs-latest table across runs");
  std::vector<std::string> run_dirs;
  std::string report_out;
  report->add_option("runs", run_dirs, "run directories to aggregate");
  report->add_option("--out", report_out, "output directory");

  // stress
  auto* stress = app.add_subcommand("stress", "heavy-tailed ratio stress comparison");
  std::string dist = "lognormal", adv = "rademacher", stress_out;
  double mu = 0.0, sigma = 1.0, alpha = 1.5, mix = 0.1;
  std::uint64_t stress_seed = kDefaultVerifySeed;
  std::size_t samples = 100000;
  stress->add_option("--dist", dist, "lognormal|pareto_tail");
  stress->add_option("--mu", mu, "lognormal location");
  stress->add_option("--sigma", sigma, "lognormal scale");
  stress->add_option("--alpha", alpha, "pareto tail index");
  stress->add_option("--mix", mix, "pareto tail mixture weight");
  stress->add_option("--samples", samples, "sample count (>= 10000)");
  stress->add_option("--adv", adv, "rademacher|normal");
  stress->add_option("--seed", stress_seed, "rng seed");
  stress->add_option("--out", stress_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (train->parsed()) {
      Overrides overrides = parse_overrides(train->remaining());
      if (seed_flag >= 0) overrides.emplace_back("train.seed", std::to_string(seed_flag));
      return cmd_train(config_path, train_out, overrides);
    }
    if (verify->parsed()) {
      return cmd_verify(suite, verify_out, verify_seed);
    }
    if (report->parsed()) {
      return cmd_report(run_dirs, report_out);
    }
    if (stress->parsed()) {
      StressSpec spec = default_stress_spec(stress_seed);
      if (dist == "lognormal") {
        spec.ratio_distribution = RatioDist::lognormal;
      } else if (dist == "pareto_tail") {
        spec.ratio_distribution = RatioDist::pareto_tail;
      } else {
        throw ConfigError("stress --dist must be lognormal|pareto_tail");
      }
      spec.lognormal_mu = mu;
      spec.lognormal_sigma = sigma;
      spec.pareto_alpha = alpha;
      spec.pareto_mix = mix;
      spec.n_samples = samples;
      if (adv == "rademacher") {
        spec.advantage_distribution = AdvDist::rademacher;
      } else if (adv == "normal") {
        spec.advantage_distribution = AdvDist::standard_normal;
      } else {
        throw ConfigError("stress --adv must be rademacher|normal");
      }
      return cmd_stress(spec, stress_out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace mhpo::cli

#endif  // MHPO_CLI_HPP
