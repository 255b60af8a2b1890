#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "preflearn/harness.hpp"

namespace {

int run_command(const std::string& config_path) {
  preflearn::ExperimentConfig cfg = preflearn::ExperimentConfig::from_json_file(config_path);
  preflearn::SweepResult sweep = preflearn::run_sweep(cfg);
  preflearn::emit_report(sweep, cfg.output_dir);

  std::cout << "trials: " << sweep.trials.size() << " ok, " << sweep.failures.size()
            << " failed\n";
  for (const preflearn::MethodRateFit& f : sweep.rate_fits)
    std::cout << f.fit.points_used << "-point rate fit for " << to_string(f.method)
              << ": slope " << f.fit.slope << " (r^2 " << f.fit.r_squared << ")\n";
  std::size_t violations = 0;
  for (const preflearn::CheckReport& r : sweep.check_reports) violations += r.violations;
  std::cout << "report written to " << cfg.output_dir << "\n";

  if (!sweep.failures.empty()) {
    std::cerr << sweep.failures.size() << " cell(s) failed; see summary.json\n";
    return 2;
  }
  if (violations > 0) {
    std::cerr << "theory checks reported " << violations << " violation(s)\n";
    return 3;
  }
  return 0;
}

int trial_command(const std::string& config_path, const std::string& method_name,
                  std::size_t n, double beta, std::uint64_t seed) {
  preflearn::ExperimentConfig cfg = preflearn::ExperimentConfig::from_json_file(config_path);
  preflearn::Method method = preflearn::method_from_string(method_name);
  preflearn::TrialResult r;
  try {
    r = preflearn::run_trial(cfg, method, n, beta, seed);
  } catch (const std::exception& e) {
    std::cerr << "trial failed: " << e.what() << "\n";
    return 2;
  }
  nlohmann::ordered_json j{{"method", to_string(r.method)},
                           {"n", r.n},
                           {"beta", r.beta},
                           {"seed", r.seed},
                           {"forward_kl", r.forward_kl},
                           {"reverse_kl", r.reverse_kl},
                           {"train_objective", r.train_objective},
                           {"wall_time", r.wall_time}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int verify_theory_command() {
  std::vector<preflearn::CheckReport> reports = preflearn::verify_theory_suite();
  std::size_t violations = 0;
  for (const preflearn::CheckReport& r : reports) {
    std::printf("%-20s instances=%zu violations=%zu worst_margin=%.3e\n", r.name.c_str(),
                r.instances_tested, r.violations, r.worst_margin);
    violations += r.violations;
  }
  return violations > 0 ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preference-based distribution learning toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  CLI::App* run = app.add_subcommand("run", "run the configured sweep and write reports");
  run->add_option("--config", config_path, "experiment config JSON")->required();

  std::string trial_config, trial_method;
  std::size_t trial_n = 0;
  double trial_beta = 0.0;
  std::uint64_t trial_seed = 0;
  CLI::App* trial = app.add_subcommand("trial", "run a single cell, print JSON to stdout");
  trial->add_option("--config", trial_config, "experiment config JSON")->required();
  trial->add_option("--method", trial_method, "PMLE|DPO|DISTILL|REBEL|RKL|RLHF")->required();
  trial->add_option("--n", trial_n, "dataset size")->required();
  trial->add_option("--beta", trial_beta, "regularization strength")->required();
  trial->add_option("--seed", trial_seed, "trial seed")->required();

  CLI::App* verify = app.add_subcommand("verify-theory", "run the inequality check battery");
  CLI::App* defcfg = app.add_subcommand("default-config", "print the default config JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (run->parsed()) return run_command(config_path);
    if (trial->parsed())
      return trial_command(trial_config, trial_method, trial_n, trial_beta, trial_seed);
    if (verify->parsed()) return verify_theory_command();
    if (defcfg->parsed()) {
      std::cout << preflearn::ExperimentConfig::fig1_default().to_json_string() << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
