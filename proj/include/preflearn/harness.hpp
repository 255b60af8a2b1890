#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "preflearn/metrics.hpp"
#include "preflearn/policy.hpp"
#include "preflearn/preference.hpp"
#include "preflearn/results.hpp"
#include "preflearn/solvers.hpp"
#include "preflearn/theory.hpp"

namespace preflearn {

enum class MuMode { kReference, kUniform, kTarget };
enum class PolicyMode { kFreeLogits, kFiniteClass };

std::string to_string(MuMode m);
std::string to_string(PolicyMode m);

struct ExperimentConfig {
  std::size_t num_contexts = 10;
  std::size_t num_actions = 10;
  double logit_std = 1.3;
  double gamma = 0.5;
  std::vector<Method> methods;
  std::vector<std::size_t> n_values;   // strictly increasing
  std::vector<double> beta_grid;       // nonempty
  std::vector<std::uint64_t> seeds;    // nonempty
  MuMode mu_mode = MuMode::kUniform;
  PolicyMode policy_mode = PolicyMode::kFreeLogits;
  std::size_t class_size = 64;         // random members; the target is appended
  GdConfig solver;
  double r_max = 20.0;
  std::string output_dir = "out";
  bool use_true_reward = false;        // ablation: skip reward training
  bool split_reward_data = false;      // first half trains the reward model
  bool record_wall_time = false;       // timings are not config-pure; opt in
  std::size_t threads = 0;             // 0 = hardware concurrency

  /// Sweep over the soft-objective family reproducing the toy-scale
  /// comparison: 10x10 instances, gamma 0.5, n = 2^5..2^16, 20 log-spaced
  /// betas in [1e-4, 10], 10 seeds.
  static ExperimentConfig fig1_default();

  /// Parses a JSON object with exactly these fields (unknown keys are an
  /// error; missing keys keep their defaults).
  static ExperimentConfig from_json_string(const std::string& text);
  static ExperimentConfig from_json_file(const std::filesystem::path& path);
  std::string to_json_string() const;

  void validate() const;
};

struct CellFailure {
  Method method = Method::kPmle;
  std::size_t n = 0;
  double beta = 0.0;
  std::uint64_t seed = 0;
  std::string message;
};

struct BestBetaEntry {
  Method method = Method::kPmle;
  std::size_t n = 0;
  double beta = 0.0;
  double mean_forward_kl = 0.0;
};

struct MethodRateFit {
  Method method = Method::kPmle;
  RateFit fit;
};

struct SweepResult {
  ExperimentConfig config;
  std::vector<TrialResult> trials;  // sorted by (method, n, beta, seed)
  std::vector<BestBetaEntry> best_beta;
  std::vector<MethodRateFit> rate_fits;
  std::vector<CheckReport> check_reports;
  std::vector<CellFailure> failures;
};

/// Runs one cell: instance draw, dataset, optional reward fit, solve, and
/// KL evaluation. Pure function of its arguments.
TrialResult run_trial(const ExperimentConfig& cfg, Method method, std::size_t n,
                      double beta, std::uint64_t seed);

/// Runs the full method x n x beta x seed grid (cells in parallel), picks
/// the best beta per (method, n) by mean forward KL, fits log-log rates on
/// the best-beta curves, and attaches the theory-check reports. Cell
/// errors are recorded in failures and do not abort the sweep.
SweepResult run_sweep(const ExperimentConfig& cfg);

/// The fixed inequality-check battery at acceptance scale.
std::vector<CheckReport> verify_theory_suite();

/// Writes trials.csv, summary.json, and curves.svg into output_dir
/// (created if missing). Pure serialization of the sweep result.
void emit_report(const SweepResult& sweep, const std::filesystem::path& output_dir);

}  // namespace preflearn
