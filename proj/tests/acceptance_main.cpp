// Acceptance battery: one pass/fail line per criterion, exit code = number
// of failures. Each criterion is independent; an exception fails only the
// criterion that threw it.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "preflearn/harness.hpp"
#include "preflearn/objectives.hpp"
#include "preflearn/policy.hpp"
#include "preflearn/preference.hpp"
#include "preflearn/random.hpp"
#include "preflearn/solvers.hpp"
#include "preflearn/theory.hpp"

using namespace preflearn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

fs::path make_temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() /
               ("preflearn_accept_" + tag + "_" + std::to_string(std::random_device{}()));
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

double best_kl(const SweepResult& sweep, Method m, std::size_t n) {
  for (const BestBetaEntry& e : sweep.best_beta)
    if (e.method == m && e.n == n) return e.mean_forward_kl;
  throw std::runtime_error("missing best-beta entry for " + to_string(m) + " at n=" +
                           std::to_string(n));
}

// 1. Default sweep: the entropy-regularized solver keeps improving with n
// while the entropy-free one plateaus.
Outcome criterion1() {
  ExperimentConfig cfg = ExperimentConfig::fig1_default();
  auto t0 = std::chrono::steady_clock::now();
  SweepResult sweep = run_sweep(cfg);
  double elapsed = seconds_since(t0);

  if (!sweep.failures.empty())
    return {false, std::to_string(sweep.failures.size()) + " cells failed"};

  double rkl_head = best_kl(sweep, Method::kRkl, 32);
  double rkl_tail = best_kl(sweep, Method::kRkl, 65536);
  double rlhf_head = best_kl(sweep, Method::kRlhf, 1024);
  double rlhf_tail = best_kl(sweep, Method::kRlhf, 65536);

  double slope = 0.0;
  bool have_slope = false;
  for (const MethodRateFit& f : sweep.rate_fits)
    if (f.method == Method::kRkl) {
      slope = f.fit.slope;
      have_slope = true;
    }
  if (!have_slope) return {false, "no rate fit for RKL"};

  bool decay_ok = rkl_tail <= 0.05 * rkl_head;
  bool slope_ok = slope >= -1.4 && slope <= -0.6;
  bool plateau_ok = rlhf_tail >= 0.3 * rlhf_head;
  bool time_ok = elapsed < 600.0;

  std::string detail = "rkl tail/head " + fmt(rkl_tail / rkl_head) +
                       " (limit 0.05), slope " + fmt(slope) +
                       " (range [-1.4,-0.6]), rlhf tail/head " +
                       fmt(rlhf_tail / rlhf_head) + " (floor 0.3), " + fmt(elapsed) + "s";
  return {decay_ok && slope_ok && plateau_ok && time_ok, detail};
}

// 2. Finite-class selection consistency at gamma = 0.5.
Outcome criterion2() {
  ExperimentConfig cfg = ExperimentConfig::fig1_default();
  cfg.methods = {Method::kPmle, Method::kDistill, Method::kRkl};
  cfg.policy_mode = PolicyMode::kFiniteClass;
  cfg.class_size = 64;
  cfg.beta_grid = {0.0};
  cfg.n_values = {128, 512, 2048, 8192, 16384};
  cfg.seeds.clear();
  for (std::uint64_t s = 0; s < 200; ++s) cfg.seeds.push_back(s);

  auto t0 = std::chrono::steady_clock::now();
  SweepResult sweep = run_sweep(cfg);
  double elapsed = seconds_since(t0);

  if (!sweep.failures.empty())
    return {false, std::to_string(sweep.failures.size()) + " cells failed"};

  bool all_ok = elapsed < 300.0;
  std::string detail;
  for (Method m : cfg.methods) {
    std::size_t hits = 0, total = 0;
    std::vector<double> mean_by_n;
    for (std::size_t n : cfg.n_values) {
      double sum = 0.0;
      std::size_t count = 0;
      for (const TrialResult& t : sweep.trials)
        if (t.method == m && t.n == n) {
          sum += t.forward_kl;
          ++count;
          if (n == 16384) {
            ++total;
            if (t.forward_kl <= 1e-12) ++hits;
          }
        }
      if (n != 16384) mean_by_n.push_back(sum / static_cast<double>(count));
    }
    double frac = static_cast<double>(hits) / static_cast<double>(total);
    std::size_t inversions = 0;
    for (std::size_t i = 1; i < mean_by_n.size(); ++i)
      if (mean_by_n[i] > mean_by_n[i - 1]) ++inversions;
    bool ok = frac >= 0.95 && inversions <= 1;
    all_ok = all_ok && ok;
    if (!detail.empty()) detail += ", ";
    detail += to_string(m) + " select " + fmt(frac) + " inv " + std::to_string(inversions);
  }
  detail += ", " + fmt(elapsed) + "s";
  return {all_ok, detail};
}

ObjectiveSpec random_instance(ObjectiveKind kind, std::size_t nx, std::size_t na,
                              double beta, RandomStream& rng, std::uint64_t data_seed) {
  ObjectiveSpec spec;
  spec.kind = kind;
  spec.gamma = 0.3 + 0.6 * rng.uniform01();
  spec.beta = beta;
  spec.eta = 0.5 + rng.uniform01();
  spec.context_dist = ContextDist::uniform(nx);
  spec.reference_policy = random_softmax_policy(nx, na, 0.8, rng);

  TabularPolicy pi_star = random_softmax_policy(nx, na, 0.8, rng);
  if (kind != ObjectiveKind::kRkl)
    spec.dataset = sample_dataset(spec.context_dist, TabularPolicy::uniform(nx, na),
                                  pi_star, spec.gamma, 300, data_seed);
  if (kind == ObjectiveKind::kDistill || kind == ObjectiveKind::kRebel ||
      kind == ObjectiveKind::kRkl) {
    RewardTable reward{Matrix(nx, na), spec.gamma};
    for (double& v : reward.values.data) v = 0.8 * rng.gaussian();
    spec.reward = reward;
  }
  return spec;
}

// 3. Analytic gradients against central finite differences.
Outcome criterion3() {
  const std::vector<ObjectiveKind> kinds = {ObjectiveKind::kPmle, ObjectiveKind::kDpo,
                                            ObjectiveKind::kDistill, ObjectiveKind::kRebel,
                                            ObjectiveKind::kRkl};
  const double h = 1e-5;
  RandomStream rng(31);
  double worst = 0.0;
  std::size_t checked = 0;

  for (ObjectiveKind kind : kinds)
    for (int i = 0; i < 100; ++i) {
      std::size_t nx = 2 + static_cast<std::size_t>(i % 4);
      std::size_t na = 3 + static_cast<std::size_t>(i % 3);
      double beta = (i % 2 == 0) ? 0.0 : 0.4;
      ObjectiveSpec spec = random_instance(kind, nx, na, beta, rng, 1000 + i);

      PolicyLogits logits{Matrix(nx, na)};
      for (double& v : logits.values.data) v = 0.7 * rng.gaussian();

      Matrix grad = objective_gradient(logits, spec);
      Matrix fd(nx, na);
      for (std::size_t k = 0; k < fd.data.size(); ++k) {
        PolicyLogits shifted = logits;
        shifted.values.data[k] = logits.values.data[k] + h;
        double up = evaluate_objective(softmax_policy(shifted), spec);
        shifted.values.data[k] = logits.values.data[k] - h;
        double down = evaluate_objective(softmax_policy(shifted), spec);
        fd.data[k] = (up - down) / (2.0 * h);
      }

      double num = 0.0, den = 0.0;
      for (std::size_t k = 0; k < fd.data.size(); ++k) {
        num += (grad.data[k] - fd.data[k]) * (grad.data[k] - fd.data[k]);
        den += fd.data[k] * fd.data[k];
      }
      double rel = std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
      worst = std::max(worst, rel);
      ++checked;
    }

  return {worst <= 1e-5, std::to_string(checked) + " instances, worst rel err " + fmt(worst) +
                             " (limit 1e-5)"};
}

// 4. Gradient descent lands on the closed-form tilt solution.
Outcome criterion4() {
  RandomStream rng(47);
  double worst = 0.0;
  std::size_t converged = 0;

  for (int i = 0; i < 50; ++i) {
    std::size_t nx = 3 + static_cast<std::size_t>(i % 3);
    std::size_t na = 4 + static_cast<std::size_t>(i % 3);
    TabularPolicy pi0 = random_softmax_policy(nx, na, 1.0, rng);
    RewardTable reward{Matrix(nx, na), 0.0};
    for (double& v : reward.values.data) v = 0.4 * rng.gaussian();
    double beta = 0.5 + rng.uniform01();
    double gamma = (i % 2 == 0) ? 0.0 : 0.4 + 0.6 * rng.uniform01();

    ObjectiveSpec spec;
    spec.kind = ObjectiveKind::kRkl;
    spec.gamma = gamma;
    spec.beta = beta;
    spec.reference_policy = pi0;
    spec.reward = reward;
    spec.context_dist = ContextDist::uniform(nx);

    PolicyLogits start{Matrix(nx, na)};
    for (std::size_t k = 0; k < start.values.data.size(); ++k)
      start.values.data[k] = std::log(pi0.probs().data[k]);

    // The gradient norm floors near 1e-8 once objective differences drop
    // below double rounding, so this tolerance is the practical limit.
    GdResult gd = gd_minimize(start, spec, GdConfig{2.0, 30000, 1e-8, 1e6, true});
    if (gd.converged) ++converged;
    TabularPolicy analytic = analytic_tilt_solution(pi0, reward, beta, gamma);

    double kl = std::max(policy_forward_kl(analytic, gd.policy, spec.context_dist),
                         policy_forward_kl(gd.policy, analytic, spec.context_dist));
    worst = std::max(worst, kl);
  }

  return {worst <= 1e-6, "50 instances (" + std::to_string(converged) +
                             " converged), worst KL gap " + fmt(worst) + " (limit 1e-6)"};
}

// 5. Distillation reaches zero loss when the class can represent the
// reward-induced policy, and the implied pair probabilities match.
Outcome criterion5() {
  RandomStream rng(83);
  double worst_loss = 0.0, worst_pair = 0.0;

  for (int i = 0; i < 10; ++i) {
    std::size_t nx = 3, na = 4;
    double gamma = 0.4 + 0.05 * i;
    TabularPolicy pi_star = random_softmax_policy(nx, na, 1.0, rng);
    ContextDist d = ContextDist::uniform(nx);
    PreferenceDataset ds = sample_dataset(d, TabularPolicy::uniform(nx, na), pi_star,
                                          gamma, 2000, 500 + i);
    RewardTable reward = train_reward_model(ds, gamma, 20.0, GdConfig{4.0, 20000, 1e-10, 1e6, true});
    TabularPolicy simulator = induced_policy_from_reward(reward);

    ObjectiveSpec spec;
    spec.kind = ObjectiveKind::kDistill;
    spec.gamma = gamma;
    spec.beta = 0.0;
    spec.reward = reward;
    spec.dataset = ds;
    spec.context_dist = d;

    PolicyLogits start{Matrix(nx, na)};
    GdResult gd = gd_minimize(start, spec, GdConfig{4.0, 50000, 1e-10, 1e6, true});
    worst_loss = std::max(worst_loss, gd.trace.back());

    for (const PreferenceTriple& t : ds.triples) {
      double fitted = bt_prob(gd.policy, gamma, t.context, t.preferred, t.dispreferred);
      double target = bt_prob(simulator, gamma, t.context, t.preferred, t.dispreferred);
      worst_pair = std::max(worst_pair, std::abs(fitted - target));
    }
  }

  bool ok = worst_loss <= 1e-8 && worst_pair <= 1e-6;
  return {ok, "10 instances, worst loss " + fmt(worst_loss) + " (limit 1e-8), worst pair gap " +
                  fmt(worst_pair) + " (limit 1e-6)"};
}

// 6. Inequality battery over dense grids.
Outcome criterion6() {
  std::vector<CheckReport> reports = verify_theory_suite();
  std::size_t violations = 0;
  std::string detail;
  for (const CheckReport& r : reports) {
    violations += r.violations;
    if (!detail.empty()) detail += ", ";
    detail += r.name + " " + std::to_string(r.violations) + "/" +
              std::to_string(r.instances_tested);
  }
  return {violations == 0, detail};
}

// 7. With a constant reward the entropy term flattens the reference: every
// action below its context median gains mass relative to the entropy-free
// solution. Reference rows are randomly permuted power laws; their median
// entry sits below 1/|A|, which keeps the whole below-median set inside the
// region the flattening provably lifts for any exponent in (0,1). Gaussian
// logit rows do not have that guarantee and fail this check on a few
// percent of contexts.
Outcome criterion7() {
  RandomStream rng(20240819);
  std::size_t violations = 0, checked = 0;

  for (int i = 0; i < 100; ++i) {
    std::size_t nx = 3, na = 10;
    Matrix rows(nx, na);
    for (std::size_t x = 0; x < nx; ++x) {
      double s = 0.3 + 1.7 * rng.uniform01();
      for (std::size_t a = 0; a < na; ++a)
        rows(x, a) = std::pow(static_cast<double>(a + 1), -s);
      for (std::size_t a = na - 1; a > 0; --a) {
        std::size_t k = static_cast<std::size_t>(rng.uniform01() * static_cast<double>(a + 1));
        std::swap(rows(x, a), rows(x, std::min(k, a)));
      }
    }
    TabularPolicy pi0 = TabularPolicy::from_probs(std::move(rows));
    double beta = std::exp(std::log(0.05) + rng.uniform01() * std::log(5.0 / 0.05));
    double gamma = 0.1 + 1.4 * rng.uniform01();
    RewardTable constant{Matrix(nx, na), gamma};  // all zeros

    TabularPolicy rkl = analytic_tilt_solution(pi0, constant, beta, gamma);
    TabularPolicy rlhf = analytic_tilt_solution(pi0, constant, beta, 0.0);

    for (std::size_t x = 0; x < nx; ++x) {
      std::vector<double> row(na);
      for (std::size_t a = 0; a < na; ++a) row[a] = pi0.prob(x, a);
      std::vector<double> sorted = row;
      std::sort(sorted.begin(), sorted.end());
      double median = 0.5 * (sorted[na / 2 - 1] + sorted[na / 2]);
      for (std::size_t a = 0; a < na; ++a)
        if (row[a] < median) {
          ++checked;
          if (!(rkl.prob(x, a) > rlhf.prob(x, a))) ++violations;
        }
    }
  }

  return {violations == 0, std::to_string(checked) + " below-median actions, " +
                               std::to_string(violations) + " violations"};
}

// 8. Byte-identical outputs across repeated CLI runs of the default config.
Outcome criterion8() {
  fs::path cli = PREFLEARN_CLI_PATH;
  if (!fs::exists(cli)) return {false, "missing CLI binary " + cli.string()};

  std::vector<fs::path> dirs = {make_temp_dir("cli_a"), make_temp_dir("cli_b")};
  for (const fs::path& dir : dirs) {
    std::string cmd = "cd '" + dir.string() + "' && '" + cli.string() +
                      "' default-config > default.json && '" + cli.string() +
                      "' run --config default.json > run.log";
    int rc = std::system(cmd.c_str());
    if (rc != 0) {
      for (const fs::path& d : dirs) fs::remove_all(d);
      return {false, "CLI exited with status " + std::to_string(rc)};
    }
  }

  std::string csv_a = slurp(dirs[0] / "out" / "trials.csv");
  std::string csv_b = slurp(dirs[1] / "out" / "trials.csv");
  std::string sum_a = slurp(dirs[0] / "out" / "summary.json");
  std::string sum_b = slurp(dirs[1] / "out" / "summary.json");
  for (const fs::path& d : dirs) fs::remove_all(d);

  bool ok = !csv_a.empty() && csv_a == csv_b && !sum_a.empty() && sum_a == sum_b;
  std::string detail = "trials.csv " + std::to_string(csv_a.size()) + "B " +
                       (csv_a == csv_b ? "identical" : "DIFFER") + ", summary.json " +
                       std::to_string(sum_a.size()) + "B " +
                       (sum_a == sum_b ? "identical" : "DIFFER");
  return {ok, detail};
}

}  // namespace

int main() {
  struct Entry {
    int number;
    const char* name;
    std::function<Outcome()> fn;
  };
  const std::vector<Entry> entries = {
      {1, "default sweep decay and plateau", criterion1},
      {2, "finite-class selection consistency", criterion2},
      {3, "gradients vs finite differences", criterion3},
      {4, "descent matches closed-form tilt", criterion4},
      {5, "distillation zero loss", criterion5},
      {6, "inequality battery", criterion6},
      {7, "constant-reward prior smoothing", criterion7},
      {8, "CLI determinism", criterion8},
  };

  int failures = 0;
  for (const Entry& e : entries) {
    Outcome out;
    try {
      out = e.fn();
    } catch (const std::exception& ex) {
      out = {false, std::string("exception: ") + ex.what()};
    }
    std::printf("[%s] criterion %d: %s (%s)\n", out.passed ? "PASS" : "FAIL", e.number,
                e.name, out.detail.c_str());
    std::fflush(stdout);
    if (!out.passed) ++failures;
  }
  return failures;
}
