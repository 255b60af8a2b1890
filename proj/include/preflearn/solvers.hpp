#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "preflearn/objectives.hpp"
#include "preflearn/policy.hpp"

namespace preflearn {

struct GdConfig {
  double learning_rate = 0.5;
  std::size_t max_steps = 5000;
  double grad_tol = 1e-9;
  double divergence_cap = 1e6;
  /// Halve the step when the objective would increase; plain descent when off.
  bool backtracking = false;
};

class SolverDivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GdResult {
  TabularPolicy policy;
  PolicyLogits logits;
  std::vector<double> trace;  // accepted objective values, element 0 = start
  bool converged = false;     // gradient tolerance reached before max_steps
};

/// Full-batch gradient descent on policy logits. Stops at grad_tol
/// (infinity norm) or max_steps; throws SolverDivergenceError when the
/// objective exceeds divergence_cap or turns non-finite.
GdResult gd_minimize(const PolicyLogits& start, const ObjectiveSpec& spec,
                     const GdConfig& cfg);

/// Exact per-context minimizer of the soft objective
///   -E_{a~pi}[r(x,a)] - gamma H(pi(x)) + beta KL(pi(x) || pi0(x)):
/// rows proportional to pi0^alpha * exp(r / (beta + gamma)) with
/// alpha = beta / (beta + gamma). Requires beta + gamma > 0.
TabularPolicy analytic_tilt_solution(const TabularPolicy& pi0, const RewardTable& reward,
                                     double beta, double gamma);

/// Projected gradient descent on the mean pair NLL over reward tables,
/// starting from zeros. After each step the table is projected onto
/// {per-context mean zero} intersected with the box |R| <= gamma * r_max.
RewardTable train_reward_model(const PreferenceDataset& ds, double gamma, double r_max,
                               const GdConfig& cfg);

struct FinitePolicyClass {
  std::vector<TabularPolicy> members;
  bool contains_target = false;
};

struct ArgminResult {
  TabularPolicy policy;
  std::size_t index = 0;
  double loss = 0.0;
};

/// Scans the class and returns the member with the smallest finite loss;
/// ties break toward the lowest index. Throws when every member evaluates
/// non-finite or the class is empty.
ArgminResult finite_class_argmin(const FinitePolicyClass& cls,
                                 const std::function<double(const TabularPolicy&)>& loss);

}  // namespace preflearn
