#pragma once

#include <cstddef>
#include <vector>

#include "preflearn/matrix.hpp"
#include "preflearn/random.hpp"

namespace preflearn {

/// Probability floor applied by TabularPolicy constructors so that logs of
/// policy entries stay finite downstream.
inline constexpr double kProbFloor = 1e-12;

/// Distribution over contexts (prompts).
class ContextDist {
 public:
  static ContextDist uniform(std::size_t num_contexts);
  /// Validates nonnegativity and that the weights sum to 1 within 1e-12.
  static ContextDist from_weights(std::vector<double> weights);

  std::size_t size() const { return weights_.size(); }
  double weight(std::size_t x) const { return weights_[x]; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  explicit ContextDist(std::vector<double> w) : weights_(std::move(w)) {}
  std::vector<double> weights_;
};

/// Row-stochastic conditional distribution over actions given context.
class TabularPolicy {
 public:
  TabularPolicy() = default;

  /// Builds a policy from nonnegative rows. Each row is normalized; when
  /// apply_floor is set (the default) entries are first clamped up to
  /// kProbFloor so every action keeps positive mass.
  static TabularPolicy from_probs(Matrix probs, bool apply_floor = true);
  static TabularPolicy uniform(std::size_t num_contexts, std::size_t num_actions);

  std::size_t num_contexts() const { return probs_.rows; }
  std::size_t num_actions() const { return probs_.cols; }
  double prob(std::size_t x, std::size_t a) const { return probs_(x, a); }
  const Matrix& probs() const { return probs_; }

  friend bool operator==(const TabularPolicy& a, const TabularPolicy& b) {
    return a.probs_ == b.probs_;
  }

 private:
  explicit TabularPolicy(Matrix m) : probs_(std::move(m)) {}
  Matrix probs_;
};

/// Unconstrained policy parameters; softmax_policy maps them to a policy.
struct PolicyLogits {
  Matrix values;
};

/// Per-(context, action) reward values together with the tilt gamma they
/// were built or trained under.
struct RewardTable {
  Matrix values;
  double gamma = 0.0;
};

/// Row-wise softmax of finite logits. Non-finite entries are rejected.
TabularPolicy softmax_policy(const PolicyLogits& logits);

/// Policy whose logits are i.i.d. N(0, logit_std^2) draws from rng.
TabularPolicy random_softmax_policy(std::size_t num_contexts, std::size_t num_actions,
                                    double logit_std, RandomStream& rng);

/// E_{x~d}[KL(p(x) || q(x))]. Returns +infinity when q lacks support where
/// p has mass; 0 ln 0 counts as 0.
double policy_forward_kl(const TabularPolicy& p, const TabularPolicy& q,
                         const ContextDist& d);

/// E_{x~d}[H(p(x))].
double policy_entropy(const TabularPolicy& p, const ContextDist& d);

/// R(x,a) = gamma * ln pi(a|x), centered so E_{a~mu(x)}[R(x,.)] = 0 per row.
/// Zero policy entries are rejected.
RewardTable centered_reward_table(const TabularPolicy& pi, const TabularPolicy& mu,
                                  double gamma);

/// Softmax policy with rows proportional to exp(values / gamma).
TabularPolicy induced_policy_from_reward(const RewardTable& reward);

}  // namespace preflearn
