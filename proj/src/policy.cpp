#include "preflearn/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace preflearn {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

double log_sum_exp(const double* row, std::size_t n) {
  double m = *std::max_element(row, row + n);
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += std::exp(row[j] - m);
  return m + std::log(s);
}

}  // namespace

ContextDist ContextDist::uniform(std::size_t num_contexts) {
  require(num_contexts > 0, "ContextDist: need at least one context");
  return ContextDist(std::vector<double>(num_contexts, 1.0 / static_cast<double>(num_contexts)));
}

ContextDist ContextDist::from_weights(std::vector<double> weights) {
  require(!weights.empty(), "ContextDist: need at least one context");
  double total = 0.0;
  for (double w : weights) {
    require(std::isfinite(w) && w >= 0.0, "ContextDist: weights must be finite and nonnegative");
    total += w;
  }
  require(std::abs(total - 1.0) <= 1e-12, "ContextDist: weights must sum to 1");
  return ContextDist(std::move(weights));
}

TabularPolicy TabularPolicy::from_probs(Matrix probs, bool apply_floor) {
  require(probs.rows > 0 && probs.cols > 0, "TabularPolicy: empty shape");
  for (std::size_t x = 0; x < probs.rows; ++x) {
    double* row = probs.row(x);
    double raw_total = 0.0;
    for (std::size_t a = 0; a < probs.cols; ++a) {
      require(std::isfinite(row[a]) && row[a] >= 0.0,
              "TabularPolicy: entries must be finite and nonnegative");
      raw_total += row[a];
    }
    require(raw_total > 0.0, "TabularPolicy: row has no mass");
    if (!apply_floor) {
      require(std::abs(raw_total - 1.0) <= 1e-12, "TabularPolicy: row must sum to 1");
      continue;
    }
    double total = 0.0;
    for (std::size_t a = 0; a < probs.cols; ++a) {
      if (row[a] < kProbFloor) row[a] = kProbFloor;
      total += row[a];
    }
    for (std::size_t a = 0; a < probs.cols; ++a) row[a] /= total;
    // Renormalization can push floored entries back under the floor; lift
    // them and take the mass from the largest entry so the sum is kept.
    double added = 0.0;
    std::size_t largest = 0;
    for (std::size_t a = 0; a < probs.cols; ++a) {
      if (row[a] > row[largest]) largest = a;
      if (row[a] < kProbFloor) {
        added += kProbFloor - row[a];
        row[a] = kProbFloor;
      }
    }
    row[largest] -= added;
  }
  return TabularPolicy(std::move(probs));
}

TabularPolicy TabularPolicy::uniform(std::size_t num_contexts, std::size_t num_actions) {
  require(num_contexts > 0 && num_actions > 0, "TabularPolicy: empty shape");
  return TabularPolicy(Matrix(num_contexts, num_actions, 1.0 / static_cast<double>(num_actions)));
}

TabularPolicy softmax_policy(const PolicyLogits& logits) {
  const Matrix& v = logits.values;
  require(v.rows > 0 && v.cols > 0, "softmax_policy: empty shape");
  Matrix probs(v.rows, v.cols);
  for (std::size_t x = 0; x < v.rows; ++x) {
    for (std::size_t a = 0; a < v.cols; ++a)
      require(std::isfinite(v(x, a)), "softmax_policy: logits must be finite");
    double lse = log_sum_exp(v.row(x), v.cols);
    for (std::size_t a = 0; a < v.cols; ++a) probs(x, a) = std::exp(v(x, a) - lse);
  }
  return TabularPolicy::from_probs(std::move(probs));
}

TabularPolicy random_softmax_policy(std::size_t num_contexts, std::size_t num_actions,
                                    double logit_std, RandomStream& rng) {
  require(num_contexts > 0 && num_actions > 0, "random_softmax_policy: empty shape");
  require(std::isfinite(logit_std) && logit_std >= 0.0,
          "random_softmax_policy: logit_std must be nonnegative");
  PolicyLogits logits{Matrix(num_contexts, num_actions)};
  for (double& v : logits.values.data) v = logit_std * rng.gaussian();
  return softmax_policy(logits);
}

double policy_forward_kl(const TabularPolicy& p, const TabularPolicy& q,
                         const ContextDist& d) {
  require(p.probs().same_shape(q.probs()), "policy_forward_kl: shape mismatch");
  require(d.size() == p.num_contexts(), "policy_forward_kl: context dist mismatch");
  double total = 0.0;
  for (std::size_t x = 0; x < p.num_contexts(); ++x) {
    double row = 0.0;
    for (std::size_t a = 0; a < p.num_actions(); ++a) {
      double pa = p.prob(x, a);
      if (pa == 0.0) continue;
      double qa = q.prob(x, a);
      if (qa == 0.0) return std::numeric_limits<double>::infinity();
      row += pa * std::log(pa / qa);
    }
    // Cancellation between positive and negative terms can leave a tiny
    // negative sum for near-identical rows; KL is nonnegative.
    total += d.weight(x) * std::max(row, 0.0);
  }
  return total;
}

double policy_entropy(const TabularPolicy& p, const ContextDist& d) {
  require(d.size() == p.num_contexts(), "policy_entropy: context dist mismatch");
  double total = 0.0;
  for (std::size_t x = 0; x < p.num_contexts(); ++x) {
    double row = 0.0;
    for (std::size_t a = 0; a < p.num_actions(); ++a) {
      double pa = p.prob(x, a);
      if (pa > 0.0) row -= pa * std::log(pa);
    }
    total += d.weight(x) * row;
  }
  return total;
}

RewardTable centered_reward_table(const TabularPolicy& pi, const TabularPolicy& mu,
                                  double gamma) {
  require(pi.probs().same_shape(mu.probs()), "centered_reward_table: shape mismatch");
  require(std::isfinite(gamma), "centered_reward_table: gamma must be finite");
  Matrix values(pi.num_contexts(), pi.num_actions());
  for (std::size_t x = 0; x < pi.num_contexts(); ++x) {
    double mean = 0.0;
    for (std::size_t a = 0; a < pi.num_actions(); ++a) {
      require(pi.prob(x, a) > 0.0, "centered_reward_table: zero policy entry");
      values(x, a) = gamma * std::log(pi.prob(x, a));
      mean += mu.prob(x, a) * values(x, a);
    }
    for (std::size_t a = 0; a < pi.num_actions(); ++a) values(x, a) -= mean;
  }
  return RewardTable{std::move(values), gamma};
}

TabularPolicy induced_policy_from_reward(const RewardTable& reward) {
  require(reward.gamma > 0.0, "induced_policy_from_reward: gamma must be positive");
  PolicyLogits logits{Matrix(reward.values.rows, reward.values.cols)};
  for (std::size_t i = 0; i < reward.values.data.size(); ++i)
    logits.values.data[i] = reward.values.data[i] / reward.gamma;
  return softmax_policy(logits);
}

}  // namespace preflearn
