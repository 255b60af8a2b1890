#include "preflearn/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace preflearn {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// Tracks satisfied-side margins: positive margin = inequality holds with
// room, negative = violated. Slack forgives float-level crossings.
struct MarginTally {
  std::size_t violations = 0;
  double worst = std::numeric_limits<double>::infinity();

  void add(double margin) {
    worst = std::min(worst, margin);
    if (margin < -kCheckSlack) ++violations;
  }
};

std::vector<double> log_spaced_grid(double lo, double hi, std::size_t size) {
  require(size >= 2, "grid needs at least two points");
  require(lo > 0.0 && hi > lo, "grid range must satisfy 0 < lo < hi");
  std::vector<double> grid(size);
  double llo = std::log(lo), lhi = std::log(hi);
  for (std::size_t i = 0; i < size; ++i) {
    double t = llo + (lhi - llo) * static_cast<double>(i) / static_cast<double>(size - 1);
    grid[i] = std::exp(t);
  }
  return grid;
}

}  // namespace

double psi_value(double r, bool extend_at_one) {
  require(std::isfinite(r) && r > 0.0, "psi_value: r must be positive");
  if (r == 1.0) {
    if (!extend_at_one) throw std::invalid_argument("psi_value: r = 1 needs the limit flag");
    return 0.5;
  }
  double t = std::log(r);
  if (std::abs(t) < 1e-3) {
    // (e^t - 1 - t) / t^2 by series; direct evaluation cancels near t = 0.
    return 0.5 + t / 6.0 + t * t / 24.0 + t * t * t / 120.0 + t * t * t * t / 720.0;
  }
  return (std::expm1(t) - t) / (t * t);
}

CheckReport check_sigmoid_gap(std::span<const std::pair<double, double>> pairs,
                              double constant) {
  require(!pairs.empty(), "check_sigmoid_gap: empty grid");
  MarginTally tally;
  for (const auto& [a, b] : pairs) {
    double lhs = std::abs(stable_sigmoid(a) - stable_sigmoid(b));
    double rhs = constant * std::exp(-std::max(std::abs(a), std::abs(b))) * std::abs(a - b);
    tally.add(lhs - rhs);
  }
  return CheckReport{"sigmoid_gap", pairs.size(), tally.violations, tally.worst};
}

CheckReport check_log_square_bounds(double r_min, double r_max, std::size_t grid_size) {
  require(r_min > 0.0 && r_min < 1.0 && r_max > 1.0,
          "check_log_square_bounds: need 0 < r_min < 1 < r_max");
  std::vector<double> grid = log_spaced_grid(r_min, r_max, grid_size);
  double upper_c = std::max(0.5, psi_value(r_max));
  double lower_c = 1.0 / (std::exp(1.0) * std::max(std::log(1.0 / r_min), 1.0));
  MarginTally tally;
  for (double r : grid) {
    double lhs = r - 1.0 - std::log(r);
    double lsq = std::log(r) * std::log(r);
    tally.add(upper_c * lsq - lhs);  // upper bound on r - 1 - ln r
    tally.add(lhs - lower_c * lsq);  // lower bound
  }
  return CheckReport{"log_square_bounds", grid.size(), tally.violations, tally.worst};
}

CheckReport check_kl_comparability(std::size_t instances, double r_bound,
                                   RandomStream& rng) {
  require(instances > 0, "check_kl_comparability: need instances");
  require(std::isfinite(r_bound) && r_bound > 0.0,
          "check_kl_comparability: r_bound must be > 0");
  const std::size_t nx = 10, na = 10;
  double cap = std::max(4.0 * r_bound, 1.0) *
               std::exp(8.0 * r_bound + 1.0) / (r_bound * r_bound);
  ContextDist d = ContextDist::uniform(nx);

  // Logits drawn uniformly in [-R/2, R/2] keep every centered log-mass
  // deviation within [-R, R], which is the boundedness assumption the
  // comparability constant is proved under.
  auto draw_policy = [&]() {
    PolicyLogits logits{Matrix(nx, na)};
    for (double& v : logits.values.data) v = (rng.uniform01() - 0.5) * r_bound;
    return softmax_policy(logits);
  };

  MarginTally tally;
  for (std::size_t i = 0; i < instances; ++i) {
    TabularPolicy p = draw_policy();
    TabularPolicy q = draw_policy();
    double pq = policy_forward_kl(p, q, d);
    double qp = policy_forward_kl(q, p, d);
    tally.add(cap * pq - qp);  // KL(q||p) <= C * KL(p||q)
    tally.add(cap * qp - pq);  // and symmetrically
  }
  return CheckReport{"kl_comparability", instances, tally.violations, tally.worst};
}

CheckReport check_psi_monotone(double r_min, double r_max, std::size_t grid_size) {
  std::vector<double> grid = log_spaced_grid(r_min, r_max, grid_size);
  MarginTally tally;
  double prev = psi_value(grid[0], true);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    double cur = psi_value(grid[i], true);
    tally.add(cur - prev);
    prev = cur;
  }
  return CheckReport{"psi_monotone", grid.size(), tally.violations, tally.worst};
}

PriorSmoothingSolutions prior_smoothing_solutions(const TabularPolicy& pi0,
                                                  const RewardTable& reward, double beta,
                                                  double gamma) {
  require(std::isfinite(beta) && beta >= 0.0, "prior_smoothing_solutions: beta must be >= 0");
  require(std::isfinite(gamma) && gamma >= 0.0,
          "prior_smoothing_solutions: gamma must be >= 0");
  require(beta + gamma > 0.0, "prior_smoothing_solutions: beta + gamma must be > 0");
  require(pi0.num_contexts() == reward.values.rows &&
              pi0.num_actions() == reward.values.cols,
          "prior_smoothing_solutions: shape mismatch");

  double temp = beta + gamma;
  double alpha = beta / temp;
  PolicyLogits rlhf{Matrix(pi0.num_contexts(), pi0.num_actions())};
  PolicyLogits rkl = rlhf;
  for (std::size_t x = 0; x < pi0.num_contexts(); ++x)
    for (std::size_t a = 0; a < pi0.num_actions(); ++a) {
      double lp0 = std::log(pi0.prob(x, a));
      double tilt = reward.values(x, a) / temp;
      rlhf.values(x, a) = lp0 + tilt;
      rkl.values(x, a) = alpha * lp0 + tilt;
    }
  return PriorSmoothingSolutions{softmax_policy(rlhf), softmax_policy(rkl), alpha};
}

}  // namespace preflearn
