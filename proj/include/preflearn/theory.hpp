#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>

#include "preflearn/policy.hpp"
#include "preflearn/random.hpp"

namespace preflearn {

/// Absolute slack applied on the favorable side of every inequality check.
inline constexpr double kCheckSlack = 1e-12;

struct CheckReport {
  std::string name;
  std::size_t instances_tested = 0;
  std::size_t violations = 0;
  /// Smallest (lhs - rhs) margin seen, signed so negative means violated.
  double worst_margin = 0.0;
};

/// psi(r) = (r - 1 - ln r) / (ln r)^2, the tight constant in the
/// log-square upper bound. r must be positive and != 1 unless
/// extend_at_one is set, in which case psi(1) = 1/2 (the limit).
double psi_value(double r, bool extend_at_one = false);

/// Verifies |sigmoid(a) - sigmoid(b)| >= c * exp(-max(|a|,|b|)) * |a - b|
/// over the given pairs. The constant c defaults to the proven 1/4; tests
/// override it to confirm the check can fail.
CheckReport check_sigmoid_gap(std::span<const std::pair<double, double>> pairs,
                              double constant = 0.25);

/// Verifies, on a log-spaced grid over [r_min, r_max] with 0 < r_min < 1 < r_max:
///   upper: r - 1 - ln r <= max(1/2, psi(r_max)) * (ln r)^2
///   lower: r - 1 - ln r >= (ln r)^2 / (e * max(ln(1/r_min), 1))
CheckReport check_log_square_bounds(double r_min, double r_max, std::size_t grid_size);

/// Draws `instances` random 10x10 policy pairs whose centered log-mass
/// spread is bounded by r_bound, and verifies
///   E_x[KL(q || p)] <= C * E_x[KL(p || q)]
/// with C = max(4R, 1) * exp(8R + 1) / R^2 at R = r_bound.
CheckReport check_kl_comparability(std::size_t instances, double r_bound,
                                   RandomStream& rng);

/// Verifies psi_value is nondecreasing on a log-spaced grid over
/// [r_min, r_max] (continuous extension used at r = 1).
CheckReport check_psi_monotone(double r_min, double r_max, std::size_t grid_size);

struct PriorSmoothingSolutions {
  TabularPolicy rlhf_policy;  // rows ~ pi0 * exp(r / (beta + gamma))
  TabularPolicy rkl_policy;   // rows ~ pi0^alpha * exp(r / (beta + gamma))
  double alpha = 0.0;         // beta / (beta + gamma)
};

/// Closed-form minimizers of the soft objective at matched temperature
/// beta + gamma, with and without the prior exponent damping. gamma = 0
/// makes the two identical.
PriorSmoothingSolutions prior_smoothing_solutions(const TabularPolicy& pi0,
                                                  const RewardTable& reward, double beta,
                                                  double gamma);

}  // namespace preflearn
