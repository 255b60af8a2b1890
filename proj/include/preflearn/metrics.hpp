#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "preflearn/policy.hpp"
#include "preflearn/results.hpp"
#include "preflearn/solvers.hpp"

namespace preflearn {

/// Errors at or below this value are excluded from log-log fits (exact-hit
/// trials would otherwise dominate the regression with -inf logs).
inline constexpr double kRateNoiseFloor = 1e-12;

/// Smallest C such that for every class member pi,
///   E_{x~d, a~pi_star}[dR(x,a)^2] <= C * E_{x~d, a~mu}[dR(x,a)^2],
/// where dR is the centered-reward difference between pi and pi_star.
/// Cells with 0/0 count as 0; a nonzero/0 member makes the result +infinity.
double coverage_coefficient(const FinitePolicyClass& cls, const TabularPolicy& pi_star,
                            const TabularPolicy& mu, const ContextDist& d, double gamma);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t points_used = 0;
};

/// OLS of ln(err) on ln(n) over (n, err) pairs; pairs with err below the
/// noise floor are excluded. Needs at least two usable points.
RateFit fit_loglog_slope(std::span<const std::pair<double, double>> pairs);

struct TrialAggregate {
  Method method = Method::kPmle;
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
  std::size_t count = 0;
};

/// Groups trials by (method, n) and reduces forward_kl to mean, population
/// standard deviation, and count. Output sorted by (method, n).
std::vector<TrialAggregate> aggregate_trials(std::span<const TrialResult> trials);

}  // namespace preflearn
