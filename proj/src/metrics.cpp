#include "preflearn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace preflearn {

std::string to_string(Method m) {
  switch (m) {
    case Method::kPmle: return "PMLE";
    case Method::kDpo: return "DPO";
    case Method::kDistill: return "DISTILL";
    case Method::kRebel: return "REBEL";
    case Method::kRkl: return "RKL";
    case Method::kRlhf: return "RLHF";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "PMLE") return Method::kPmle;
  if (s == "DPO") return Method::kDpo;
  if (s == "DISTILL") return Method::kDistill;
  if (s == "REBEL") return Method::kRebel;
  if (s == "RKL") return Method::kRkl;
  if (s == "RLHF") return Method::kRlhf;
  throw std::invalid_argument("unknown method '" + s + "'");
}

double coverage_coefficient(const FinitePolicyClass& cls, const TabularPolicy& pi_star,
                            const TabularPolicy& mu, const ContextDist& d, double gamma) {
  if (!pi_star.probs().same_shape(mu.probs()))
    throw std::invalid_argument("coverage_coefficient: pi_star / mu shape mismatch");
  if (d.size() != pi_star.num_contexts())
    throw std::invalid_argument("coverage_coefficient: context dist mismatch");

  RewardTable star = centered_reward_table(pi_star, mu, gamma);
  double worst = 0.0;
  for (const TabularPolicy& pi : cls.members) {
    if (!pi.probs().same_shape(pi_star.probs()))
      throw std::invalid_argument("coverage_coefficient: member shape mismatch");
    RewardTable member = centered_reward_table(pi, mu, gamma);
    double num = 0.0, den = 0.0;
    for (std::size_t x = 0; x < pi_star.num_contexts(); ++x) {
      for (std::size_t a = 0; a < pi_star.num_actions(); ++a) {
        double diff = member.values(x, a) - star.values(x, a);
        double sq = diff * diff;
        num += d.weight(x) * pi_star.prob(x, a) * sq;
        den += d.weight(x) * mu.prob(x, a) * sq;
      }
    }
    double ratio;
    if (num == 0.0)
      ratio = 0.0;  // includes the 0/0 convention
    else if (den == 0.0)
      ratio = std::numeric_limits<double>::infinity();
    else
      ratio = num / den;
    worst = std::max(worst, ratio);
  }
  return worst;
}

RateFit fit_loglog_slope(std::span<const std::pair<double, double>> pairs) {
  std::vector<std::pair<double, double>> pts;  // (ln n, ln err)
  for (const auto& [n, err] : pairs) {
    if (!(n > 0.0)) throw std::invalid_argument("fit_loglog_slope: n must be positive");
    if (err <= kRateNoiseFloor) continue;
    pts.emplace_back(std::log(n), std::log(err));
  }
  if (pts.size() < 2)
    throw std::invalid_argument("fit_loglog_slope: need at least two points above the noise floor");

  double xbar = 0.0, ybar = 0.0;
  for (const auto& [x, y] : pts) {
    xbar += x;
    ybar += y;
  }
  xbar /= static_cast<double>(pts.size());
  ybar /= static_cast<double>(pts.size());

  double sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : pts) {
    sxx += (x - xbar) * (x - xbar);
    sxy += (x - xbar) * (y - ybar);
  }
  if (sxx <= 0.0)
    throw std::invalid_argument("fit_loglog_slope: need at least two distinct n values");

  RateFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = ybar - fit.slope * xbar;
  fit.points_used = pts.size();

  double ss_res = 0.0, ss_tot = 0.0;
  for (const auto& [x, y] : pts) {
    double resid = y - (fit.intercept + fit.slope * x);
    ss_res += resid * resid;
    ss_tot += (y - ybar) * (y - ybar);
  }
  fit.r_squared = ss_tot > 0.0 ? std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0) : 1.0;
  return fit;
}

std::vector<TrialAggregate> aggregate_trials(std::span<const TrialResult> trials) {
  std::map<std::pair<int, std::size_t>, std::vector<double>> groups;
  for (const TrialResult& t : trials)
    groups[{static_cast<int>(t.method), t.n}].push_back(t.forward_kl);

  std::vector<TrialAggregate> out;
  out.reserve(groups.size());
  for (const auto& [key, values] : groups) {
    TrialAggregate agg;
    agg.method = static_cast<Method>(key.first);
    agg.n = key.second;
    agg.count = values.size();
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());  // population variance
    agg.mean = mean;
    agg.stddev = std::sqrt(var);
    out.push_back(agg);
  }
  return out;
}

}  // namespace preflearn
