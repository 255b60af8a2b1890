#include "preflearn/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace preflearn {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void validate_gd_config(const GdConfig& cfg) {
  require(std::isfinite(cfg.learning_rate) && cfg.learning_rate > 0.0,
          "GdConfig: learning_rate must be > 0");
  require(cfg.max_steps > 0, "GdConfig: max_steps must be > 0");
  require(std::isfinite(cfg.grad_tol) && cfg.grad_tol >= 0.0,
          "GdConfig: grad_tol must be >= 0");
  require(std::isfinite(cfg.divergence_cap) && cfg.divergence_cap > 0.0,
          "GdConfig: divergence_cap must be > 0");
}

double inf_norm(const Matrix& m) {
  double v = 0.0;
  for (double e : m.data) v = std::max(v, std::abs(e));
  return v;
}

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) {
  double m = std::max(z, 0.0);
  return m + std::log1p(std::exp(-std::abs(z)));
}

// Euclidean projection of row v onto {mean(r) = 0} intersected with
// [-bound, bound]^k: r_i = clip(v_i - lambda), lambda found by bisection
// (the clipped mean is nonincreasing in lambda, and r = 0 is feasible).
void project_row_centered_box(double* v, std::size_t k, double bound) {
  auto clipped_mean = [&](double lambda) {
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i)
      s += std::clamp(v[i] - lambda, -bound, bound);
    return s / static_cast<double>(k);
  };
  double lo = -bound, hi = bound;
  for (std::size_t i = 0; i < k; ++i) {
    lo = std::min(lo, v[i] - bound);
    hi = std::max(hi, v[i] + bound);
  }
  for (int it = 0; it < 100; ++it) {
    double mid = 0.5 * (lo + hi);
    if (clipped_mean(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  double lambda = 0.5 * (lo + hi);
  // Snap to the unclipped shift when the box is inactive so exact centering
  // (and exact boundary values when it is active) come out of the clamp.
  double mean = 0.0;
  for (std::size_t i = 0; i < k; ++i) mean += v[i];
  mean /= static_cast<double>(k);
  bool box_inactive = true;
  for (std::size_t i = 0; i < k; ++i)
    if (std::abs(v[i] - mean) > bound) box_inactive = false;
  if (box_inactive) lambda = mean;
  for (std::size_t i = 0; i < k; ++i) v[i] = std::clamp(v[i] - lambda, -bound, bound);
}

}  // namespace

GdResult gd_minimize(const PolicyLogits& start, const ObjectiveSpec& spec,
                     const GdConfig& cfg) {
  validate_gd_config(cfg);
  ObjectiveEvaluator eval(spec, start.values.rows, start.values.cols);

  PolicyLogits logits = start;
  double obj = eval.value(logits);
  if (!std::isfinite(obj) || obj > cfg.divergence_cap)
    throw SolverDivergenceError("gd_minimize: starting objective above divergence cap");

  GdResult result;
  result.trace.push_back(obj);
  double lr = cfg.learning_rate;

  for (std::size_t step = 0; step < cfg.max_steps; ++step) {
    Matrix grad = eval.gradient(logits);
    if (inf_norm(grad) <= cfg.grad_tol) {
      result.converged = true;
      break;
    }
    if (cfg.backtracking) {
      bool accepted = false;
      for (int half = 0; half < 60; ++half) {
        PolicyLogits cand = logits;
        for (std::size_t i = 0; i < cand.values.data.size(); ++i)
          cand.values.data[i] -= lr * grad.data[i];
        double cand_obj = eval.value(cand);
        if (std::isfinite(cand_obj) && cand_obj <= obj) {
          logits = std::move(cand);
          obj = cand_obj;
          lr = std::min(lr * 2.0, cfg.learning_rate);
          accepted = true;
          break;
        }
        lr *= 0.5;
      }
      if (!accepted) break;  // no descent direction at float resolution
    } else {
      for (std::size_t i = 0; i < logits.values.data.size(); ++i)
        logits.values.data[i] -= lr * grad.data[i];
      obj = eval.value(logits);
      if (!std::isfinite(obj) || obj > cfg.divergence_cap)
        throw SolverDivergenceError("gd_minimize: objective exceeded divergence cap");
    }
    result.trace.push_back(obj);
  }

  result.policy = softmax_policy(logits);
  result.logits = std::move(logits);
  return result;
}

TabularPolicy analytic_tilt_solution(const TabularPolicy& pi0, const RewardTable& reward,
                                     double beta, double gamma) {
  require(std::isfinite(beta) && beta >= 0.0, "analytic_tilt_solution: beta must be >= 0");
  require(std::isfinite(gamma) && gamma >= 0.0,
          "analytic_tilt_solution: gamma must be >= 0");
  require(beta + gamma > 0.0, "analytic_tilt_solution: beta + gamma must be > 0");
  require(pi0.num_contexts() == reward.values.rows &&
              pi0.num_actions() == reward.values.cols,
          "analytic_tilt_solution: shape mismatch");
  double temp = beta + gamma;
  double alpha = beta / temp;
  PolicyLogits logits{Matrix(pi0.num_contexts(), pi0.num_actions())};
  for (std::size_t x = 0; x < pi0.num_contexts(); ++x)
    for (std::size_t a = 0; a < pi0.num_actions(); ++a)
      logits.values(x, a) =
          alpha * std::log(pi0.prob(x, a)) + reward.values(x, a) / temp;
  return softmax_policy(logits);
}

RewardTable train_reward_model(const PreferenceDataset& ds, double gamma, double r_max,
                               const GdConfig& cfg) {
  validate_gd_config(cfg);
  require(!ds.triples.empty(), "train_reward_model: empty dataset");
  require(std::isfinite(gamma) && gamma >= 0.0, "train_reward_model: gamma must be >= 0");
  require(std::isfinite(r_max) && r_max > 0.0, "train_reward_model: r_max must be > 0");
  const std::size_t nx = ds.num_contexts, na = ds.num_actions;
  require(nx > 0 && na > 0, "train_reward_model: dataset missing shape");

  struct Cell {
    std::size_t x, a, b;
    double weight;
  };
  std::vector<double> counts(nx * na * na, 0.0);
  for (const PreferenceTriple& t : ds.triples) {
    require(t.context < nx && t.preferred < na && t.dispreferred < na,
            "train_reward_model: triple out of range");
    counts[(t.context * na + t.preferred) * na + t.dispreferred] += 1.0;
  }
  std::vector<Cell> cells;
  double n = static_cast<double>(ds.triples.size());
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t a = 0; a < na; ++a)
      for (std::size_t b = 0; b < na; ++b) {
        double c = counts[(x * na + a) * na + b];
        if (c > 0.0) cells.push_back({x, a, b, c / n});
      }

  const double bound = gamma * r_max;
  Matrix r(nx, na, 0.0);

  auto objective = [&](const Matrix& m) {
    double total = 0.0;
    for (const Cell& c : cells)
      total += c.weight * softplus(-(m(c.x, c.a) - m(c.x, c.b)));
    return total;
  };
  auto gradient = [&](const Matrix& m) {
    Matrix g(nx, na, 0.0);
    for (const Cell& c : cells) {
      double f = -c.weight * stable_sigmoid(-(m(c.x, c.a) - m(c.x, c.b)));
      g(c.x, c.a) += f;
      g(c.x, c.b) -= f;
    }
    return g;
  };
  auto project = [&](Matrix& m) {
    for (std::size_t x = 0; x < nx; ++x) project_row_centered_box(m.row(x), na, bound);
  };

  double obj = objective(r);
  double lr = cfg.learning_rate;
  for (std::size_t step = 0; step < cfg.max_steps; ++step) {
    Matrix grad = gradient(r);
    Matrix next = r;
    double used_lr = lr;
    if (cfg.backtracking) {
      bool accepted = false;
      for (int half = 0; half < 60; ++half) {
        next = r;
        for (std::size_t i = 0; i < next.data.size(); ++i)
          next.data[i] -= lr * grad.data[i];
        project(next);
        double next_obj = objective(next);
        if (std::isfinite(next_obj) && next_obj <= obj) {
          used_lr = lr;
          obj = next_obj;
          lr = std::min(lr * 2.0, cfg.learning_rate);
          accepted = true;
          break;
        }
        lr *= 0.5;
      }
      if (!accepted) break;
    } else {
      for (std::size_t i = 0; i < next.data.size(); ++i)
        next.data[i] -= lr * grad.data[i];
      project(next);
      obj = objective(next);
      if (!std::isfinite(obj) || obj > cfg.divergence_cap)
        throw SolverDivergenceError("train_reward_model: objective exceeded divergence cap");
    }
    double disp = 0.0;
    for (std::size_t i = 0; i < r.data.size(); ++i)
      disp = std::max(disp, std::abs(next.data[i] - r.data[i]));
    r = std::move(next);
    if (disp <= cfg.grad_tol * used_lr) break;
  }
  return RewardTable{std::move(r), gamma};
}

ArgminResult finite_class_argmin(const FinitePolicyClass& cls,
                                 const std::function<double(const TabularPolicy&)>& loss) {
  require(!cls.members.empty(), "finite_class_argmin: empty class");
  ArgminResult best;
  bool found = false;
  for (std::size_t i = 0; i < cls.members.size(); ++i) {
    double v = loss(cls.members[i]);
    if (!std::isfinite(v)) continue;  // non-finite members are excluded
    if (!found || v < best.loss) {
      best = ArgminResult{cls.members[i], i, v};
      found = true;
    }
  }
  if (!found)
    throw std::runtime_error("finite_class_argmin: every member evaluated non-finite");
  return best;
}

}  // namespace preflearn
