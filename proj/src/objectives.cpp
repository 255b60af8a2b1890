#include "preflearn/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace preflearn {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// ln(1 + exp(z)) without overflow; softplus(-m) = -ln sigmoid(m).
double softplus(double z) {
  double m = std::max(z, 0.0);
  return m + std::log1p(std::exp(-std::abs(z)));
}

Matrix log_probs_of(const TabularPolicy& pi) {
  Matrix lp(pi.num_contexts(), pi.num_actions());
  for (std::size_t i = 0; i < lp.data.size(); ++i)
    lp.data[i] = std::log(pi.probs().data[i]);
  return lp;
}

Matrix log_probs_of(const PolicyLogits& logits) {
  const Matrix& v = logits.values;
  Matrix lp = v;
  for (std::size_t x = 0; x < v.rows; ++x) {
    const double* row = v.row(x);
    double m = *std::max_element(row, row + v.cols);
    double s = 0.0;
    for (std::size_t a = 0; a < v.cols; ++a) s += std::exp(row[a] - m);
    double lse = m + std::log(s);
    for (std::size_t a = 0; a < v.cols; ++a) lp(x, a) = row[a] - lse;
  }
  return lp;
}

}  // namespace

std::string to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::kPmle: return "PMLE";
    case ObjectiveKind::kDpo: return "DPO";
    case ObjectiveKind::kDistill: return "DISTILL";
    case ObjectiveKind::kRebel: return "REBEL";
    case ObjectiveKind::kRkl: return "RKL";
  }
  return "?";
}

void ObjectiveSpec::validate(std::size_t num_contexts, std::size_t num_actions) const {
  require(std::isfinite(gamma) && gamma >= 0.0, "ObjectiveSpec: gamma must be >= 0");
  require(std::isfinite(beta) && beta >= 0.0, "ObjectiveSpec: beta must be >= 0");
  require(context_dist.size() == num_contexts, "ObjectiveSpec: context_dist size mismatch");

  bool needs_dataset = kind == ObjectiveKind::kPmle || kind == ObjectiveKind::kDpo ||
                       kind == ObjectiveKind::kDistill || kind == ObjectiveKind::kRebel;
  if (needs_dataset) {
    require(dataset.has_value() && !dataset->triples.empty(),
            to_string(kind) + ": nonempty dataset required");
  }
  if (dataset.has_value() && !dataset->triples.empty()) {
    require(dataset->num_contexts == num_contexts && dataset->num_actions == num_actions,
            "ObjectiveSpec: dataset shape mismatch");
  }
  if (weight_contexts_by_dataset)
    require(dataset.has_value() && !dataset->triples.empty(),
            "ObjectiveSpec: dataset weighting needs a dataset");

  bool needs_reward = kind == ObjectiveKind::kDistill || kind == ObjectiveKind::kRebel ||
                      kind == ObjectiveKind::kRkl;
  if (needs_reward) {
    require(reward.has_value(), to_string(kind) + ": reward table required");
    require(reward->values.rows == num_contexts && reward->values.cols == num_actions,
            "ObjectiveSpec: reward shape mismatch");
  }

  bool needs_reference = kind == ObjectiveKind::kDpo || kind == ObjectiveKind::kRebel ||
                         beta > 0.0;
  if (needs_reference) {
    require(reference_policy.has_value(),
            to_string(kind) + ": reference policy required");
    require(reference_policy->num_contexts() == num_contexts &&
                reference_policy->num_actions() == num_actions,
            "ObjectiveSpec: reference policy shape mismatch");
  }
  if (kind == ObjectiveKind::kRebel)
    require(std::isfinite(eta) && eta > 0.0, "REBEL: eta must be > 0");
}

ObjectiveEvaluator::ObjectiveEvaluator(const ObjectiveSpec& spec, std::size_t num_contexts,
                                       std::size_t num_actions)
    : spec_(spec), nx_(num_contexts), na_(num_actions) {
  spec_.validate(nx_, na_);

  if (spec_.reference_policy.has_value())
    log_reference_ = log_probs_of(*spec_.reference_policy);

  if (spec_.dataset.has_value() && !spec_.dataset->triples.empty()) {
    const PreferenceDataset& ds = *spec_.dataset;
    std::vector<double> counts(nx_ * na_ * na_, 0.0);
    dataset_context_freq_.assign(nx_, 0.0);
    for (const PreferenceTriple& t : ds.triples) {
      counts[(t.context * na_ + t.preferred) * na_ + t.dispreferred] += 1.0;
      dataset_context_freq_[t.context] += 1.0;
    }
    double n = static_cast<double>(ds.triples.size());
    for (double& f : dataset_context_freq_) f /= n;
    for (std::size_t x = 0; x < nx_; ++x)
      for (std::size_t a = 0; a < na_; ++a)
        for (std::size_t b = 0; b < na_; ++b) {
          double c = counts[(x * na_ + a) * na_ + b];
          if (c == 0.0) continue;
          Cell cell{x, a, b, c / n, 0.0, 0.0};
          if (spec_.reference_policy.has_value())
            cell.ref_margin = log_reference_(x, a) - log_reference_(x, b);
          if (spec_.reward.has_value())
            cell.reward_margin = spec_.reward->values(x, a) - spec_.reward->values(x, b);
          cells_.push_back(cell);
        }
  }
}

double ObjectiveEvaluator::context_weight(std::size_t x) const {
  if (spec_.weight_contexts_by_dataset) return dataset_context_freq_[x];
  return spec_.context_dist.weight(x);
}

double ObjectiveEvaluator::value(const TabularPolicy& pi) const {
  require(pi.num_contexts() == nx_ && pi.num_actions() == na_,
          "ObjectiveEvaluator: policy shape mismatch");
  return value_impl(log_probs_of(pi));
}

double ObjectiveEvaluator::value(const PolicyLogits& logits) const {
  require(logits.values.rows == nx_ && logits.values.cols == na_,
          "ObjectiveEvaluator: logits shape mismatch");
  return value_impl(log_probs_of(logits));
}

double ObjectiveEvaluator::value_impl(const Matrix& lp) const {
  double total = 0.0;
  switch (spec_.kind) {
    case ObjectiveKind::kPmle:
      for (const Cell& c : cells_)
        total += c.weight * softplus(-spec_.gamma * (lp(c.x, c.a) - lp(c.x, c.b)));
      break;
    case ObjectiveKind::kDpo:
      for (const Cell& c : cells_)
        total += c.weight *
                 softplus(-spec_.gamma * (lp(c.x, c.a) - lp(c.x, c.b) - c.ref_margin));
      break;
    case ObjectiveKind::kDistill:
      for (const Cell& c : cells_) {
        double p_tilde = stable_sigmoid(c.reward_margin);
        double ln_pt = -softplus(-c.reward_margin);
        double ln_1mpt = -softplus(c.reward_margin);
        double m = spec_.gamma * (lp(c.x, c.a) - lp(c.x, c.b));
        double ln_p = -softplus(-m);
        double ln_1mp = -softplus(m);
        total += c.weight *
                 (p_tilde * (ln_pt - ln_p) + (1.0 - p_tilde) * (ln_1mpt - ln_1mp));
      }
      break;
    case ObjectiveKind::kRebel:
      for (const Cell& c : cells_) {
        double rho = (lp(c.x, c.a) - lp(c.x, c.b)) - c.ref_margin -
                     spec_.eta * c.reward_margin;
        total += c.weight * rho * rho;
      }
      break;
    case ObjectiveKind::kRkl:
      for (std::size_t x = 0; x < nx_; ++x) {
        double w = context_weight(x);
        if (w == 0.0) continue;
        double row = 0.0;
        for (std::size_t a = 0; a < na_; ++a) {
          double p = std::exp(lp(x, a));
          row -= p * spec_.reward->values(x, a);   // -E_pi[R]
          row += spec_.gamma * p * lp(x, a);       // -gamma H
        }
        total += w * row;
      }
      break;
  }

  // KL(pi || reference) regularizer for the kinds that carry one.
  if (spec_.beta > 0.0 &&
      (spec_.kind == ObjectiveKind::kPmle || spec_.kind == ObjectiveKind::kDistill ||
       spec_.kind == ObjectiveKind::kRkl)) {
    double reg = 0.0;
    for (std::size_t x = 0; x < nx_; ++x) {
      double w = context_weight(x);
      if (w == 0.0) continue;
      double row = 0.0;
      for (std::size_t a = 0; a < na_; ++a) {
        double p = std::exp(lp(x, a));
        row += p * (lp(x, a) - log_reference_(x, a));
      }
      reg += w * row;
    }
    total += spec_.beta * reg;
  }
  return total;
}

Matrix ObjectiveEvaluator::gradient(const PolicyLogits& logits) const {
  require(logits.values.rows == nx_ && logits.values.cols == na_,
          "ObjectiveEvaluator: logits shape mismatch");
  Matrix lp = log_probs_of(logits);
  Matrix grad(nx_, na_, 0.0);

  // Pairwise losses depend on logits only through per-row differences, so
  // each cell contributes factor * (e_a - e_b).
  switch (spec_.kind) {
    case ObjectiveKind::kPmle:
      for (const Cell& c : cells_) {
        double m = spec_.gamma * (lp(c.x, c.a) - lp(c.x, c.b));
        double f = -c.weight * spec_.gamma * stable_sigmoid(-m);
        grad(c.x, c.a) += f;
        grad(c.x, c.b) -= f;
      }
      break;
    case ObjectiveKind::kDpo:
      for (const Cell& c : cells_) {
        double m = spec_.gamma * (lp(c.x, c.a) - lp(c.x, c.b) - c.ref_margin);
        double f = -c.weight * spec_.gamma * stable_sigmoid(-m);
        grad(c.x, c.a) += f;
        grad(c.x, c.b) -= f;
      }
      break;
    case ObjectiveKind::kDistill:
      for (const Cell& c : cells_) {
        double p_tilde = stable_sigmoid(c.reward_margin);
        double m = spec_.gamma * (lp(c.x, c.a) - lp(c.x, c.b));
        double f = c.weight * spec_.gamma * (stable_sigmoid(m) - p_tilde);
        grad(c.x, c.a) += f;
        grad(c.x, c.b) -= f;
      }
      break;
    case ObjectiveKind::kRebel:
      for (const Cell& c : cells_) {
        double rho = (lp(c.x, c.a) - lp(c.x, c.b)) - c.ref_margin -
                     spec_.eta * c.reward_margin;
        double f = 2.0 * c.weight * rho;
        grad(c.x, c.a) += f;
        grad(c.x, c.b) -= f;
      }
      break;
    case ObjectiveKind::kRkl:
      for (std::size_t x = 0; x < nx_; ++x) {
        double w = context_weight(x);
        if (w == 0.0) continue;
        double mean_r = 0.0, neg_entropy = 0.0;
        for (std::size_t a = 0; a < na_; ++a) {
          double p = std::exp(lp(x, a));
          mean_r += p * spec_.reward->values(x, a);
          neg_entropy += p * lp(x, a);
        }
        for (std::size_t a = 0; a < na_; ++a) {
          double p = std::exp(lp(x, a));
          grad(x, a) += w * p *
                        (-(spec_.reward->values(x, a) - mean_r) +
                         spec_.gamma * (lp(x, a) - neg_entropy));
        }
      }
      break;
  }

  if (spec_.beta > 0.0 &&
      (spec_.kind == ObjectiveKind::kPmle || spec_.kind == ObjectiveKind::kDistill ||
       spec_.kind == ObjectiveKind::kRkl)) {
    for (std::size_t x = 0; x < nx_; ++x) {
      double w = context_weight(x);
      if (w == 0.0) continue;
      double kl = 0.0;
      for (std::size_t a = 0; a < na_; ++a)
        kl += std::exp(lp(x, a)) * (lp(x, a) - log_reference_(x, a));
      for (std::size_t a = 0; a < na_; ++a) {
        double p = std::exp(lp(x, a));
        grad(x, a) += spec_.beta * w * p * ((lp(x, a) - log_reference_(x, a)) - kl);
      }
    }
  }
  return grad;
}

namespace {

double evaluate_as(ObjectiveKind kind, const TabularPolicy& pi, const ObjectiveSpec& spec) {
  require(spec.kind == kind, std::string("objective called with spec.kind = ") +
                                 to_string(spec.kind) + ", expected " + to_string(kind));
  ObjectiveEvaluator eval(spec, pi.num_contexts(), pi.num_actions());
  return eval.value(pi);
}

}  // namespace

double pmle_objective(const TabularPolicy& pi, const ObjectiveSpec& spec) {
  return evaluate_as(ObjectiveKind::kPmle, pi, spec);
}

double dpo_loss(const TabularPolicy& pi, const ObjectiveSpec& spec) {
  return evaluate_as(ObjectiveKind::kDpo, pi, spec);
}

double distill_objective(const TabularPolicy& pi, const ObjectiveSpec& spec) {
  return evaluate_as(ObjectiveKind::kDistill, pi, spec);
}

double rebel_loss(const TabularPolicy& pi, const ObjectiveSpec& spec) {
  return evaluate_as(ObjectiveKind::kRebel, pi, spec);
}

double rkl_objective(const TabularPolicy& pi, const ObjectiveSpec& spec) {
  return evaluate_as(ObjectiveKind::kRkl, pi, spec);
}

double evaluate_objective(const TabularPolicy& pi, const ObjectiveSpec& spec) {
  ObjectiveEvaluator eval(spec, pi.num_contexts(), pi.num_actions());
  return eval.value(pi);
}

double reward_nll(const RewardTable& reward, const PreferenceDataset& ds) {
  if (ds.triples.empty()) throw std::invalid_argument("reward_nll: empty dataset");
  if (reward.values.rows != ds.num_contexts || reward.values.cols != ds.num_actions)
    throw std::invalid_argument("reward_nll: reward shape mismatch");
  double total = 0.0;
  for (const PreferenceTriple& t : ds.triples)
    total += softplus(-(reward.values(t.context, t.preferred) -
                        reward.values(t.context, t.dispreferred)));
  return total / static_cast<double>(ds.triples.size());
}

Matrix objective_gradient(const PolicyLogits& logits, const ObjectiveSpec& spec) {
  ObjectiveEvaluator eval(spec, logits.values.rows, logits.values.cols);
  return eval.gradient(logits);
}

}  // namespace preflearn
