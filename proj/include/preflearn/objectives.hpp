#pragma once

#include <optional>
#include <string>
#include <vector>

#include "preflearn/policy.hpp"
#include "preflearn/preference.hpp"

namespace preflearn {

enum class ObjectiveKind { kPmle, kDpo, kDistill, kRebel, kRkl };

std::string to_string(ObjectiveKind kind);

/// Everything needed to evaluate one training objective. Immutable once
/// built; evaluation is pure, so sharing across threads is fine.
struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::kPmle;
  double gamma = 0.0;
  double beta = 0.0;
  double eta = 1.0;
  std::optional<TabularPolicy> reference_policy;
  std::optional<RewardTable> reward;
  std::optional<PreferenceDataset> dataset;
  ContextDist context_dist = ContextDist::uniform(1);
  /// Weight contexts by their empirical frequency in the dataset instead of
  /// by context_dist (only meaningful for the expectation-style terms).
  bool weight_contexts_by_dataset = false;

  /// Throws std::invalid_argument when a kind-specific requirement is
  /// missing (dataset, reward, reference policy, positive eta, ...).
  void validate(std::size_t num_contexts, std::size_t num_actions) const;
};

/// Mean preference NLL under the tilted comparison model plus
/// beta * E_D[KL(pi || reference)].
double pmle_objective(const TabularPolicy& pi, const ObjectiveSpec& spec);

/// Mean NLL of reference-adjusted margins; no explicit regularizer.
double dpo_loss(const TabularPolicy& pi, const ObjectiveSpec& spec);

/// Mean NLL of reward margins sigmoid(R(x,a+) - R(x,a-)) on the dataset.
double reward_nll(const RewardTable& reward, const PreferenceDataset& ds);

/// Mean Bernoulli KL between reward-implied pair probabilities and the
/// policy's pair probabilities, plus beta * E_D[KL(pi || reference)].
double distill_objective(const TabularPolicy& pi, const ObjectiveSpec& spec);

/// Mean squared residual between reference-adjusted log-ratio margins and
/// eta-scaled reward margins.
double rebel_loss(const TabularPolicy& pi, const ObjectiveSpec& spec);

/// E_D[-E_{a~pi}[R(x,a)] - gamma H(pi(x)) + beta KL(pi(x) || reference(x))].
double rkl_objective(const TabularPolicy& pi, const ObjectiveSpec& spec);

/// Dispatch on spec.kind.
double evaluate_objective(const TabularPolicy& pi, const ObjectiveSpec& spec);

/// Analytic gradient of the objective with respect to policy logits
/// (through the row softmax). Rows sum to zero.
Matrix objective_gradient(const PolicyLogits& logits, const ObjectiveSpec& spec);

/// Evaluation workhorse: pre-aggregates the dataset into per-(x,a+,a-) cell
/// counts once so repeated evaluations (solvers, finite-class scans) cost
/// O(cells) instead of O(n).
class ObjectiveEvaluator {
 public:
  explicit ObjectiveEvaluator(const ObjectiveSpec& spec, std::size_t num_contexts,
                              std::size_t num_actions);

  double value(const TabularPolicy& pi) const;
  double value(const PolicyLogits& logits) const;
  Matrix gradient(const PolicyLogits& logits) const;

  std::size_t num_contexts() const { return nx_; }
  std::size_t num_actions() const { return na_; }

 private:
  struct Cell {
    std::size_t x, a, b;
    double weight;       // count / n
    double ref_margin;   // ln ref(a|x) - ln ref(b|x) when a reference is set
    double reward_margin;  // R(x,a) - R(x,b) when a reward is set
  };

  double value_impl(const Matrix& log_probs) const;
  double context_weight(std::size_t x) const;

  const ObjectiveSpec& spec_;
  std::size_t nx_, na_;
  std::vector<Cell> cells_;
  std::vector<double> dataset_context_freq_;
  Matrix log_reference_;
};

}  // namespace preflearn
