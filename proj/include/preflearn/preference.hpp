#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "preflearn/policy.hpp"

namespace preflearn {

/// One labeled comparison: preferred beats dispreferred in context x.
struct PreferenceTriple {
  std::size_t context = 0;
  std::size_t preferred = 0;
  std::size_t dispreferred = 0;

  friend bool operator==(const PreferenceTriple& a, const PreferenceTriple& b) {
    return a.context == b.context && a.preferred == b.preferred &&
           a.dispreferred == b.dispreferred;
  }
};

struct PreferenceDataset {
  std::vector<PreferenceTriple> triples;
  double gamma_used = 0.0;
  std::uint64_t generator_seed = 0;
  std::size_t num_contexts = 0;
  std::size_t num_actions = 0;

  std::size_t size() const { return triples.size(); }
};

/// P(a beats b | x) under the tilted comparison model:
/// sigmoid(gamma * (ln pi(a|x) - ln pi(b|x))). Zero probabilities rejected.
double bt_prob(const TabularPolicy& pi, double gamma, std::size_t x, std::size_t a,
               std::size_t b);

/// Draws n triples: x ~ d, then a,b ~ mu(x) i.i.d., then the pair is labeled
/// by one uniform variate compared against bt_prob(pi_star, gamma, x, a, b).
/// Ties (a == b) are kept and labeled uniformly.
PreferenceDataset sample_dataset(const ContextDist& d, const TabularPolicy& mu,
                                 const TabularPolicy& pi_star, double gamma,
                                 std::size_t n, std::uint64_t seed);

/// Writes "x,a_plus,a_minus" rows to csv_path and a JSON sidecar with
/// {gamma, seed, n, num_contexts, num_actions} next to it.
void save_dataset(const PreferenceDataset& ds, const std::filesystem::path& csv_path);

/// Reads a dataset written by save_dataset (expects the sidecar too).
PreferenceDataset load_dataset(const std::filesystem::path& csv_path);

/// Sidecar path convention: csv_path with extension replaced by ".json".
std::filesystem::path dataset_sidecar_path(const std::filesystem::path& csv_path);

}  // namespace preflearn
