#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace preflearn {

/// Training method identifiers used across sweeps. RLHF is the RKL
/// objective with the entropy temperature forced to zero.
enum class Method { kPmle, kDpo, kDistill, kRebel, kRkl, kRlhf };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct TrialResult {
  Method method = Method::kPmle;
  std::size_t n = 0;
  double beta = 0.0;
  std::uint64_t seed = 0;
  double forward_kl = 0.0;
  double reverse_kl = 0.0;
  double train_objective = 0.0;
  double wall_time = 0.0;  // seconds; 0 unless timing was requested
};

}  // namespace preflearn
