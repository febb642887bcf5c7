#ifndef MATCHQ_FULLINFO_HPP
#define MATCHQ_FULLINFO_HPP

// Full-information platform: the state is the agent count per type and the
// platform picks, per (state, job type), which type to assign or to reject.

#include "matchq/ctmc.hpp"
#include "matchq/model.hpp"

#include <cstdint>
#include <vector>

namespace matchq {

constexpr int kReject = -1;

class FullInfoSpace {
public:
  FullInfoSpace(const MarketParams& params, const Truncation& trunc);

  const MarketParams& params() const { return params_; }
  const Truncation& truncation() const { return trunc_; }
  std::size_t num_states() const { return states_.size(); }
  const std::vector<int>& state(std::size_t s) const { return states_[s]; }
  std::size_t index_of(const std::vector<int>& a) const;

  /// Admissible actions for (state, job): kReject plus every compatible type
  /// with a waiting agent.
  std::vector<int> actions(std::size_t s, int job_type) const;

private:
  MarketParams params_;
  Truncation trunc_;
  std::vector<std::vector<int>> states_;
  std::vector<int> radix_;
  std::vector<std::size_t> lookup_;
};

/// Randomized stationary policy nu[s * num_types + j][action + 1].
using FullInfoPolicy = std::vector<std::vector<double>>;
/// Deterministic stationary policy: one action per (state, job).
using DeterministicPolicy = std::vector<int>;

FullInfoPolicy randomize(const FullInfoSpace& space, const DeterministicPolicy& policy);
/// ACR or NCR rule restricted to the space, from full_info_policy_table's definitions.
FullInfoPolicy full_info_rule(const FullInfoSpace& space, FullInfoKind kind);

double full_info_throughput(const FullInfoSpace& space, const FullInfoPolicy& nu);
double full_info_throughput(const FullInfoSpace& space, const DeterministicPolicy& policy);

/// Number of deterministic admissible policies (saturates at UINT64_MAX).
std::uint64_t count_deterministic_policies(const FullInfoSpace& space);

struct EnumerationResult {
  std::uint64_t policies = 0;
  double best = 0.0;
  DeterministicPolicy argbest;
};

/// Evaluates every deterministic admissible policy. Throws CapacityError when
/// the count exceeds `budget`.
EnumerationResult enumerate_full_info_policies(const FullInfoSpace& space,
                                               std::uint64_t budget = 5000000);

struct PolicyIterationResult {
  double best = 0.0;
  DeterministicPolicy policy;
  int iterations = 0;
};

/// Average-reward policy iteration over deterministic policies.
PolicyIterationResult optimal_full_info_policy(const FullInfoSpace& space, int max_iter = 1000);

}  // namespace matchq

#endif  // MATCHQ_FULLINFO_HPP
