#include "matchq/fullinfo.hpp"

#include "doctest.h"

#include <cmath>

using namespace matchq;

namespace {

MarketParams two_types() {
  MarketParams p;
  p.ell = 1;
  p.lambda = {1.0, 1.5};
  p.mu = {0.8, 1.2};
  p.theta = 0.7;
  return p;
}

}  // namespace

TEST_CASE("state space enumeration") {
  const FullInfoSpace space(two_types(), Truncation::population(3));
  CHECK(space.num_states() == 10);
  for (std::size_t s = 0; s < space.num_states(); ++s) CHECK(space.index_of(space.state(s)) == s);
  // empty state: only rejection
  const std::size_t empty = space.index_of({0, 0});
  CHECK(space.actions(empty, 0) == std::vector<int>{kReject});
  // one agent of each type: job 1 may take either, job 0 only type 0
  const std::size_t both = space.index_of({1, 1});
  CHECK(space.actions(both, 0).size() == 2);
  CHECK(space.actions(both, 1).size() == 3);
}

TEST_CASE("single type: always matching gives the product form throughput") {
  MarketParams p;
  p.ell = 0;
  p.lambda = {2.0};
  p.mu = {1.5};
  p.theta = 0.5;
  const int cap = 6;
  const FullInfoSpace space(p, Truncation::population(cap));
  const EnumerationResult e = enumerate_full_info_policies(space);
  std::vector<double> w(cap + 1, 1.0);
  double z = 1.0;
  for (int n = 1; n <= cap; ++n) {
    w[n] = w[n - 1] * p.lambda[0] / (p.mu[0] + n * p.theta);
    z += w[n];
  }
  CHECK(e.policies == (1ull << cap));
  CHECK(e.best == doctest::Approx(p.mu[0] * (1.0 - 1.0 / z)).epsilon(1e-10));
}

TEST_CASE("enumeration and policy iteration agree and dominate the rules") {
  const FullInfoSpace space(two_types(), Truncation::population(3));
  const EnumerationResult e = enumerate_full_info_policies(space);
  CHECK(e.policies == count_deterministic_policies(space));
  const PolicyIterationResult pi = optimal_full_info_policy(space);
  CHECK(std::abs(e.best - pi.best) <= 1e-9);
  CHECK(std::abs(full_info_throughput(space, e.argbest) - e.best) <= 1e-12);
  const double acr = full_info_throughput(space, full_info_rule(space, FullInfoKind::ACR));
  const double ncr = full_info_throughput(space, full_info_rule(space, FullInfoKind::NCR));
  CHECK(acr <= e.best + 1e-9);
  CHECK(ncr <= e.best + 1e-9);
  CHECK(acr >= ncr - 1e-12);
}

TEST_CASE("randomized and deterministic evaluation coincide") {
  const FullInfoSpace space(two_types(), Truncation::population(2));
  const EnumerationResult e = enumerate_full_info_policies(space);
  CHECK(full_info_throughput(space, randomize(space, e.argbest)) ==
        doctest::Approx(e.best).epsilon(1e-12));
}

TEST_CASE("enumeration budget") {
  const FullInfoSpace space(two_types(), Truncation::population(4));
  CHECK_THROWS_AS(enumerate_full_info_policies(space, 10), CapacityError);
}
