#include "matchq/ctmc.hpp"

#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

using namespace matchq;

namespace {

MarketParams single(double lambda, double mu, double theta) {
  MarketParams p;
  p.ell = 0;
  p.lambda = {lambda};
  p.mu = {mu};
  p.theta = theta;
  return p;
}

MarketParams fig4(double mu0) {
  MarketParams p;
  p.ell = 1;
  p.lambda = {40.0, 60.0};
  p.mu = {mu0, 40.0};
  p.theta = 4.0;
  return p;
}

ChainOptions capped(int cap) {
  ChainOptions o;
  o.truncation = Truncation::population(cap);
  return o;
}

// Normalized p_n = p_0 prod_{k<=n} lambda / (mu + k theta), accumulated in log space.
std::vector<double> product_form(double lambda, double mu, double theta, int cap) {
  std::vector<double> lp(cap + 1, 0.0);
  for (int n = 1; n <= cap; ++n) lp[n] = lp[n - 1] + std::log(lambda / (mu + n * theta));
  double m = lp[0];
  for (double x : lp) m = std::max(m, x);
  double z = 0.0;
  for (double x : lp) z += std::exp(x - m);
  std::vector<double> p(cap + 1);
  for (int n = 0; n <= cap; ++n) p[n] = std::exp(lp[n] - m) / z;
  return p;
}

// Queue-1 marginal of a two-type ACR chain.
std::vector<double> queue1_marginal(const ExactSolution& sol, int cap) {
  std::vector<double> m(cap + 1, 0.0);
  const auto& cls = sol.chain.classes();
  for (std::size_t s = 0; s < sol.chain.num_states(); ++s) {
    int n = 0;
    for (std::size_t c = 0; c < cls.size(); ++c)
      if (cls[c].queue == 1) n += sol.chain.state(s)[c];
    m[n] += sol.dist.probs[s];
  }
  return m;
}

}  // namespace

TEST_CASE("single-type chain matches the product form") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.5, 20.0);
  for (int draw = 0; draw < 8; ++draw) {
    const double lambda = u(rng), mu = u(rng), theta = u(rng) / 4.0;
    const int cap = 50 + 50 * draw;
    const MarketParams p = single(lambda, mu, theta);
    const ExactSolution sol = solve_exact(p, make_ncr(0), StrategyProfile::truthful(1, 1), capped(cap));
    const auto ref = product_form(lambda, mu, theta, cap);
    REQUIRE(sol.chain.num_states() == static_cast<std::size_t>(cap + 1));
    for (std::size_t s = 0; s < sol.chain.num_states(); ++s)
      CHECK(std::abs(sol.dist.probs[s] - ref[sol.chain.state(s)[0]]) <= 1e-10);
    CHECK(sol.dist.residual <= 1e-10);
    CHECK(throughput(sol.chain, sol.dist) == doctest::Approx(mu * (1.0 - ref[0])).epsilon(1e-10));
  }
}

TEST_CASE("generator rows sum to zero with nonnegative off-diagonals") {
  for (const PolicySpec& pol : {make_ncr(1), make_acr(1), make_rcr(1, false)}) {
    const StrategyProfile sigma = pol.num_queues == 1 ? StrategyProfile::truthful(2, 1)
                                                      : StrategyProfile::flexible_split(0.3);
    const TruncatedChain c = build_chain(fig4(5.0), pol, sigma, Truncation::population(8));
    const auto& q = c.generator();
    Eigen::VectorXd rows = q * Eigen::VectorXd::Ones(q.cols());
    CHECK(rows.cwiseAbs().maxCoeff() <= 1e-12);
    for (int k = 0; k < q.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(q, k); it; ++it)
        if (it.row() != it.col()) CHECK(it.value() >= 0.0);
  }
}

TEST_CASE("state counts and truncation") {
  const TruncatedChain c =
      build_chain(fig4(5.0), make_acr(1), StrategyProfile::truthful(2, 2), Truncation::per_cell(1));
  CHECK(c.num_states() == 4);
  CHECK(count_states(3, Truncation::population(10)) == 286);
  CHECK(count_states(2, Truncation::per_cell(3)) == 16);
  ChainOptions tight;
  tight.max_states = 100;
  CHECK_THROWS_AS(build_chain(fig4(5.0), make_rcr(1, false), StrategyProfile::flexible_split(0.5),
                              Truncation::population(30), tight),
                  CapacityError);
}

TEST_CASE("lumping does not change the solution") {
  MarketParams p;
  p.ell = 2;
  p.lambda = {2.0, 1.5, 1.0};
  p.mu = {1.0, 2.0, 1.5};
  p.theta = 1.0;
  StrategyProfile sigma({{0.3, 0.4, 0.3}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}});
  ChainOptions a = capped(10), b = capped(10);
  b.lump = false;
  for (const PolicySpec& pol : {make_acr(2), make_rcr(2, false)}) {
    const ExactSolution la = solve_exact(p, pol, sigma, a);
    const ExactSolution lb = solve_exact(p, pol, sigma, b);
    CHECK(throughput(la.chain, la.dist) == doctest::Approx(throughput(lb.chain, lb.dist)).epsilon(1e-10));
    const WaitTable wa = virtual_wait_table(la.chain, la.dist, {{0, 0}, {0, 1}}, a);
    const WaitTable wb = virtual_wait_table(lb.chain, lb.dist, {{0, 0}, {0, 1}}, b);
    CHECK(wa.at(0, 1).mean == doctest::Approx(wb.at(0, 1).mean).epsilon(1e-9));
  }
  // NCR lumps type 0 and type 1 only when no job distinguishes them; here one does
  const auto c = build_chain(p, make_ncr(2), StrategyProfile::truthful(3, 1), Truncation::population(4));
  CHECK(c.num_classes() == 3);
}

TEST_CASE("degenerate rates") {
  MarketParams p = fig4(5.0);
  p.lambda = {0.0, 0.0};
  const ExactSolution sol = solve_exact(p, make_acr(1), StrategyProfile::truthful(2, 2), capped(5));
  REQUIRE(sol.chain.total(0) == 0);
  CHECK(sol.dist.probs[0] == doctest::Approx(1.0));
  CHECK(throughput(sol.chain, sol.dist) == 0.0);

  MarketParams q = fig4(5.0);
  q.mu = {0.0, 0.0};
  CHECK(exact_throughput(q, make_rcr(1, false), StrategyProfile::flexible_split(0.5), capped(20)) == 0.0);
}

TEST_CASE("ACR queue 1 is an M/M/1+M queue") {
  for (double s : {0.0, 0.5, 1.0}) {
    const MarketParams p = fig4(5.0);
    const int cap = 60;
    const ExactSolution sol =
        solve_exact(p, make_acr(1), StrategyProfile::flexible_split(s), capped(cap));
    const auto m = queue1_marginal(sol, cap);
    const double birth = p.lambda[1] + p.lambda[0] * s;
    const auto ref = product_form(birth, p.mu[1], p.theta, cap);
    for (int n = 0; n <= 40; ++n) CHECK(std::abs(m[n] - ref[n]) <= 1e-9);
    CHECK(m[0] * birth == doctest::Approx(m[1] * (p.mu[1] + p.theta)).epsilon(1e-8));
  }
}

TEST_CASE("RCR with all flexible agents in queue 1 equals NCR") {
  MarketParams p = fig4(30.0);
  p.lambda = {4.0, 6.0};
  const double rcr = exact_throughput(p, make_rcr(1, false), StrategyProfile::flexible_split(1.0), capped(40));
  const double ncr = exact_throughput(p, make_ncr(1), StrategyProfile::truthful(2, 1), capped(40));
  CHECK(std::abs(rcr - ncr) <= 1e-12 * ncr);
}

TEST_CASE("direct and iterative solvers agree") {
  const MarketParams p = fig4(30.0);
  ChainOptions direct = capped(25), iter = capped(25);
  direct.direct_limit = 1 << 30;
  iter.direct_limit = 0;
  const StrategyProfile sigma = StrategyProfile::flexible_split(0.5);
  const auto a = solve_exact(p, make_rcr(1, false), sigma, direct);
  const auto b = solve_exact(p, make_rcr(1, false), sigma, iter);
  CHECK((a.dist.probs - b.dist.probs).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(b.dist.residual <= 1e-10);
}

TEST_CASE("adaptive cap meets the tail target") {
  const MarketParams p = fig4(30.0);
  const ExactSolution sol = solve_exact(p, make_acr(1), StrategyProfile::truthful(2, 2));
  CHECK(sol.dist.tail_mass <= 1e-8);
  CHECK(sol.chain.truncation().total_cap <= poisson_population_cap(p, 1e-8));
}

TEST_CASE("virtual waits") {
  SUBCASE("a lone agent waits for the first job") {
    MarketParams p = fig4(5.0);
    p.lambda = {1e-9, 1e-9};
    const WaitTable w = virtual_wait_table(p, make_acr(1), StrategyProfile::flexible_split(1.0),
                                           capped(6), {{0, 1}});
    CHECK(w.at(0, 1).mean == doctest::Approx(1.0 / p.mu[1]).epsilon(1e-6));
  }
  SUBCASE("absorbing solve equals the tridiagonal recursion") {
    for (double s : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      const MarketParams p = fig4(5.0);
      const WaitTable w =
          virtual_wait_table(p, make_acr(1), StrategyProfile::flexible_split(s), {}, {{0, 1}});
      const int cap = 300;
      const double birth = p.lambda[1] + p.lambda[0] * s;
      const auto pn = product_form(birth, p.mu[1], p.theta, cap);
      const auto tau = solve_birth_death_passage(w01_passage_spec(p, s, cap));
      double ref = 0.0;
      for (int n = 0; n <= cap; ++n) ref += pn[n] * tau[n];
      CHECK(std::abs(w.at(0, 1).mean - ref) <= 1e-8 * ref);
    }
  }
  SUBCASE("a specialized agent prefers its own queue under ACR") {
    for (double mu0 : {1.0, 10.0, 40.0})
      for (double s : {0.0, 0.5, 1.0}) {
        const WaitTable w = virtual_wait_table(fig4(mu0), make_acr(1), StrategyProfile::flexible_split(s),
                                               {}, {{1, 0}, {1, 1}});
        CHECK(w.at(1, 1).mean <= w.at(1, 0).mean);
      }
  }
  SUBCASE("unreachable cells are infinite") {
    MarketParams p;
    p.ell = 2;
    p.lambda = {1.0, 1.0, 1.0};
    p.mu = {1.0, 1.0, 1.0};
    p.theta = 1.0;
    const WaitTable w = virtual_wait_table(p, make_acr(2), StrategyProfile::truthful(3, 3), capped(8),
                                           {{1, 2}, {1, 1}});
    CHECK(w.at(1, 2).infinite);
    CHECK_FALSE(w.at(1, 1).infinite);
  }
}

TEST_CASE("birth-death passages") {
  const MarketParams p = fig4(5.0);
  BirthDeathSpec yc = yc_passage_spec(p, 0.5, 10);
  yc.up = [](int) { return 0.0; };
  CHECK(solve_birth_death_passage(yc)[0] == doctest::Approx(1.0 / p.mu[1]));

  const BirthDeathSpec w = w01_passage_spec(p, 0.5, 10);
  for (int n = 1; n <= 5; ++n) {
    CHECK(w.down(n) == doctest::Approx(n * p.theta + n * p.mu[1] / (n + 1.0)));
    CHECK(w.absorb(n) == doctest::Approx(p.mu[1] / (n + 1.0)));
  }
  for (double s : {0.0, 0.5, 1.0}) {
    const auto a = solve_birth_death_passage(yc_passage_spec(p, s, 200));
    const auto b = solve_birth_death_passage(w01_passage_spec(p, s, 200));
    for (int n = 0; n <= 200; ++n) CHECK(a[n] >= b[n] - 1e-12);
  }
  BirthDeathSpec none{[](int) { return 1.0; }, [](int) { return 1.0; }, [](int) { return 0.0; }, 3};
  CHECK_THROWS_AS(solve_birth_death_passage(none), InputError);
}

TEST_CASE("wait gap bound") {
  const WaitGap g = yc_wait_gap(fig4(1.0), 1.0, 200);
  CHECK(g.holds);
  CHECK(g.gap_term > 0.0);
  CHECK(g.yc - g.w01 >= g.gap_term - 1e-9);

  MarketParams tiny = fig4(1.0);
  tiny.lambda = {1e-8, 1e-8};
  const WaitGap t = yc_wait_gap(tiny, 0.0, 50);
  CHECK(t.p[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(t.gap_term <= 1e-8);
}

TEST_CASE("csv dumps") {
  const TruncatedChain c =
      build_chain(fig4(5.0), make_acr(1), StrategyProfile::truthful(2, 2), Truncation::population(2));
  const StationaryDist d = stationary(c);
  std::ostringstream g, s;
  write_generator_csv(c, g);
  write_stationary_csv(c, d, s);
  CHECK(g.str().rfind("from", 0) == 0);
  int lines = 0;
  for (char ch : s.str()) lines += ch == '\n';
  CHECK(lines == static_cast<int>(c.num_states()) + 1);
}
