#include "matchq/sim.hpp"

#include "doctest.h"

#include <cmath>
#include <numeric>
#include <sstream>

using namespace matchq;

namespace {

MarketParams small_two() {
  MarketParams p;
  p.ell = 1;
  p.lambda = {2.0, 3.0};
  p.mu = {1.0, 2.5};
  p.theta = 1.0;
  return p;
}

}  // namespace

TEST_CASE("streams are keyed and reproducible") {
  const EventStream s(42);
  auto a = s.substream(StreamPurpose::JobArrival, 1, 2);
  auto b = s.substream(StreamPurpose::JobArrival, 1, 2);
  auto c = s.substream(StreamPurpose::JobArrival, 2, 1);
  CHECK(a() == b());
  CHECK(a() != c());
  auto r = s.substream(StreamPurpose::Dispatch);
  for (int k = 0; k < 1000; ++k) {
    const double u = uniform01(r);
    CHECK((u >= 0.0 && u < 1.0));
  }
  CHECK(std::isinf(exponential(r, 0.0)));
}

TEST_CASE("runs are deterministic and conserve jobs") {
  const MarketParams p = small_two();
  const PolicySpec pol = make_rcr(1, false);
  const StrategyProfile sigma = StrategyProfile::flexible_split(0.4);
  SimOptions o;
  o.horizon = 200.0;
  o.log_events = true;
  const SystemState init(2, 2);
  const SimResult x = run(p, pol, sigma, o, init, EventStream(7));
  const SimResult y = run(p, pol, sigma, o, init, EventStream(7));
  CHECK(x == y);
  const long jobs = std::accumulate(x.job_arrivals.begin(), x.job_arrivals.end(), 0L);
  const long lost = std::accumulate(x.lost_jobs.begin(), x.lost_jobs.end(), 0L);
  CHECK(jobs == x.matches + lost);
  const long agents = std::accumulate(x.agent_arrivals.begin(), x.agent_arrivals.end(), 0L);
  CHECK(agents >= x.matches + x.abandonments);
  std::ostringstream log;
  write_event_log(x.events, log);
  CHECK(!log.str().empty());
}

TEST_CASE("a run needs a positive horizon") {
  SimOptions o;
  o.horizon = 0.0;
  CHECK_THROWS_AS(run(small_two(), make_acr(1), StrategyProfile::truthful(2, 2), o, SystemState(2, 2),
                      EventStream(1)),
                  InputError);
}

TEST_CASE("single-type simulation agrees with the exact chain") {
  MarketParams p;
  p.ell = 0;
  p.lambda = {5.0};
  p.mu = {4.0};
  p.theta = 1.0;
  SimOptions o;
  o.horizon = 4000.0;
  o.warmup = 20.0;
  const auto sum = replicate_throughput(p, make_ncr(0), StrategyProfile::truthful(1, 1), o, 8, 3);
  ChainOptions c;
  c.truncation = Truncation::population(200);
  const double exact = exact_throughput(p, make_ncr(0), StrategyProfile::truthful(1, 1), c);
  CHECK(std::abs(sum.mean - exact) <= 4.0 * sum.std_error + 1e-3);
}

TEST_CASE("parallel replications reproduce the serial reference") {
  SimOptions o;
  o.horizon = 50.0;
  const auto a = replicate_throughput(small_two(), make_acr(1), StrategyProfile::flexible_split(0.5), o, 6, 9);
  const auto b =
      replicate_throughput_serial(small_two(), make_acr(1), StrategyProfile::flexible_split(0.5), o, 6, 9);
  CHECK(a.values == b.values);
  CHECK(a.mean == b.mean);
}

TEST_CASE("tagged waits") {
  SUBCASE("an agent no job can reach waits forever") {
    MarketParams p;
    p.ell = 2;
    p.lambda = {1.0, 1.0, 1.0};
    p.mu = {1.0, 1.0, 1.0};
    TaggedWaitOptions o;
    o.injections = 40;
    const auto w = tagged_wait(p, make_acr(2), StrategyProfile::truthful(3, 3), 1, 2, o, EventStream(2));
    CHECK(w.infinite);
  }
  SUBCASE("simulated waits match the exact ones") {
    const MarketParams p = small_two();
    const StrategyProfile sigma = StrategyProfile::flexible_split(0.5);
    ChainOptions c;
    c.truncation = Truncation::population(40);
    const WaitTable exact = virtual_wait_table(p, make_acr(1), sigma, c, {{0, 0}, {0, 1}});
    TaggedWaitOptions o;
    o.injections = 4000;
    for (int q = 0; q < 2; ++q) {
      const auto w = tagged_wait(p, make_acr(1), sigma, 0, q, o, EventStream(5 + q));
      REQUIRE_FALSE(w.infinite);
      CHECK(std::abs(w.mean - exact.at(0, q).mean) <= 4.0 * w.std_error);
    }
  }
}

TEST_CASE("coupled value of flexibility") {
  const MarketParams p = small_two();
  SUBCASE("nothing happens in zero time") {
    const auto e = coupled_value_of_flexibility(p, make_acr(1), StrategyProfile::truthful(2, 2),
                                                SystemState(2, 2), 1, 0.0, 10, 1);
    CHECK(e.d1 == doctest::Approx(1.0));
    CHECK(e.d2 == doctest::Approx(0.0));
  }
  SUBCASE("extra cells") {
    CHECK(extra_flexible_cell(make_rcr(1, false), 1) == Cell{0, 1});
    CHECK(extra_flexible_cell(make_acr(1), 1) == Cell{0, 0});
    CHECK(extra_special_cell(make_acr(1), 1) == Cell{1, 1});
    CHECK(extra_special_cell(make_ncr(1), 1) == Cell{1, 0});
  }
  SUBCASE("reproducible with logs") {
    const auto a = coupled_value_of_flexibility(p, make_ncr(1), StrategyProfile::truthful(2, 1),
                                                SystemState(2, 1), 1, 1.0, 50, 4, true);
    const auto b = coupled_value_of_flexibility(p, make_ncr(1), StrategyProfile::truthful(2, 1),
                                                SystemState(2, 1), 1, 1.0, 50, 4, true);
    CHECK(a.d1 == b.d1);
    CHECK(a.d2 == b.d2);
    CHECK(!a.log_base.empty());
  }
}
