#include "matchq/experiments.hpp"

#include "doctest.h"

#include <cmath>
#include <numeric>
#include <sstream>

using namespace matchq;

TEST_CASE("sweep grid") {
  const auto g = sweep_grid(60.0, 61);
  REQUIRE(g.size() == 61);
  CHECK(g.front() == doctest::Approx(0.01));
  CHECK(g[1] == doctest::Approx(1.0));
  CHECK(g.back() == doctest::Approx(60.0));
  CHECK(sweep_grid(30.0, 61).front() == doctest::Approx(0.005));
}

TEST_CASE("figure parameters") {
  CHECK(fig4_params(7.0).mu == std::vector<double>{7.0, 40.0});
  CHECK(fig6_params(7.0).lambda == std::vector<double>{7.0, 60.0});
  CHECK(fig6_params(7.0).theta == 4.0);
}

TEST_CASE("strategy draws") {
  const auto a = thm2_sigmas(2, 8, 5);
  const auto b = thm2_sigmas(2, 8, 5);
  CHECK(a == b);
  REQUIRE(a.size() == 8);
  for (const auto& row : a) {
    CHECK(row.size() == 3);
    CHECK(std::accumulate(row.begin(), row.end(), 0.0) == doctest::Approx(1.0));
    for (double x : row) CHECK(x >= 0.0);
  }
  const MarketParams p = thm2_draw(2, 5, 0);
  CHECK(p.ell == 2);
  for (double x : p.lambda) CHECK((x >= 1.0 && x <= 100.0));
  CHECK((p.theta >= 0.5 && p.theta <= 10.0));
}

TEST_CASE("restricted joining never beats no restriction under RCR") {
  Thm2Options o;
  o.ell = 1;
  o.n_params = 3;
  o.n_sigmas = 3;
  o.seed = 4;
  std::ostringstream csv;
  write_csv_header(csv, static_cast<const Thm2Row*>(nullptr));
  const Thm2Report r = theorem2_grid(o, [&](const Thm2Row& row) { write_csv_row(csv, row); });
  CHECK(r.rows.size() == 9);
  CHECK(r.violations == 0);
  CHECK(r.passed);
  int lines = 0;
  for (char c : csv.str()) lines += c == '\n';
  CHECK(lines == 10);
}

TEST_CASE("small braess sweep") {
  Fig6Options o;
  o.points = 3;
  const auto rows = sweep_fig6(o);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].lambda0 == doctest::Approx(0.15));
  for (const auto& r : rows) {
    CHECK(r.braess.sigma_rcr >= r.braess.sigma_acr - 1e-6);
    CHECK(r.frac_acr() <= 1.0 + 1e-9);
  }
}

TEST_CASE("lemma base states") {
  const SystemState a = lemma_state(make_acr(1), {2, 3});
  CHECK(a.count(0, 0) == 2);
  CHECK(a.count(1, 1) == 3);
  const SystemState n = lemma_state(make_ncr(1), {2, 3});
  CHECK(n.num_queues() == 1);
  CHECK(n.count(1, 0) == 3);
}

TEST_CASE("short lemma suite") {
  LemmaOptions o;
  o.replications = 200;
  o.base.resize(2);
  const LemmaReport r = lemma_suite(o);
  CHECK(r.rows.size() == o.cases.size() * 2 * 2);
  for (const auto& row : r.rows) {
    CHECK(row.estimate.replications == 200);
    CHECK(row.estimate.d1 >= -1.0);
  }
}
