#include "matchq/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>

namespace matchq {

namespace {

// Evaluates rows[k] = f(k) in parallel and hands them to `sink` in order.
template <typename Row, typename F>
std::vector<Row> parallel_rows(long n, F f, const RowSink<Row>& sink) {
  std::vector<Row> rows(n);
  std::exception_ptr err;
#pragma omp parallel for ordered schedule(dynamic)
  for (long k = 0; k < n; ++k) {
    bool ok = true;
    try {
      rows[k] = f(k);
    } catch (...) {
      ok = false;
#pragma omp critical
      if (!err) err = std::current_exception();
    }
#pragma omp ordered
    {
      if (ok && sink) {
#pragma omp critical
        if (!err) sink(rows[k]);
      }
    }
  }
  if (err) std::rethrow_exception(err);
  return rows;
}

ChainOptions with_truncation(ChainOptions opts, const Truncation& t) {
  opts.truncation = t;
  return opts;
}

std::string patience_name(const PatienceModel& m) {
  if (m.kind() == PatienceModel::Kind::Perfect) return "perfect";
  return "K=" + std::to_string(m.max_rejections_k());
}

}  // namespace

std::vector<double> sweep_grid(double upper, int points) {
  if (points < 2 || !(upper > 0.0)) throw InputError("sweep grid needs upper > 0 and >= 2 points");
  std::vector<double> g(points);
  for (int k = 0; k < points; ++k) g[k] = upper * k / (points - 1);
  g[0] = upper / (points - 1) / 100.0;
  return g;
}

MarketParams fig4_params(double mu0) {
  MarketParams p;
  p.ell = 1;
  p.lambda = {40.0, 60.0};
  p.mu = {mu0, 40.0};
  p.theta = 4.0;
  return p;
}

MarketParams fig6_params(double lambda0) {
  MarketParams p;
  p.ell = 1;
  p.lambda = {lambda0, 60.0};
  p.mu = {30.0, 40.0};
  p.theta = 4.0;
  return p;
}

// ---------------------------------------------------------------------------

Fig47Row fig4_7_point(const MarketParams& params, const ScalarOptions& eq) {
  Fig47Row r;
  r.mu0 = params.mu[0];
  const PolicySpec acr = make_acr(1);
  const PolicySpec rcr = make_rcr(1, false);
  const ScalarEquilibria ea = solve_scalar_two_type(params, acr, eq);
  const ScalarEquilibria er = solve_scalar_two_type(params, rcr, eq);
  r.n_acr = static_cast<int>(ea.equilibria.size());
  r.n_rcr = static_cast<int>(er.equilibria.size());
  r.sigma_acr = ea.smallest();
  r.sigma_rcr = er.largest();
  r.residual_acr = ea.equilibria.front().residual;
  r.residual_rcr = er.equilibria.back().residual;
  const ChainOptions ca = with_truncation(eq.chain, ea.truncation);
  const ChainOptions cr = with_truncation(eq.chain, er.truncation);
  r.fb = exact_throughput(params, acr, StrategyProfile::flexible_split(0.0), ca);
  r.tp_acr = exact_throughput(params, acr, StrategyProfile::flexible_split(r.sigma_acr), ca);
  r.tp_rcr = exact_throughput(params, rcr, StrategyProfile::flexible_split(r.sigma_rcr), cr);
  r.tp_ncr = exact_throughput(params, make_ncr(1), StrategyProfile::truthful(2, 1), ca);
  return r;
}

std::vector<Fig47Row> sweep_fig4_7(const Fig47Options& opts, const RowSink<Fig47Row>& sink) {
  const auto grid = sweep_grid(opts.upper, opts.points);
  return parallel_rows<Fig47Row>(
      static_cast<long>(grid.size()),
      [&](long k) {
        MarketParams p = opts.base;
        p.mu[0] = grid[k];
        return fig4_7_point(p, opts.eq);
      },
      sink);
}

void write_csv_header(std::ostream& out, const Fig47Row*) {
  out << std::setprecision(15);
  out << "mu0,fb,tp_ncr,tp_acr,tp_rcr,frac_ncr,frac_acr,frac_rcr,sigma01_acr,sigma01_rcr,"
         "n_eq_acr,n_eq_rcr,residual_acr,residual_rcr\n";
}

void write_csv_row(std::ostream& out, const Fig47Row& r) {
  out << r.mu0 << ',' << r.fb << ',' << r.tp_ncr << ',' << r.tp_acr << ',' << r.tp_rcr << ','
      << r.frac_ncr() << ',' << r.frac_acr() << ',' << r.frac_rcr() << ',' << r.sigma_acr << ','
      << r.sigma_rcr << ',' << r.n_acr << ',' << r.n_rcr << ',' << r.residual_acr << ','
      << r.residual_rcr << '\n';
}

// ---------------------------------------------------------------------------

std::vector<Fig6Row> sweep_fig6(const Fig6Options& opts, const RowSink<Fig6Row>& sink) {
  const auto grid = sweep_grid(opts.upper, opts.points);
  return parallel_rows<Fig6Row>(
      static_cast<long>(grid.size()),
      [&](long k) {
        MarketParams p = opts.base;
        p.lambda[0] = grid[k];
        return Fig6Row{grid[k], braess_point(p, opts.eq)};
      },
      sink);
}

void write_csv_header(std::ostream& out, const Fig6Row*) {
  out << std::setprecision(15);
  out << "lambda0,fb,tp_acr,tp_rcr,frac_acr,frac_rcr,sigma01_acr,sigma01_rcr\n";
}

void write_csv_row(std::ostream& out, const Fig6Row& r) {
  out << r.lambda0 << ',' << r.braess.first_best << ',' << r.braess.tp_acr << ','
      << r.braess.tp_rcr << ',' << r.frac_acr() << ',' << r.frac_rcr() << ','
      << r.braess.sigma_acr << ',' << r.braess.sigma_rcr << '\n';
}

// ---------------------------------------------------------------------------

std::vector<std::vector<double>> thm2_sigmas(int ell, int n, std::uint64_t seed) {
  const int nq = ell + 1;
  std::vector<std::vector<double>> out;
  if (ell == 1) {
    for (double s : {0.0, 1.0, 0.5, 0.25, 0.75}) out.push_back({1.0 - s, s});
  } else {
    for (int q = 0; q < nq; ++q) {
      std::vector<double> v(nq, 0.0);
      v[q] = 1.0;
      out.push_back(v);
    }
    out.push_back(std::vector<double>(nq, 1.0 / nq));
  }
  if (static_cast<int>(out.size()) > n) out.resize(n);
  std::mt19937_64 rng = EventStream(seed).substream(StreamPurpose::QueueChoice, ell);
  std::gamma_distribution<double> gamma(1.0, 1.0);
  while (static_cast<int>(out.size()) < n) {
    std::vector<double> v(nq);
    double sum = 0.0;
    for (double& x : v) sum += (x = gamma(rng));
    for (double& x : v) x /= sum;
    out.push_back(v);
  }
  return out;
}

MarketParams thm2_draw(int ell, std::uint64_t seed, int index) {
  std::mt19937_64 rng = EventStream(seed).substream(StreamPurpose::Replication, ell, index);
  auto log_uniform = [&] { return std::exp(std::log(100.0) * uniform01(rng)); };
  MarketParams p;
  p.ell = ell;
  p.lambda.resize(ell + 1);
  p.mu.resize(ell + 1);
  for (double& x : p.lambda) x = log_uniform();
  for (double& x : p.mu) x = log_uniform();
  p.theta = 0.5 + 9.5 * uniform01(rng);
  return p;
}

Thm2Report theorem2_grid(const Thm2Options& opts, const RowSink<Thm2Row>& sink) {
  if (opts.ell != 1 && opts.ell != 2) throw InputError("thm2 grid needs ell in {1, 2}");
  const PolicySpec rcr = make_rcr(opts.ell, true);
  const PolicySpec ncr = make_ncr(opts.ell);
  const auto sigmas = thm2_sigmas(opts.ell, opts.n_sigmas, opts.seed);

  Thm2Report rep;
  std::vector<MarketParams> draws;
  for (int attempt = 0; static_cast<int>(draws.size()) < opts.n_params; ++attempt) {
    if (attempt > 1000 * opts.n_params) throw CapacityError("state budget rejects every draw", 0);
    const MarketParams p = thm2_draw(opts.ell, opts.seed, attempt);
    const int cap = poisson_population_cap(p, opts.chain.tail_target);
    if (count_states(2 * opts.ell + 1, Truncation::population(cap)) > opts.state_budget) {
      ++rep.rejected_draws;
      continue;
    }
    draws.push_back(p);
  }

  const long per = static_cast<long>(sigmas.size());
  std::vector<double> tp_ncr(draws.size());
  for (std::size_t d = 0; d < draws.size(); ++d)
    tp_ncr[d] = exact_throughput(draws[d], ncr, StrategyProfile::truthful(opts.ell + 1, 1),
                                 opts.chain);
  rep.rows = parallel_rows<Thm2Row>(
      static_cast<long>(draws.size()) * per,
      [&](long k) {
        Thm2Row r;
        r.draw = static_cast<int>(k / per);
        r.params = draws[r.draw];
        r.sigma0 = sigmas[k % per];
        StrategyProfile sigma = StrategyProfile::truthful(opts.ell + 1, opts.ell + 1);
        for (int q = 0; q <= opts.ell; ++q) sigma.at(0, q) = r.sigma0[q];
        r.tp_rcr = exact_throughput(r.params, rcr, sigma, opts.chain);
        r.tp_ncr = tp_ncr[r.draw];
        return r;
      },
      sink);

  rep.max_gap = -std::numeric_limits<double>::infinity();
  rep.min_gap = std::numeric_limits<double>::infinity();
  for (const auto& r : rep.rows) {
    if (!r.ok()) ++rep.violations;
    rep.max_gap = std::max(rep.max_gap, r.gap());
    rep.min_gap = std::min(rep.min_gap, r.gap());
  }
  rep.passed = rep.violations == 0 && (opts.ell == 1 || rep.max_gap > 1e-6);
  return rep;
}

void write_csv_header(std::ostream& out, const Thm2Row*) {
  out << std::setprecision(15);
  out << "draw,ell,lambda,mu,theta,sigma0,tp_rcr,tp_ncr,gap,ok\n";
}

void write_csv_row(std::ostream& out, const Thm2Row& r) {
  auto join = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%s%.17g", k ? ";" : "", v[k]);
      s += buf;
    }
    return s;
  };
  out << r.draw << ',' << r.params.ell << ',' << join(r.params.lambda) << ','
      << join(r.params.mu) << ',' << r.params.theta << ',' << join(r.sigma0) << ',' << r.tp_rcr
      << ',' << r.tp_ncr << ',' << r.gap() << ',' << (r.ok() ? 1 : 0) << '\n';
}

// ---------------------------------------------------------------------------

LemmaOptions::LemmaOptions() {
  params.ell = 1;
  params.lambda = {3.0, 4.0};
  params.mu = {3.0, 5.0};
  params.theta = 1.0;
  base = {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 0}, {0, 2}, {2, 3}, {3, 1}, {4, 4}, {1, 5}};
  const PatienceModel k1 = PatienceModel::max_rejections(1);
  const StrategyProfile truthful = StrategyProfile::truthful(2, 2);
  const StrategyProfile split = StrategyProfile::flexible_split(0.5);
  const StrategyProfile single = StrategyProfile::truthful(2, 1);
  cases = {{make_acr(1), PatienceModel::perfect(), truthful},
           {make_ncr(1), PatienceModel::perfect(), single},
           {make_ncr(1), k1, single},
           {make_rcr(1, true), PatienceModel::perfect(), split},
           {make_rcr(1, true), k1, split}};
}

SystemState lemma_state(const PolicySpec& policy, const std::vector<int>& counts) {
  const int nt = static_cast<int>(counts.size());
  SystemState s(nt, policy.num_queues);
  for (int i = 0; i < nt; ++i) s.set(i, std::min(i, policy.num_queues - 1), counts[i]);
  return s;
}

LemmaReport lemma_suite(const LemmaOptions& opts, const RowSink<LemmaRow>& sink) {
  LemmaReport rep;
  rep.passed = true;
  std::uint64_t index = 0;
  for (const auto& c : opts.cases) {
    MarketParams p = opts.params;
    p.patience = c.patience;
    for (double h : {1.0 / p.theta, 10.0 / p.theta}) {
      for (const auto& counts : opts.base) {
        LemmaRow r;
        r.policy = to_string(c.policy.kind);
        r.patience = patience_name(c.patience);
        r.base = counts;
        r.horizon = h;
        r.seed = splitmix64(opts.seed + index++);
        for (int i = 1; i <= p.ell; ++i) {
          FlexibilityEstimate e = coupled_value_of_flexibility(
              p, c.policy, c.sigma, lemma_state(c.policy, counts), i, h, opts.replications,
              r.seed + i);
          // keep the specialized type with the weakest margin
          if (i == 1 || e.d2 + 3.0 * e.d2_se < r.estimate.d2 + 3.0 * r.estimate.d2_se)
            r.estimate = std::move(e);
        }
        rep.passed = rep.passed && r.d1_ok() && r.d2_ok();
        if (sink) sink(r);
        rep.rows.push_back(std::move(r));
      }
    }
  }
  return rep;
}

void write_csv_header(std::ostream& out, const LemmaRow*) {
  out << std::setprecision(15);
  out << "policy,patience,base,horizon,seed,replications,mean_base,mean_flexible,mean_special,"
         "d1,d1_se,d2,d2_se,d1_ok,d2_ok\n";
}

void write_csv_row(std::ostream& out, const LemmaRow& r) {
  std::string base;
  for (std::size_t k = 0; k < r.base.size(); ++k) base += (k ? ";" : "") + std::to_string(r.base[k]);
  const auto& e = r.estimate;
  out << r.policy << ',' << r.patience << ',' << base << ',' << r.horizon << ',' << r.seed << ','
      << e.replications << ',' << e.mean_base << ',' << e.mean_flexible << ',' << e.mean_special
      << ',' << e.d1 << ',' << e.d1_se << ',' << e.d2 << ',' << e.d2_se << ','
      << (r.d1_ok() ? 1 : 0) << ',' << (r.d2_ok() ? 1 : 0) << '\n';
}

}  // namespace matchq
