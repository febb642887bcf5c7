#include "matchq/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace matchq {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double wait_value(const Wait& w) { return w.infinite ? kInf : w.mean; }

ChainOptions with_truncation(ChainOptions opts, const Truncation& t) {
  opts.truncation = t;
  return opts;
}

Truncation resolve_for(const MarketParams& params, const PolicySpec& policy,
                       const std::vector<StrategyProfile>& profiles, const ChainOptions& opts) {
  if (opts.truncation.bounded()) return opts.truncation;
  int cap = 0;
  for (const auto& sigma : profiles)
    cap = std::max(cap, solve_exact(params, policy, sigma, opts).chain.truncation().total_cap);
  return Truncation::population(cap);
}

double gap_from(const WaitTable& w) {
  const double w00 = wait_value(w.at(0, 0));
  const double w01 = wait_value(w.at(0, 1));
  if (std::isinf(w00) && std::isinf(w01)) return 0.0;
  return w00 - w01;
}

}  // namespace

double ne_residual(const WaitTable& waits, const StrategyProfile& sigma, double eps) {
  double res = 0.0;
  for (int i = 0; i < waits.num_types(); ++i) {
    double best = kInf;
    for (int q = 0; q < waits.num_queues(); ++q) best = std::min(best, wait_value(waits.at(i, q)));
    if (std::isinf(best)) continue;
    for (int q = 0; q < waits.num_queues(); ++q)
      if (sigma(i, q) > eps) res = std::max(res, wait_value(waits.at(i, q)) - best);
  }
  return res;
}

std::vector<double> project_simplex(const std::vector<double>& v) {
  std::vector<double> u = v;
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, tau = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    cum += u[k];
    const double t = (cum - 1.0) / static_cast<double>(k + 1);
    if (u[k] - t > 0.0) tau = t;
  }
  std::vector<double> out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = std::max(0.0, v[k] - tau);
  return out;
}

std::vector<std::vector<double>> rescaled_waits(const WaitTable& waits) {
  const int nt = waits.num_types();
  const int nq = waits.num_queues();
  double max_finite = 0.0;
  for (int i = 0; i < nt; ++i)
    for (int q = 0; q < nq; ++q)
      if (!waits.at(i, q).infinite) max_finite = std::max(max_finite, waits.at(i, q).mean);
  std::vector<std::vector<double>> out(nt, std::vector<double>(nq, 0.0));
  for (int i = 0; i < nt; ++i) {
    for (int q = 0; q < nq; ++q) {
      const Wait& w = waits.at(i, q);
      out[i][q] = w.infinite ? max_finite + 1.0 : w.mean;
    }
    const auto [lo, hi] = std::minmax_element(out[i].begin(), out[i].end());
    const double a = *lo, span = *hi - *lo;
    for (double& x : out[i]) x = span > 0.0 ? (x - a) / span : 0.0;
  }
  return out;
}

double ScalarEquilibria::smallest() const {
  if (equilibria.empty()) throw ConvergenceError("no equilibrium found", kInf);
  return equilibria.front().sigma(0, 1);
}

double ScalarEquilibria::largest() const {
  if (equilibria.empty()) throw ConvergenceError("no equilibrium found", kInf);
  return equilibria.back().sigma(0, 1);
}

Truncation resolve_truncation(const MarketParams& params, const PolicySpec& policy,
                              const ChainOptions& opts) {
  return resolve_for(params, policy,
                     {StrategyProfile::flexible_split(0.0), StrategyProfile::flexible_split(1.0)},
                     opts);
}

double flexible_wait_gap(const MarketParams& params, const PolicySpec& policy, double sigma01,
                         const ChainOptions& opts) {
  const WaitTable w = virtual_wait_table(params, policy, StrategyProfile::flexible_split(sigma01),
                                         opts, {{0, 0}, {0, 1}});
  return gap_from(w);
}

ScalarEquilibria solve_scalar_two_type(const MarketParams& params, const PolicySpec& policy,
                                       const ScalarOptions& opts) {
  params.validate();
  if (params.ell != 1) throw InputError("scalar equilibrium solver needs ell = 1");
  if (policy.kind != PolicyKind::ACR && policy.kind != PolicyKind::RCR)
    throw InputError("scalar equilibrium solver needs ACR or RCR");
  if (opts.grid_points < 2) throw InputError("equilibrium grid needs at least two points");

  ScalarEquilibria out;
  out.truncation = resolve_truncation(params, policy, opts.chain);
  const ChainOptions copts = with_truncation(opts.chain, out.truncation);
  auto delta = [&](double s) {
    ++out.evaluations;
    return flexible_wait_gap(params, policy, s, copts);
  };

  const int g = opts.grid_points;
  for (int k = 0; k < g; ++k) {
    const double s = static_cast<double>(k) / (g - 1);
    out.grid.push_back({s, delta(s)});
  }
  double lo = kInf, hi = -kInf;
  for (const auto& p : out.grid) {
    lo = std::min(lo, p.delta);
    hi = std::max(hi, p.delta);
  }
  out.degenerate = std::isfinite(hi - lo) && hi - lo < opts.tol;

  std::vector<double> roots;
  if (out.grid.front().delta <= opts.tol) roots.push_back(0.0);
  for (int k = 0; k + 1 < g; ++k) {
    double a = out.grid[k].sigma01, b = out.grid[k + 1].sigma01;
    double fa = out.grid[k].delta, fb = out.grid[k + 1].delta;
    if (!((fa > 0.0 && fb < 0.0) || (fa < 0.0 && fb > 0.0))) continue;
    // Illinois regula falsi; falls back to bisection when an end is infinite
    double c = 0.5 * (a + b), fc = 0.0;
    int side = 0;
    for (int it = 0; it < 100; ++it) {
      c = (std::isfinite(fa) && std::isfinite(fb)) ? b - fb * (b - a) / (fb - fa) : 0.5 * (a + b);
      if (!(c > a && c < b)) c = 0.5 * (a + b);
      fc = delta(c);
      if (std::abs(fc) <= 0.1 * opts.tol || b - a <= 1e-12) break;
      if ((fc > 0.0) == (fb > 0.0)) {
        b = c;
        fb = fc;
        if (side == -1) fa *= 0.5;
        side = -1;
      } else {
        a = c;
        fa = fc;
        if (side == 1) fb *= 0.5;
        side = 1;
      }
    }
    roots.push_back(c);
  }
  if (out.grid.back().delta >= -opts.tol) roots.push_back(1.0);

  std::sort(roots.begin(), roots.end());
  std::vector<double> unique;
  for (double r : roots)
    if (unique.empty() || r - unique.back() > 1e-6) unique.push_back(r);
  // an interior root next to a corner duplicates the corner
  if (unique.size() >= 2 && unique.back() == 1.0 && 1.0 - unique[unique.size() - 2] <= 1e-6)
    unique.erase(unique.end() - 2);

  for (double r : unique) {
    EquilibriumResult e;
    e.sigma = StrategyProfile::flexible_split(r);
    e.waits = virtual_wait_table(params, policy, e.sigma, copts);
    e.residual = ne_residual(e.waits, e.sigma, opts.eps);
    e.iterations = out.evaluations;
    e.method = "scalar";
    e.converged = e.residual <= opts.tol;
    out.equilibria.push_back(std::move(e));
  }
  return out;
}

EquilibriumResult solve_projection(const MarketParams& params, const PolicySpec& policy,
                                   const StrategyProfile& sigma_init,
                                   const ProjectionOptions& opts) {
  params.validate();
  policy.validate(params.ell);
  sigma_init.validate(params.num_types(), policy.num_queues);
  const Truncation trunc = resolve_for(
      params, policy, {sigma_init, StrategyProfile::truthful(params.num_types(), policy.num_queues)},
      opts.chain);
  const ChainOptions copts = with_truncation(opts.chain, trunc);

  StrategyProfile sigma = sigma_init;
  EquilibriumResult best;
  best.residual = kInf;
  best.method = "projection";
  double step = opts.step;
  std::vector<double> last_move;
  for (int it = 1; it <= opts.max_iter; ++it) {
    const WaitTable waits = virtual_wait_table(params, policy, sigma, copts);
    const double res = ne_residual(waits, sigma, opts.eps);
    if (res < best.residual) {
      best.sigma = sigma;
      best.waits = waits;
      best.residual = res;
    }
    best.iterations = it;
    if (res <= opts.tol) {
      best.converged = true;
      return best;
    }
    const auto w = rescaled_waits(waits);
    std::vector<double> move;
    for (int i = 0; i < params.num_types(); ++i) {
      std::vector<double> v(policy.num_queues);
      for (int q = 0; q < policy.num_queues; ++q) v[q] = sigma(i, q) - step * w[i][q];
      const auto p = project_simplex(v);
      for (int q = 0; q < policy.num_queues; ++q) {
        const double next = (1.0 - opts.damping) * sigma(i, q) + opts.damping * p[q];
        move.push_back(next - sigma(i, q));
        sigma.at(i, q) = next;
      }
    }
    if (!last_move.empty()) {
      double dot = 0.0;
      for (std::size_t k = 0; k < move.size(); ++k) dot += move[k] * last_move[k];
      if (dot < 0.0) step *= opts.backoff;
    }
    last_move = std::move(move);
  }
  return best;
}

EquilibriumResult verify_ne(const MarketParams& params, const PolicySpec& policy,
                            const StrategyProfile& sigma, double eps, const ChainOptions& opts) {
  EquilibriumResult r;
  r.sigma = sigma;
  r.waits = virtual_wait_table(params, policy, sigma, opts);
  r.residual = ne_residual(r.waits, sigma, eps);
  r.method = "verify";
  return r;
}

BraessRow braess_point(const MarketParams& params, const ScalarOptions& opts) {
  BraessRow row;
  row.params = params;
  const PolicySpec acr = make_acr(1);
  const PolicySpec rcr = make_rcr(1, false);
  const ScalarEquilibria ea = solve_scalar_two_type(params, acr, opts);
  const ScalarEquilibria er = solve_scalar_two_type(params, rcr, opts);
  row.sigma_acr = ea.smallest();
  row.sigma_rcr = er.largest();
  const ChainOptions ca = with_truncation(opts.chain, ea.truncation);
  const ChainOptions cr = with_truncation(opts.chain, er.truncation);
  row.tp_acr = exact_throughput(params, acr, StrategyProfile::flexible_split(row.sigma_acr), ca);
  row.tp_rcr = exact_throughput(params, rcr, StrategyProfile::flexible_split(row.sigma_rcr), cr);
  row.first_best = exact_throughput(params, acr, StrategyProfile::flexible_split(0.0), ca);
  return row;
}

std::vector<BraessRow> braess_comparison(const std::vector<MarketParams>& grid,
                                         const ScalarOptions& opts) {
  std::vector<BraessRow> rows(grid.size());
#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < static_cast<long>(grid.size()); ++k) rows[k] = braess_point(grid[k], opts);
  return rows;
}

}  // namespace matchq
