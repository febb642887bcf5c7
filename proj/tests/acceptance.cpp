// Acceptance run: one PASS/FAIL line per criterion, then a summary line.
// Usage: matchq_acceptance <path to matchq CLI> [criterion numbers...]
// Lines are also written to acceptance_results.txt in the working directory.

#include "matchq/ctmc.hpp"
#include "matchq/equilibrium.hpp"
#include "matchq/experiments.hpp"
#include "matchq/fullinfo.hpp"
#include "matchq/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

using namespace matchq;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;  // 0 = no runtime bound
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string g(double x) { return fmt("%.6g", x); }

// p_n for the M/M/1+M count, accumulated in log space.
std::vector<double> product_form(double lambda, double mu, double theta, int cap) {
  std::vector<double> lp(cap + 1, 0.0);
  for (int n = 1; n <= cap; ++n) lp[n] = lp[n - 1] + std::log(lambda / (mu + n * theta));
  const double m = *std::max_element(lp.begin(), lp.end());
  double z = 0.0;
  for (double x : lp) z += std::exp(x - m);
  std::vector<double> p(cap + 1);
  for (int n = 0; n <= cap; ++n) p[n] = std::exp(lp[n] - m) / z;
  return p;
}

ChainOptions capped(const Truncation& t) {
  ChainOptions o;
  o.truncation = t;
  return o;
}

// ---------------------------------------------------------------------------

Outcome c1() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> rate(0.1, 50.0);
  std::uniform_real_distribution<double> ab(0.05, 5.0);
  double worst = 0.0;
  for (int d = 0; d < 20; ++d) {
    MarketParams p;
    p.ell = 0;
    p.lambda = {rate(rng)};
    p.mu = {rate(rng)};
    p.theta = ab(rng);
    const int cap = 20 * (d + 1);
    const ExactSolution sol =
        solve_exact(p, make_ncr(0), StrategyProfile::truthful(1, 1), capped(Truncation::population(cap)));
    const auto ref = product_form(p.lambda[0], p.mu[0], p.theta, cap);
    for (std::size_t s = 0; s < sol.chain.num_states(); ++s)
      worst = std::max(worst, std::abs(sol.dist.probs[s] - ref[sol.chain.state(s)[0]]));
  }
  return {worst <= 1e-10, "20 draws, caps 20..400, max |p - p_ref| = " + g(worst)};
}

Outcome c2() {
  const MarketParams p = fig4_params(5.0);
  const double s = 0.5;
  const StrategyProfile sigma = StrategyProfile::flexible_split(s);
  const WaitTable w = virtual_wait_table(p, make_acr(1), sigma, {}, {{0, 1}});
  const double absorbing = w.at(0, 1).mean;

  const int cap = poisson_population_cap(p, 1e-14);
  const auto pn = mm1m_stationary(p.lambda[1] + p.lambda[0] * s, p.mu[1], p.theta, cap);
  const auto tau = solve_birth_death_passage(w01_passage_spec(p, s, cap));
  double recursion = 0.0;
  for (int n = 0; n <= cap; ++n) recursion += pn[n] * tau[n];
  const double rel = std::abs(absorbing - recursion) / recursion;

  TaggedWaitOptions o;
  o.injections = 10000;
  const TaggedWaitEstimate mc = tagged_wait(p, make_acr(1), sigma, 0, 1, o, EventStream(77));
  const double z = std::abs(mc.mean - absorbing) / mc.std_error;
  const bool ok = rel <= 1e-8 && !mc.infinite && z <= 3.0;
  return {ok, "W01 absorbing " + g(absorbing) + ", recursion " + g(recursion) + " (rel " + g(rel) +
                  "), MC " + g(mc.mean) + " +- " + g(mc.std_error) + " (" + fmt("%.2f", z) + " SE)"};
}

Outcome c3() {
  const MarketParams p = fig4_params(30.0);
  const int cap = poisson_population_cap(p, 1e-14);
  bool ok = true;
  double min_slack = 1e300, min_pointwise = 1e300;
  for (double s : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const WaitGap gp = yc_wait_gap(p, s, cap);
    for (int n = 0; n <= cap; ++n) min_pointwise = std::min(min_pointwise, gp.yc_n[n] - gp.w01_n[n]);
    min_slack = std::min(min_slack, gp.yc - gp.w01 - gp.gap_term);
    ok = ok && gp.yc - gp.w01 >= gp.gap_term - 1e-9;
  }
  ok = ok && min_pointwise >= -1e-9;
  return {ok, "cap " + std::to_string(cap) + ", min_n (Yc - W01) = " + g(min_pointwise) +
                  ", min (Yc - W01 - gap term) = " + g(min_slack)};
}

Outcome c4() {
  bool ok = true;
  std::ostringstream d;
  for (double mu0 : {1.0, 2.0, 5.0}) {
    const MarketParams p = fig4_params(mu0);
    const ScalarEquilibria eq = solve_scalar_two_type(p, make_acr(1));
    const ChainOptions c = capped(eq.truncation);
    std::ostringstream list;
    for (const auto& e : eq.equilibria) list << (list.tellp() ? "," : "") << g(e.sigma(0, 1));
    const bool unique_one = eq.equilibria.size() == 1 && std::abs(eq.smallest() - 1.0) <= 1e-6;
    const double sigma = eq.equilibria.empty() ? 1.0 : eq.smallest();
    const double tp_acr = exact_throughput(p, make_acr(1), StrategyProfile::flexible_split(sigma), c);
    const double tp_ncr = exact_throughput(p, make_ncr(1), StrategyProfile::truthful(2, 1), c);
    const bool gap = tp_ncr - tp_acr > 1e-4;
    ok = ok && unique_one && gap;
    d << "mu0=" << mu0 << ": sigma01 {" << list.str() << "}" << (unique_one ? "" : " [not unique 1]")
      << ", TP acr " << g(tp_acr) << " ncr " << g(tp_ncr) << (gap ? "" : " [no gap]") << "; ";
  }
  return {ok, d.str()};
}

Outcome c5() {
  Thm2Options one;
  one.ell = 1;
  one.n_params = 25;
  one.n_sigmas = 5;
  one.seed = 11;
  const Thm2Report r1 = theorem2_grid(one);
  Thm2Options two;
  two.ell = 2;
  two.n_params = 20;
  two.n_sigmas = 6;
  two.seed = 12;
  two.state_budget = 200000;
  const Thm2Report r2 = theorem2_grid(two);
  const bool ok = r1.rows.size() >= 100 && r2.rows.size() >= 50 && r1.violations == 0 &&
                  r2.violations == 0 && r2.max_gap > 1e-6;
  return {ok, "ell=1: " + std::to_string(r1.rows.size()) + " pairs, " + std::to_string(r1.violations) +
                  " violations, min gap " + g(r1.min_gap) + "; ell=2: " + std::to_string(r2.rows.size()) +
                  " pairs, " + std::to_string(r2.violations) + " violations, max gap " + g(r2.max_gap) +
                  ", min gap " + g(r2.min_gap)};
}

Outcome c6() {
  const auto rows = sweep_fig6(Fig6Options{});
  int order_bad = 0, acr_wins = 0;
  double best_margin = -1e300, best_at = 0.0;
  for (const auto& r : rows) {
    if (r.braess.sigma_rcr < r.braess.sigma_acr - 1e-6) ++order_bad;
    const double margin = r.braess.tp_acr - r.braess.tp_rcr;
    if (margin > 1e-6) ++acr_wins;
    if (margin > best_margin) best_margin = margin, best_at = r.lambda0;
  }
  return {order_bad == 0 && acr_wins > 0,
          std::to_string(rows.size()) + " points, order violations " + std::to_string(order_bad) +
              ", points with TP(ACR) > TP(RCR): " + std::to_string(acr_wins) + " (largest margin " +
              g(best_margin) + " at lambda0=" + g(best_at) + ")"};
}

Outcome c7() {
  const LemmaOptions o;
  const LemmaReport r = lemma_suite(o);
  int bad = 0;
  double worst = 1e300;
  for (const auto& row : r.rows) {
    if (!row.d1_ok() || !row.d2_ok()) ++bad;
    if (row.estimate.d1_se > 0.0) worst = std::min(worst, row.estimate.d1 / row.estimate.d1_se);
    if (row.estimate.d2_se > 0.0) worst = std::min(worst, row.estimate.d2 / row.estimate.d2_se);
  }
  return {r.passed && bad == 0,
          std::to_string(r.rows.size()) + " rows x " + std::to_string(o.replications) +
              " replications, failing rows " + std::to_string(bad) + ", smallest difference/SE " + g(worst)};
}

Outcome c8() {
  std::vector<MarketParams> markets;
  for (double mu0 : {1.0, 5.0, 30.0, 60.0}) markets.push_back(fig4_params(mu0));
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> rate(0.2, 5.0);
  for (int k = 0; k < 6; ++k) {
    MarketParams p;
    p.ell = 1;
    p.lambda = {rate(rng), rate(rng)};
    p.mu = {rate(rng), rate(rng)};
    p.theta = rate(rng);
    markets.push_back(p);
  }
  bool ok = true;
  double worst = -1e300, worst_cell = -1e300;
  std::uint64_t policies = 0;
  for (const auto& p : markets) {
    const Truncation t = Truncation::population(3);
    const FullInfoSpace space(p, t);
    const EnumerationResult e = enumerate_full_info_policies(space);
    policies += e.policies;
    const double acr = exact_throughput(p, make_acr(1), StrategyProfile::truthful(2, 2), capped(t));
    worst = std::max(worst, e.best - acr);
    ok = ok && e.best <= acr + 1e-9;

    const Truncation tc = Truncation::per_cell(3);
    const PolicyIterationResult pi = optimal_full_info_policy(FullInfoSpace(p, tc));
    const double acr_cell = exact_throughput(p, make_acr(1), StrategyProfile::truthful(2, 2), capped(tc));
    worst_cell = std::max(worst_cell, pi.best - acr_cell);
  }
  return {ok, std::to_string(markets.size()) + " markets, " + std::to_string(policies) +
                  " policies enumerated at population cap 3, max (best - ACR) = " + g(worst) +
                  "; info: policy iteration at cells <= 3, max (optimum - ACR) = " + g(worst_cell)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome c9(const std::string& cli) {
  if (cli.empty() || !fs::exists(cli)) return {false, "CLI binary not found: " + cli};
  const fs::path root = fs::temp_directory_path() / ("matchq_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path cfg = root / "config.json";
  {
    std::ofstream f(cfg);
    f << R"({"market": {"ell": 1, "lambda": [4, 6], "mu": [3, 4], "theta": 2},
             "sim": {"horizon": 50, "replications": 3, "injections": 200},
             "couple": {"base": [[1, 0], [0, 2]], "replications": 200},
             "sweep": {"points": 3, "n_params": 2, "n_sigmas": 2, "replications": 50}})";
  }
  const std::vector<std::string> commands = {"throughput",    "waits",        "equilibrium",
                                             "couple",        "sweep fig4_7", "sweep fig6",
                                             "sweep thm2",    "sweep lemmas"};
  int files = 0;
  std::vector<std::string> diffs;
  for (std::size_t k = 0; k < commands.size(); ++k) {
    const std::string fmt_flag = k % 2 ? "csv" : "json";
    std::vector<fs::path> dirs;
    for (const char* tag : {"a", "b"}) {
      const fs::path dir = root / (std::to_string(k) + tag);
      const std::string cmd = "\"" + cli + "\" --config \"" + cfg.string() + "\" --seed 5 --format " +
                              fmt_flag + " --out \"" + dir.string() + "\" " + commands[k] +
                              " > /dev/null 2>&1";
      if (std::system(cmd.c_str()) == -1) return {false, "cannot launch " + cli};
      dirs.push_back(dir);
    }
    bool any = false;
    if (fs::exists(dirs[0]))
      for (const auto& e : fs::directory_iterator(dirs[0])) {
        if (e.path().filename() == "manifest.json") continue;
        any = true;
        ++files;
        const fs::path other = dirs[1] / e.path().filename();
        if (!fs::exists(other) || slurp(e.path()) != slurp(other))
          diffs.push_back(commands[k] + ":" + e.path().filename().string());
      }
    if (!any) diffs.push_back(commands[k] + ": no data file");
  }
  fs::remove_all(root);
  std::string d = std::to_string(commands.size()) + " subcommands, " + std::to_string(files) +
                  " data files compared";
  for (const auto& x : diffs) d += "; differs: " + x;
  return {diffs.empty(), d};
}

Outcome c10() {
  const auto rows = sweep_fig4_7(Fig47Options{});
  int out_of_band = 0, not_monotone = 0;
  double lo = 1e300, hi = -1e300;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (double f : {rows[k].frac_ncr(), rows[k].frac_acr(), rows[k].frac_rcr()}) {
      lo = std::min(lo, f);
      hi = std::max(hi, f);
      if (!(f > 0.9 && f <= 1.0 + 1e-9)) ++out_of_band;
    }
    if (k > 0 && rows[k].sigma_acr > rows[k - 1].sigma_acr + 1e-6) ++not_monotone;
  }
  const Fig47Row& a = rows.front();
  const Fig47Row& b = rows.back();
  const bool ends = a.frac_acr() >= 0.995 && a.frac_ncr() >= 0.995 && b.frac_acr() >= 0.995 &&
                    b.frac_ncr() >= 0.995;
  return {out_of_band == 0 && not_monotone == 0 && ends,
          std::to_string(rows.size()) + " points, fractions in [" + g(lo) + ", " + g(hi) +
              "], out of (0.9, 1]: " + std::to_string(out_of_band) + ", sigma_acr increases: " +
              std::to_string(not_monotone) + ", mu0=" + g(a.mu0) + ": ACR " + g(a.frac_acr()) + " NCR " +
              g(a.frac_ncr()) + ", mu0=" + g(b.mu0) + ": ACR " + g(b.frac_acr()) + " NCR " +
              g(b.frac_ncr())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  std::set<int> only;
  for (int k = 2; k < argc; ++k) only.insert(std::atoi(argv[k]));

  const std::vector<Criterion> criteria = {
      {1, "product-form oracle", 5, c1},
      {2, "wait cross-check", 60, c2},
      {3, "wait gap inequality", 0, c3},
      {4, "two-type ACR equilibrium", 120, c4},
      {5, "restricted joining grid", 600, c5},
      {6, "extremal equilibria ordering", 300, c6},
      {7, "coupled dominance", 600, c7},
      {8, "full-information enumeration", 0, c8},
      {9, "determinism", 0, [&] { return c9(cli); }},
      {10, "throughput sweep shape", 0, c10},
  };

  std::ofstream log("acceptance_results.txt");
  auto emit = [&](const std::string& line) {
    std::cout << line << std::endl;
    log << line << std::endl;
  };

  int passed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.budget_s <= 0 || secs < c.budget_s;
    if (!in_time) o.detail += "; over the " + g(c.budget_s) + " s budget";
    const bool ok = o.pass && in_time;
    passed += ok;
    emit("C" + std::to_string(c.id) + (ok ? " PASS  " : " FAIL  ") + c.name + ": " + o.detail + " [" +
         fmt("%.1f", secs) + " s]");
  }
  emit("acceptance: " + std::to_string(passed) + "/" + std::to_string(ran) + " criteria passed");
  return 0;
}
