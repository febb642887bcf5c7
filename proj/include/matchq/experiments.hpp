#ifndef MATCHQ_EXPERIMENTS_HPP
#define MATCHQ_EXPERIMENTS_HPP

// Parameter sweeps and property suites. Grid points run in parallel; rows
// reach the sink in grid order.

#include "matchq/ctmc.hpp"
#include "matchq/equilibrium.hpp"
#include "matchq/model.hpp"
#include "matchq/sim.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace matchq {

/// `points` values evenly spaced on [0, upper] with the 0 endpoint replaced by
/// upper / (points - 1) / 100.
std::vector<double> sweep_grid(double upper, int points);

/// lambda = (40, 60), mu = (mu0, 40), theta = 4.
MarketParams fig4_params(double mu0);
/// lambda = (lambda0, 60), mu = (30, 40), theta = 4.
MarketParams fig6_params(double lambda0);

template <typename Row>
using RowSink = std::function<void(const Row&)>;

// ---------------------------------------------------------------------------

struct Fig47Options {
  MarketParams base = fig4_params(30.0);  // mu[0] is swept
  double upper = 60.0;
  int points = 61;
  ScalarOptions eq;
};

struct Fig47Row {
  double mu0 = 0.0;
  double fb = 0.0;
  double tp_ncr = 0.0, tp_acr = 0.0, tp_rcr = 0.0;
  double sigma_acr = 0.0, sigma_rcr = 0.0;  // smallest ACR / largest RCR equilibrium
  int n_acr = 0, n_rcr = 0;                 // equilibria found
  double residual_acr = 0.0, residual_rcr = 0.0;

  double frac_ncr() const { return tp_ncr / fb; }
  double frac_acr() const { return tp_acr / fb; }
  double frac_rcr() const { return tp_rcr / fb; }
};

Fig47Row fig4_7_point(const MarketParams& params, const ScalarOptions& eq);
std::vector<Fig47Row> sweep_fig4_7(const Fig47Options& opts, const RowSink<Fig47Row>& sink = {});
void write_csv_header(std::ostream& out, const Fig47Row*);
void write_csv_row(std::ostream& out, const Fig47Row& r);

// ---------------------------------------------------------------------------

struct Fig6Options {
  MarketParams base = fig6_params(15.0);  // lambda[0] is swept
  double upper = 30.0;
  int points = 61;
  ScalarOptions eq;
};

struct Fig6Row {
  double lambda0 = 0.0;
  BraessRow braess;

  double frac_acr() const { return braess.tp_acr / braess.first_best; }
  double frac_rcr() const { return braess.tp_rcr / braess.first_best; }
};

std::vector<Fig6Row> sweep_fig6(const Fig6Options& opts, const RowSink<Fig6Row>& sink = {});
void write_csv_header(std::ostream& out, const Fig6Row*);
void write_csv_row(std::ostream& out, const Fig6Row& r);

// ---------------------------------------------------------------------------

struct Thm2Options {
  int ell = 1;
  int n_params = 25;
  int n_sigmas = 5;
  std::uint64_t seed = 1;
  /// Draws whose RCR chain at the Poisson population cap would exceed this
  /// many states are redrawn.
  std::size_t state_budget = 60000;
  ChainOptions chain;
};

struct Thm2Row {
  int draw = 0;
  MarketParams params;
  std::vector<double> sigma0;  // flexible row of sigma
  double tp_rcr = 0.0;
  double tp_ncr = 0.0;
  double gap() const { return tp_rcr - tp_ncr; }
  bool ok() const { return gap() >= -1e-9; }
};

struct Thm2Report {
  std::vector<Thm2Row> rows;
  int violations = 0;
  int rejected_draws = 0;
  double max_gap = 0.0;
  double min_gap = 0.0;
  /// No violations, and for ell = 2 a strict gap above 1e-6.
  bool passed = false;
};

/// Flexible rows used for every parameter draw: fixed grid points first, then
/// Dirichlet(1, ..., 1) draws.
std::vector<std::vector<double>> thm2_sigmas(int ell, int n, std::uint64_t seed);
MarketParams thm2_draw(int ell, std::uint64_t seed, int index);

Thm2Report theorem2_grid(const Thm2Options& opts, const RowSink<Thm2Row>& sink = {});
void write_csv_header(std::ostream& out, const Thm2Row*);
void write_csv_row(std::ostream& out, const Thm2Row& r);

// ---------------------------------------------------------------------------

struct LemmaCase {
  PolicySpec policy;
  PatienceModel patience = PatienceModel::perfect();
  StrategyProfile sigma;
};

struct LemmaOptions {
  MarketParams params;  // lambda = (3, 4), mu = (3, 5), theta = 1 by default
  std::vector<std::vector<int>> base;  // (a_0, a_1) per base state
  std::vector<LemmaCase> cases;
  int replications = 10000;
  std::uint64_t seed = 1;

  LemmaOptions();
};

struct LemmaRow {
  std::string policy;
  std::string patience;
  std::vector<int> base;
  double horizon = 0.0;
  std::uint64_t seed = 0;
  FlexibilityEstimate estimate;
  bool d1_ok() const { return estimate.d1 >= -3.0 * estimate.d1_se; }
  bool d2_ok() const { return estimate.d2 >= -3.0 * estimate.d2_se; }
};

struct LemmaReport {
  std::vector<LemmaRow> rows;
  bool passed = false;
};

/// Base agents sit in their truthful cells (flexible agents in queue 0).
SystemState lemma_state(const PolicySpec& policy, const std::vector<int>& counts);

LemmaReport lemma_suite(const LemmaOptions& opts, const RowSink<LemmaRow>& sink = {});
void write_csv_header(std::ostream& out, const LemmaRow*);
void write_csv_row(std::ostream& out, const LemmaRow& r);

}  // namespace matchq

#endif  // MATCHQ_EXPERIMENTS_HPP
