#ifndef MATCHQ_EQUILIBRIUM_HPP
#define MATCHQ_EQUILIBRIUM_HPP

// Nash equilibria of the queue-joining game: an agent type only uses queues
// with minimal expected virtual wait.

#include "matchq/ctmc.hpp"
#include "matchq/model.hpp"

#include <string>
#include <vector>

namespace matchq {

/// max over (i, q) with sigma_iq > eps of W_iq - min_q' W_iq'. Rows whose
/// waits are all infinite contribute 0; mass on an infinite wait next to a
/// finite one gives +inf.
double ne_residual(const WaitTable& waits, const StrategyProfile& sigma, double eps = 1e-6);

/// Euclidean projection onto the probability simplex.
std::vector<double> project_simplex(const std::vector<double>& v);

/// Per-type affine rescaling of the waits to [0, 1], with +inf replaced by
/// (largest finite wait + 1) first. Rows with a single value become 0.
std::vector<std::vector<double>> rescaled_waits(const WaitTable& waits);

struct EquilibriumResult {
  StrategyProfile sigma;
  WaitTable waits;
  double residual = 0.0;
  int iterations = 0;
  std::string method;
  bool converged = false;
};

struct ScalarOptions {
  ChainOptions chain;  // an unbounded truncation is resolved once per call
  int grid_points = 11;
  double tol = 1e-6;   // root bracket width in sigma01
  double eps = 1e-6;   // support threshold for the residual
};

struct DeltaPoint {
  double sigma01;
  double delta;  // E[W00] - E[W01]
};

struct ScalarEquilibria {
  std::vector<EquilibriumResult> equilibria;  // ascending in sigma01
  std::vector<DeltaPoint> grid;
  Truncation truncation;
  /// Delta varies by less than tol over the grid: sigma01 barely affects waits.
  bool degenerate = false;
  int evaluations = 0;

  double smallest() const;
  double largest() const;
};

/// The population cap used for every evaluation at this parameter point: the
/// adaptive cap at sigma01 = 0 and 1, whichever is larger.
Truncation resolve_truncation(const MarketParams& params, const PolicySpec& policy,
                              const ChainOptions& opts);

/// E[W00] - E[W01] at sigma = ((1-s, s), (0, 1)).
double flexible_wait_gap(const MarketParams& params, const PolicySpec& policy, double sigma01,
                         const ChainOptions& opts);

/// Two types under ACR or RCR, sigma_11 = 1. Interior roots are refined with
/// the Illinois variant of regula falsi; corners are classified by sign.
ScalarEquilibria solve_scalar_two_type(const MarketParams& params, const PolicySpec& policy,
                                       const ScalarOptions& opts = {});

struct ProjectionOptions {
  ChainOptions chain;
  double step = 1.0;
  double damping = 0.5;
  int max_iter = 500;
  double tol = 1e-6;
  double eps = 1e-6;
  /// Step multiplier applied when consecutive updates point in opposite
  /// directions; 1 keeps the step fixed.
  double backoff = 0.5;
};

/// Damped projected fixed-point iteration on sigma. Non-convergence is
/// reported through `converged`, with the best iterate returned.
EquilibriumResult solve_projection(const MarketParams& params, const PolicySpec& policy,
                                   const StrategyProfile& sigma_init,
                                   const ProjectionOptions& opts = {});

/// Residual at `sigma` from a fresh wait computation.
EquilibriumResult verify_ne(const MarketParams& params, const PolicySpec& policy,
                            const StrategyProfile& sigma, double eps = 1e-6,
                            const ChainOptions& opts = {});

struct BraessRow {
  MarketParams params;
  double sigma_acr = 0.0;  // smallest ACR equilibrium
  double sigma_rcr = 0.0;  // largest RCR equilibrium
  double tp_acr = 0.0;
  double tp_rcr = 0.0;
  double first_best = 0.0;  // ACR with truthful joining
};

BraessRow braess_point(const MarketParams& params, const ScalarOptions& opts = {});
std::vector<BraessRow> braess_comparison(const std::vector<MarketParams>& grid,
                                         const ScalarOptions& opts = {});

}  // namespace matchq

#endif  // MATCHQ_EQUILIBRIUM_HPP
