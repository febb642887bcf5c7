#ifndef MATCHQ_CTMC_HPP
#define MATCHQ_CTMC_HPP

// Exact analysis of the truncated agent-count chain: stationary law,
// throughput, tagged-agent virtual waits and birth-death first passages.

#include "matchq/linsolve.hpp"
#include "matchq/model.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace matchq {

/// State-space truncation. `total_cap` bounds the number of waiting agents,
/// `cell_cap` bounds every state coordinate; 0 means unbounded. Arrivals that
/// would cross a bound are rejected (self-loop).
struct Truncation {
  int total_cap = 0;
  int cell_cap = 0;

  static Truncation population(int n) { return {n, 0}; }
  static Truncation per_cell(int n) { return {0, n}; }
  bool bounded() const { return total_cap > 0 || cell_cap > 0; }
  bool operator==(const Truncation&) const = default;
};

struct ChainOptions {
  Truncation truncation;      // unbounded on both axes -> adaptive population cap
  double tail_target = 1e-8;  // boundary mass target for the adaptive cap
  bool lump = true;
  std::size_t max_states = 1000000;
  long direct_limit = SparseSolver::kDefaultDirectLimit;
  double tol = 1e-10;
};

/// One state coordinate: agents of `types` waiting in `queue`. Types share a
/// coordinate only when every job type that can reach the queue treats them
/// alike, so the lumped chain is exact.
struct CellClass {
  int queue = 0;
  std::vector<int> types;
  int representative = 0;
  double arrival_rate = 0.0;
};

class TruncatedChain {
public:
  const MarketParams& params() const { return params_; }
  const PolicySpec& policy() const { return policy_; }
  const StrategyProfile& sigma() const { return sigma_; }
  const Truncation& truncation() const { return trunc_; }
  const std::vector<CellClass>& classes() const { return classes_; }

  std::size_t num_states() const { return num_states_; }
  int num_classes() const { return static_cast<int>(classes_.size()); }
  std::span<const int> state(std::size_t s) const {
    return {counts_.data() + s * classes_.size(), classes_.size()};
  }
  int total(std::size_t s) const;
  bool on_boundary(std::size_t s) const;
  /// State with each coordinate attributed to its representative type.
  SystemState system_state(std::size_t s) const;
  std::optional<std::size_t> index_of(std::span<const int> counts) const;
  /// Coordinate holding agents of `type` in `queue`, or -1.
  int class_of(int type, int queue) const { return class_of_[type * policy_.num_queues + queue]; }

  /// Generator, row = source state; each row sums to zero.
  const SparseMatrix& generator() const { return q_; }
  double match_probability(std::size_t s, int job_type) const {
    return match_prob_[s * params_.num_types() + job_type];
  }

private:
  friend TruncatedChain build_chain(const MarketParams&, const PolicySpec&,
                                    const StrategyProfile&, const Truncation&,
                                    const ChainOptions&);
  std::uint64_t key(std::span<const int> counts) const;

  MarketParams params_;
  PolicySpec policy_;
  StrategyProfile sigma_;
  Truncation trunc_;
  std::vector<CellClass> classes_;
  std::vector<int> class_of_;
  std::size_t num_states_ = 0;
  std::vector<int> counts_;
  std::uint64_t radix_ = 1;
  std::unordered_map<std::uint64_t, std::uint32_t> index_;
  SparseMatrix q_;
  std::vector<double> match_prob_;
};

/// Number of states the truncation would produce, without enumerating.
std::size_t count_states(int num_classes, const Truncation& trunc);

/// Throws CapacityError when the state count exceeds opts.max_states.
TruncatedChain build_chain(const MarketParams& params, const PolicySpec& policy,
                           const StrategyProfile& sigma, const Truncation& trunc,
                           const ChainOptions& opts = {});

struct StationaryDist {
  Eigen::VectorXd probs;
  double tail_mass = 0.0;  // mass on boundary states
  double residual = 0.0;   // max |(pi Q)_s| / max |Q_ss|
};

StationaryDist stationary(const TruncatedChain& chain, const ChainOptions& opts = {});

/// Smallest population cap at which the truncated M/M/inf chain with arrival
/// rate sum(lambda) and per-agent death theta puts at most `eps` on its
/// boundary. The agent population of every policy is dominated by it.
int poisson_population_cap(const MarketParams& params, double eps);

struct ExactSolution {
  TruncatedChain chain;
  StationaryDist dist;
};

/// Builds and solves the chain. With an unbounded opts.truncation the
/// population cap grows geometrically until the boundary mass meets
/// opts.tail_target (never beyond poisson_population_cap).
ExactSolution solve_exact(const MarketParams& params, const PolicySpec& policy,
                          const StrategyProfile& sigma, const ChainOptions& opts = {});

double throughput(const TruncatedChain& chain, const StationaryDist& dist);
double exact_throughput(const MarketParams& params, const PolicySpec& policy,
                        const StrategyProfile& sigma, const ChainOptions& opts = {});

/// Expected wait, or an explicit infinity when the agent is never matched.
struct Wait {
  bool infinite = false;
  double mean = 0.0;

  static Wait infinity() { return {true, 0.0}; }
  static Wait finite(double m) { return {false, m}; }
  bool operator==(const Wait&) const = default;
};

class WaitTable {
public:
  WaitTable() = default;
  WaitTable(int num_types, int num_queues)
      : num_types_(num_types), num_queues_(num_queues), cells_(num_types * num_queues) {}

  int num_types() const { return num_types_; }
  int num_queues() const { return num_queues_; }
  bool has(int type, int queue) const { return cells_[type * num_queues_ + queue].has_value(); }
  const Wait& at(int type, int queue) const;
  void set(int type, int queue, Wait w) { cells_[type * num_queues_ + queue] = w; }

private:
  int num_types_ = 0;
  int num_queues_ = 0;
  std::vector<std::optional<Wait>> cells_;
};

struct TaggedPassage {
  bool infinite = false;
  Eigen::VectorXd expected;      // expected time to match from each state
  Eigen::VectorXd absorb_prob;   // probability of ever matching
  double mean = 0.0;             // stationary average of `expected`
  double shortfall = 0.0;        // max(1 - absorb_prob)
};

/// Tagged non-abandoning agent added on top of each state. Throws
/// ConvergenceError when the absorption shortfall exceeds 1e-8.
TaggedPassage tagged_passage(const TruncatedChain& chain, const StationaryDist& dist,
                             TaggedAgent tagged, const ChainOptions& opts = {});

/// Fills the requested cells (every cell when `cells` is empty).
WaitTable virtual_wait_table(const TruncatedChain& chain, const StationaryDist& dist,
                             const std::vector<Cell>& cells = {}, const ChainOptions& opts = {});
WaitTable virtual_wait_table(const MarketParams& params, const PolicySpec& policy,
                             const StrategyProfile& sigma, const ChainOptions& opts = {},
                             const std::vector<Cell>& cells = {});

// ---------------------------------------------------------------------------
// Birth-death first passage to an absorbing state.

struct BirthDeathSpec {
  std::function<double(int)> up;
  std::function<double(int)> down;
  std::function<double(int)> absorb;
  int cap = 1;
};

/// E[tau(n)] for n = 0..cap, reflecting at the cap (up(cap) ignored).
std::vector<double> solve_birth_death_passage(const BirthDeathSpec& spec);

/// Time until a type 1 job finds queue 1 empty, queue 1 fed at
/// lambda1 + lambda0*sigma01 (ACR, two types).
BirthDeathSpec yc_passage_spec(const MarketParams& params, double sigma01, int cap);
/// Wait of a tagged agent in queue 1 that shares type 1 jobs uniformly.
BirthDeathSpec w01_passage_spec(const MarketParams& params, double sigma01, int cap);

/// Product-form law of the M/M/1+M count: p_n ~ prod_{k<=n} birth/(mu + k theta).
std::vector<double> mm1m_stationary(double birth, double mu, double theta, int cap);

struct WaitGap {
  std::vector<double> p;      // queue-1 marginal
  std::vector<double> yc_n;   // E[Y^c(n)]
  std::vector<double> w01_n;  // E[W01(n)]
  double yc = 0.0;
  double w01 = 0.0;
  double gap_term = 0.0;      // p0 (lambda0 sigma01 + lambda1) g1 / (2 (mu1 + theta))
  bool holds = false;         // yc - w01 >= gap_term
};

WaitGap yc_wait_gap(const MarketParams& params, double sigma01, int cap);

// ---------------------------------------------------------------------------

/// CSV dumps: one row per transition / state, state coordinates as columns.
void write_generator_csv(const TruncatedChain& chain, std::ostream& out);
void write_stationary_csv(const TruncatedChain& chain, const StationaryDist& dist,
                          std::ostream& out);

}  // namespace matchq

#endif  // MATCHQ_CTMC_HPP
