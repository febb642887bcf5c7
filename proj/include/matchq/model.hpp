#ifndef MATCHQ_MODEL_HPP
#define MATCHQ_MODEL_HPP

// Market primitives, dispatch policies and the single-job dispatch semantics
// shared by the exact solvers and the simulator.
//
// Agent type 0 is flexible (compatible with every job type); agent type
// i >= 1 is specialized and only serves job type i. Queues are identified by
// dense indices 0..num_queues-1.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace matchq {

/// Raised for malformed inputs (bad rates, unknown job type, bad sigma).
class InputError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a truncated state space would exceed the configured budget.
class CapacityError : public std::runtime_error {
public:
  CapacityError(const std::string& what, std::size_t required)
      : std::runtime_error(what), required_(required) {}
  std::size_t required() const { return required_; }

private:
  std::size_t required_;
};

/// Raised when a linear solve or fixed point misses its tolerance.
class ConvergenceError : public std::runtime_error {
public:
  ConvergenceError(const std::string& what, double achieved)
      : std::runtime_error(what), achieved_(achieved) {}
  double achieved() const { return achieved_; }

private:
  double achieved_;
};

inline bool compatible(int agent_type, int job_type) {
  return agent_type == 0 || agent_type == job_type;
}

/// Match-success probability beta(a, b) for a job dispatched into a set of b
/// agents of which a are compatible.
class PatienceModel {
public:
  enum class Kind { Perfect, MaxRejections };

  static PatienceModel perfect() { return PatienceModel(Kind::Perfect, 0); }
  /// The job tolerates `max_rejections` rejections, i.e. up to K+1 draws
  /// without replacement.
  static PatienceModel max_rejections(int max_rejections);

  Kind kind() const { return kind_; }
  int max_rejections_k() const { return k_; }

  double beta(long a, long b) const;

  bool operator==(const PatienceModel&) const = default;

private:
  PatienceModel(Kind kind, int k) : kind_(kind), k_(k) {}
  Kind kind_;
  int k_;
};

struct MarketParams {
  int ell = 1;                 // number of specialized types
  std::vector<double> lambda;  // agent arrival rates, size ell+1
  std::vector<double> mu;      // job arrival rates, size ell+1
  double theta = 1.0;          // abandonment rate per waiting agent
  PatienceModel patience = PatienceModel::perfect();

  int num_types() const { return ell + 1; }
  double total_lambda() const;
  double total_mu() const;

  /// Throws InputError when the invariants do not hold.
  void validate() const;

  bool operator==(const MarketParams&) const = default;
};

enum class PolicyKind { NCR, ACR, RCR, Custom };

std::string to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(const std::string& name);

struct PolicySpec {
  PolicyKind kind = PolicyKind::Custom;
  int num_queues = 1;
  std::vector<std::vector<int>> rho;  // rho[j]: ordered queue list for job j
  bool pooled_fallback = false;

  int num_job_types() const { return static_cast<int>(rho.size()); }

  /// The queue sets a job of type j is offered to, in order. Without pooling
  /// every queue of rho[j] is its own set; with pooling the queues after the
  /// first one form a single set.
  std::vector<std::vector<int>> dispatch_sets(int job_type) const;

  /// True when some job type j compatible with agent_type lists `queue`.
  bool reachable(int agent_type, int queue) const;

  void validate(int ell) const;

  bool operator==(const PolicySpec&) const = default;
};

PolicySpec make_ncr(int ell);
PolicySpec make_acr(int ell);
/// RCR: rho[j] starts with j, the other queues follow in ascending order.
PolicySpec make_rcr(int ell, bool pooled);
PolicySpec make_policy(PolicyKind kind, int ell, bool pooled = false);

/// Row-stochastic queue-joining matrix, rows = agent types, cols = queues.
class StrategyProfile {
public:
  StrategyProfile() = default;
  StrategyProfile(int num_types, int num_queues);
  explicit StrategyProfile(std::vector<std::vector<double>> rows);

  /// Type i joins queue min(i, num_queues-1): the truthful profile for
  /// ACR/RCR and the only profile for NCR.
  static StrategyProfile truthful(int num_types, int num_queues);
  /// Two-type profile under ACR/RCR: sigma_11 = 1, sigma_01 = s.
  static StrategyProfile flexible_split(double sigma01);

  int num_types() const { return static_cast<int>(rows_.size()); }
  int num_queues() const { return rows_.empty() ? 0 : static_cast<int>(rows_[0].size()); }

  double operator()(int type, int queue) const { return rows_[type][queue]; }
  double& at(int type, int queue) { return rows_[type][queue]; }
  const std::vector<std::vector<double>>& rows() const { return rows_; }

  void validate(int num_types, int num_queues) const;

  bool operator==(const StrategyProfile&) const = default;

private:
  std::vector<std::vector<double>> rows_;
};

/// Agent counts per (true type, joined queue).
class SystemState {
public:
  SystemState() = default;
  SystemState(int num_types, int num_queues);

  int num_types() const { return num_types_; }
  int num_queues() const { return num_queues_; }

  int count(int type, int queue) const { return counts_[index(type, queue)]; }
  void set(int type, int queue, int value);
  void add(int type, int queue, int delta) { set(type, queue, count(type, queue) + delta); }

  int agents_of_type(int type) const;
  int queue_total(int queue) const;
  int total() const;

  bool operator==(const SystemState&) const = default;

private:
  std::size_t index(int type, int queue) const {
    return static_cast<std::size_t>(type) * num_queues_ + queue;
  }
  int num_types_ = 0;
  int num_queues_ = 0;
  std::vector<int> counts_;
};

struct Cell {
  int type = 0;
  int queue = 0;
  bool operator==(const Cell&) const = default;
};

/// One beta evaluation made while walking rho[j].
struct SetEvaluation {
  std::vector<int> queues;
  long compatible = 0;
  long total = 0;
  double beta = 0.0;
};

/// Exact outcome distribution for one arriving job.
struct DispatchDistribution {
  struct Match {
    Cell cell;
    double prob;
  };
  std::vector<Match> matches;  // only cells with count > 0, prob > 0
  double tagged = 0.0;         // probability the tagged agent is chosen
  double lost = 0.0;
  std::vector<SetEvaluation> trace;

  double match_probability() const { return 1.0 - lost; }
};

/// Optional extra agent that is not part of `state` (used for virtual waits).
struct TaggedAgent {
  int type;
  int queue;
};

DispatchDistribution resolve_dispatch(const MarketParams& params, const PolicySpec& policy,
                                      const SystemState& state, int job_type,
                                      std::optional<TaggedAgent> tagged = std::nullopt);

// ---------------------------------------------------------------------------
// Full-information policies (agent types observed by the platform).

enum class FullInfoKind { ACR, NCR };

/// nu(A, j): probabilities over actions {-1 (reject), 0..ell}.
struct FullInfoRow {
  std::vector<int> agents;     // A = (a_0..a_ell)
  int job_type = 0;
  std::vector<double> action;  // size ell+2, action[0] is reject
};

/// Every (A, j) with each a_i <= bound, in lexicographic order of A.
std::vector<FullInfoRow> full_info_policy_table(const MarketParams& params, FullInfoKind kind,
                                                int bound);

/// Max absolute violation of the admissibility constraints for one row.
double admissibility_violation(const FullInfoRow& row);

}  // namespace matchq

#endif  // MATCHQ_MODEL_HPP
