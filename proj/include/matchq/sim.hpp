#ifndef MATCHQ_SIM_HPP
#define MATCHQ_SIM_HPP

// Discrete-event simulation of the matching queues with keyed random
// substreams, so that several systems can be driven by the same events.

#include "matchq/ctmc.hpp"
#include "matchq/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace matchq {

enum class StreamPurpose : std::uint32_t {
  AgentArrival = 1,
  QueueChoice,
  Patience,
  JobArrival,
  Dispatch,
  InitialPatience,
  ExtraPatience,
  Injection,
  Replication,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic family of independent generators keyed by (purpose, a, b).
class EventStream {
public:
  explicit EventStream(std::uint64_t seed = 0) : seed_(seed) {}
  std::uint64_t seed() const { return seed_; }
  std::mt19937_64 substream(StreamPurpose purpose, std::uint64_t a = 0, std::uint64_t b = 0) const;
  /// Child stream, used to give each replication its own family.
  EventStream child(std::uint64_t index) const;

private:
  std::uint64_t seed_;
};

/// Uniform in [0,1) with 53 random bits; identical on every platform.
double uniform01(std::mt19937_64& rng);
/// Exponential by inversion; +inf for rate 0.
double exponential(std::mt19937_64& rng, double rate);

enum class EventKind { Abandon, AgentArrival, JobArrival };

struct EventRecord {
  double time;
  EventKind kind;
  int type;     // agent type or job type
  int queue;    // joined / matched queue, -1 if none
  int outcome;  // job: matched agent type or -1 for lost; otherwise 0
};

void write_event_log(const std::vector<EventRecord>& log, std::ostream& out);

struct SimOptions {
  double horizon = 1000.0;
  double warmup = 0.0;  // throughput is measured on [warmup, horizon]
  int batches = 32;
  bool log_events = false;
};

struct WaitStats {
  long count = 0;
  double sum = 0.0;
  double mean() const { return count ? sum / count : 0.0; }
};

struct SimResult {
  double horizon = 0.0;
  long matches = 0;                // over [0, horizon]
  std::vector<long> job_arrivals;  // per job type
  std::vector<long> lost_jobs;     // per job type
  std::vector<long> agent_arrivals;
  long abandonments = 0;
  std::vector<WaitStats> waits;    // realized waits of matched agents, per (type, queue)
  double throughput = 0.0;         // matches per unit time on [warmup, horizon]
  double std_error = 0.0;          // batch means
  double half_width = 0.0;         // 95% batch-means interval
  std::vector<EventRecord> events;

  bool operator==(const SimResult& o) const;
};

/// Single run from `initial` (agents present at time 0 draw patience from the
/// InitialPatience substream in (type, queue) order).
SimResult run(const MarketParams& params, const PolicySpec& policy, const StrategyProfile& sigma,
              const SimOptions& opts, const SystemState& initial, const EventStream& stream);

/// Throughput averaged over replications; replication r uses stream.child(r).
struct ReplicationSummary {
  int replications = 0;
  double mean = 0.0;
  double std_error = 0.0;
  std::vector<double> values;
};

ReplicationSummary replicate_throughput(const MarketParams& params, const PolicySpec& policy,
                                        const StrategyProfile& sigma, const SimOptions& opts,
                                        int replications, std::uint64_t seed);
/// Same result, computed on one thread (reference for the parallel version).
ReplicationSummary replicate_throughput_serial(const MarketParams& params,
                                               const PolicySpec& policy,
                                               const StrategyProfile& sigma,
                                               const SimOptions& opts, int replications,
                                               std::uint64_t seed);

struct FlexibilityEstimate {
  int replications = 0;
  double horizon = 0.0;
  double mean_base = 0.0;      // E[M | A]
  double mean_flexible = 0.0;  // E[M | A + e0]
  double mean_special = 0.0;   // E[M | A + ei]
  double d1 = 0.0;             // 1 + E[M|A] - E[M|A+e0]
  double d1_se = 0.0;
  double d2 = 0.0;             // E[M|A+e0] - E[M|A+ei]
  double d2_se = 0.0;
  std::vector<EventRecord> log_base, log_flexible, log_special;  // first replication, if requested
};

/// Cells that receive the extra agents: the flexible one joins queue i under
/// RCR and queue 0 otherwise; the specialized one joins queue i (queue 0 under NCR).
Cell extra_flexible_cell(const PolicySpec& policy, int i);
Cell extra_special_cell(const PolicySpec& policy, int i);

FlexibilityEstimate coupled_value_of_flexibility(const MarketParams& params,
                                                 const PolicySpec& policy,
                                                 const StrategyProfile& sigma,
                                                 const SystemState& base, int i, double horizon,
                                                 int replications, std::uint64_t seed,
                                                 bool keep_logs = false);

struct TaggedWaitOptions {
  int injections = 10000;
  double warmup = -1.0;           // < 0 means 20 / theta
  double injection_rate = -1.0;   // < 0 means theta
  double survival_multiple = 200.0;
  int survival_strikes = 3;
  int batches = 32;
};

struct TaggedWaitEstimate {
  bool infinite = false;
  int samples = 0;
  double mean = 0.0;
  double std_error = 0.0;
  double half_width = 0.0;
};

/// Steady-state wait of a never-abandoning tagged agent: at Poisson epochs of
/// an unperturbed base path the state is cloned, the tagged agent is added to
/// the clone, and the clone runs until the tagged agent is matched.
TaggedWaitEstimate tagged_wait(const MarketParams& params, const PolicySpec& policy,
                               const StrategyProfile& sigma, int agent_type, int queue,
                               const TaggedWaitOptions& opts, const EventStream& stream);

}  // namespace matchq

#endif  // MATCHQ_SIM_HPP
