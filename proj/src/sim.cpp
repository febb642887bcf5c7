#include "matchq/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <queue>

namespace matchq {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 EventStream::substream(StreamPurpose purpose, std::uint64_t a,
                                       std::uint64_t b) const {
  std::uint64_t h = splitmix64(seed_);
  h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b + 0x632be59bd9b4e019ULL));
  return std::mt19937_64(h);
}

EventStream EventStream::child(std::uint64_t index) const {
  return EventStream(splitmix64(splitmix64(seed_ ^ 0xd1b54a32d192ed03ULL) + index));
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double exponential(std::mt19937_64& rng, double rate) {
  const double u = uniform01(rng);
  if (rate <= 0.0) return std::numeric_limits<double>::infinity();
  return -std::log1p(-u) / rate;
}

void write_event_log(const std::vector<EventRecord>& log, std::ostream& out) {
  out << "time,kind,type,queue,outcome\n";
  const auto old = out.precision(17);
  for (const auto& e : log) {
    const char* kind = e.kind == EventKind::Abandon        ? "abandon"
                       : e.kind == EventKind::AgentArrival ? "agent"
                                                           : "job";
    out << e.time << ',' << kind << ',' << e.type << ',' << e.queue << ',' << e.outcome << '\n';
  }
  out.precision(old);
}

bool SimResult::operator==(const SimResult& o) const {
  auto same_events = [](const std::vector<EventRecord>& a, const std::vector<EventRecord>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t k = 0; k < a.size(); ++k)
      if (a[k].time != b[k].time || a[k].kind != b[k].kind || a[k].type != b[k].type ||
          a[k].queue != b[k].queue || a[k].outcome != b[k].outcome)
        return false;
    return true;
  };
  auto same_waits = [](const std::vector<WaitStats>& a, const std::vector<WaitStats>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t k = 0; k < a.size(); ++k)
      if (a[k].count != b[k].count || a[k].sum != b[k].sum) return false;
    return true;
  };
  return horizon == o.horizon && matches == o.matches && job_arrivals == o.job_arrivals &&
         lost_jobs == o.lost_jobs && agent_arrivals == o.agent_arrivals &&
         abandonments == o.abandonments && same_waits(waits, o.waits) &&
         throughput == o.throughput && std_error == o.std_error && same_events(events, o.events);
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Agent {
  int type;
  int queue;
  double arrival;
  double deadline;
  int slot;
  bool alive;
  bool tagged;
  std::uint32_t generation;
};

class Engine {
public:
  Engine(const MarketParams& params, const PolicySpec& policy, const StrategyProfile& sigma,
         const EventStream& stream, bool log)
      : p_(&params), pol_(&policy), sigma_(&sigma), log_(log),
        counts_(params.num_types(), policy.num_queues),
        cells_(params.num_types() * policy.num_queues),
        disp_(stream.substream(StreamPurpose::Dispatch)) {
    const int nt = params.num_types();
    for (int i = 0; i < nt; ++i) {
      arr_.push_back(stream.substream(StreamPurpose::AgentArrival, i));
      choice_.push_back(stream.substream(StreamPurpose::QueueChoice, i));
      pat_.push_back(stream.substream(StreamPurpose::Patience, i));
      job_.push_back(stream.substream(StreamPurpose::JobArrival, i));
    }
    for (int i = 0; i < nt; ++i) next_arrival_.push_back(exponential(arr_[i], params.lambda[i]));
    for (int j = 0; j < nt; ++j) next_job_.push_back(exponential(job_[j], params.mu[j]));
    res_.job_arrivals.assign(nt, 0);
    res_.lost_jobs.assign(nt, 0);
    res_.agent_arrivals.assign(nt, 0);
    res_.waits.assign(nt * policy.num_queues, {});
  }

  double now() const { return now_; }
  SimResult& result() { return res_; }
  bool tagged_matched() const { return tagged_matched_; }
  double tagged_match_time() const { return tagged_match_time_; }

  void add_agent(int type, int queue, double patience, bool tagged = false) {
    int id;
    if (free_.empty()) {
      id = static_cast<int>(agents_.size());
      agents_.emplace_back();
    } else {
      id = free_.back();
      free_.pop_back();
    }
    auto& cell = cells_[type * pol_->num_queues + queue];
    Agent& a = agents_[id];
    a = {type, queue, now_, now_ + patience, static_cast<int>(cell.size()), true, tagged,
         a.generation + 1};
    cell.push_back(id);
    counts_.add(type, queue, 1);
    if (!tagged) heap_.push({now_ + patience, id, a.generation});
  }

  /// Time of the next event; `category` and `type` identify it.
  double peek(int& category, int& type) {
    while (!heap_.empty() && stale(heap_.top())) heap_.pop();
    double best = kInf;
    category = 3;
    type = 0;
    if (!heap_.empty()) {
      best = heap_.top().time;
      category = 0;
    }
    for (int i = 0; i < static_cast<int>(next_arrival_.size()); ++i) {
      if (next_arrival_[i] < best) {
        best = next_arrival_[i];
        category = 1;
        type = i;
      }
    }
    for (int j = 0; j < static_cast<int>(next_job_.size()); ++j) {
      if (next_job_[j] < best) {
        best = next_job_[j];
        category = 2;
        type = j;
      }
    }
    return best;
  }

  /// Processes every event with time <= t_end, then sets the clock to t_end.
  void run_until(double t_end, double warmup = 0.0, std::vector<long>* batches = nullptr,
                 double batch_len = 0.0) {
    while (true) {
      int category, type;
      const double t = peek(category, type);
      if (t > t_end) break;
      const bool matched = step(t, category, type);
      if (matched && batches && t >= warmup) {
        const auto b = std::min<long>(batches->size() - 1,
                                      static_cast<long>((t - warmup) / batch_len));
        ++(*batches)[b];
      }
    }
    now_ = t_end;
  }

  /// Runs until the tagged agent is matched or the clock passes t_limit.
  void run_until_tagged(double t_limit) {
    while (!tagged_matched_) {
      int category, type;
      const double t = peek(category, type);
      if (t > t_limit) {
        now_ = t_limit;
        return;
      }
      step(t, category, type);
    }
  }

private:
  void remove(int id) {
    Agent& a = agents_[id];
    auto& cell = cells_[a.type * pol_->num_queues + a.queue];
    const int last = cell.back();
    cell[a.slot] = last;
    agents_[last].slot = a.slot;
    cell.pop_back();
    a.alive = false;
    counts_.add(a.type, a.queue, -1);
    free_.push_back(id);
  }

  struct HeapItem {
    double time;
    int id;
    std::uint32_t generation;
    bool operator>(const HeapItem& o) const {
      return time != o.time ? time > o.time : id > o.id;
    }
  };

  bool stale(const HeapItem& h) const {
    const Agent& a = agents_[h.id];
    return !a.alive || a.generation != h.generation;
  }

  // Returns true when the event was a match.
  bool step(double t, int category, int type) {
    now_ = t;
    if (category == 0) {
      const int id = heap_.top().id;
      heap_.pop();
      const Agent a = agents_[id];
      remove(id);
      ++res_.abandonments;
      if (log_) res_.events.push_back({t, EventKind::Abandon, a.type, a.queue, 0});
      return false;
    }
    if (category == 1) {
      const int i = type;
      const double u = uniform01(choice_[i]);
      const double patience = exponential(pat_[i], p_->theta);
      int q = 0;
      double acc = 0.0;
      const int nq = pol_->num_queues;
      q = -1;
      for (int k = 0; k < nq; ++k) {
        acc += (*sigma_)(i, k);
        if (u < acc) {
          q = k;
          break;
        }
      }
      if (q < 0) {  // rounding: last queue with positive mass
        for (int k = nq - 1; k >= 0; --k)
          if ((*sigma_)(i, k) > 0.0) {
            q = k;
            break;
          }
      }
      add_agent(i, q, patience);
      ++res_.agent_arrivals[i];
      if (log_) res_.events.push_back({t, EventKind::AgentArrival, i, q, 0});
      next_arrival_[i] = t + exponential(arr_[i], p_->lambda[i]);
      return false;
    }
    const int j = type;
    const double u1 = uniform01(disp_);
    const double u2 = uniform01(disp_);
    next_job_[j] = t + exponential(job_[j], p_->mu[j]);
    ++res_.job_arrivals[j];
    const DispatchDistribution d = resolve_dispatch(*p_, *pol_, counts_, j);
    double acc = 0.0;
    for (const auto& m : d.matches) {
      acc += m.prob;
      if (u1 < acc) {
        auto& cell = cells_[m.cell.type * pol_->num_queues + m.cell.queue];
        const auto pick = std::min<std::size_t>(cell.size() - 1,
                                                static_cast<std::size_t>(u2 * cell.size()));
        const int id = cell[pick];
        const Agent a = agents_[id];
        remove(id);
        if (a.tagged) {
          tagged_matched_ = true;
          tagged_match_time_ = t;
        } else {
          ++res_.matches;
          auto& w = res_.waits[a.type * pol_->num_queues + a.queue];
          ++w.count;
          w.sum += t - a.arrival;
        }
        if (log_) res_.events.push_back({t, EventKind::JobArrival, j, a.queue, a.type});
        return !a.tagged;
      }
    }
    ++res_.lost_jobs[j];
    if (log_) res_.events.push_back({t, EventKind::JobArrival, j, -1, -1});
    return false;
  }

  const MarketParams* p_;
  const PolicySpec* pol_;
  const StrategyProfile* sigma_;
  bool log_;
  double now_ = 0.0;
  SystemState counts_;
  std::vector<std::vector<int>> cells_;
  std::vector<Agent> agents_;
  std::vector<int> free_;
  std::priority_queue<HeapItem, std::vector<HeapItem>, std::greater<>> heap_;
  std::mt19937_64 disp_;
  std::vector<std::mt19937_64> arr_, choice_, pat_, job_;
  std::vector<double> next_arrival_, next_job_;
  SimResult res_;
  bool tagged_matched_ = false;
  double tagged_match_time_ = 0.0;
};

void validate_inputs(const MarketParams& params, const PolicySpec& policy,
                     const StrategyProfile& sigma) {
  params.validate();
  policy.validate(params.ell);
  sigma.validate(params.num_types(), policy.num_queues);
}

// Adds `initial` in (type, queue) order with patience from the InitialPatience stream.
void seed_agents(Engine& e, const SystemState& initial, const EventStream& stream, double theta) {
  auto rng = stream.substream(StreamPurpose::InitialPatience);
  for (int i = 0; i < initial.num_types(); ++i)
    for (int q = 0; q < initial.num_queues(); ++q)
      for (int k = 0; k < initial.count(i, q); ++k) e.add_agent(i, q, exponential(rng, theta));
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& x) {
  MeanSe r;
  const auto n = static_cast<double>(x.size());
  if (x.empty()) return r;
  for (double v : x) r.mean += v;
  r.mean /= n;
  if (x.size() < 2) return r;
  double ss = 0.0;
  for (double v : x) ss += (v - r.mean) * (v - r.mean);
  r.se = std::sqrt(ss / (n - 1.0) / n);
  return r;
}

// Two-sided 97.5% Student t quantile for the batch counts in use.
double t975(int dof) {
  if (dof >= 120) return 1.96;
  if (dof >= 31) return 2.04;
  if (dof >= 15) return 2.13;
  return 2.26;
}

}  // namespace

SimResult run(const MarketParams& params, const PolicySpec& policy, const StrategyProfile& sigma,
              const SimOptions& opts, const SystemState& initial, const EventStream& stream) {
  validate_inputs(params, policy, sigma);
  if (!(opts.horizon > 0.0)) throw InputError("horizon must be > 0");
  if (opts.warmup < 0.0 || opts.warmup >= opts.horizon)
    throw InputError("warmup must lie in [0, horizon)");
  if (opts.batches < 2) throw InputError("need at least 2 batches");
  if (initial.num_types() != params.num_types() || initial.num_queues() != policy.num_queues)
    throw InputError("initial state does not match the policy's queues");

  Engine e(params, policy, sigma, stream, opts.log_events);
  seed_agents(e, initial, stream, params.theta);
  std::vector<long> batches(opts.batches, 0);
  const double len = (opts.horizon - opts.warmup) / opts.batches;
  e.run_until(opts.horizon, opts.warmup, &batches, len);

  SimResult res = std::move(e.result());
  res.horizon = opts.horizon;
  std::vector<double> rates;
  for (long b : batches) rates.push_back(b / len);
  const MeanSe m = mean_se(rates);
  res.throughput = m.mean;
  res.std_error = m.se;
  res.half_width = t975(opts.batches - 1) * m.se;
  return res;
}

namespace {
template <bool Parallel>
ReplicationSummary replicate_impl(const MarketParams& params, const PolicySpec& policy,
                                  const StrategyProfile& sigma, const SimOptions& opts,
                                  int replications, std::uint64_t seed) {
  if (replications < 1) throw InputError("replications must be >= 1");
  const EventStream root(seed);
  const SystemState empty(params.num_types(), policy.num_queues);
  ReplicationSummary s;
  s.replications = replications;
  s.values.assign(replications, 0.0);
  if constexpr (Parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int r = 0; r < replications; ++r)
      s.values[r] = run(params, policy, sigma, opts, empty, root.child(r)).throughput;
  } else {
    for (int r = 0; r < replications; ++r)
      s.values[r] = run(params, policy, sigma, opts, empty, root.child(r)).throughput;
  }
  const MeanSe m = mean_se(s.values);
  s.mean = m.mean;
  s.std_error = m.se;
  return s;
}
}  // namespace

ReplicationSummary replicate_throughput(const MarketParams& params, const PolicySpec& policy,
                                        const StrategyProfile& sigma, const SimOptions& opts,
                                        int replications, std::uint64_t seed) {
  return replicate_impl<true>(params, policy, sigma, opts, replications, seed);
}

ReplicationSummary replicate_throughput_serial(const MarketParams& params,
                                               const PolicySpec& policy,
                                               const StrategyProfile& sigma,
                                               const SimOptions& opts, int replications,
                                               std::uint64_t seed) {
  return replicate_impl<false>(params, policy, sigma, opts, replications, seed);
}

Cell extra_flexible_cell(const PolicySpec& policy, int i) {
  if (policy.num_queues == 1) return {0, 0};
  return {0, policy.kind == PolicyKind::RCR ? i : 0};
}

Cell extra_special_cell(const PolicySpec& policy, int i) {
  if (policy.num_queues == 1) return {i, 0};
  return {i, i};
}

FlexibilityEstimate coupled_value_of_flexibility(const MarketParams& params,
                                                 const PolicySpec& policy,
                                                 const StrategyProfile& sigma,
                                                 const SystemState& base, int i, double horizon,
                                                 int replications, std::uint64_t seed,
                                                 bool keep_logs) {
  validate_inputs(params, policy, sigma);
  if (i < 1 || i > params.ell) throw InputError("i must name a specialized type");
  if (horizon < 0.0) throw InputError("horizon must be >= 0");
  if (replications < 2) throw InputError("need at least 2 replications");
  const Cell flex = extra_flexible_cell(policy, i);
  const Cell spec = extra_special_cell(policy, i);
  const EventStream root(seed);

  std::vector<double> m0(replications), m1(replications), m2(replications);
  FlexibilityEstimate est;
#pragma omp parallel for schedule(dynamic)
  for (int r = 0; r < replications; ++r) {
    const EventStream stream = root.child(r);
    const bool log = keep_logs && r == 0;
    auto extra = stream.substream(StreamPurpose::ExtraPatience);
    const double extra_patience = exponential(extra, params.theta);
    Engine sys0(params, policy, sigma, stream, log);
    Engine sys1(params, policy, sigma, stream, log);
    Engine sys2(params, policy, sigma, stream, log);
    seed_agents(sys0, base, stream, params.theta);
    seed_agents(sys1, base, stream, params.theta);
    seed_agents(sys2, base, stream, params.theta);
    sys1.add_agent(flex.type, flex.queue, extra_patience);
    sys2.add_agent(spec.type, spec.queue, extra_patience);
    sys0.run_until(horizon);
    sys1.run_until(horizon);
    sys2.run_until(horizon);
    m0[r] = static_cast<double>(sys0.result().matches);
    m1[r] = static_cast<double>(sys1.result().matches);
    m2[r] = static_cast<double>(sys2.result().matches);
    if (log) {
      est.log_base = std::move(sys0.result().events);
      est.log_flexible = std::move(sys1.result().events);
      est.log_special = std::move(sys2.result().events);
    }
  }
  std::vector<double> d1(replications), d2(replications);
  for (int r = 0; r < replications; ++r) {
    d1[r] = 1.0 + m0[r] - m1[r];
    d2[r] = m1[r] - m2[r];
  }
  est.replications = replications;
  est.horizon = horizon;
  est.mean_base = mean_se(m0).mean;
  est.mean_flexible = mean_se(m1).mean;
  est.mean_special = mean_se(m2).mean;
  const MeanSe a = mean_se(d1), b = mean_se(d2);
  est.d1 = a.mean;
  est.d1_se = a.se;
  est.d2 = b.mean;
  est.d2_se = b.se;
  return est;
}

TaggedWaitEstimate tagged_wait(const MarketParams& params, const PolicySpec& policy,
                               const StrategyProfile& sigma, int agent_type, int queue,
                               const TaggedWaitOptions& opts, const EventStream& stream) {
  validate_inputs(params, policy, sigma);
  if (agent_type < 0 || agent_type >= params.num_types()) throw InputError("unknown agent type");
  if (queue < 0 || queue >= policy.num_queues) throw InputError("queue not offered by the policy");
  if (opts.injections < opts.batches || opts.batches < 2)
    throw InputError("need at least `batches` injections");
  const double warmup = opts.warmup >= 0.0 ? opts.warmup : 20.0 / params.theta;
  const double rate = opts.injection_rate > 0.0 ? opts.injection_rate : params.theta;
  const double limit = opts.survival_multiple / params.theta;

  Engine base(params, policy, sigma, stream, false);
  auto inj = stream.substream(StreamPurpose::Injection);
  double t = warmup + exponential(inj, rate);
  std::vector<double> samples;
  samples.reserve(opts.injections);
  int strikes = 0;
  TaggedWaitEstimate est;
  while (static_cast<int>(samples.size()) < opts.injections) {
    base.run_until(t);
    Engine clone = base;
    clone.add_agent(agent_type, queue, kInf, true);
    clone.run_until_tagged(t + limit);
    if (!clone.tagged_matched()) {
      if (++strikes >= opts.survival_strikes) {
        est.infinite = true;
        est.samples = static_cast<int>(samples.size());
        return est;
      }
    } else {
      strikes = 0;
      samples.push_back(clone.tagged_match_time() - t);
    }
    t += exponential(inj, rate);
  }
  // batch means over injections in time order
  const int nb = opts.batches;
  const std::size_t per = samples.size() / nb;
  std::vector<double> means(nb, 0.0);
  for (int b = 0; b < nb; ++b) {
    const std::size_t lo = b * per;
    const std::size_t hi = b == nb - 1 ? samples.size() : lo + per;
    for (std::size_t k = lo; k < hi; ++k) means[b] += samples[k];
    means[b] /= static_cast<double>(hi - lo);
  }
  double total = 0.0;
  for (double x : samples) total += x;
  est.samples = static_cast<int>(samples.size());
  est.mean = total / samples.size();
  est.std_error = mean_se(means).se;
  est.half_width = t975(nb - 1) * est.std_error;
  return est;
}

}  // namespace matchq
