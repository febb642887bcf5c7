#include "matchq/ctmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <string>

namespace matchq {

namespace {

std::vector<CellClass> make_classes(const MarketParams& params, const PolicySpec& policy,
                                    const StrategyProfile& sigma, bool lump) {
  std::vector<CellClass> classes;
  for (int q = 0; q < policy.num_queues; ++q) {
    std::vector<int> jobs;
    for (int j = 0; j < policy.num_job_types(); ++j)
      if (std::find(policy.rho[j].begin(), policy.rho[j].end(), q) != policy.rho[j].end())
        jobs.push_back(j);
    std::map<std::vector<bool>, CellClass> groups;
    std::vector<std::vector<bool>> order;
    for (int i = 0; i < params.num_types(); ++i) {
      const double rate = params.lambda[i] * sigma(i, q);
      if (rate <= 0.0) continue;
      std::vector<bool> sig;
      if (lump) {
        for (int j : jobs) sig.push_back(compatible(i, j));
      } else {
        sig.assign(params.num_types(), false);
        sig[i] = true;
      }
      auto [it, fresh] = groups.try_emplace(sig);
      if (fresh) {
        it->second.queue = q;
        it->second.representative = i;
        order.push_back(sig);
      }
      it->second.types.push_back(i);
      it->second.arrival_rate += rate;
    }
    for (const auto& sig : order) classes.push_back(groups[sig]);
  }
  return classes;
}

std::string class_label(const CellClass& c) {
  std::string s = "q" + std::to_string(c.queue) + "_t";
  for (std::size_t k = 0; k < c.types.size(); ++k) {
    if (k) s += "+";
    s += std::to_string(c.types[k]);
  }
  return s;
}

// Calls fn(target_counts, rate) for every arrival and abandonment move out of
// `counts`; `work` is scratch of the same size.
template <class Fn>
void agent_moves(const TruncatedChain& chain, std::span<const int> counts, int total,
                 std::vector<int>& work, Fn&& fn) {
  const auto& trunc = chain.truncation();
  const double theta = chain.params().theta;
  work.assign(counts.begin(), counts.end());
  for (int c = 0; c < chain.num_classes(); ++c) {
    const bool room = (trunc.total_cap == 0 || total < trunc.total_cap) &&
                      (trunc.cell_cap == 0 || counts[c] < trunc.cell_cap);
    if (room) {
      ++work[c];
      fn(work, chain.classes()[c].arrival_rate);
      --work[c];
    }
    if (counts[c] > 0) {
      --work[c];
      fn(work, counts[c] * theta);
      ++work[c];
    }
  }
}

}  // namespace

int TruncatedChain::total(std::size_t s) const {
  int t = 0;
  for (int c : state(s)) t += c;
  return t;
}

bool TruncatedChain::on_boundary(std::size_t s) const {
  if (trunc_.total_cap > 0 && total(s) >= trunc_.total_cap) return true;
  if (trunc_.cell_cap > 0)
    for (int c : state(s))
      if (c >= trunc_.cell_cap) return true;
  return false;
}

SystemState TruncatedChain::system_state(std::size_t s) const {
  SystemState out(params_.num_types(), policy_.num_queues);
  auto counts = state(s);
  for (std::size_t c = 0; c < classes_.size(); ++c)
    out.add(classes_[c].representative, classes_[c].queue, counts[c]);
  return out;
}

std::uint64_t TruncatedChain::key(std::span<const int> counts) const {
  std::uint64_t k = 0;
  for (auto it = counts.rbegin(); it != counts.rend(); ++it) k = k * radix_ + *it;
  return k;
}

std::optional<std::size_t> TruncatedChain::index_of(std::span<const int> counts) const {
  if (counts.size() != classes_.size()) return std::nullopt;
  for (int c : counts)
    if (c < 0 || static_cast<std::uint64_t>(c) >= radix_) return std::nullopt;
  auto it = index_.find(key(counts));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t count_states(int num_classes, const Truncation& trunc) {
  if (!trunc.bounded()) throw InputError("truncation needs a population or cell cap");
  const long cell = trunc.cell_cap > 0 ? trunc.cell_cap : trunc.total_cap;
  const long total = trunc.total_cap > 0 ? trunc.total_cap : cell * num_classes;
  // ways[t]: coordinate vectors so far summing to t
  std::vector<long double> ways(total + 1, 0.0L);
  ways[0] = 1.0L;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<long double> next(total + 1, 0.0L);
    for (long t = 0; t <= total; ++t) {
      if (ways[t] == 0.0L) continue;
      for (long x = 0; x <= cell && t + x <= total; ++x) next[t + x] += ways[t];
    }
    ways.swap(next);
  }
  long double n = 0.0L;
  for (auto w : ways) n += w;
  if (n > static_cast<long double>(std::numeric_limits<std::size_t>::max() / 2))
    return std::numeric_limits<std::size_t>::max() / 2;
  return static_cast<std::size_t>(n);
}

TruncatedChain build_chain(const MarketParams& params, const PolicySpec& policy,
                           const StrategyProfile& sigma, const Truncation& trunc,
                           const ChainOptions& opts) {
  params.validate();
  policy.validate(params.ell);
  sigma.validate(params.num_types(), policy.num_queues);
  if (trunc.total_cap < 0 || trunc.cell_cap < 0) throw InputError("caps must be >= 0");
  if (!trunc.bounded()) throw InputError("truncation needs a population or cell cap");
  const bool lump = opts.lump && trunc.cell_cap == 0;

  TruncatedChain ch;
  ch.params_ = params;
  ch.policy_ = policy;
  ch.sigma_ = sigma;
  ch.trunc_ = trunc;
  ch.classes_ = make_classes(params, policy, sigma, lump);
  ch.class_of_.assign(params.num_types() * policy.num_queues, -1);
  for (std::size_t c = 0; c < ch.classes_.size(); ++c)
    for (int i : ch.classes_[c].types) ch.class_of_[i * policy.num_queues + ch.classes_[c].queue] = c;

  const int k = ch.num_classes();
  const std::size_t n = count_states(k, trunc);
  if (n > opts.max_states)
    throw CapacityError("state space needs " + std::to_string(n) + " states, budget is " +
                            std::to_string(opts.max_states),
                        n);

  const int cell = trunc.cell_cap > 0 ? trunc.cell_cap : trunc.total_cap;
  ch.radix_ = static_cast<std::uint64_t>(cell) + 1;
  if (k * std::log2(static_cast<double>(ch.radix_)) > 63.0)
    throw CapacityError("state key does not fit 64 bits", n);

  // lexicographic enumeration, first coordinate most significant
  ch.counts_.reserve(n * k);
  std::vector<int> cur(k, 0);
  std::function<void(int, int)> rec = [&](int c, int used) {
    if (c == k) {
      ch.index_.emplace(ch.key(cur), static_cast<std::uint32_t>(ch.num_states_++));
      ch.counts_.insert(ch.counts_.end(), cur.begin(), cur.end());
      return;
    }
    int hi = cell;
    if (trunc.total_cap > 0) hi = std::min(hi, trunc.total_cap - used);
    for (int x = 0; x <= hi; ++x) {
      cur[c] = x;
      rec(c + 1, used + x);
    }
    cur[c] = 0;
  };
  rec(0, 0);

  const int nt = params.num_types();
  ch.match_prob_.assign(ch.num_states_ * nt, 0.0);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(ch.num_states_ * (3 * k + 1));
  std::vector<int> work;
  for (std::size_t s = 0; s < ch.num_states_; ++s) {
    const auto counts = ch.state(s);
    double out = 0.0;
    agent_moves(ch, counts, ch.total(s), work, [&](const std::vector<int>& to, double rate) {
      if (rate <= 0.0) return;
      trip.emplace_back(s, *ch.index_of(to), rate);
      out += rate;
    });
    const SystemState sys = ch.system_state(s);
    for (int j = 0; j < nt; ++j) {
      const DispatchDistribution d = resolve_dispatch(params, policy, sys, j);
      ch.match_prob_[s * nt + j] = d.match_probability();
      if (params.mu[j] <= 0.0) continue;
      for (const auto& m : d.matches) {
        if (m.prob <= 0.0) continue;
        work.assign(counts.begin(), counts.end());
        --work[ch.class_of(m.cell.type, m.cell.queue)];
        const double rate = params.mu[j] * m.prob;
        trip.emplace_back(s, *ch.index_of(work), rate);
        out += rate;
      }
    }
    trip.emplace_back(s, s, -out);
  }
  ch.q_.resize(ch.num_states_, ch.num_states_);
  ch.q_.setFromTriplets(trip.begin(), trip.end());
  ch.q_.makeCompressed();
  return ch;
}

StationaryDist stationary(const TruncatedChain& chain, const ChainOptions& opts) {
  const SparseMatrix& q = chain.generator();
  const long n = q.rows();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(q.nonZeros() + n);
  double scale = 0.0;
  for (int col = 0; col < q.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(q, col); it; ++it) {
      if (it.row() == it.col()) scale = std::max(scale, std::abs(it.value()));
      if (col != 0) trip.emplace_back(col, it.row(), it.value());
    }
  }
  for (long i = 0; i < n; ++i) trip.emplace_back(0, i, 1.0);
  SparseMatrix a(n, n);
  a.setFromTriplets(trip.begin(), trip.end());

  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b[0] = 1.0;
  SparseSolver solver(a, opts.direct_limit, opts.tol);
  StationaryDist dist;
  dist.probs = solver.solve(b);
  for (long i = 0; i < n; ++i)
    if (dist.probs[i] < 0.0) dist.probs[i] = 0.0;
  dist.probs /= dist.probs.sum();

  const Eigen::VectorXd r = q.transpose() * dist.probs;
  dist.residual = scale > 0.0 ? r.lpNorm<Eigen::Infinity>() / scale : 0.0;
  if (dist.residual > opts.tol)
    throw ConvergenceError("stationary residual " + std::to_string(dist.residual) +
                               " above tolerance",
                           dist.residual);
  for (long s = 0; s < n; ++s)
    if (chain.on_boundary(s)) dist.tail_mass += dist.probs[s];
  return dist;
}

int poisson_population_cap(const MarketParams& params, double eps) {
  const double r = params.total_lambda() / params.theta;
  if (r <= 0.0) return 1;
  double log_cdf = -r;  // log P(X <= 0)
  for (int n = 1;; ++n) {
    const double log_pn = -r + n * std::log(r) - std::lgamma(n + 1.0);
    const double hi = std::max(log_cdf, log_pn);
    log_cdf = hi + std::log(std::exp(log_cdf - hi) + std::exp(log_pn - hi));
    if (n >= r && log_pn - log_cdf <= std::log(eps)) return n;
  }
}

ExactSolution solve_exact(const MarketParams& params, const PolicySpec& policy,
                          const StrategyProfile& sigma, const ChainOptions& opts) {
  if (opts.truncation.bounded()) {
    TruncatedChain chain = build_chain(params, policy, sigma, opts.truncation, opts);
    StationaryDist dist = stationary(chain, opts);
    return {std::move(chain), std::move(dist)};
  }
  params.validate();
  const int bound = poisson_population_cap(params, opts.tail_target);
  int cap = std::min(bound, 16);
  while (true) {
    TruncatedChain chain = build_chain(params, policy, sigma, Truncation::population(cap), opts);
    StationaryDist dist = stationary(chain, opts);
    if (dist.tail_mass <= opts.tail_target || cap >= bound) return {std::move(chain), std::move(dist)};
    cap = std::min(bound, static_cast<int>(std::ceil(cap * 1.5)));
  }
}

double throughput(const TruncatedChain& chain, const StationaryDist& dist) {
  const auto& mu = chain.params().mu;
  double tp = 0.0;
  for (std::size_t s = 0; s < chain.num_states(); ++s) {
    double rate = 0.0;
    for (int j = 0; j < chain.params().num_types(); ++j) rate += mu[j] * chain.match_probability(s, j);
    tp += dist.probs[s] * rate;
  }
  return tp;
}

double exact_throughput(const MarketParams& params, const PolicySpec& policy,
                        const StrategyProfile& sigma, const ChainOptions& opts) {
  const ExactSolution sol = solve_exact(params, policy, sigma, opts);
  return throughput(sol.chain, sol.dist);
}

const Wait& WaitTable::at(int type, int queue) const {
  const auto& cell = cells_.at(type * num_queues_ + queue);
  if (!cell) throw InputError("wait not computed for this cell");
  return *cell;
}

TaggedPassage tagged_passage(const TruncatedChain& chain, const StationaryDist& dist,
                             TaggedAgent tagged, const ChainOptions& opts) {
  const auto& params = chain.params();
  const auto& policy = chain.policy();
  if (tagged.type < 0 || tagged.type >= params.num_types() || tagged.queue < 0 ||
      tagged.queue >= policy.num_queues)
    throw InputError("tagged agent names an unknown type or queue");

  const std::size_t n = chain.num_states();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(chain.generator().nonZeros());
  Eigen::VectorXd absorb = Eigen::VectorXd::Zero(n);
  std::vector<int> work;
  for (std::size_t s = 0; s < n; ++s) {
    const auto counts = chain.state(s);
    double out = 0.0;
    agent_moves(chain, counts, chain.total(s), work, [&](const std::vector<int>& to, double rate) {
      if (rate <= 0.0) return;
      trip.emplace_back(s, *chain.index_of(to), -rate);
      out += rate;
    });
    const SystemState sys = chain.system_state(s);
    for (int j = 0; j < params.num_types(); ++j) {
      if (params.mu[j] <= 0.0) continue;
      const DispatchDistribution d = resolve_dispatch(params, policy, sys, j, tagged);
      for (const auto& m : d.matches) {
        if (m.prob <= 0.0) continue;
        work.assign(counts.begin(), counts.end());
        --work[chain.class_of(m.cell.type, m.cell.queue)];
        const double rate = params.mu[j] * m.prob;
        trip.emplace_back(s, *chain.index_of(work), -rate);
        out += rate;
      }
      absorb[s] += params.mu[j] * d.tagged;
    }
    trip.emplace_back(s, s, out + absorb[s]);
  }

  TaggedPassage res;
  if (absorb.maxCoeff() <= 0.0) {
    res.infinite = true;
    return res;
  }
  SparseMatrix a(n, n);  // -T
  a.setFromTriplets(trip.begin(), trip.end());
  SparseSolver solver(a, opts.direct_limit, opts.tol);
  res.expected = solver.solve(Eigen::VectorXd::Ones(n));
  res.absorb_prob = solver.solve(absorb, Eigen::VectorXd::Ones(n));
  res.shortfall = (Eigen::VectorXd::Ones(n) - res.absorb_prob).cwiseAbs().maxCoeff();
  if (res.shortfall > 1e-8)
    throw ConvergenceError("tagged agent absorption shortfall " + std::to_string(res.shortfall),
                           res.shortfall);
  res.mean = dist.probs.dot(res.expected);
  return res;
}

WaitTable virtual_wait_table(const TruncatedChain& chain, const StationaryDist& dist,
                             const std::vector<Cell>& cells, const ChainOptions& opts) {
  const int nt = chain.params().num_types();
  const int nq = chain.policy().num_queues;
  WaitTable table(nt, nq);
  std::vector<Cell> todo = cells;
  if (todo.empty())
    for (int i = 0; i < nt; ++i)
      for (int q = 0; q < nq; ++q) todo.push_back({i, q});
  for (const Cell& c : todo) {
    const TaggedPassage p = tagged_passage(chain, dist, {c.type, c.queue}, opts);
    table.set(c.type, c.queue, p.infinite ? Wait::infinity() : Wait::finite(p.mean));
  }
  return table;
}

WaitTable virtual_wait_table(const MarketParams& params, const PolicySpec& policy,
                             const StrategyProfile& sigma, const ChainOptions& opts,
                             const std::vector<Cell>& cells) {
  const ExactSolution sol = solve_exact(params, policy, sigma, opts);
  return virtual_wait_table(sol.chain, sol.dist, cells, opts);
}

std::vector<double> solve_birth_death_passage(const BirthDeathSpec& spec) {
  const int n = spec.cap + 1;
  if (spec.cap < 1) throw InputError("birth-death cap must be >= 1");
  std::vector<double> lo(n, 0.0), diag(n, 0.0), hi(n, 0.0), rhs(n, 1.0);
  bool any_absorb = false;
  for (int k = 0; k < n; ++k) {
    const double up = k < spec.cap ? spec.up(k) : 0.0;
    const double down = k > 0 ? spec.down(k) : 0.0;
    const double ab = spec.absorb(k);
    if (up < 0.0 || down < 0.0 || ab < 0.0) throw InputError("birth-death rates must be >= 0");
    if (ab > 0.0) any_absorb = true;
    diag[k] = up + down + ab;
    hi[k] = -up;
    lo[k] = -down;
  }
  if (!any_absorb) throw InputError("birth-death chain has no absorption");
  // Thomas algorithm
  for (int k = 1; k < n; ++k) {
    const double w = lo[k] / diag[k - 1];
    diag[k] -= w * hi[k - 1];
    rhs[k] -= w * rhs[k - 1];
  }
  std::vector<double> tau(n);
  tau[n - 1] = rhs[n - 1] / diag[n - 1];
  for (int k = n - 2; k >= 0; --k) tau[k] = (rhs[k] - hi[k] * tau[k + 1]) / diag[k];
  for (double t : tau)
    if (!std::isfinite(t)) throw ConvergenceError("birth-death solve produced a non-finite value", 0.0);
  return tau;
}

namespace {
void require_two_types(const MarketParams& params) {
  params.validate();
  if (params.ell != 1) throw InputError("this recursion needs ell = 1");
}
}  // namespace

BirthDeathSpec yc_passage_spec(const MarketParams& params, double sigma01, int cap) {
  require_two_types(params);
  const double birth = params.lambda[1] + params.lambda[0] * sigma01;
  const double mu1 = params.mu[1];
  const double theta = params.theta;
  return {[=](int) { return birth; }, [=](int n) { return n > 0 ? mu1 + n * theta : 0.0; },
          [=](int n) { return n == 0 ? mu1 : 0.0; }, cap};
}

BirthDeathSpec w01_passage_spec(const MarketParams& params, double sigma01, int cap) {
  require_two_types(params);
  const double birth = params.lambda[1] + params.lambda[0] * sigma01;
  const double mu1 = params.mu[1];
  const double theta = params.theta;
  return {[=](int) { return birth; },
          [=](int n) { return n * theta + n * mu1 / (n + 1.0); },
          [=](int n) { return mu1 / (n + 1.0); }, cap};
}

std::vector<double> mm1m_stationary(double birth, double mu, double theta, int cap) {
  std::vector<double> logp(cap + 1, 0.0);
  for (int k = 1; k <= cap; ++k) {
    const double down = mu + k * theta;
    logp[k] = birth > 0.0 ? logp[k - 1] + std::log(birth) - std::log(down)
                          : -std::numeric_limits<double>::infinity();
  }
  const double top = *std::max_element(logp.begin(), logp.end());
  std::vector<double> p(cap + 1);
  double z = 0.0;
  for (int k = 0; k <= cap; ++k) z += p[k] = std::exp(logp[k] - top);
  for (double& x : p) x /= z;
  return p;
}

WaitGap yc_wait_gap(const MarketParams& params, double sigma01, int cap) {
  require_two_types(params);
  const double birth = params.lambda[1] + params.lambda[0] * sigma01;
  const double mu1 = params.mu[1];
  const double theta = params.theta;
  WaitGap g;
  g.p = mm1m_stationary(birth, mu1, theta, cap);
  g.yc_n = solve_birth_death_passage(yc_passage_spec(params, sigma01, cap));
  g.w01_n = solve_birth_death_passage(w01_passage_spec(params, sigma01, cap));
  for (int n = 0; n <= cap; ++n) {
    g.yc += g.p[n] * g.yc_n[n];
    g.w01 += g.p[n] * g.w01_n[n];
  }
  const double g1 = 1.0 / (birth + mu1 + theta);
  g.gap_term = g.p[0] * birth * g1 / (2.0 * (mu1 + theta));
  g.holds = g.yc - g.w01 >= g.gap_term - 1e-9;
  return g;
}

void write_generator_csv(const TruncatedChain& chain, std::ostream& out) {
  const auto& classes = chain.classes();
  for (const auto& c : classes) out << "from_" << class_label(c) << ',';
  for (const auto& c : classes) out << "to_" << class_label(c) << ',';
  out << "rate\n";
  const SparseMatrix& q = chain.generator();
  // row-major walk keeps the output in state order
  Eigen::SparseMatrix<double, Eigen::RowMajor> rows = q;
  for (int s = 0; s < rows.outerSize(); ++s) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(rows, s); it; ++it) {
      for (int x : chain.state(s)) out << x << ',';
      for (int x : chain.state(it.col())) out << x << ',';
      out << it.value() << '\n';
    }
  }
}

void write_stationary_csv(const TruncatedChain& chain, const StationaryDist& dist,
                          std::ostream& out) {
  for (const auto& c : chain.classes()) out << class_label(c) << ',';
  out << "prob\n";
  const auto old = out.precision(17);
  for (std::size_t s = 0; s < chain.num_states(); ++s) {
    for (int x : chain.state(s)) out << x << ',';
    out << dist.probs[s] << '\n';
  }
  out.precision(old);
}

}  // namespace matchq
