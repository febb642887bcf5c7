#include "matchq/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace matchq {

PatienceModel PatienceModel::max_rejections(int k) {
  if (k < 0) throw InputError("patience.K must be >= 0");
  return PatienceModel(Kind::MaxRejections, k);
}

double PatienceModel::beta(long a, long b) const {
  if (a <= 0 || b <= 0) return 0.0;
  if (kind_ == Kind::Perfect || a >= b) return 1.0;
  // 1 - P(first m draws without replacement are all incompatible)
  const long draws = std::min<long>(k_ + 1, b);
  double miss = 1.0;
  for (long t = 0; t < draws; ++t) {
    miss *= static_cast<double>(b - a - t) / static_cast<double>(b - t);
    if (miss == 0.0) break;
  }
  return 1.0 - miss;
}

double MarketParams::total_lambda() const {
  return std::accumulate(lambda.begin(), lambda.end(), 0.0);
}

double MarketParams::total_mu() const { return std::accumulate(mu.begin(), mu.end(), 0.0); }

void MarketParams::validate() const {
  if (ell < 0) throw InputError("ell must be >= 0");
  const auto n = static_cast<std::size_t>(ell + 1);
  if (lambda.size() != n) throw InputError("lambda must have ell+1 entries");
  if (mu.size() != n) throw InputError("mu must have ell+1 entries");
  auto bad = [](double x) { return !std::isfinite(x) || x < 0.0; };
  if (std::any_of(lambda.begin(), lambda.end(), bad))
    throw InputError("lambda entries must be finite and >= 0");
  if (std::any_of(mu.begin(), mu.end(), bad)) throw InputError("mu entries must be finite and >= 0");
  if (!std::isfinite(theta) || theta <= 0.0) throw InputError("theta must be finite and > 0");
}

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::NCR: return "NCR";
    case PolicyKind::ACR: return "ACR";
    case PolicyKind::RCR: return "RCR";
    case PolicyKind::Custom: return "custom";
  }
  return "custom";
}

PolicyKind policy_kind_from_string(const std::string& name) {
  if (name == "NCR" || name == "ncr") return PolicyKind::NCR;
  if (name == "ACR" || name == "acr") return PolicyKind::ACR;
  if (name == "RCR" || name == "rcr") return PolicyKind::RCR;
  throw InputError("unknown policy kind '" + name + "' (expected NCR, ACR or RCR)");
}

std::vector<std::vector<int>> PolicySpec::dispatch_sets(int job_type) const {
  const auto& order = rho.at(job_type);
  std::vector<std::vector<int>> sets;
  if (!pooled_fallback) {
    for (int q : order) sets.push_back({q});
    return sets;
  }
  if (order.empty()) return sets;
  sets.push_back({order.front()});
  if (order.size() > 1) sets.emplace_back(order.begin() + 1, order.end());
  return sets;
}

bool PolicySpec::reachable(int agent_type, int queue) const {
  for (int j = 0; j < num_job_types(); ++j) {
    if (!compatible(agent_type, j)) continue;
    if (std::find(rho[j].begin(), rho[j].end(), queue) != rho[j].end()) return true;
  }
  return false;
}

void PolicySpec::validate(int ell) const {
  if (num_queues < 1) throw InputError("policy needs at least one queue");
  if (num_job_types() != ell + 1) throw InputError("policy rho must list ell+1 job types");
  for (const auto& order : rho) {
    std::vector<char> seen(num_queues, 0);
    for (int q : order) {
      if (q < 0 || q >= num_queues) throw InputError("rho names a queue outside Q");
      if (seen[q]) throw InputError("rho repeats a queue");
      seen[q] = 1;
    }
  }
}

PolicySpec make_ncr(int ell) {
  PolicySpec p;
  p.kind = PolicyKind::NCR;
  p.num_queues = 1;
  p.rho.assign(ell + 1, std::vector<int>{0});
  return p;
}

PolicySpec make_acr(int ell) {
  PolicySpec p;
  p.kind = PolicyKind::ACR;
  p.num_queues = ell + 1;
  p.rho.resize(ell + 1);
  p.rho[0] = {0};
  for (int j = 1; j <= ell; ++j) p.rho[j] = {j, 0};
  return p;
}

PolicySpec make_rcr(int ell, bool pooled) {
  PolicySpec p;
  p.kind = PolicyKind::RCR;
  p.num_queues = ell + 1;
  p.pooled_fallback = pooled;
  p.rho.resize(ell + 1);
  for (int j = 0; j <= ell; ++j) {
    p.rho[j].push_back(j);
    for (int q = 0; q <= ell; ++q)
      if (q != j) p.rho[j].push_back(q);
  }
  return p;
}

PolicySpec make_policy(PolicyKind kind, int ell, bool pooled) {
  switch (kind) {
    case PolicyKind::NCR: return make_ncr(ell);
    case PolicyKind::ACR: return make_acr(ell);
    case PolicyKind::RCR: return make_rcr(ell, pooled);
    case PolicyKind::Custom: break;
  }
  throw InputError("custom policies have no constructor");
}

StrategyProfile::StrategyProfile(int num_types, int num_queues)
    : rows_(num_types, std::vector<double>(num_queues, 0.0)) {}

StrategyProfile::StrategyProfile(std::vector<std::vector<double>> rows) : rows_(std::move(rows)) {}

StrategyProfile StrategyProfile::truthful(int num_types, int num_queues) {
  StrategyProfile s(num_types, num_queues);
  for (int i = 0; i < num_types; ++i) s.rows_[i][std::min(i, num_queues - 1)] = 1.0;
  return s;
}

StrategyProfile StrategyProfile::flexible_split(double sigma01) {
  return StrategyProfile({{1.0 - sigma01, sigma01}, {0.0, 1.0}});
}

void StrategyProfile::validate(int num_types, int num_queues) const {
  if (this->num_types() != num_types) throw InputError("sigma must have one row per agent type");
  for (const auto& row : rows_) {
    if (static_cast<int>(row.size()) != num_queues)
      throw InputError("sigma rows must have one entry per queue");
    double sum = 0.0;
    for (double x : row) {
      if (!std::isfinite(x) || x < 0.0 || x > 1.0) throw InputError("sigma entries must lie in [0,1]");
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw InputError("sigma rows must sum to 1");
  }
}

SystemState::SystemState(int num_types, int num_queues)
    : num_types_(num_types), num_queues_(num_queues),
      counts_(static_cast<std::size_t>(num_types) * num_queues, 0) {}

void SystemState::set(int type, int queue, int value) {
  if (value < 0) throw InputError("agent counts must be >= 0");
  counts_[index(type, queue)] = value;
}

int SystemState::agents_of_type(int type) const {
  int s = 0;
  for (int q = 0; q < num_queues_; ++q) s += count(type, q);
  return s;
}

int SystemState::queue_total(int queue) const {
  int s = 0;
  for (int i = 0; i < num_types_; ++i) s += count(i, queue);
  return s;
}

int SystemState::total() const { return std::accumulate(counts_.begin(), counts_.end(), 0); }

DispatchDistribution resolve_dispatch(const MarketParams& params, const PolicySpec& policy,
                                      const SystemState& state, int job_type,
                                      std::optional<TaggedAgent> tagged) {
  if (job_type < 0 || job_type >= policy.num_job_types())
    throw InputError("unknown job type " + std::to_string(job_type));

  DispatchDistribution out;
  double remaining = 1.0;
  for (const auto& set : policy.dispatch_sets(job_type)) {
    long a = 0;
    long b = 0;
    for (int q : set) {
      for (int i = 0; i < state.num_types(); ++i) {
        const int c = state.count(i, q);
        b += c;
        if (compatible(i, job_type)) a += c;
      }
    }
    const bool tagged_here =
        tagged && std::find(set.begin(), set.end(), tagged->queue) != set.end();
    const bool tagged_ok = tagged_here && compatible(tagged->type, job_type);
    if (tagged_here) ++b;
    if (tagged_ok) ++a;

    const double beta = params.patience.beta(a, b);
    out.trace.push_back({set, a, b, beta});
    if (a == 0 || beta <= 0.0) continue;

    const double hit = remaining * beta / static_cast<double>(a);
    for (int q : set) {
      for (int i = 0; i < state.num_types(); ++i) {
        const int c = state.count(i, q);
        if (c > 0 && compatible(i, job_type)) out.matches.push_back({{i, q}, hit * c});
      }
    }
    if (tagged_ok) out.tagged += hit;
    remaining *= 1.0 - beta;
    if (remaining <= 0.0) {
      remaining = 0.0;
      break;
    }
  }
  out.lost = remaining;
  return out;
}

std::vector<FullInfoRow> full_info_policy_table(const MarketParams& params, FullInfoKind kind,
                                                int bound) {
  if (bound <= 0) throw InputError("truncation bound must be > 0");
  const int n = params.num_types();
  std::vector<FullInfoRow> rows;
  std::vector<int> a(n, 0);
  while (true) {
    for (int j = 0; j < n; ++j) {
      FullInfoRow row{a, j, std::vector<double>(n + 1, 0.0)};
      auto& nu = row.action;  // nu[0] = reject, nu[i+1] = assign to type i
      const int aj = j == 0 ? 0 : a[j];
      if (kind == FullInfoKind::ACR) {
        if (aj > 0) nu[j + 1] = 1.0;
        else if (a[0] > 0) nu[1] = 1.0;
        else nu[0] = 1.0;
      } else {
        const int pool = a[0] + aj;
        if (pool == 0) {
          nu[0] = 1.0;
        } else {
          nu[1] = static_cast<double>(a[0]) / pool;
          if (j != 0) nu[j + 1] = static_cast<double>(aj) / pool;
        }
      }
      rows.push_back(std::move(row));
    }
    int k = n - 1;
    while (k >= 0 && a[k] == bound) a[k--] = 0;
    if (k < 0) break;
    ++a[k];
  }
  return rows;
}

double admissibility_violation(const FullInfoRow& row) {
  double worst = 0.0;
  double sum = 0.0;
  for (double p : row.action) {
    if (p < 0.0) worst = std::max(worst, -p);
    sum += p;
  }
  worst = std::max(worst, std::abs(sum - 1.0));
  const int n = static_cast<int>(row.agents.size());
  for (int i = 0; i < n; ++i) {
    const double p = row.action[i + 1];
    if (row.agents[i] == 0) worst = std::max(worst, std::abs(p));
    if (!compatible(i, row.job_type)) worst = std::max(worst, std::abs(p));
  }
  return worst;
}

}  // namespace matchq
