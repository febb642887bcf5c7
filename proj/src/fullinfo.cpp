#include "matchq/fullinfo.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numeric>

namespace matchq {

FullInfoSpace::FullInfoSpace(const MarketParams& params, const Truncation& trunc)
    : params_(params), trunc_(trunc) {
  params.validate();
  if (!trunc.bounded()) throw InputError("full-information space needs a truncation bound");
  const int n = params.num_types();
  const int cell = trunc.cell_cap > 0 ? trunc.cell_cap : trunc.total_cap;
  radix_.assign(n, cell + 1);
  std::size_t dense = 1;
  for (int r : radix_) dense *= r;
  lookup_.assign(dense, std::numeric_limits<std::size_t>::max());
  std::vector<int> a(n, 0);
  while (true) {
    const int total = std::accumulate(a.begin(), a.end(), 0);
    if (trunc.total_cap == 0 || total <= trunc.total_cap) {
      std::size_t key = 0;
      for (int i = 0; i < n; ++i) key = key * radix_[i] + a[i];
      lookup_[key] = states_.size();
      states_.push_back(a);
    }
    int k = n - 1;
    while (k >= 0 && a[k] == cell) a[k--] = 0;
    if (k < 0) break;
    ++a[k];
  }
}

std::size_t FullInfoSpace::index_of(const std::vector<int>& a) const {
  std::size_t key = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0 || a[i] >= radix_[i]) return std::numeric_limits<std::size_t>::max();
    key = key * radix_[i] + a[i];
  }
  return lookup_[key];
}

std::vector<int> FullInfoSpace::actions(std::size_t s, int job_type) const {
  std::vector<int> out{kReject};
  for (int i = 0; i < params_.num_types(); ++i)
    if (states_[s][i] > 0 && compatible(i, job_type)) out.push_back(i);
  return out;
}

namespace {

// Dense generator of the full-information chain plus reward rate per state.
struct Dense {
  Eigen::MatrixXd q;
  Eigen::VectorXd reward;
};

Dense dense_chain(const FullInfoSpace& space, const FullInfoPolicy& nu) {
  const auto& p = space.params();
  const int nt = p.num_types();
  const auto n = static_cast<long>(space.num_states());
  const auto& trunc = space.truncation();
  Dense d{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n)};
  for (long s = 0; s < n; ++s) {
    std::vector<int> a = space.state(s);
    const int total = std::accumulate(a.begin(), a.end(), 0);
    for (int i = 0; i < nt; ++i) {
      const bool room = (trunc.total_cap == 0 || total < trunc.total_cap) &&
                        (trunc.cell_cap == 0 || a[i] < trunc.cell_cap);
      if (room && p.lambda[i] > 0.0) {
        ++a[i];
        d.q(s, space.index_of(a)) += p.lambda[i];
        --a[i];
      }
      if (a[i] > 0) {
        const double rate = a[i] * p.theta;
        --a[i];
        d.q(s, space.index_of(a)) += rate;
        ++a[i];
      }
    }
    for (int j = 0; j < nt; ++j) {
      const auto& row = nu[s * nt + j];
      for (int i = 0; i < nt; ++i) {
        const double pr = row[i + 1];
        if (pr <= 0.0 || p.mu[j] <= 0.0) continue;
        --a[i];
        d.q(s, space.index_of(a)) += p.mu[j] * pr;
        ++a[i];
        d.reward[s] += p.mu[j] * pr;
      }
    }
    d.q(s, s) -= d.q.row(s).sum();
  }
  return d;
}

Eigen::VectorXd dense_stationary(const Eigen::MatrixXd& q) {
  Eigen::MatrixXd a = q.transpose();
  a.row(0).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(q.rows());
  b[0] = 1.0;
  return a.partialPivLu().solve(b);
}

}  // namespace

FullInfoPolicy randomize(const FullInfoSpace& space, const DeterministicPolicy& policy) {
  const int nt = space.params().num_types();
  FullInfoPolicy nu(policy.size(), std::vector<double>(nt + 1, 0.0));
  for (std::size_t k = 0; k < policy.size(); ++k) nu[k][policy[k] + 1] = 1.0;
  return nu;
}

FullInfoPolicy full_info_rule(const FullInfoSpace& space, FullInfoKind kind) {
  const int nt = space.params().num_types();
  const int bound = std::max(space.truncation().total_cap, space.truncation().cell_cap);
  const auto table = full_info_policy_table(space.params(), kind, bound);
  FullInfoPolicy nu(space.num_states() * nt);
  for (const auto& row : table) {
    const std::size_t s = space.index_of(row.agents);
    if (s < space.num_states()) nu[s * nt + row.job_type] = row.action;
  }
  return nu;
}

double full_info_throughput(const FullInfoSpace& space, const FullInfoPolicy& nu) {
  const Dense d = dense_chain(space, nu);
  return dense_stationary(d.q).dot(d.reward);
}

double full_info_throughput(const FullInfoSpace& space, const DeterministicPolicy& policy) {
  return full_info_throughput(space, randomize(space, policy));
}

std::uint64_t count_deterministic_policies(const FullInfoSpace& space) {
  const int nt = space.params().num_types();
  std::uint64_t total = 1;
  for (std::size_t s = 0; s < space.num_states(); ++s) {
    for (int j = 0; j < nt; ++j) {
      const auto k = static_cast<std::uint64_t>(space.actions(s, j).size());
      if (total > std::numeric_limits<std::uint64_t>::max() / k)
        return std::numeric_limits<std::uint64_t>::max();
      total *= k;
    }
  }
  return total;
}

EnumerationResult enumerate_full_info_policies(const FullInfoSpace& space, std::uint64_t budget) {
  const int nt = space.params().num_types();
  const std::uint64_t count = count_deterministic_policies(space);
  if (count > budget)
    throw CapacityError("policy enumeration needs " + std::to_string(count) + " evaluations",
                        static_cast<std::size_t>(std::min<std::uint64_t>(count, SIZE_MAX)));
  std::vector<std::vector<int>> choices;
  for (std::size_t s = 0; s < space.num_states(); ++s)
    for (int j = 0; j < nt; ++j) choices.push_back(space.actions(s, j));

  EnumerationResult res;
  res.policies = count;
  res.best = -std::numeric_limits<double>::infinity();
  std::uint64_t best_index = 0;
  const auto total = static_cast<long long>(count);
#pragma omp parallel
  {
    double local_best = -std::numeric_limits<double>::infinity();
    std::uint64_t local_index = 0;
    DeterministicPolicy pol(choices.size());
#pragma omp for schedule(static)
    for (long long idx = 0; idx < total; ++idx) {
      auto rest = static_cast<std::uint64_t>(idx);
      for (std::size_t k = choices.size(); k-- > 0;) {
        pol[k] = choices[k][rest % choices[k].size()];
        rest /= choices[k].size();
      }
      const double tp = full_info_throughput(space, pol);
      if (tp > local_best) {
        local_best = tp;
        local_index = static_cast<std::uint64_t>(idx);
      }
    }
#pragma omp critical
    {
      if (local_best > res.best || (local_best == res.best && local_index < best_index)) {
        res.best = local_best;
        best_index = local_index;
      }
    }
  }
  res.argbest.resize(choices.size());
  for (std::size_t k = choices.size(); k-- > 0;) {
    res.argbest[k] = choices[k][best_index % choices[k].size()];
    best_index /= choices[k].size();
  }
  return res;
}

PolicyIterationResult optimal_full_info_policy(const FullInfoSpace& space, int max_iter) {
  const auto& p = space.params();
  const int nt = p.num_types();
  const auto n = static_cast<long>(space.num_states());
  DeterministicPolicy pol(n * nt, kReject);
  PolicyIterationResult res;
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    const Dense d = dense_chain(space, randomize(space, pol));
    // unknowns: h(1..n-1), g; h(0) = 0
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (long s = 0; s < n; ++s) {
      for (long t = 1; t < n; ++t) a(s, t - 1) = d.q(s, t);
      a(s, n - 1) = -1.0;
    }
    const Eigen::VectorXd sol = a.partialPivLu().solve(Eigen::VectorXd(-d.reward));
    Eigen::VectorXd h = Eigen::VectorXd::Zero(n);
    for (long t = 1; t < n; ++t) h[t] = sol[t - 1];
    res.best = sol[n - 1];

    bool changed = false;
    for (long s = 0; s < n; ++s) {
      std::vector<int> a_s = space.state(s);
      for (int j = 0; j < nt; ++j) {
        if (p.mu[j] <= 0.0) continue;
        auto value = [&](int act) {
          if (act == kReject) return 0.0;
          --a_s[act];
          const double v = 1.0 + h[space.index_of(a_s)] - h[s];
          ++a_s[act];
          return v;
        };
        int& cur = pol[s * nt + j];
        double best_v = value(cur);
        for (int act : space.actions(s, j)) {
          const double v = value(act);
          if (v > best_v + 1e-10) {
            best_v = v;
            cur = act;
            changed = true;
          }
        }
      }
    }
    if (!changed) {
      res.policy = pol;
      res.best = full_info_throughput(space, pol);
      return res;
    }
  }
  throw ConvergenceError("policy iteration did not settle", res.best);
}

}  // namespace matchq
