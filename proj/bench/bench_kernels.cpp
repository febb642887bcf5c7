// Serial reference kernels against their OpenMP counterparts.

#include "matchq/ctmc.hpp"
#include "matchq/experiments.hpp"
#include "matchq/fullinfo.hpp"
#include "matchq/sim.hpp"

#include <benchmark/benchmark.h>
#include <omp.h>

using namespace matchq;

namespace {

MarketParams market() { return fig4_params(30.0); }

void BM_ReplicateSerial(benchmark::State& state) {
  SimOptions o;
  o.horizon = 20.0;
  for (auto _ : state) {
    auto r = replicate_throughput_serial(market(), make_acr(1), StrategyProfile::truthful(2, 2), o,
                                         static_cast<int>(state.range(0)), 7);
    benchmark::DoNotOptimize(r.mean);
  }
}

void BM_ReplicateParallel(benchmark::State& state) {
  SimOptions o;
  o.horizon = 20.0;
  for (auto _ : state) {
    auto r = replicate_throughput(market(), make_acr(1), StrategyProfile::truthful(2, 2), o,
                                  static_cast<int>(state.range(0)), 7);
    benchmark::DoNotOptimize(r.mean);
  }
}

// Policy enumeration with one thread versus every available thread.
void BM_Enumerate(benchmark::State& state) {
  const int threads = state.range(0) == 0 ? omp_get_max_threads() : 1;
  const FullInfoSpace space(market(), Truncation::population(2));
  omp_set_num_threads(threads);
  for (auto _ : state) benchmark::DoNotOptimize(enumerate_full_info_policies(space).best);
  omp_set_num_threads(omp_get_num_procs());
  state.SetLabel(std::to_string(threads) + " threads");
}

void BM_CoupledFlexibility(benchmark::State& state) {
  const int threads = state.range(0) == 0 ? omp_get_max_threads() : 1;
  LemmaOptions lo;
  omp_set_num_threads(threads);
  for (auto _ : state) {
    auto e = coupled_value_of_flexibility(lo.params, make_acr(1), StrategyProfile::truthful(2, 2),
                                          lemma_state(make_acr(1), {2, 1}), 1, 1.0, 2000, 3);
    benchmark::DoNotOptimize(e.d1);
  }
  omp_set_num_threads(omp_get_num_procs());
  state.SetLabel(std::to_string(threads) + " threads");
}

void BM_StationaryDirect(benchmark::State& state) {
  ChainOptions o;
  o.truncation = Truncation::population(static_cast<int>(state.range(0)));
  o.direct_limit = 1 << 30;
  const auto chain = build_chain(market(), make_rcr(1, false), StrategyProfile::flexible_split(0.5),
                                 o.truncation, o);
  for (auto _ : state) benchmark::DoNotOptimize(stationary(chain, o).residual);
  state.SetLabel(std::to_string(chain.num_states()) + " states");
}

void BM_StationaryIterative(benchmark::State& state) {
  ChainOptions o;
  o.truncation = Truncation::population(static_cast<int>(state.range(0)));
  o.direct_limit = 0;
  const auto chain = build_chain(market(), make_rcr(1, false), StrategyProfile::flexible_split(0.5),
                                 o.truncation, o);
  for (auto _ : state) benchmark::DoNotOptimize(stationary(chain, o).residual);
  state.SetLabel(std::to_string(chain.num_states()) + " states");
}

}  // namespace

BENCHMARK(BM_ReplicateSerial)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ReplicateParallel)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Enumerate)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CoupledFlexibility)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_StationaryDirect)->Arg(15)->Arg(25)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_StationaryIterative)->Arg(15)->Arg(25)->Arg(40)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
