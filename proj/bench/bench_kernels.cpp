// Serial reference versus OpenMP kernels.

#include <benchmark/benchmark.h>

#include "powerspec/spectrum_mc.hpp"
#include "powerspec/transfer_operator.hpp"

using namespace powerspec;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::parallel : Exec::serial; }

void BM_Bartlett(benchmark::State& state) {
  BartlettSettings s;
  s.n_per_segment = 1 << 16;
  s.segments = 8;
  s.blocks = 16;
  s.exec = exec_of(state);
  const auto grid = guarded_grid(32);
  const auto v = Observable::cosine({0.0, 1.0});
  for (auto _ : state) {
    benchmark::DoNotOptimize(bartlett_spectrum(v, MapParams{0.3}, grid, s));
  }
  state.SetItemsProcessed(state.iterations() * s.n_per_segment * s.segments);
}
BENCHMARK(BM_Bartlett)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_InducedMC(benchmark::State& state) {
  InducedSettings s;
  s.n_returns = 1 << 14;
  s.segments = 8;
  s.blocks = 16;
  s.exec = exec_of(state);
  const auto grid = guarded_grid(32);
  const auto v = Observable::cosine({0.0, 1.0});
  for (auto _ : state) {
    benchmark::DoNotOptimize(induced_spectrum_mc(v, MapParams{0.3}, grid, s));
  }
}
BENCHMARK(BM_InducedMC)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_BuildCache(benchmark::State& state) {
  CacheOptions opt;
  opt.exec = exec_of(state);
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_cache(MapParams{0.5}, 128, 5000, opt));
  }
}
BENCHMARK(BM_BuildCache)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_OperatorAssembly(benchmark::State& state) {
  const auto cache = build_cache(MapParams{0.5}, 256, 10000);
  const auto density = invariant_density(cache);
  const auto prep = prepare_observable(cache, Observable::cosine({0.0, 1.0}));
  for (auto _ : state) {
    const TwistedOperator op(cache, density, 2.0, &prep, exec_of(state));
    benchmark::DoNotOptimize(op.mean_square());
  }
}
BENCHMARK(BM_OperatorAssembly)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_SeriesPerFrequency(benchmark::State& state) {
  const auto cache = build_cache(MapParams{0.3}, 256, 10000);
  const auto density = invariant_density(cache);
  const auto prep = prepare_observable(cache, Observable::cosine({0.0, 1.0}));
  for (auto _ : state) {
    const TwistedOperator op(cache, density, 2.0, &prep, exec_of(state));
    benchmark::DoNotOptimize(induced_spectrum_series(op));
  }
}
BENCHMARK(BM_SeriesPerFrequency)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
