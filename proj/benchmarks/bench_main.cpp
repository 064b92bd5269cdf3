#include "decompsens/decomp.hpp"
#include "decompsens/regress.hpp"
#include "decompsens/sens_r2.hpp"
#include "decompsens/simulate.hpp"

#include <benchmark/benchmark.h>

#include <map>

using namespace decompsens;

namespace {

const CompleteDataset& dataset(std::size_t n) {
  static std::map<std::size_t, CompleteDataset> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, generate(default_verification_spec(), n)).first;
  return it->second;
}

void BM_OlsFit(benchmark::State& state) {
  const auto& d = dataset(static_cast<std::size_t>(state.range(0))).data;
  DesignSpec spec;
  spec.confounders = true;
  spec.mediator = true;
  const auto design = build_design(d, spec);
  for (auto _ : state) benchmark::DoNotOptimize(ols_fit(d.outcome(), design));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_OlsFit)->Arg(1000)->Arg(20000)->Arg(200000)->Unit(benchmark::kMicrosecond);

void BM_FitSystem(benchmark::State& state) {
  const auto& d = dataset(20000).data;
  SystemOptions o;
  o.interaction = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(fit_system(d, o));
}
BENCHMARK(BM_FitSystem)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Bootstrap(benchmark::State& state) {
  const auto& d = dataset(5000).data;
  BootstrapOptions o;
  o.replicates = 200;
  o.threads = static_cast<unsigned>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(bootstrap_draws(d, o));
}
BENCHMARK(BM_Bootstrap)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_GridR2(benchmark::State& state) {
  const auto& d = dataset(5000).data;
  const auto sys = fit_system(d);
  const auto tau = initial_disparity(d);
  const auto in = r2_inputs(sys, tau, 0);
  R2GridOptions o;
  o.resolution = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(grid_r2(in, Quantity::delta, o));
}
BENCHMARK(BM_GridR2)->Arg(51)->Arg(201)->Unit(benchmark::kMillisecond);

void BM_Generate(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(generate(default_verification_spec(), 20000));
}
BENCHMARK(BM_Generate)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
