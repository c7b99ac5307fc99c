#include <benchmark/benchmark.h>

#include "bench_common.hpp"
#include "evpanel/marginal.hpp"

namespace {

void BM_LoglikByN(benchmark::State& state) {
  const int N = static_cast<int>(state.range(0));
  const auto cfg = bench::make_config(N);
  const auto sim = evpanel::simulate_panel(cfg, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        evpanel::loglik(cfg.theta, cfg.het, cfg.design, sim.panel, 1));
  }
  state.SetItemsProcessed(state.iterations() * N);
}
BENCHMARK(BM_LoglikByN)->Arg(250)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

void BM_LoglikByT(benchmark::State& state) {
  const int T = static_cast<int>(state.range(0));
  const auto cfg = bench::make_config(1000, T, 2);
  const auto sim = evpanel::simulate_panel(cfg, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        evpanel::loglik(cfg.theta, cfg.het, cfg.design, sim.panel, 1));
  }
}
BENCHMARK(BM_LoglikByT)->Arg(4)->Arg(8)->Arg(12)->Unit(benchmark::kMillisecond);

void BM_LambdaPosterior(benchmark::State& state) {
  const auto cfg = bench::make_config(256);
  const auto sim = evpanel::simulate_panel(cfg, 1);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& u = sim.panel.units[i % sim.panel.units.size()];
    benchmark::DoNotOptimize(
        evpanel::lambda_posterior(cfg.theta, cfg.het, cfg.design, u));
    ++i;
  }
}
BENCHMARK(BM_LambdaPosterior);

}  // namespace
