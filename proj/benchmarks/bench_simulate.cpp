#include <benchmark/benchmark.h>

#include "bench_common.hpp"

namespace {

void BM_SimulatePanel(benchmark::State& state) {
  const int N = static_cast<int>(state.range(0));
  const auto cfg = bench::make_config(N);
  for (auto _ : state) {
    benchmark::DoNotOptimize(evpanel::simulate_panel(cfg, 1).panel.units.size());
  }
  state.SetItemsProcessed(state.iterations() * N);
}
BENCHMARK(BM_SimulatePanel)->Arg(500)->Arg(2000)->Arg(8000)->Unit(benchmark::kMillisecond);

}  // namespace
