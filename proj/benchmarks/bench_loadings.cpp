#include <benchmark/benchmark.h>

#include "bench_common.hpp"
#include "evpanel/loadings.hpp"

namespace {

void BM_BuildLoadings(benchmark::State& state) {
  const int T = static_cast<int>(state.range(0));
  const auto cfg = bench::make_config(64, T, 4);
  const auto sim = evpanel::simulate_panel(cfg, 1);
  evpanel::UnitLoadings L;
  std::size_t i = 0;
  for (auto _ : state) {
    evpanel::build_loadings_into(L, cfg.theta, cfg.design,
                                 sim.panel.units[i % sim.panel.units.size()]);
    benchmark::DoNotOptimize(L.b.data());
    ++i;
  }
}
BENCHMARK(BM_BuildLoadings)->Arg(4)->Arg(8)->Arg(16);

}  // namespace
