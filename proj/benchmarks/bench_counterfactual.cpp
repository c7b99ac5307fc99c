#include <benchmark/benchmark.h>

#include "bench_common.hpp"
#include "evpanel/counterfactual.hpp"

namespace {

void BM_Decompose(benchmark::State& state) {
  const int draws = static_cast<int>(state.range(0));
  const auto cfg = bench::make_config(200);
  const auto sim = evpanel::simulate_panel(cfg, 1);
  evpanel::ModelParams mp{cfg.design, cfg.theta, cfg.het, cfg.feedback};
  evpanel::Scenario sc;
  sc.t0_star = {3};
  sc.n_draws = draws;
  sc.seed = 11;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        evpanel::decompose(mp, sim.panel, sc, 1, false).n_draws);
  }
  state.SetItemsProcessed(state.iterations() * draws);
}
BENCHMARK(BM_Decompose)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

}  // namespace
