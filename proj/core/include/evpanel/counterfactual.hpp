#pragma once

#include "evpanel/types.hpp"

namespace evpanel {

// Parameter bundle a counterfactual engine runs on, either true values or a
// fitted model.
struct ModelParams {
  EventDesign design;
  StructuralParams theta;
  HeterogeneityModel het;
  FeedbackModel feedback;

  void validate() const;
};

enum class LambdaSource {
  prior,      // draw from the heterogeneity law given the scenario's (Y0*, X0*, t0*)
  posterior,  // draw from the unit's exact posterior given its observed path
};

// Counterfactual experiment: alternative event dates and optionally
// alternative initial conditions for the units of a reference panel.
struct Scenario {
  std::vector<int> t0_star;  // size 1 broadcasts to every unit
  Vector y0_star;            // optional override, size 0 or N
  Matrix x0_star;            // optional override, 0x0 or N x K
  int n_draws = 1000;
  std::uint64_t seed = 0;
  LambdaSource lambda_source = LambdaSource::prior;

  int t0_for(int i) const {
    return t0_star.size() == 1 ? t0_star[0] : t0_star[static_cast<std::size_t>(i)];
  }
  void validate(const EventDesign& design, int n_units) const;
};

// Forward simulation of outcome and covariate paths under a scenario. Per
// unit and draw: set initial conditions, draw lambda per lambda_source, roll
// the treatment-effect path forward, then per period draw the covariate from
// the feedback law and the outcome shock, and form the outcome.
struct ScenarioResult {
  Vector mean_path;    // T, mean outcome over units and draws
  Vector se_path;      // T, Monte Carlo standard error of mean_path
  Matrix unit_mean_y;  // N x T, per-unit mean over draws
  // Retained per-draw paths (keep_paths only): y_draws[d] is N x T,
  // x_draws[d] is N x (T*K) with unit i's row holding X_i1, ..., X_iT.
  std::vector<Matrix> y_draws;
  std::vector<Matrix> x_draws;
};

ScenarioResult simulate_scenario(const ModelParams& params, const PanelData& panel,
                                 const Scenario& scenario, int threads = 0,
                                 bool keep_paths = false);

// Three-arm decomposition under common random numbers. Arms share the lambda
// z-draw and the eps, U, and covariate-innovation draws per (unit, draw):
//   arm A: scenario event dates, feedback active;
//   arm B: never treated, feedback active;
//   arm C: scenario event dates in the outcome equation, covariate path
//          forced equal to arm B's.
// total = A - B, direct = C - B, indirect = A - C, additive draw by draw.
struct EffectCell {
  int index = 0;    // event time j or calendar time t
  int n_units = 0;  // units contributing to the cell
  double total = 0.0;
  double direct = 0.0;
  double indirect = 0.0;
  double se_total = 0.0;
  double se_direct = 0.0;
  double se_indirect = 0.0;
};

struct DecompositionResult {
  std::vector<EffectCell> by_event_time;     // ascending event time
  std::vector<EffectCell> by_calendar_time;  // t = 1..T
  int n_draws = 0;
  std::uint64_t seed = 0;
  // Per-draw ledger (keep_draws only): each entry is N x T.
  std::vector<Matrix> draw_total;
  std::vector<Matrix> draw_direct;
  std::vector<Matrix> draw_indirect;
};

DecompositionResult decompose(const ModelParams& params, const PanelData& panel,
                              const Scenario& scenario_treated, int threads = 0,
                              bool keep_draws = false);

}  // namespace evpanel
