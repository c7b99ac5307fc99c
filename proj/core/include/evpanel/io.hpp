#pragma once

#include <string>
#include <vector>

#include "evpanel/counterfactual.hpp"
#include "evpanel/fit.hpp"
#include "evpanel/montecarlo.hpp"
#include "evpanel/simulate.hpp"
#include "evpanel/types.hpp"

namespace evpanel {

// Shortest exact decimal form of a double ("%.17g"); every number written to
// disk goes through this so files round trip bit for bit.
std::string fmt_double(double v);

// Long-form panel CSV with header unit,t,y,x1..xK,t0: one t = 0 row per unit
// carrying the initial conditions, then unit-major rows for t = 1..T. On
// disk t0 = 0 means never treated; it maps to the internal sentinel.
void write_panel_csv(const std::string& path, const PanelData& panel);
PanelData read_panel_csv(const std::string& path);

// Latent draws, one row per unit: unit,alpha,delta0,eps1..epsJ,u1..uT.
void write_latents_csv(const std::string& path, const LatentRecord& latents);

// Estimation configuration and commands.
struct EstimateConfig {
  EventDesign design;
  FitOptions options;
};

struct ScenarioConfig {
  Scenario scenario;
  // True when the scenario carries its own initial conditions (y0_star and
  // x0_star both present), so it can run without an observed panel.
  bool has_units = false;
};

struct McConfig {
  int n_reps = 0;
  std::uint64_t seed = 0;
  std::vector<McCell> cells;
};

SimConfig parse_sim_config(const std::string& path);
EstimateConfig parse_estimate_config(const std::string& path);
ScenarioConfig parse_scenario_config(const std::string& path,
                                     const EventDesign& design);
McConfig parse_mc_config(const std::string& path);

// Fit report round trip. The report stores natural-scale estimates, standard
// errors, both likelihood blocks, and convergence metadata as JSON; numeric
// values survive the round trip exactly.
void write_fit_report(const std::string& path, const FitResult& fit,
                      const EventDesign& design, const std::string& trace_file);

struct FitReport {
  EventDesign design;
  GammaMode gamma_mode = GammaMode::none;
  StructuralParams theta;
  HeterogeneityModel het;
  bool has_feedback = false;
  FeedbackModel feedback;
  double loglik_Y = 0.0;
  double loglik_X = 0.0;
  bool converged = false;
};

FitReport read_fit_report(const std::string& path);

void write_trace_csv(const std::string& path,
                     const std::vector<TracePoint>& trace);

// Decomposition tables: event-time rows j,total,direct,indirect,se_total,
// se_direct,se_indirect and the calendar-time variant, each preceded by a
// '#' metadata block recording seed, draw count, and arm definitions.
void write_decomposition_csv(const std::string& event_path,
                             const std::string& calendar_path,
                             const DecompositionResult& result,
                             const Scenario& scenario);

// Scenario path summary: t,mean_y,se_mean_y rows in the main file and the
// per-unit mean outcomes in units_path.
void write_scenario_csv(const std::string& path, const std::string& units_path,
                        const ScenarioResult& result, const Scenario& scenario);

// Incremental study table: header first, one row per (cell, parameter)
// appended and flushed as each cell completes, so an interrupted run leaves
// a valid prefix.
class McCsvWriter {
 public:
  explicit McCsvWriter(const std::string& path);
  ~McCsvWriter();
  void append(const McCellResult& cell);

 private:
  struct Impl;
  Impl* impl_;
};

}  // namespace evpanel
