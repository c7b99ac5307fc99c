#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "evpanel/fit.hpp"
#include "evpanel/simulate.hpp"

namespace evpanel {

// One design cell of a simulation study: a data-generating process, the
// estimator options to run on each replication, and the set of parameters
// whose recovery is tracked. Parameters are addressed by the names reported
// by the estimators ("rho_Y", "beta_1", ..., "naive_x1" for the pooled OLS
// comparator).
struct McCell {
  std::string name;
  SimConfig sim;  // sim.seed is ignored; replication seeds are derived
  FitOptions fit;
  bool run_naive = false;
  std::map<std::string, double> truth;
};

struct McRep {
  int rep = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  bool converged = false;
  std::string error;
  std::vector<std::string> names;
  Vector estimate;
  Vector se;
};

struct McParamStat {
  std::string param;
  double truth = 0.0;
  int n_ok = 0;
  double mean = 0.0;
  double bias = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  double mean_se = 0.0;  // average reported standard error
  double mc_se = 0.0;    // Monte Carlo error of the mean estimate
  double cov3se = 0.0;   // share of reps with |estimate - truth| <= 3 se
};

struct McCellResult {
  std::string cell;
  int n_reps = 0;
  int n_ok = 0;
  int n_fail = 0;
  bool failed = false;  // more than 20% of replications failed
  std::vector<McParamStat> stats;
  std::vector<McRep> reps;
};

// Runs one cell: per replication, derive a seed, simulate, fit, optionally
// run the pooled OLS comparator, and collect named estimates. Replication
// seeds depend only on (study_seed, rep), so cells that differ only in N or
// estimator options see paired draws. Replications run in parallel; each
// inner fit is single threaded.
McCellResult run_cell(const McCell& cell, int n_reps, std::uint64_t study_seed,
                      int threads = 0);

using CellCallback = std::function<void(const McCellResult&)>;

// Runs every cell in order, invoking the callback as each cell completes so
// results can be written incrementally.
std::vector<McCellResult> run_study(const std::vector<McCell>& cells, int n_reps,
                                    std::uint64_t study_seed, int threads = 0,
                                    const CellCallback& on_cell = nullptr);

}  // namespace evpanel
