#pragma once

#include <functional>
#include <vector>

#include "evpanel/types.hpp"

namespace evpanel {

using Objective = std::function<double(const Vector&)>;

struct OptimOptions {
  int max_iter = 300;      // BFGS iteration budget per round
  double tol_obj = 1e-9;   // relative objective change between iterations
  double tol_step = 1e-7;  // inf-norm of the accepted step
  double fd_step = 1e-5;   // forward-difference step scale
  int nm_max_iter = 400;   // simplex polish budget per round
  int max_rounds = 10;     // restart rounds in minimize()
  bool keep_trace = true;
};

struct TracePoint {
  int iter = 0;
  double f = 0.0;
  double grad_inf = 0.0;
  double step_inf = 0.0;
};

struct OptimResult {
  Vector x;
  double f = 0.0;
  bool converged = false;
  int iterations = 0;
  int n_evals = 0;
  double grad_inf_norm = 0.0;
  std::vector<TracePoint> trace;
};

// Forward differences with per-coordinate step fd_step * (1 + |x_i|); falls
// back to a backward difference where the forward point is not finite.
Vector fd_gradient(const Objective& f, const Vector& x, double f_x,
                   double fd_step, int* n_evals = nullptr);

// Quasi-Newton minimization: BFGS on the inverse Hessian with backtracking
// line search. Objectives may return +inf outside their domain; such points
// are treated as uphill. Converged means both the relative objective change
// and the step inf-norm fell below their tolerances.
OptimResult minimize_bfgs(const Objective& f, const Vector& x0,
                          const OptimOptions& opts);

// Derivative-free simplex descent, used to polish the quasi-Newton point.
OptimResult nelder_mead(const Objective& f, const Vector& x0,
                        const OptimOptions& opts);

// Rounds of BFGS followed by a simplex polish, each restarted from the best
// point so far with fresh curvature, until a full round no longer improves
// the objective. Restarting recovers progress along long curved valleys where
// a single quasi-Newton pass stalls with a stale Hessian model.
OptimResult minimize(const Objective& f, const Vector& x0,
                     const OptimOptions& opts);

}  // namespace evpanel
