#pragma once

#include "evpanel/types.hpp"

namespace evpanel {

// Treatment-effect path (delta_0, ..., delta_J) from the event-time AR(1)
// recursion delta_j = rho_delta * delta_{j-1} + eps_j.
Vector delta_path(double delta0, const Vector& eps, double rho_delta);

// Stacked closed-form solution of the outcome recursion. For every
// realization of (lambda, eps, U) and a fixed covariate path,
//   Y = b + L_alpha * alpha + L_delta0 * delta0 + L_eps * eps + L_U * U,
// where b collects rho_Y^t * Y0 and the discounted sums of X_s'beta + gamma_s.
struct UnitLoadings {
  Vector b;         // T
  Vector L_alpha;   // T
  Vector L_delta0;  // T
  Matrix L_eps;     // T x J_max
  Matrix L_U;       // T x T, lower triangular, unit diagonal

  void resize(int T, int J_max);
};

UnitLoadings build_loadings(const StructuralParams& theta, const EventDesign& design,
                            const UnitData& unit);

// In-place variant for hot loops; `out` keeps its storage across calls.
void build_loadings_into(UnitLoadings& out, const StructuralParams& theta,
                         const EventDesign& design, const UnitData& unit);

}  // namespace evpanel
