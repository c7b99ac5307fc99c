#pragma once

#include <map>

#include "evpanel/types.hpp"

namespace evpanel::detail {

inline constexpr double kLog2Pi = 1.8378770664093454836;

// Covariance structure shared by every unit with the same event date: the
// loadings other than b do not depend on the unit's own path.
struct CohortCovariance {
  Matrix L_lambda;  // T x 2, columns (L_alpha, L_delta0)
  Matrix S;         // model covariance, without jitter
  Eigen::LLT<Matrix> chol;
  double jitter = 0.0;
  double logdet = 0.0;
};

CohortCovariance build_cohort_cov(const StructuralParams& theta,
                                  const HeterogeneityModel& het,
                                  const EventDesign& design, int t0);

std::map<int, CohortCovariance> cohort_table(const StructuralParams& theta,
                                             const HeterogeneityModel& het,
                                             const EventDesign& design,
                                             const PanelData& panel);

// b_t = rho_Y b_{t-1} + X_t'beta + gamma_t, b_0 = Y0.
void path_intercept(Vector& b, const StructuralParams& theta,
                    const UnitData& unit, int T);

}  // namespace evpanel::detail
