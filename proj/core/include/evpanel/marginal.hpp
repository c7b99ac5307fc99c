#pragma once

#include "evpanel/types.hpp"

namespace evpanel {

// Marginal Gaussian law of one unit's outcome path with lambda, eps and U
// integrated out analytically:
//   mean = b + L_lambda * E[lambda | Y0, X0, t0]
//   cov  = L_lambda Cov(lambda) L_lambda' + sigma2_eps L_eps L_eps'
//          + sigma2_U L_U L_U'
// chol factors cov + jitter * I; jitter is 0 unless the plain factorization
// failed and a diagonal ridge was needed.
struct MarginalGaussian {
  Vector mean;
  Matrix cov;
  Eigen::LLT<Matrix> chol;
  double jitter = 0.0;

  double logpdf(const Vector& y) const;
};

MarginalGaussian marginal_of_unit(const StructuralParams& theta,
                                  const HeterogeneityModel& het,
                                  const EventDesign& design,
                                  const UnitData& unit);

// Integrated log likelihood of the outcome block, summed over units with a
// fixed pairwise reduction so the total is bitwise identical for any thread
// count. Covariance factors are shared across units with the same event date.
double loglik(const StructuralParams& theta, const HeterogeneityModel& het,
              const EventDesign& design, const PanelData& panel,
              int threads = 0);

// Per-unit contributions in unit order; loglik() is their pairwise sum.
Vector loglik_units(const StructuralParams& theta, const HeterogeneityModel& het,
                    const EventDesign& design, const PanelData& panel,
                    int threads = 0);

// Exact Gaussian posterior of lambda = (alpha, delta0) given one unit's
// observed outcome path.
struct LambdaPosterior {
  Eigen::Vector2d mean;
  Eigen::Matrix2d cov;
};

LambdaPosterior lambda_posterior(const StructuralParams& theta,
                                 const HeterogeneityModel& het,
                                 const EventDesign& design,
                                 const UnitData& unit);

}  // namespace evpanel
