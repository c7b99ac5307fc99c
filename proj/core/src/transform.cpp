#include "evpanel/transform.hpp"

#include <cmath>

namespace evpanel {

namespace {

// Largest double strictly below 1; atanh stays finite there.
const double kRhoCap = 1.0 - 1e-16;

double pack_rho(double rho, bool closed_unit, const char* name) {
  if (closed_unit) {
    require(std::abs(rho) <= 1.0, ErrorCode::domain, name, " must satisfy |", name,
            "| <= 1, got ", rho);
  } else {
    require(std::abs(rho) < 1.0, ErrorCode::domain, name, " must satisfy |", name,
            "| < 1, got ", rho);
  }
  const double r = std::clamp(rho, -kRhoCap, kRhoCap);
  return std::atanh(r);
}

}  // namespace

Vector pack_params(const StructuralParams& theta, const HeterogeneityModel& het,
                   const EventDesign& design, GammaMode gamma_mode) {
  theta.validate(design);
  het.validate(design);
  ParamLayout lay{design.T, design.K, het.C(), gamma_mode};
  Vector z(lay.dim());

  z[lay.idx_rho_Y()] = pack_rho(theta.rho_Y, false, "rho_Y");
  z[lay.idx_rho_delta()] = pack_rho(theta.rho_delta, true, "rho_delta");
  require(theta.sigma2_U > 0.0, ErrorCode::domain, "sigma2_U must be > 0 to pack, got ",
          theta.sigma2_U);
  require(theta.sigma2_eps > 0.0, ErrorCode::domain,
          "sigma2_eps must be > 0 to pack, got ", theta.sigma2_eps);
  z[lay.idx_sigma2_U()] = std::log(theta.sigma2_U);
  z[lay.idx_sigma2_eps()] = std::log(theta.sigma2_eps);
  z.segment(lay.idx_beta(), lay.K) = theta.beta;

  if (gamma_mode == GammaMode::estimate) {
    require(theta.gamma.size() == design.T, ErrorCode::dimension,
            "gamma must have length T to pack with explicit time effects");
    require(theta.gamma[0] == 0.0, ErrorCode::domain,
            "gamma_1 must be normalized to 0, got ", theta.gamma[0]);
    for (int t = 2; t <= design.T; ++t)
      z[lay.idx_gamma() + t - 2] = theta.gamma[t - 1];
  }

  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < het.mean_coef.cols(); ++c)
      z[lay.idx_mean_coef() + r * het.mean_coef.cols() + c] = het.mean_coef(r, c);

  // Log-Cholesky of the 2x2 heterogeneity covariance.
  const double c00 = het.cov(0, 0), c10 = het.cov(1, 0), c11 = het.cov(1, 1);
  require(c00 > 0.0, ErrorCode::domain,
          "Sigma_lambda must be positive definite to pack (cov(0,0) = ", c00, ")");
  const double l00 = std::sqrt(c00);
  const double l10 = c10 / l00;
  const double d = c11 - l10 * l10;
  require(d > 0.0, ErrorCode::domain,
          "Sigma_lambda must be positive definite to pack (Schur complement = ", d, ")");
  z[lay.idx_chol() + 0] = std::log(l00);
  z[lay.idx_chol() + 1] = l10;
  z[lay.idx_chol() + 2] = std::log(std::sqrt(d));
  return z;
}

std::pair<StructuralParams, HeterogeneityModel> unpack_params(
    const Vector& packed, const EventDesign& design,
    const std::vector<int>& cohort_values, GammaMode gamma_mode) {
  ParamLayout lay{design.T, design.K, static_cast<int>(cohort_values.size()), gamma_mode};
  require(packed.size() == lay.dim(), ErrorCode::dimension, "packed vector has length ",
          packed.size(), ", expected ", lay.dim());

  StructuralParams theta;
  theta.rho_Y = std::tanh(packed[lay.idx_rho_Y()]);
  theta.rho_delta = std::tanh(packed[lay.idx_rho_delta()]);
  theta.sigma2_U = std::exp(packed[lay.idx_sigma2_U()]);
  theta.sigma2_eps = std::exp(packed[lay.idx_sigma2_eps()]);
  theta.beta = packed.segment(lay.idx_beta(), lay.K);
  if (gamma_mode == GammaMode::estimate) {
    theta.gamma = Vector::Zero(design.T);
    for (int t = 2; t <= design.T; ++t)
      theta.gamma[t - 1] = packed[lay.idx_gamma() + t - 2];
  }

  HeterogeneityModel het;
  het.cohort_values = cohort_values;
  het.mean_coef.resize(2, 2 + lay.K + lay.C);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < het.mean_coef.cols(); ++c)
      het.mean_coef(r, c) = packed[lay.idx_mean_coef() + r * het.mean_coef.cols() + c];

  const double l00 = std::exp(packed[lay.idx_chol() + 0]);
  const double l10 = packed[lay.idx_chol() + 1];
  const double l11 = std::exp(packed[lay.idx_chol() + 2]);
  het.cov(0, 0) = l00 * l00;
  het.cov(1, 0) = het.cov(0, 1) = l10 * l00;
  het.cov(1, 1) = l10 * l10 + l11 * l11;
  return {theta, het};
}

}  // namespace evpanel
