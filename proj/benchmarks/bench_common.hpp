#pragma once

#include "evpanel/simulate.hpp"

namespace bench {

using namespace evpanel;

// Moderate-persistence generating process shared by all benchmarks.
inline SimConfig make_config(int N, int T = 6, int J_max = 2) {
  SimConfig cfg;
  cfg.N = N;
  cfg.design = {T, 1, J_max};
  cfg.theta.rho_Y = 0.6;
  cfg.theta.rho_delta = 0.8;
  cfg.theta.beta = Vector::Constant(1, 0.5);
  cfg.theta.sigma2_U = 1.0;
  cfg.theta.sigma2_eps = 0.15;
  cfg.het.mean_coef = Matrix::Zero(2, 3);
  cfg.het.mean_coef << 0.2, 0.1, 0.05, 0.1, 0.05, 0.0;
  cfg.het.cov = Matrix::Zero(2, 2);
  cfg.het.cov << 0.25, 0.05, 0.05, 0.16;
  cfg.feedback.A_x = Matrix::Constant(1, 1, 0.5);
  cfg.feedback.a_y = Vector::Constant(1, 0.2);
  cfg.feedback.a_d = Matrix::Zero(1, J_max + 1);
  cfg.feedback.a_d(0, 0) = 0.1;
  cfg.feedback.c = Vector::Constant(1, 0.1);
  cfg.feedback.Sigma_X = Matrix::Constant(1, 1, 0.5);
  cfg.initial.kind = InitialLaw::Kind::gaussian;
  cfg.initial.mean = Vector::Zero(2);
  cfg.initial.cov = Matrix::Identity(2, 2);
  cfg.initial.cov(0, 1) = cfg.initial.cov(1, 0) = 0.2;
  cfg.cohorts.values = {2, 3, std::min(4, T), EventDesign::never_treated};
  cfg.cohorts.probs = Vector::Constant(4, 0.25);
  cfg.seed = 7;
  return cfg;
}

}  // namespace bench
