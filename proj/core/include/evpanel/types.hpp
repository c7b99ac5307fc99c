#pragma once

#include <Eigen/Dense>
#include <vector>

#include "evpanel/error.hpp"

namespace evpanel {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Event-study design: T post-initial calendar periods, K covariates, and the
// contiguous set of event-time indices {0, ..., J_max} carrying dynamic
// treatment effects. Units treated after the sample window carry the
// never_treated sentinel as their event date.
struct EventDesign {
  int T = 0;
  int K = 0;
  int J_max = 0;

  // Sentinel event date, far beyond any sample window. t - never_treated is
  // strongly negative for every sample period, so indicator logic needs no
  // special casing.
  static constexpr int never_treated = 1 << 30;

  int n_event_times() const { return J_max + 1; }

  bool t0_valid(int t0) const {
    return t0 == never_treated || (t0 >= 1 && t0 <= T);
  }

  // Event time j = t - t0 if it lies in {0,...,J_max}, else -1 (no effect).
  int active_event_time(int t, int t0) const {
    long j = static_cast<long>(t) - static_cast<long>(t0);
    return (j >= 0 && j <= J_max) ? static_cast<int>(j) : -1;
  }

  void validate() const;
};

// Common structural parameters. gamma holds additive time effects for
// t = 1..T; an empty vector means all zeros.
struct StructuralParams {
  double rho_Y = 0.0;
  double rho_delta = 0.0;
  Vector beta;
  double sigma2_U = 1.0;
  double sigma2_eps = 0.0;
  Vector gamma;

  double gamma_at(int t) const {
    return gamma.size() > 0 ? gamma[t - 1] : 0.0;
  }

  void validate(const EventDesign& design) const;
};

// Unit-level unobserved heterogeneity.
struct Lambda {
  double alpha = 0.0;
  double delta0 = 0.0;
};

// Gaussian correlated-random-effects law for lambda = (alpha, delta0) given
// the initial information set (Y0, X0, t0). The conditional mean is linear in
// the regressor [1, Y0, X0', cohort dummies]; cohort_values lists the t0
// value each dummy column indicates (use EventDesign::never_treated for a
// never-treated dummy).
struct HeterogeneityModel {
  Matrix mean_coef;               // 2 x (2 + K + C)
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  std::vector<int> cohort_values;

  int C() const { return static_cast<int>(cohort_values.size()); }

  Vector regressor(double y0, const Vector& x0, int t0) const;
  Eigen::Vector2d mean_lambda(double y0, const Vector& x0, int t0) const;

  void validate(const EventDesign& design) const;
};

// First-order linear-Gaussian Markov feedback law:
//   X_it = c + A_x X_{i,t-1} + a_y Y_{i,t-1} + a_d D_it + eta_it,
//   eta_it ~ N(0, Sigma_X),
// where D_it stacks the event-time indicators for j = 0..J_max. The law is
// common across units and free of lambda, so the covariate block of the joint
// likelihood separates from the outcome block.
struct FeedbackModel {
  Matrix A_x;      // K x K
  Vector a_y;      // K
  Matrix a_d;      // K x (J_max + 1)
  Vector c;        // K
  Matrix Sigma_X;  // K x K, symmetric PSD (PD wherever a density is needed)

  Vector cond_mean(const EventDesign& design, const Vector& x_prev,
                   double y_prev, int t, int t0) const;

  void validate(const EventDesign& design) const;
};

// One unit's observed history. x row t-1 holds X_it.
struct UnitData {
  double y0 = 0.0;
  Vector x0;
  int t0 = EventDesign::never_treated;
  Vector y;  // length T
  Matrix x;  // T x K
};

// Rectangular panel; all units share T and K.
struct PanelData {
  int T = 0;
  int K = 0;
  std::vector<UnitData> units;

  int N() const { return static_cast<int>(units.size()); }
  void validate(const EventDesign& design) const;
};

// Symmetry / positive-semidefiniteness helpers shared by validators.
bool is_symmetric(const Matrix& m, double tol = 1e-10);
double min_eigenvalue(const Matrix& m);

}  // namespace evpanel
