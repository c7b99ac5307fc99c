#pragma once

#include <string>
#include <vector>

#include "evpanel/optimize.hpp"
#include "evpanel/transform.hpp"
#include "evpanel/types.hpp"

namespace evpanel {

struct FitOptions {
  GammaMode gamma_mode = GammaMode::estimate;
  bool cohort_dummies = true;  // cohort dummies in the heterogeneity mean
  int multi_start = 3;
  std::uint64_t start_seed = 0;
  int max_iter = 300;
  double tol_obj = 1e-9;
  double tol_step = 1e-7;
  double fd_step = 1e-5;
  int nm_max_iter = 400;
  int threads = 0;
  bool compute_se = true;
  Vector start_packed;  // empty = data-driven default start
};

// Pooled least-squares fit of the covariate feedback law, one equation per
// covariate on the common regressor [1, X_lag, Y_lag, event-time dummies].
struct FeedbackFit {
  FeedbackModel model;
  Matrix coef;     // p x K, column k = equation for covariate k
  Matrix coef_se;  // p x K
  std::vector<std::string> colnames;
  double loglik_X = 0.0;
  int nobs = 0;
  std::vector<std::string> flags;
};

struct FitResult {
  StructuralParams theta;
  HeterogeneityModel het;
  GammaMode gamma_mode = GammaMode::none;
  Vector packed;
  double loglik_Y = 0.0;
  // Second-step feedback fit, filled by fit_full_model.
  bool has_feedback = false;
  FeedbackFit feedback;
  bool converged = false;
  int iterations = 0;
  int n_evals = 0;
  double grad_inf_norm = 0.0;
  std::vector<TracePoint> trace;
  int n_starts = 1;
  int best_start = 0;

  Vector natural;  // natural-scale parameters, aligned with param_names
  Vector se_packed;
  Vector se_natural;
  Matrix cov_packed;
  double hessian_cond = 0.0;
  std::vector<std::string> param_names;
  std::vector<std::string> flags;
};

// Cohort dummy values used in the heterogeneity mean: the distinct observed
// event dates, never-treated first, minus the leading reference category.
// Empty when disabled or when the panel has a single cohort.
std::vector<int> estimation_cohort_values(const PanelData& panel,
                                          bool cohort_dummies);

// Data-driven starting point: autoregressions at zero, beta from pooled OLS
// in first differences, shock variances from the differenced residuals, flat
// heterogeneity mean and a small isotropic Sigma_lambda.
Vector default_start(const PanelData& panel, const EventDesign& design,
                     const std::vector<int>& cohort_values, GammaMode gamma_mode);

// Flattened natural-scale parameter vector for reporting, aligned with
// param_names(): autoregressive and variance parameters, beta, estimated time
// effects, heterogeneity mean coefficients, Sigma_lambda entries.
Vector natural_params(const Vector& packed, const EventDesign& design,
                      const std::vector<int>& cohort_values, GammaMode gamma_mode);

std::vector<std::string> param_names(const EventDesign& design,
                                     const std::vector<int>& cohort_values,
                                     GammaMode gamma_mode);

// Curvature-based standard errors at the optimum of the negative integrated
// log likelihood: central-difference Hessian, inverse by LDLT with an
// eigenvalue pseudo-inverse fallback (flagged), natural-scale errors by the
// delta method.
struct SeReport {
  Vector se_packed;
  Vector se_natural;
  Matrix cov_packed;
  double hessian_cond = 0.0;
  std::vector<std::string> flags;
};

SeReport standard_errors(const Objective& negloglik, const Vector& packed,
                         const EventDesign& design,
                         const std::vector<int>& cohort_values,
                         GammaMode gamma_mode);

// Step 1: maximizes the integrated outcome likelihood over the unconstrained
// parametrization, with deterministic multi-start.
FitResult fit_outcome_model(const PanelData& panel, const EventDesign& design,
                            const FitOptions& options = {});

// Step 2 alone.
FeedbackFit fit_feedback(const PanelData& panel, const EventDesign& design);

// Both steps; the outcome fit is bitwise unaffected by the feedback step.
FitResult fit_full_model(const PanelData& panel, const EventDesign& design,
                         const FitOptions& options = {});

// Pooled OLS event-study comparator: y on [1, y_lag, x, event-time dummies,
// calendar-time dummies]. Ignores unit heterogeneity and covariate feedback.
struct NaiveFit {
  Vector coef;
  Vector se;
  std::vector<std::string> colnames;
  double rho_Y = 0.0;
  Vector beta;
  Vector delta;  // J_max + 1 event-time coefficients
  double sigma2 = 0.0;
  int nobs = 0;
};

NaiveFit naive_ols(const PanelData& panel, const EventDesign& design);

}  // namespace evpanel
