#include "evpanel/types.hpp"

#include <cmath>

namespace evpanel {

bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * (1.0 + m.cwiseAbs().maxCoeff());
}

double min_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void EventDesign::validate() const {
  require(T >= 1, ErrorCode::config, "design.T must be >= 1, got ", T);
  require(K >= 1, ErrorCode::config, "design.K must be >= 1, got ", K);
  require(J_max >= 0, ErrorCode::config, "design.J_max must be >= 0, got ", J_max);
}

void StructuralParams::validate(const EventDesign& design) const {
  require(std::isfinite(rho_Y) && std::isfinite(rho_delta), ErrorCode::config,
          "rho_Y and rho_delta must be finite");
  require(sigma2_U >= 0.0, ErrorCode::config, "sigma2_U must be >= 0, got ", sigma2_U);
  require(sigma2_eps >= 0.0, ErrorCode::config, "sigma2_eps must be >= 0, got ", sigma2_eps);
  require(beta.size() == design.K, ErrorCode::dimension,
          "beta has length ", beta.size(), ", expected K = ", design.K);
  require(gamma.size() == 0 || gamma.size() == design.T, ErrorCode::dimension,
          "gamma has length ", gamma.size(), ", expected 0 or T = ", design.T);
  require(beta.allFinite(), ErrorCode::config, "beta must be finite");
  require(gamma.size() == 0 || gamma.allFinite(), ErrorCode::config, "gamma must be finite");
}

Vector HeterogeneityModel::regressor(double y0, const Vector& x0, int t0) const {
  const int K = static_cast<int>(x0.size());
  Vector r(2 + K + C());
  r[0] = 1.0;
  r[1] = y0;
  r.segment(2, K) = x0;
  for (int c = 0; c < C(); ++c) r[2 + K + c] = (t0 == cohort_values[c]) ? 1.0 : 0.0;
  return r;
}

Eigen::Vector2d HeterogeneityModel::mean_lambda(double y0, const Vector& x0, int t0) const {
  return mean_coef * regressor(y0, x0, t0);
}

void HeterogeneityModel::validate(const EventDesign& design) const {
  require(mean_coef.rows() == 2 && mean_coef.cols() == 2 + design.K + C(),
          ErrorCode::dimension, "heterogeneity.mean_coef is ", mean_coef.rows(), "x",
          mean_coef.cols(), ", expected 2x", 2 + design.K + C());
  require(mean_coef.allFinite(), ErrorCode::config, "heterogeneity.mean_coef must be finite");
  require(is_symmetric(cov), ErrorCode::config, "heterogeneity.cov must be symmetric");
  require(min_eigenvalue(cov) >= -1e-10 * (1.0 + cov.cwiseAbs().maxCoeff()),
          ErrorCode::config, "heterogeneity.cov is not positive semidefinite");
  for (int v : cohort_values)
    require(design.t0_valid(v), ErrorCode::config,
            "heterogeneity.cohort_values contains invalid event date ", v);
}

Vector FeedbackModel::cond_mean(const EventDesign& design, const Vector& x_prev,
                                double y_prev, int t, int t0) const {
  Vector m = c + A_x * x_prev + a_y * y_prev;
  const int j = design.active_event_time(t, t0);
  if (j >= 0) m += a_d.col(j);
  return m;
}

void FeedbackModel::validate(const EventDesign& design) const {
  const int K = design.K;
  require(A_x.rows() == K && A_x.cols() == K, ErrorCode::dimension,
          "feedback.A_x is ", A_x.rows(), "x", A_x.cols(), ", expected ", K, "x", K);
  require(a_y.size() == K, ErrorCode::dimension, "feedback.a_y has length ", a_y.size(),
          ", expected ", K);
  require(a_d.rows() == K && a_d.cols() == design.n_event_times(), ErrorCode::dimension,
          "feedback.a_d is ", a_d.rows(), "x", a_d.cols(), ", expected ", K, "x",
          design.n_event_times());
  require(c.size() == K, ErrorCode::dimension, "feedback.c has length ", c.size(),
          ", expected ", K);
  require(Sigma_X.rows() == K && Sigma_X.cols() == K, ErrorCode::dimension,
          "feedback.Sigma_X is ", Sigma_X.rows(), "x", Sigma_X.cols(), ", expected ", K,
          "x", K);
  require(A_x.allFinite() && a_y.allFinite() && a_d.allFinite() && c.allFinite() &&
              Sigma_X.allFinite(),
          ErrorCode::config, "feedback coefficients must be finite");
  require(is_symmetric(Sigma_X), ErrorCode::config, "feedback.Sigma_X must be symmetric");
  require(min_eigenvalue(Sigma_X) >= -1e-10 * (1.0 + Sigma_X.cwiseAbs().maxCoeff()),
          ErrorCode::config, "feedback.Sigma_X is not positive semidefinite");
}

void PanelData::validate(const EventDesign& design) const {
  require(T == design.T && K == design.K, ErrorCode::dimension,
          "panel dimensions (T=", T, ", K=", K, ") do not match design (T=", design.T,
          ", K=", design.K, ")");
  for (int i = 0; i < N(); ++i) {
    const UnitData& u = units[i];
    require(u.y.size() == T, ErrorCode::dimension, "unit ", i, ": y has length ",
            u.y.size(), ", expected T = ", T);
    require(u.x.rows() == T && u.x.cols() == K, ErrorCode::dimension, "unit ", i,
            ": x is ", u.x.rows(), "x", u.x.cols(), ", expected ", T, "x", K);
    require(u.x0.size() == K, ErrorCode::dimension, "unit ", i, ": x0 has length ",
            u.x0.size(), ", expected K = ", K);
    require(design.t0_valid(u.t0), ErrorCode::data, "unit ", i, ": invalid event date ",
            u.t0);
    require(std::isfinite(u.y0) && u.x0.allFinite() && u.y.allFinite() && u.x.allFinite(),
            ErrorCode::data, "unit ", i, ": non-finite values");
  }
}

}  // namespace evpanel
