#include "evpanel/marginal.hpp"

#include <cmath>
#include <map>

#include "evpanel/loadings.hpp"
#include "evpanel/parallel.hpp"
#include "marginal_internal.hpp"

namespace evpanel {

namespace detail {

namespace {

void factor_with_jitter(CohortCovariance& c, int t0) {
  const double scale = std::max(1.0, c.S.diagonal().maxCoeff());
  for (double jit : {0.0, 1e-10 * scale, 1e-6 * scale}) {
    Matrix Sj = c.S;
    Sj.diagonal().array() += jit;
    c.chol.compute(Sj);
    if (c.chol.info() == Eigen::Success) {
      c.jitter = jit;
      c.logdet = 0.0;
      const auto& L = c.chol.matrixLLT();
      for (int t = 0; t < Sj.rows(); ++t) c.logdet += 2.0 * std::log(L(t, t));
      return;
    }
  }
  fail(ErrorCode::singular,
       "marginal outcome covariance is not positive definite for event date ",
       t0, " even with diagonal jitter");
}

}  // namespace

CohortCovariance build_cohort_cov(const StructuralParams& theta,
                                  const HeterogeneityModel& het,
                                  const EventDesign& design, int t0) {
  UnitData probe;
  probe.y0 = 0.0;
  probe.x0 = Vector::Zero(design.K);
  probe.t0 = t0;
  probe.y = Vector::Zero(design.T);
  probe.x = Matrix::Zero(design.T, design.K);
  const UnitLoadings ld = build_loadings(theta, design, probe);

  CohortCovariance c;
  c.L_lambda.resize(design.T, 2);
  c.L_lambda.col(0) = ld.L_alpha;
  c.L_lambda.col(1) = ld.L_delta0;
  c.S = c.L_lambda * het.cov * c.L_lambda.transpose();
  if (theta.sigma2_eps != 0.0 && design.J_max > 0)
    c.S.noalias() += theta.sigma2_eps * ld.L_eps * ld.L_eps.transpose();
  c.S.noalias() += theta.sigma2_U * ld.L_U * ld.L_U.transpose();
  factor_with_jitter(c, t0);
  return c;
}

void path_intercept(Vector& b, const StructuralParams& theta,
                    const UnitData& unit, int T) {
  double v = unit.y0;
  for (int t = 1; t <= T; ++t) {
    v = theta.rho_Y * v + unit.x.row(t - 1).dot(theta.beta) + theta.gamma_at(t);
    b[t - 1] = v;
  }
}

std::map<int, CohortCovariance> cohort_table(const StructuralParams& theta,
                                             const HeterogeneityModel& het,
                                             const EventDesign& design,
                                             const PanelData& panel) {
  std::map<int, CohortCovariance> table;
  for (const UnitData& u : panel.units)
    if (!table.count(u.t0))
      table.emplace(u.t0, build_cohort_cov(theta, het, design, u.t0));
  return table;
}

}  // namespace detail

namespace {

using detail::CohortCovariance;
using detail::build_cohort_cov;
using detail::cohort_table;
using detail::kLog2Pi;
using detail::path_intercept;

void check_panel_shape(const EventDesign& design, const PanelData& panel) {
  require(panel.T == design.T && panel.K == design.K, ErrorCode::dimension,
          "panel is T=", panel.T, ", K=", panel.K, " but design is T=", design.T,
          ", K=", design.K);
}

}  // namespace

double MarginalGaussian::logpdf(const Vector& y) const {
  require(y.size() == mean.size(), ErrorCode::dimension,
          "logpdf input has size ", y.size(), ", expected ", mean.size());
  const auto& L = chol.matrixLLT();
  double logdet = 0.0;
  for (int t = 0; t < mean.size(); ++t) logdet += 2.0 * std::log(L(t, t));
  const double quad =
      chol.matrixL().solve(y - mean).squaredNorm();
  return -0.5 * (mean.size() * kLog2Pi + logdet + quad);
}

MarginalGaussian marginal_of_unit(const StructuralParams& theta,
                                  const HeterogeneityModel& het,
                                  const EventDesign& design,
                                  const UnitData& unit) {
  CohortCovariance c = build_cohort_cov(theta, het, design, unit.t0);
  MarginalGaussian m;
  m.mean.resize(design.T);
  path_intercept(m.mean, theta, unit, design.T);
  m.mean.noalias() +=
      c.L_lambda * het.mean_lambda(unit.y0, unit.x0, unit.t0);
  m.cov = std::move(c.S);
  m.chol = std::move(c.chol);
  m.jitter = c.jitter;
  return m;
}

Vector loglik_units(const StructuralParams& theta, const HeterogeneityModel& het,
                    const EventDesign& design, const PanelData& panel,
                    int threads) {
  check_panel_shape(design, panel);
  const int N = panel.N(), T = design.T;
  const auto table = cohort_table(theta, het, design, panel);

  Vector terms(N);
  threads = resolve_threads(threads);
  const int workers = std::max(1, std::min(threads, N));
  struct Scratch {
    Vector r;
    Vector sol;
  };
  std::vector<Scratch> scratch(static_cast<std::size_t>(workers));
  for (auto& s : scratch) {
    s.r.resize(T);
    s.sol.resize(T);
  }
  parallel_for_indexed(N, threads, [&](int w, int i) {
    const UnitData& u = panel.units[static_cast<std::size_t>(i)];
    const CohortCovariance& c = table.at(u.t0);
    Scratch& s = scratch[static_cast<std::size_t>(w)];
    path_intercept(s.r, theta, u, T);
    s.r.noalias() += c.L_lambda * het.mean_lambda(u.y0, u.x0, u.t0);
    s.sol = u.y - s.r;
    c.chol.matrixL().solveInPlace(s.sol);
    terms[i] = -0.5 * (T * kLog2Pi + c.logdet + s.sol.squaredNorm());
  });
  return terms;
}

double loglik(const StructuralParams& theta, const HeterogeneityModel& het,
              const EventDesign& design, const PanelData& panel, int threads) {
  const Vector terms = loglik_units(theta, het, design, panel, threads);
  return pairwise_sum(terms.data(), static_cast<int>(terms.size()));
}

LambdaPosterior lambda_posterior(const StructuralParams& theta,
                                 const HeterogeneityModel& het,
                                 const EventDesign& design,
                                 const UnitData& unit) {
  CohortCovariance c = build_cohort_cov(theta, het, design, unit.t0);
  Vector mean(design.T);
  path_intercept(mean, theta, unit, design.T);
  const Eigen::Vector2d mu = het.mean_lambda(unit.y0, unit.x0, unit.t0);
  mean.noalias() += c.L_lambda * mu;

  const Matrix W = het.cov * c.L_lambda.transpose();  // 2 x T
  const Matrix Sinv_Wt = c.chol.solve(W.transpose());  // T x 2
  LambdaPosterior post;
  post.mean = mu + Sinv_Wt.transpose() * (unit.y - mean);
  post.cov = het.cov - W * Sinv_Wt;
  return post;
}

}  // namespace evpanel
