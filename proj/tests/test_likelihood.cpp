#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "evpanel/loadings.hpp"
#include "evpanel/marginal.hpp"
#include "evpanel/optimize.hpp"
#include "evpanel/rng.hpp"
#include "evpanel/simulate.hpp"
#include "evpanel/transform.hpp"
#include "evpanel/types.hpp"
#include "support.hpp"

using namespace evpanel;
using testsup::make_dgp;
using testsup::random_het;
using testsup::random_theta;
using testsup::random_unit;

namespace {

// Direct outcome recursion, the oracle for everything loading-based.
Vector recurse(const StructuralParams& th, const EventDesign& design,
               const UnitData& u, double alpha, double delta0,
               const Vector& eps, const Vector& shocks) {
  const Vector delta = delta_path(delta0, eps, th.rho_delta);
  Vector y(design.T);
  double y_prev = u.y0;
  for (int t = 1; t <= design.T; ++t) {
    const int j = design.active_event_time(t, u.t0);
    double v = th.rho_Y * y_prev + alpha + u.x.row(t - 1).dot(th.beta) +
               th.gamma_at(t) + shocks[t - 1];
    if (j >= 0) v += delta[j];
    y[t - 1] = v;
    y_prev = v;
  }
  return y;
}

// Loadings extracted from the recursion by unit impulses; independent of the
// library's closed-form construction.
struct OracleLoadings {
  Vector b, L_alpha, L_delta0;
  Matrix L_eps, L_U;
};

OracleLoadings oracle_loadings(const StructuralParams& th,
                               const EventDesign& design, const UnitData& u) {
  const int T = design.T, J = design.J_max;
  OracleLoadings L;
  const Vector z_eps = Vector::Zero(J), z_u = Vector::Zero(T);
  L.b = recurse(th, design, u, 0.0, 0.0, z_eps, z_u);
  L.L_alpha = recurse(th, design, u, 1.0, 0.0, z_eps, z_u) - L.b;
  L.L_delta0 = recurse(th, design, u, 0.0, 1.0, z_eps, z_u) - L.b;
  L.L_eps = Matrix::Zero(T, J);
  for (int j = 0; j < J; ++j) {
    Vector e = z_eps;
    e[j] = 1.0;
    L.L_eps.col(j) = recurse(th, design, u, 0.0, 0.0, e, z_u) - L.b;
  }
  L.L_U = Matrix::Zero(T, T);
  for (int t = 0; t < T; ++t) {
    Vector e = z_u;
    e[t] = 1.0;
    L.L_U.col(t) = recurse(th, design, u, 0.0, 0.0, z_eps, e) - L.b;
  }
  return L;
}

// Conditional law of the outcome path given lambda, with eps and U still
// integrated out.
void cond_given_lambda(const StructuralParams& th, const EventDesign& design,
                       const UnitData& u, const Eigen::Vector2d& lam,
                       Vector& mean, Matrix& cov) {
  const OracleLoadings L = oracle_loadings(th, design, u);
  mean = L.b + L.L_alpha * lam[0] + L.L_delta0 * lam[1];
  cov = th.sigma2_eps * L.L_eps * L.L_eps.transpose() +
        th.sigma2_U * L.L_U * L.L_U.transpose();
}

double gauss_logpdf(const Vector& y, const Vector& mean, const Matrix& cov) {
  const Eigen::LLT<Matrix> llt(cov);
  const Vector z = llt.matrixL().solve(y - mean);
  double logdet = 0.0;
  for (int i = 0; i < cov.rows(); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (y.size() * std::log(2.0 * M_PI) + logdet + z.squaredNorm());
}

}  // namespace

TEST_CASE("marginal covariance worked examples") {
  const EventDesign design{3, 1, 1};
  testsup::Dgp d = make_dgp(3, 1, 1, false);

  SUBCASE("all integration channels off leaves the shock variance") {
    d.theta.rho_Y = 0.0;
    d.theta.sigma2_eps = 0.0;
    d.theta.sigma2_U = 1.7;
    d.het.cov = Eigen::Matrix2d::Zero();
    Substream s(3, {1});
    const UnitData u = random_unit(s, design, 2);
    const MarginalGaussian m = marginal_of_unit(d.theta, d.het, design, u);
    CHECK((m.cov - 1.7 * Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("never-treated units carry no effect-innovation variance") {
    Substream s(3, {2});
    const UnitData u = random_unit(s, design, EventDesign::never_treated);
    const MarginalGaussian base = marginal_of_unit(d.theta, d.het, design, u);
    StructuralParams no_eps = d.theta;
    no_eps.sigma2_eps = 0.0;
    const MarginalGaussian off = marginal_of_unit(no_eps, d.het, design, u);
    CHECK((base.cov - off.cov).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("single-observation likelihood worked example") {
  const EventDesign design{1, 1, 0};
  StructuralParams th;
  th.rho_Y = 0.0;
  th.beta = Vector::Zero(1);
  th.sigma2_U = 1.0;
  th.sigma2_eps = 0.0;
  HeterogeneityModel het;
  het.mean_coef = Matrix::Zero(2, 3);
  het.cov = Eigen::Matrix2d::Zero();
  PanelData panel;
  panel.T = 1;
  panel.K = 1;
  UnitData u;
  u.y0 = 0.0;
  u.x0 = Vector::Zero(1);
  u.t0 = EventDesign::never_treated;
  u.y = Vector::Zero(1);
  u.x = Matrix::Zero(1, 1);
  panel.units = {u};
  const double ll = loglik(th, het, design, panel);
  CHECK(std::abs(ll + 0.5 * std::log(2.0 * M_PI)) <= 1e-14);
}

TEST_CASE("marginal law matches a simulation oracle") {
  Substream s(7, {10});
  for (int cfg = 0; cfg < 3; ++cfg) {
    const int T = 2 + cfg;
    const int K = 1 + cfg % 2;
    const int J = cfg;
    const EventDesign design{T, K, J};
    StructuralParams th = random_theta(s, design, cfg == 1);
    th.rho_Y = 0.5 * std::tanh(th.rho_Y);
    HeterogeneityModel het = random_het(s, design);
    const int t0 = cfg == 0 ? 1 : (cfg == 1 ? T : EventDesign::never_treated);
    const UnitData u = random_unit(s, design, t0);

    const MarginalGaussian m = marginal_of_unit(th, het, design, u);

    const int n_draws = 200000;
    const Matrix lam_factor = psd_factor(Matrix(het.cov));
    const Eigen::Vector2d mu = het.mean_lambda(u.y0, u.x0, u.t0);
    Matrix draws(n_draws, T);
    Substream ds(7, {11, static_cast<std::uint64_t>(cfg)});
    const double eps_sd = std::sqrt(th.sigma2_eps);
    const double u_sd = std::sqrt(th.sigma2_U);
    for (int r = 0; r < n_draws; ++r) {
      const Eigen::Vector2d lam = mu + lam_factor * ds.std_normal_vec(2);
      const Vector eps = eps_sd * ds.std_normal_vec(J);
      const Vector shocks = u_sd * ds.std_normal_vec(T);
      draws.row(r) = recurse(th, design, u, lam[0], lam[1], eps, shocks);
    }
    const Vector mc_mean = draws.colwise().mean();
    const Matrix centered = draws.rowwise() - mc_mean.transpose();
    const Matrix mc_cov = centered.transpose() * centered / (n_draws - 1.0);

    CHECK((mc_mean - m.mean).cwiseAbs().maxCoeff() <=
          0.01 * (1.0 + m.mean.cwiseAbs().maxCoeff()));
    CHECK((mc_cov - m.cov).norm() <= 0.01 * m.cov.norm());
  }
}

TEST_CASE("per-unit contributions are unit densities and sum to the total") {
  const testsup::Dgp d = make_dgp(4, 1, 2);
  const SimResult sim = simulate_panel(d.sim(120, 17));
  const Vector per_unit = loglik_units(d.theta, d.het, d.design, sim.panel);
  const double total = loglik(d.theta, d.het, d.design, sim.panel);
  REQUIRE(per_unit.size() == 120);
  double acc = 0.0;
  for (int i = 0; i < 120; ++i) {
    const MarginalGaussian m = marginal_of_unit(
        d.theta, d.het, d.design, sim.panel.units[static_cast<std::size_t>(i)]);
    CHECK(std::abs(per_unit[i] - m.logpdf(sim.panel.units[static_cast<std::size_t>(i)].y)) <=
          1e-10 * (1.0 + std::abs(per_unit[i])));
    acc += per_unit[i];
  }
  CHECK(std::abs(total - acc) <= 1e-8 * (1.0 + std::abs(total)));

  const double t1 = loglik(d.theta, d.het, d.design, sim.panel, 1);
  const double t4 = loglik(d.theta, d.het, d.design, sim.panel, 4);
  CHECK(t1 == t4);
}

TEST_CASE("marginal density matches a plain gaussian evaluation") {
  const testsup::Dgp d = make_dgp(4, 2, 2);
  const SimResult sim = simulate_panel(d.sim(10, 23));
  for (const UnitData& u : sim.panel.units) {
    const MarginalGaussian m = marginal_of_unit(d.theta, d.het, d.design, u);
    const double direct = gauss_logpdf(u.y, m.mean, m.cov);
    CHECK(std::abs(m.logpdf(u.y) - direct) <= 1e-9 * (1.0 + std::abs(direct)));
  }
}

TEST_CASE("marginal covariance is numerically PSD before any ridge") {
  Substream s(29, {12});
  for (int rep = 0; rep < 50; ++rep) {
    const int T = 2 + static_cast<int>(s.uniform() * 5.0);
    const int K = 1 + static_cast<int>(s.uniform() * 2.0);
    const int J = static_cast<int>(s.uniform() * 4.0);
    const EventDesign design{T, K, J};
    const StructuralParams th = random_theta(s, design);
    const HeterogeneityModel het = random_het(s, design);
    int t0 = 1 + rep % (T + 1);
    if (t0 == T + 1) t0 = EventDesign::never_treated;
    const UnitData u = random_unit(s, design, t0);
    const MarginalGaussian m = marginal_of_unit(th, het, design, u);
    CHECK(min_eigenvalue(m.cov) >= -1e-10);
    CHECK(m.jitter == 0.0);
  }
}

TEST_CASE("likelihood prefers the truth to rho_Y perturbations") {
  const testsup::Dgp d = make_dgp(3, 1, 1);
  StructuralParams lo = d.theta, hi = d.theta;
  lo.rho_Y -= 0.2;
  hi.rho_Y += 0.2;
  int wins = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const SimResult sim =
        simulate_panel(d.sim(5000, derive_seed(99, {stream::replication,
                                                    static_cast<std::uint64_t>(rep)})));
    const double at_truth = loglik(d.theta, d.het, d.design, sim.panel);
    const double at_lo = loglik(lo, d.het, d.design, sim.panel);
    const double at_hi = loglik(hi, d.het, d.design, sim.panel);
    if (at_truth > at_lo && at_truth > at_hi) ++wins;
  }
  CHECK(wins >= 95);
}

TEST_CASE("common time shifts swap exactly with the alpha intercept") {
  testsup::Dgp d = make_dgp(4, 1, 2);
  d.theta.gamma = Vector::Zero(4);
  d.theta.gamma << 0.2, -0.1, 0.4, 0.3;
  const SimResult sim = simulate_panel(d.sim(150, 37));
  const double base = loglik(d.theta, d.het, d.design, sim.panel);

  const double shift = 0.6;
  StructuralParams shifted = d.theta;
  shifted.gamma.array() += shift;
  HeterogeneityModel het2 = d.het;
  het2.mean_coef(0, 0) -= shift;
  const double moved = loglik(shifted, het2, d.design, sim.panel);
  CHECK(std::abs(moved - base) <= 1e-8 * (1.0 + std::abs(base)));
}

TEST_CASE("likelihood gradient is stable under step halving") {
  const testsup::Dgp d = make_dgp(4, 1, 2, false);
  const SimResult sim = simulate_panel(d.sim(300, 43));
  const std::vector<int> cohorts;
  const Vector packed0 =
      pack_params(d.theta, d.het, d.design, GammaMode::none);
  const double inv_n = 1.0 / sim.panel.N();
  const Objective obj = [&](const Vector& p) {
    auto [th, het] = unpack_params(p, d.design, cohorts, GammaMode::none);
    return -loglik(th, het, d.design, sim.panel) * inv_n;
  };

  const int dim = static_cast<int>(packed0.size());
  Vector g1(dim), g2(dim);
  for (int i = 0; i < dim; ++i) {
    for (int pass = 0; pass < 2; ++pass) {
      const double h = (pass == 0 ? 1e-4 : 5e-5) * (1.0 + std::abs(packed0[i]));
      Vector up = packed0, dn = packed0;
      up[i] += h;
      dn[i] -= h;
      (pass == 0 ? g1[i] : g2[i]) = (obj(up) - obj(dn)) / (2.0 * h);
    }
  }
  for (int i = 0; i < dim; ++i) {
    CHECK(std::abs(g1[i] - g2[i]) <= 1e-5 * (1.0 + std::abs(g2[i])));
  }

  const double f0 = obj(packed0);
  const Vector fwd = fd_gradient(obj, packed0, f0, 1e-5);
  for (int i = 0; i < dim; ++i) {
    CHECK(std::abs(fwd[i] - g2[i]) <= 1e-3 * (1.0 + std::abs(g2[i])));
  }
}

TEST_CASE("degenerate heterogeneity gives a point-mass posterior") {
  testsup::Dgp d = make_dgp(4, 1, 2);
  d.het.cov = Eigen::Matrix2d::Zero();
  const SimResult sim = simulate_panel(d.sim(5, 51));
  for (const UnitData& u : sim.panel.units) {
    const LambdaPosterior post = lambda_posterior(d.theta, d.het, d.design, u);
    const Eigen::Vector2d prior = d.het.mean_lambda(u.y0, u.x0, u.t0);
    CHECK((post.mean - prior).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK(post.cov.cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("uninformative data leaves the posterior at the prior") {
  testsup::Dgp d = make_dgp(4, 1, 2);
  d.theta.sigma2_U = 1e8;
  const SimResult sim = simulate_panel(d.sim(5, 53));
  for (const UnitData& u : sim.panel.units) {
    const LambdaPosterior post = lambda_posterior(d.theta, d.het, d.design, u);
    const Eigen::Vector2d mu0 = d.het.mean_lambda(u.y0, u.x0, u.t0);
    const Eigen::Matrix2d S0 = d.het.cov;
    const Eigen::Matrix2d S0_inv = S0.inverse();
    const Eigen::Vector2d dm = mu0 - post.mean;
    const double kl = 0.5 * ((S0_inv * post.cov).trace() +
                             dm.dot(S0_inv * dm) - 2.0 +
                             std::log(S0.determinant() / post.cov.determinant()));
    CHECK(kl < 1e-3);
  }
}

TEST_CASE("posterior mean matches an importance-sampling oracle") {
  const testsup::Dgp d = make_dgp(4, 1, 2);
  const SimResult sim = simulate_panel(d.sim(3, 57));
  for (const UnitData& u : sim.panel.units) {
    const LambdaPosterior post = lambda_posterior(d.theta, d.het, d.design, u);

    Vector mean_cond;
    Matrix cov_cond;
    cond_given_lambda(d.theta, d.design, u, Eigen::Vector2d::Zero(), mean_cond,
                      cov_cond);
    const OracleLoadings L = oracle_loadings(d.theta, d.design, u);
    const Eigen::Vector2d mu0 = d.het.mean_lambda(u.y0, u.x0, u.t0);
    const Matrix lam_factor = psd_factor(Matrix(d.het.cov));
    const Eigen::LLT<Matrix> llt(cov_cond);
    double logdet = 0.0;
    for (int i = 0; i < cov_cond.rows(); ++i) {
      logdet += 2.0 * std::log(llt.matrixL()(i, i));
    }

    const int n_draws = 1000000;
    Substream s(61, {static_cast<std::uint64_t>(u.t0)});
    double wsum = 0.0;
    Eigen::Vector2d msum = Eigen::Vector2d::Zero();
    for (int r = 0; r < n_draws; ++r) {
      const Eigen::Vector2d lam = mu0 + lam_factor * s.std_normal_vec(2);
      const Vector mean = L.b + L.L_alpha * lam[0] + L.L_delta0 * lam[1];
      const Vector z = llt.matrixL().solve(u.y - mean);
      const double w = std::exp(-0.5 * z.squaredNorm());
      wsum += w;
      msum += w * lam;
    }
    const Eigen::Vector2d is_mean = msum / wsum;
    const double scale0 = std::abs(post.mean[0]) + std::sqrt(post.cov(0, 0));
    const double scale1 = std::abs(post.mean[1]) + std::sqrt(post.cov(1, 1));
    CHECK(std::abs(is_mean[0] - post.mean[0]) <= 0.01 * scale0);
    CHECK(std::abs(is_mean[1] - post.mean[1]) <= 0.01 * scale1);
  }
}
