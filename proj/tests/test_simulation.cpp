#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "evpanel/loadings.hpp"
#include "evpanel/simulate.hpp"
#include "evpanel/types.hpp"
#include "support.hpp"

using namespace evpanel;
using testsup::make_dgp;

namespace {

double corr(const Vector& a, const Vector& b) {
  const Vector da = a.array() - a.mean();
  const Vector db = b.array() - b.mean();
  return da.dot(db) / std::sqrt(da.squaredNorm() * db.squaredNorm());
}

bool panels_identical(const PanelData& a, const PanelData& b, int n_units) {
  if (a.T != b.T || a.K != b.K) return false;
  for (int i = 0; i < n_units; ++i) {
    const UnitData& u = a.units[static_cast<std::size_t>(i)];
    const UnitData& v = b.units[static_cast<std::size_t>(i)];
    if (u.y0 != v.y0 || u.t0 != v.t0) return false;
    if ((u.x0 - v.x0).cwiseAbs().maxCoeff() != 0.0) return false;
    if ((u.y - v.y).cwiseAbs().maxCoeff() != 0.0) return false;
    if ((u.x - v.x).cwiseAbs().maxCoeff() != 0.0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("zero-noise simulation equals the deterministic recursion") {
  testsup::Dgp d = make_dgp(5, 2, 2, false);
  d.theta.sigma2_U = 0.0;
  d.theta.sigma2_eps = 0.0;
  d.het.cov = Eigen::Matrix2d::Zero();
  d.feedback.Sigma_X = Matrix::Zero(2, 2);
  d.initial.kind = InitialLaw::Kind::fixed;
  d.initial.y0 = 0.7;
  d.initial.x0 = Vector::Constant(2, 0.4);

  const SimResult sim = simulate_panel(d.sim(40, 5));
  for (int i = 0; i < 40; ++i) {
    const UnitData& u = sim.panel.units[static_cast<std::size_t>(i)];
    CHECK(u.y0 == 0.7);
    CHECK((u.x0 - d.initial.x0).cwiseAbs().maxCoeff() == 0.0);

    const Eigen::Vector2d lam = d.het.mean_lambda(u.y0, u.x0, u.t0);
    const Vector delta =
        delta_path(lam[1], Vector::Zero(d.design.J_max), d.theta.rho_delta);
    Vector x_prev = u.x0;
    double y_prev = u.y0;
    for (int t = 1; t <= d.design.T; ++t) {
      const Vector x_t =
          d.feedback.cond_mean(d.design, x_prev, y_prev, t, u.t0);
      const int j = d.design.active_event_time(t, u.t0);
      const double y_t = d.theta.rho_Y * y_prev + lam[0] +
                         x_t.dot(d.theta.beta) + (j >= 0 ? delta[j] : 0.0) +
                         d.theta.gamma_at(t) + 0.0;
      CHECK((u.x.row(t - 1).transpose() - x_t).cwiseAbs().maxCoeff() == 0.0);
      CHECK(u.y[t - 1] == y_t);
      x_prev = x_t;
      y_prev = y_t;
    }
  }
}

TEST_CASE("fixed seed reproduces the panel for any thread count") {
  const testsup::Dgp d = make_dgp();
  const SimResult a = simulate_panel(d.sim(300, 77), 1);
  const SimResult b = simulate_panel(d.sim(300, 77), 1);
  const SimResult c = simulate_panel(d.sim(300, 77), 4);
  CHECK(panels_identical(a.panel, b.panel, 300));
  CHECK(panels_identical(a.panel, c.panel, 300));
  CHECK(a.latents.units[17].lambda.alpha == c.latents.units[17].lambda.alpha);
  CHECK((a.latents.units[17].shocks_u - c.latents.units[17].shocks_u)
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("a small panel is a prefix of a larger panel from the same seed") {
  const testsup::Dgp d = make_dgp();
  const SimResult small = simulate_panel(d.sim(50, 123));
  const SimResult big = simulate_panel(d.sim(220, 123));
  CHECK(panels_identical(small.panel, big.panel, 50));
  for (int i = 0; i < 50; ++i) {
    CHECK(small.latents.units[static_cast<std::size_t>(i)].lambda.delta0 ==
          big.latents.units[static_cast<std::size_t>(i)].lambda.delta0);
    CHECK((small.latents.units[static_cast<std::size_t>(i)].eps -
           big.latents.units[static_cast<std::size_t>(i)].eps)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
}

TEST_CASE("covariates decouple from treatment heterogeneity when beta and feedback responses are zero") {
  testsup::Dgp d = make_dgp(4, 1, 2, false);
  d.theta.beta = Vector::Zero(1);
  d.feedback.a_y = Vector::Zero(1);
  d.feedback.a_d = Matrix::Zero(1, 3);
  d.het.mean_coef(1, 1) = 0.0;
  d.het.mean_coef(1, 2) = 0.0;

  const SimResult sim = simulate_panel(d.sim(10000, 9));
  Vector delta0(10000);
  for (int i = 0; i < 10000; ++i) {
    delta0[i] = sim.latents.units[static_cast<std::size_t>(i)].lambda.delta0;
  }
  for (int t = 1; t <= 4; ++t) {
    Vector xt(10000);
    for (int i = 0; i < 10000; ++i) {
      xt[i] = sim.panel.units[static_cast<std::size_t>(i)].x(t - 1, 0);
    }
    CHECK(std::abs(corr(xt, delta0)) < 0.05);
  }
}

TEST_CASE("covariate innovations are uncorrelated with the current outcome shock") {
  const testsup::Dgp d = make_dgp(4, 1, 2);
  const SimResult sim = simulate_panel(d.sim(10000, 21));
  for (int t = 1; t <= 4; ++t) {
    Vector eta(10000), ut(10000);
    for (int i = 0; i < 10000; ++i) {
      const UnitData& u = sim.panel.units[static_cast<std::size_t>(i)];
      const Vector x_prev =
          t == 1 ? u.x0 : Vector(u.x.row(t - 2).transpose());
      const double y_prev = t == 1 ? u.y0 : u.y[t - 2];
      eta[i] = u.x(t - 1, 0) -
               d.feedback.cond_mean(d.design, x_prev, y_prev, t, u.t0)[0];
      ut[i] = sim.latents.units[static_cast<std::size_t>(i)].shocks_u[t - 1];
    }
    CHECK(std::abs(corr(eta, ut)) < 0.05);
  }
}

TEST_CASE("cohort frequencies match the configured probabilities") {
  const testsup::Dgp d = make_dgp();
  const SimResult sim = simulate_panel(d.sim(20000, 33));
  for (std::size_t c = 0; c < d.cohorts.values.size(); ++c) {
    int n = 0;
    for (const UnitData& u : sim.panel.units) {
      if (u.t0 == d.cohorts.values[c]) ++n;
    }
    CHECK(std::abs(n / 20000.0 - d.cohorts.probs[static_cast<Eigen::Index>(c)]) < 0.02);
  }
}

TEST_CASE("cohort tilts are linear in the initial conditions") {
  testsup::Dgp d = make_dgp(4, 1, 2, false);
  const int n_cat = static_cast<int>(d.cohorts.values.size());
  d.cohorts.tilt_y0 = Vector::Zero(n_cat);
  d.cohorts.tilt_y0[0] = 0.8;
  d.cohorts.tilt_x0 = Matrix::Zero(n_cat, 1);
  d.cohorts.tilt_x0(1, 0) = -0.5;

  const Vector x0 = Vector::Constant(1, 0.3);
  for (double y0 : {-1.2, 0.0, 0.7, 2.1}) {
    const Vector p = d.cohorts.category_probs(y0, x0);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
    const Vector p0 = d.cohorts.category_probs(0.0, Vector::Zero(1));
    const double lhs = std::log(p[0] / p[2]) - std::log(p0[0] / p0[2]);
    const double rhs = 0.8 * y0;
    CHECK(std::abs(lhs - rhs) <= 1e-12 * (1.0 + std::abs(rhs)));
    const double lhs_x = std::log(p[1] / p[2]) - std::log(p0[1] / p0[2]);
    CHECK(std::abs(lhs_x - (-0.5 * 0.3)) <= 1e-12);
  }

  const SimResult sim = simulate_panel(d.sim(10000, 41));
  double sum_tilted = 0.0, sum_other = 0.0;
  int n_tilted = 0, n_other = 0;
  for (const UnitData& u : sim.panel.units) {
    if (u.t0 == d.cohorts.values[0]) {
      sum_tilted += u.y0;
      ++n_tilted;
    } else {
      sum_other += u.y0;
      ++n_other;
    }
  }
  CHECK(n_tilted > 100);
  CHECK(sum_tilted / n_tilted > sum_other / n_other + 0.2);
}

TEST_CASE("gaussian initial law reproduces its first two moments") {
  const testsup::Dgp d = make_dgp(3, 1, 1);
  const SimResult sim = simulate_panel(d.sim(20000, 55));
  Matrix init(20000, 2);
  for (int i = 0; i < 20000; ++i) {
    init(i, 0) = sim.panel.units[static_cast<std::size_t>(i)].y0;
    init(i, 1) = sim.panel.units[static_cast<std::size_t>(i)].x0[0];
  }
  const Vector m = init.colwise().mean();
  CHECK(std::abs(m[0] - d.initial.mean[0]) < 0.05);
  CHECK(std::abs(m[1] - d.initial.mean[1]) < 0.05);
  const Matrix centered = init.rowwise() - m.transpose();
  const Matrix cov = centered.transpose() * centered / 19999.0;
  CHECK(std::abs(cov(0, 0) - d.initial.cov(0, 0)) < 0.05);
  CHECK(std::abs(cov(0, 1) - d.initial.cov(0, 1)) < 0.05);
  CHECK(std::abs(cov(1, 1) - d.initial.cov(1, 1)) < 0.05);
}

TEST_CASE("fixed initial law is degenerate") {
  testsup::Dgp d = make_dgp(3, 1, 1);
  d.initial.kind = InitialLaw::Kind::fixed;
  d.initial.y0 = -0.3;
  d.initial.x0 = Vector::Constant(1, 1.1);
  const SimResult sim = simulate_panel(d.sim(50, 66));
  for (const UnitData& u : sim.panel.units) {
    CHECK(u.y0 == -0.3);
    CHECK(u.x0[0] == 1.1);
  }
}

TEST_CASE("joint density worked example at T = 1") {
  const EventDesign design{1, 1, 0};
  StructuralParams th;
  th.rho_Y = 0.0;
  th.beta = Vector::Zero(1);
  th.sigma2_U = 1.0;
  th.sigma2_eps = 0.0;
  FeedbackModel fb;
  fb.A_x = Matrix::Zero(1, 1);
  fb.a_y = Vector::Zero(1);
  fb.a_d = Matrix::Zero(1, 1);
  fb.c = Vector::Zero(1);
  fb.Sigma_X = Matrix::Identity(1, 1);
  UnitData u;
  u.y0 = 0.0;
  u.x0 = Vector::Zero(1);
  u.t0 = EventDesign::never_treated;
  u.y = Vector::Zero(1);
  u.x = Matrix::Zero(1, 1);
  UnitLatent lat;
  lat.lambda = {0.0, 0.0};
  lat.eps = Vector::Zero(0);
  lat.shocks_u = Vector::Zero(1);

  const JointLogDensity jd = joint_logdensity(th, fb, design, u, lat);
  const double half_log_2pi = 0.5 * std::log(2.0 * M_PI);
  CHECK(std::abs(jd.log_y_given_x_lambda + half_log_2pi) <= 1e-14);
  CHECK(std::abs(jd.log_x_feedback + half_log_2pi) <= 1e-14);
}

TEST_CASE("covariate factor does not depend on the latent draw") {
  const testsup::Dgp d = make_dgp(4, 2, 2);
  const SimResult sim = simulate_panel(d.sim(5, 88));
  for (int i = 0; i < 5; ++i) {
    const UnitData& u = sim.panel.units[static_cast<std::size_t>(i)];
    UnitLatent a = sim.latents.units[static_cast<std::size_t>(i)];
    const JointLogDensity base = joint_logdensity(d.theta, d.feedback, d.design, u, a);
    a.lambda.alpha += 1.7;
    a.lambda.delta0 -= 2.3;
    a.eps = a.eps.array() + 0.9;
    const JointLogDensity moved = joint_logdensity(d.theta, d.feedback, d.design, u, a);
    CHECK(moved.log_x_feedback == base.log_x_feedback);
    CHECK(std::isfinite(base.log_y_given_x_lambda));
  }
}

TEST_CASE("joint density integrates to one over a (Y1, X1) grid") {
  const EventDesign design{1, 1, 0};
  StructuralParams th;
  th.rho_Y = 0.5;
  th.beta = Vector::Constant(1, 0.4);
  th.sigma2_U = 0.9;
  th.sigma2_eps = 0.0;
  FeedbackModel fb;
  fb.A_x = Matrix::Constant(1, 1, 0.3);
  fb.a_y = Vector::Constant(1, 0.25);
  fb.a_d = Matrix::Constant(1, 1, 0.15);
  fb.c = Vector::Constant(1, 0.2);
  fb.Sigma_X = Matrix::Constant(1, 1, 0.8);
  UnitData u;
  u.y0 = 0.7;
  u.x0 = Vector::Constant(1, 0.4);
  u.t0 = 1;
  u.y = Vector::Zero(1);
  u.x = Matrix::Zero(1, 1);
  UnitLatent lat;
  lat.lambda = {0.3, 0.5};
  lat.eps = Vector::Zero(0);
  lat.shocks_u = Vector::Zero(1);

  const double lo = -9.0, hi = 11.0, h = 0.025;
  const int n = static_cast<int>((hi - lo) / h);
  double total = 0.0;
  for (int iy = 0; iy <= n; ++iy) {
    const double wy = (iy == 0 || iy == n) ? 0.5 : 1.0;
    u.y[0] = lo + h * iy;
    double row = 0.0;
    for (int ix = 0; ix <= n; ++ix) {
      const double wx = (ix == 0 || ix == n) ? 0.5 : 1.0;
      u.x(0, 0) = lo + h * ix;
      const JointLogDensity jd = joint_logdensity(th, fb, design, u, lat);
      row += wx * std::exp(jd.log_y_given_x_lambda + jd.log_x_feedback);
    }
    total += wy * row;
  }
  total *= h * h;
  CHECK(std::abs(total - 1.0) <= 1e-3);
}
