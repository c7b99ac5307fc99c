#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <string>

#include "evpanel/error.hpp"
#include "evpanel/fit.hpp"
#include "evpanel/marginal.hpp"
#include "evpanel/montecarlo.hpp"
#include "evpanel/rng.hpp"
#include "evpanel/simulate.hpp"
#include "evpanel/transform.hpp"
#include "support.hpp"

using namespace evpanel;
using testsup::make_dgp;

namespace {

FitOptions quick_options() {
  FitOptions opt;
  opt.gamma_mode = GammaMode::none;
  opt.cohort_dummies = false;
  opt.multi_start = 1;
  opt.compute_se = false;
  return opt;
}

double packed_dist(const Vector& a, const Vector& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

// Distance between structural estimates on the natural scale, where the
// packed coordinates near a saturation cap would exaggerate tiny likelihood
// differences.
double theta_dist(const StructuralParams& a, const StructuralParams& b) {
  double dist = std::abs(a.rho_Y - b.rho_Y);
  dist = std::max(dist, std::abs(a.rho_delta - b.rho_delta));
  dist = std::max(dist, std::abs(a.sigma2_U - b.sigma2_U));
  dist = std::max(dist, std::abs(a.sigma2_eps - b.sigma2_eps));
  dist = std::max(dist, (a.beta - b.beta).cwiseAbs().maxCoeff());
  return dist;
}

}  // namespace

TEST_CASE("outcome fit recovers rho_Y with degenerate heterogeneity") {
  testsup::Dgp d = make_dgp(6, 1, 2, false);
  d.theta.rho_Y = 0.5;
  d.theta.beta = Vector::Zero(1);
  d.theta.sigma2_eps = 0.0;
  d.het.cov = Eigen::Matrix2d::Zero();

  FitOptions opt = quick_options();
  opt.max_iter = 80;
  opt.nm_max_iter = 80;

  double mae = 0.0;
  const int n_reps = 20;
  for (int rep = 0; rep < n_reps; ++rep) {
    const SimResult sim = simulate_panel(
        d.sim(4000, derive_seed(301, {stream::replication,
                                      static_cast<std::uint64_t>(rep)})));
    const FitResult fit = fit_outcome_model(sim.panel, d.design, opt);
    mae += std::abs(fit.theta.rho_Y - 0.5);
  }
  mae /= n_reps;
  MESSAGE("rho_Y mean absolute error over ", n_reps, " replications: ", mae);
  CHECK(mae <= 0.03);
}

TEST_CASE("starting at the truth converges and does no worse than the default start") {
  const testsup::Dgp d = make_dgp(5, 1, 2, false);
  const SimResult sim = simulate_panel(d.sim(1500, 401));

  FitOptions opt = quick_options();
  const FitResult from_default = fit_outcome_model(sim.panel, d.design, opt);

  FitOptions at_truth = opt;
  at_truth.start_packed =
      pack_params(d.theta, d.het, d.design, GammaMode::none);
  const FitResult from_truth = fit_outcome_model(sim.panel, d.design, at_truth);

  CHECK(from_truth.converged);
  CHECK(theta_dist(from_truth.theta, d.theta) <=
        theta_dist(from_default.theta, d.theta) + 1e-6);
  CHECK(from_truth.loglik_Y >= from_default.loglik_Y - 1e-6 * (1.0 + std::abs(from_default.loglik_Y)));
}

TEST_CASE("step-1 estimates separate from the feedback block") {
  const testsup::Dgp d = make_dgp(4, 1, 2);
  const SimResult sim = simulate_panel(d.sim(400, 407));
  FitOptions opt = quick_options();

  const FitResult alone = fit_outcome_model(sim.panel, d.design, opt);
  const FitResult joint = fit_full_model(sim.panel, d.design, opt);
  CHECK(packed_dist(alone.packed, joint.packed) == 0.0);
  CHECK(alone.loglik_Y == joint.loglik_Y);
  CHECK(joint.has_feedback);

  testsup::Dgp other = d;
  other.feedback.a_y = Vector::Constant(1, -0.4);
  other.feedback.c = Vector::Constant(1, 0.7);
  SimResult regen = simulate_panel(other.sim(400, 999));
  for (std::size_t i = 0; i < regen.panel.units.size(); ++i) {
    regen.panel.units[i] = sim.panel.units[i];
  }
  const FitResult replayed = fit_outcome_model(regen.panel, d.design, opt);
  CHECK(packed_dist(alone.packed, replayed.packed) == 0.0);
}

TEST_CASE("objective is invariant under a pack round trip") {
  const testsup::Dgp d = make_dgp(4, 1, 2, false);
  const SimResult sim = simulate_panel(d.sim(200, 409));
  const double base = loglik(d.theta, d.het, d.design, sim.panel);
  const Vector packed = pack_params(d.theta, d.het, d.design, GammaMode::none);
  auto [th2, het2] = unpack_params(packed, d.design, {}, GammaMode::none);
  const double round = loglik(th2, het2, d.design, sim.panel);
  CHECK(std::abs(round - base) <= 1e-8 * (1.0 + std::abs(base)));
}

TEST_CASE("feedback fit recovers the covariate law") {
  testsup::Dgp d = make_dgp(6, 1, 2, false);
  d.feedback.A_x = Matrix::Identity(1, 1) * 0.5;
  d.feedback.a_y = Vector::Constant(1, 0.3);
  d.feedback.a_d = Matrix::Zero(1, 3);
  const SimResult sim = simulate_panel(d.sim(5000, 411));
  const FeedbackFit fit = fit_feedback(sim.panel, d.design);

  CHECK(std::abs(fit.model.A_x(0, 0) - 0.5) <= 0.02);
  CHECK(std::abs(fit.model.a_y[0] - 0.3) <= 0.02);
  CHECK(std::abs(fit.model.c[0] - d.feedback.c[0]) <= 0.02);
  for (int j = 0; j <= 2; ++j) CHECK(std::abs(fit.model.a_d(0, j)) <= 0.02);
  CHECK(std::abs(fit.model.Sigma_X(0, 0) - 0.5) <= 0.02);
  CHECK(fit.nobs == 5000 * 6);
}

TEST_CASE("feedback t-statistics have roughly nominal size without feedback") {
  testsup::Dgp d = make_dgp(4, 1, 1, false);
  d.feedback.a_y = Vector::Zero(1);
  d.feedback.a_d = Matrix::Zero(1, 2);

  int n_tests = 0, n_rejects = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const SimResult sim = simulate_panel(
        d.sim(800, derive_seed(317, {stream::replication,
                                     static_cast<std::uint64_t>(rep)})));
    const FeedbackFit fit = fit_feedback(sim.panel, d.design);
    for (std::size_t c = 0; c < fit.colnames.size(); ++c) {
      const std::string& name = fit.colnames[c];
      if (name.rfind("y_lag", 0) == 0 || name.rfind("d", 0) == 0) {
        const double t = fit.coef(static_cast<Eigen::Index>(c), 0) /
                         fit.coef_se(static_cast<Eigen::Index>(c), 0);
        ++n_tests;
        if (std::abs(t) > 2.0) ++n_rejects;
      }
    }
  }
  REQUIRE(n_tests == 50 * 3);
  CHECK(n_rejects <= static_cast<int>(0.12 * n_tests));
}

TEST_CASE("duplicated covariate columns produce a rank error naming both") {
  testsup::Dgp d = make_dgp(4, 2, 1);
  const SimResult sim = simulate_panel(d.sim(200, 421));
  PanelData broken = sim.panel;
  for (UnitData& u : broken.units) {
    u.x.col(1) = u.x.col(0);
    u.x0[1] = u.x0[0];
  }
  try {
    fit_feedback(broken, d.design);
    FAIL("expected a rank error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::rank_deficient);
    const std::string msg = e.what();
    CHECK(msg.find("x1_lag") != std::string::npos);
    CHECK(msg.find("x2_lag") != std::string::npos);
  }
}

TEST_CASE("standard errors scale like one over root N") {
  testsup::Dgp d = make_dgp(4, 1, 1, false);
  FitOptions opt = quick_options();
  opt.compute_se = true;
  opt.max_iter = 120;
  opt.nm_max_iter = 120;

  std::vector<double> ratios;
  for (int rep = 0; rep < 3; ++rep) {
    const std::uint64_t seed =
        derive_seed(331, {stream::replication, static_cast<std::uint64_t>(rep)});
    const SimResult small = simulate_panel(d.sim(1000, seed));
    const SimResult big = simulate_panel(d.sim(2000, seed));
    const FitResult fs = fit_outcome_model(small.panel, d.design, opt);
    const FitResult fb = fit_outcome_model(big.panel, d.design, opt);
    REQUIRE(fs.se_packed.size() == fb.se_packed.size());
    for (Eigen::Index i = 0; i < fs.se_packed.size(); ++i) {
      CHECK(fs.se_packed[i] > 0.0);
      ratios.push_back(fb.se_packed[i] / fs.se_packed[i]);
    }
    CHECK(fs.theta.sigma2_U > 0.0);
  }
  std::sort(ratios.begin(), ratios.end());
  const double median = ratios[ratios.size() / 2];
  MESSAGE("median SE ratio at doubled N: ", median);
  const double expected = 1.0 / std::sqrt(2.0);
  CHECK(median >= expected * 0.85);
  CHECK(median <= expected * 1.15);
}

TEST_CASE("study harness records per-parameter summaries") {
  const testsup::Dgp d = make_dgp(4, 1, 1, false);
  McCell cell;
  cell.name = "smoke";
  cell.sim = d.sim(400, 0);
  cell.fit = quick_options();
  cell.fit.max_iter = 60;
  cell.fit.nm_max_iter = 60;
  cell.run_naive = true;
  cell.truth = {{"rho_Y", d.theta.rho_Y}, {"beta_1", d.theta.beta[0]}};

  SUBCASE("a single replication yields degenerate spread columns") {
    const McCellResult res = run_cell(cell, 1, 501);
    CHECK(res.n_reps == 1);
    CHECK(res.n_ok == 1);
    CHECK(!res.failed);
    bool saw_rho = false;
    for (const McParamStat& st : res.stats) {
      if (st.param == "rho_Y") {
        CHECK(st.n_ok == 1);
        CHECK(st.mc_se == 0.0);
        CHECK(st.rmse == doctest::Approx(std::abs(st.bias)).epsilon(1e-12));
        saw_rho = true;
      }
    }
    CHECK(saw_rho);
  }

  SUBCASE("replication failures are recorded and flagged past 20 percent") {
    McCell fragile = cell;
    fragile.sim.N = 5;
    fragile.sim.cohorts.probs = Vector::Zero(4);
    fragile.sim.cohorts.probs << 0.03, 0.03, 0.03, 0.91;
    const McCellResult res = run_cell(fragile, 25, 503);
    CHECK(res.n_ok + res.n_fail == 25);
    CHECK(res.n_fail >= 1);
    CHECK(res.failed == (res.n_fail > 5));
    for (const McRep& rep : res.reps) {
      if (!rep.ok) CHECK(!rep.error.empty());
    }
  }
}

TEST_CASE("naive and likelihood estimators agree on beta without feedback") {
  testsup::Dgp d = make_dgp(4, 1, 1, false);
  d.feedback.a_y = Vector::Zero(1);
  d.feedback.a_d = Matrix::Zero(1, 2);
  d.het.mean_coef(0, 1) = 0.0;
  d.het.mean_coef(0, 2) = 0.0;
  d.het.mean_coef(1, 1) = 0.0;
  d.het.mean_coef(1, 2) = 0.0;
  d.het.cov << 0.05, 0.0, 0.0, 0.05;

  McCell cell;
  cell.name = "no_feedback";
  cell.sim = d.sim(2000, 0);
  cell.fit = quick_options();
  cell.fit.max_iter = 100;
  cell.fit.nm_max_iter = 100;
  cell.run_naive = true;
  cell.truth = {{"beta_1", d.theta.beta[0]}, {"naive_x1", d.theta.beta[0]}};

  const McCellResult res = run_cell(cell, 6, 509);
  REQUIRE(res.n_ok == 6);
  double bias_mle = 0.0, bias_naive = 0.0, mc_se = 0.0;
  for (const McParamStat& st : res.stats) {
    if (st.param == "beta_1") {
      bias_mle = st.bias;
      mc_se = st.mc_se;
    }
    if (st.param == "naive_x1") bias_naive = st.bias;
  }
  MESSAGE("bias mle=", bias_mle, " naive=", bias_naive, " mc_se=", mc_se);
  CHECK(std::abs(bias_naive - bias_mle) <= 4.0 * mc_se + 0.02);
}
