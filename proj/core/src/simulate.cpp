#include "evpanel/simulate.hpp"

#include <cmath>

#include "evpanel/loadings.hpp"
#include "evpanel/parallel.hpp"
#include "evpanel/rng.hpp"

namespace evpanel {

void InitialLaw::validate(const EventDesign& design) const {
  const int d = 1 + design.K;
  if (kind == Kind::fixed) {
    require(x0.size() == design.K, ErrorCode::dimension, "initial x0 has size ",
            x0.size(), ", expected K=", design.K);
    return;
  }
  require(mean.size() == d, ErrorCode::dimension, "initial mean has size ",
          mean.size(), ", expected 1+K=", d);
  require(cov.rows() == d && cov.cols() == d, ErrorCode::dimension,
          "initial cov is ", cov.rows(), "x", cov.cols(), ", expected ", d, "x", d);
  require(is_symmetric(cov), ErrorCode::config, "initial cov is not symmetric");
  const double tol = -1e-10 * (1.0 + cov.cwiseAbs().maxCoeff());
  require(min_eigenvalue(cov) >= tol, ErrorCode::config,
          "initial cov is not positive semidefinite (min eigenvalue ",
          min_eigenvalue(cov), ")");
}

Vector CohortLaw::category_probs(double y0, const Vector& x0) const {
  if (!tilted()) return probs;
  const int n = static_cast<int>(values.size());
  Vector logp(n);
  for (int c = 0; c < n; ++c) {
    double lp = std::log(probs[c]);
    if (tilt_y0.size() > 0) lp += tilt_y0[c] * y0;
    if (tilt_x0.size() > 0) lp += tilt_x0.row(c).dot(x0);
    logp[c] = lp;
  }
  const double m = logp.maxCoeff();
  Vector p = (logp.array() - m).exp();
  return p / p.sum();
}

void CohortLaw::validate(const EventDesign& design) const {
  require(!values.empty(), ErrorCode::config, "cohort law has no categories");
  require(probs.size() == static_cast<Eigen::Index>(values.size()),
          ErrorCode::dimension, "cohort probs has size ", probs.size(),
          ", expected ", values.size());
  for (std::size_t c = 0; c < values.size(); ++c) {
    require(design.t0_valid(values[c]), ErrorCode::config, "cohort value ",
            values[c], " is not a valid event date for T=", design.T);
    for (std::size_t c2 = c + 1; c2 < values.size(); ++c2)
      require(values[c] != values[c2], ErrorCode::config,
              "duplicate cohort value ", values[c]);
  }
  require(probs.minCoeff() >= 0.0, ErrorCode::config,
          "cohort probabilities must be nonnegative");
  require(std::abs(probs.sum() - 1.0) <= 1e-12, ErrorCode::config,
          "cohort probabilities sum to ", probs.sum(), ", expected 1");
  if (tilt_y0.size() > 0)
    require(tilt_y0.size() == static_cast<Eigen::Index>(values.size()),
            ErrorCode::dimension, "cohort tilt_y0 has size ", tilt_y0.size(),
            ", expected ", values.size());
  if (tilt_x0.size() > 0)
    require(tilt_x0.rows() == static_cast<Eigen::Index>(values.size()) &&
                tilt_x0.cols() == design.K,
            ErrorCode::dimension, "cohort tilt_x0 is ", tilt_x0.rows(), "x",
            tilt_x0.cols(), ", expected ", values.size(), "x", design.K);
}

void SimConfig::validate() const {
  require(N >= 1, ErrorCode::config, "N must be positive, got ", N);
  design.validate();
  theta.validate(design);
  het.validate(design);
  feedback.validate(design);
  initial.validate(design);
  cohorts.validate(design);
}

namespace {

struct SharedFactors {
  Vector init_mean;
  Matrix init_factor;    // (1+K) x (1+K)
  Matrix lambda_factor;  // 2 x 2
  Matrix x_factor;       // K x K
  double u_sd = 0.0;
  double eps_sd = 0.0;
};

SharedFactors prepare_factors(const SimConfig& cfg) {
  SharedFactors f;
  const int d = 1 + cfg.design.K;
  if (cfg.initial.kind == InitialLaw::Kind::fixed) {
    f.init_mean.resize(d);
    f.init_mean[0] = cfg.initial.y0;
    f.init_mean.tail(cfg.design.K) = cfg.initial.x0;
    f.init_factor = Matrix::Zero(d, d);
  } else {
    f.init_mean = cfg.initial.mean;
    f.init_factor = psd_factor(cfg.initial.cov);
  }
  f.lambda_factor = psd_factor(cfg.het.cov);
  f.x_factor = psd_factor(cfg.feedback.Sigma_X);
  f.u_sd = std::sqrt(cfg.theta.sigma2_U);
  f.eps_sd = std::sqrt(cfg.theta.sigma2_eps);
  return f;
}

void simulate_unit(const SimConfig& cfg, const SharedFactors& f, int i,
                   UnitData& unit, UnitLatent& latent) {
  const EventDesign& dgn = cfg.design;
  const int T = dgn.T, K = dgn.K, J = dgn.J_max;
  const std::uint64_t u = static_cast<std::uint64_t>(i);

  Substream init_s(cfg.seed, {stream::init, u});
  Vector init = f.init_mean + f.init_factor * init_s.std_normal_vec(1 + K);
  unit.y0 = init[0];
  unit.x0 = init.tail(K);

  Substream cohort_s(cfg.seed, {stream::cohort, u});
  const Vector p = cfg.cohorts.category_probs(unit.y0, unit.x0);
  unit.t0 = cfg.cohorts.values[static_cast<std::size_t>(cohort_s.categorical(p))];

  Substream lambda_s(cfg.seed, {stream::lambda, u});
  Eigen::Vector2d lam = cfg.het.mean_lambda(unit.y0, unit.x0, unit.t0) +
                        f.lambda_factor * lambda_s.std_normal_vec(2);
  latent.lambda = {lam[0], lam[1]};

  Substream eps_s(cfg.seed, {stream::eps, u});
  latent.eps = f.eps_sd * eps_s.std_normal_vec(J);
  const Vector delta = delta_path(latent.lambda.delta0, latent.eps, cfg.theta.rho_delta);

  Substream x_s(cfg.seed, {stream::shock_x, u});
  Substream u_s(cfg.seed, {stream::shock_u, u});
  unit.y.resize(T);
  unit.x.resize(T, K);
  latent.shocks_u.resize(T);
  Vector x_prev = unit.x0;
  double y_prev = unit.y0;
  for (int t = 1; t <= T; ++t) {
    const Vector x_t = cfg.feedback.cond_mean(dgn, x_prev, y_prev, t, unit.t0) +
                       f.x_factor * x_s.std_normal_vec(K);
    const double u_t = f.u_sd * u_s.std_normal();
    const int j = dgn.active_event_time(t, unit.t0);
    const double y_t = cfg.theta.rho_Y * y_prev + latent.lambda.alpha +
                       x_t.dot(cfg.theta.beta) + (j >= 0 ? delta[j] : 0.0) +
                       cfg.theta.gamma_at(t) + u_t;
    unit.x.row(t - 1) = x_t;
    unit.y[t - 1] = y_t;
    latent.shocks_u[t - 1] = u_t;
    x_prev = x_t;
    y_prev = y_t;
  }
}

}  // namespace

SimResult simulate_panel(const SimConfig& cfg, int threads) {
  cfg.validate();
  SimResult out;
  out.panel.T = cfg.design.T;
  out.panel.K = cfg.design.K;
  out.panel.units.resize(static_cast<std::size_t>(cfg.N));
  out.latents.units.resize(static_cast<std::size_t>(cfg.N));
  const SharedFactors f = prepare_factors(cfg);
  parallel_for(cfg.N, threads, [&](int i) {
    simulate_unit(cfg, f, i, out.panel.units[static_cast<std::size_t>(i)],
                  out.latents.units[static_cast<std::size_t>(i)]);
  });
  return out;
}

JointLogDensity joint_logdensity(const StructuralParams& theta,
                                 const FeedbackModel& feedback,
                                 const EventDesign& design, const UnitData& unit,
                                 const UnitLatent& latent) {
  const int T = design.T, K = design.K;
  require(unit.y.size() == T && unit.x.rows() == T && unit.x.cols() == K,
          ErrorCode::dimension, "unit data does not match design");
  require(latent.eps.size() == design.J_max, ErrorCode::dimension,
          "latent eps has size ", latent.eps.size(), ", expected ", design.J_max);
  require(theta.sigma2_U > 0.0, ErrorCode::domain,
          "outcome density needs sigma2_U > 0");
  Eigen::LLT<Matrix> llt(feedback.Sigma_X);
  require(llt.info() == Eigen::Success, ErrorCode::singular,
          "covariate density needs positive definite Sigma_X");
  double logdet_x = 0.0;
  for (int k = 0; k < K; ++k) logdet_x += 2.0 * std::log(llt.matrixL()(k, k));

  const double log2pi = std::log(2.0 * M_PI);
  const Vector delta = delta_path(latent.lambda.delta0, latent.eps, theta.rho_delta);

  JointLogDensity out;
  Vector x_prev = unit.x0;
  double y_prev = unit.y0;
  for (int t = 1; t <= T; ++t) {
    const Vector x_t = unit.x.row(t - 1);
    const Vector mean_x =
        feedback.cond_mean(design, x_prev, y_prev, t, unit.t0);
    const Vector r = x_t - mean_x;
    const double quad = llt.matrixL().solve(r).squaredNorm();
    out.log_x_feedback += -0.5 * (K * log2pi + logdet_x + quad);

    const int j = design.active_event_time(t, unit.t0);
    const double mean_y = theta.rho_Y * y_prev + latent.lambda.alpha +
                          x_t.dot(theta.beta) + (j >= 0 ? delta[j] : 0.0) +
                          theta.gamma_at(t);
    const double z = unit.y[t - 1] - mean_y;
    out.log_y_given_x_lambda +=
        -0.5 * (log2pi + std::log(theta.sigma2_U) + z * z / theta.sigma2_U);
    x_prev = x_t;
    y_prev = unit.y[t - 1];
  }
  return out;
}

}  // namespace evpanel
