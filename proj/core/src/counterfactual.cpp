#include "evpanel/counterfactual.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "evpanel/loadings.hpp"
#include "evpanel/marginal.hpp"
#include "evpanel/parallel.hpp"
#include "evpanel/rng.hpp"

namespace evpanel {

void ModelParams::validate() const {
  design.validate();
  theta.validate(design);
  het.validate(design);
  feedback.validate(design);
}

void Scenario::validate(const EventDesign& design, int n_units) const {
  require(!t0_star.empty(), ErrorCode::config, "scenario t0_star is empty");
  require(t0_star.size() == 1 ||
              t0_star.size() == static_cast<std::size_t>(n_units),
          ErrorCode::dimension, "scenario t0_star has ", t0_star.size(),
          " entries for ", n_units, " units (need 1 or one per unit)");
  for (int v : t0_star)
    require(design.t0_valid(v), ErrorCode::config, "scenario event date ", v,
            " is not valid for T=", design.T);
  require(n_draws >= 1, ErrorCode::config, "scenario n_draws must be >= 1, got ",
          n_draws);
  if (y0_star.size() > 0)
    require(y0_star.size() == n_units, ErrorCode::dimension,
            "scenario y0_star has size ", y0_star.size(), ", expected ", n_units);
  if (x0_star.rows() > 0 || x0_star.cols() > 0)
    require(x0_star.rows() == n_units && x0_star.cols() == design.K,
            ErrorCode::dimension, "scenario x0_star is ", x0_star.rows(), "x",
            x0_star.cols(), ", expected ", n_units, "x", design.K);
}

namespace {

struct UnitSetup {
  double y0 = 0.0;
  Vector x0;
  int t0A = EventDesign::never_treated;
  Eigen::Vector2d mean_AC;  // lambda mean under the scenario event date
  Eigen::Vector2d mean_B;   // lambda mean under the never-treated date
  Eigen::Matrix2d lam_factor;
};

std::vector<UnitSetup> prepare_units(const ModelParams& mp, const PanelData& panel,
                                     const Scenario& sc) {
  const int N = panel.N(), K = mp.design.K, T = mp.design.T;
  require(panel.T == T && panel.K == K, ErrorCode::dimension, "panel is T=",
          panel.T, ", K=", panel.K, " but model design is T=", T, ", K=", K);
  const Eigen::Matrix2d prior_factor = psd_factor(Matrix(mp.het.cov));

  std::vector<UnitSetup> out(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    const UnitData& u = panel.units[static_cast<std::size_t>(i)];
    require(u.x0.size() == K, ErrorCode::data, "unit ", i, " has x0 of size ",
            u.x0.size(), ", expected K=", K);
    UnitSetup& s = out[static_cast<std::size_t>(i)];
    s.y0 = sc.y0_star.size() > 0 ? sc.y0_star[i] : u.y0;
    s.x0 = sc.x0_star.rows() > 0 ? Vector(sc.x0_star.row(i)) : u.x0;
    s.t0A = sc.t0_for(i);
    if (sc.lambda_source == LambdaSource::posterior) {
      require(u.y.size() == T && u.x.rows() == T && u.x.cols() == K,
              ErrorCode::config,
              "posterior lambda source requires observed outcome and covariate "
              "paths (unit ", i, " is incomplete)");
      const LambdaPosterior post = lambda_posterior(mp.theta, mp.het, mp.design, u);
      s.mean_AC = post.mean;
      s.mean_B = post.mean;
      s.lam_factor = psd_factor(Matrix(post.cov));
    } else {
      s.mean_AC = mp.het.mean_lambda(s.y0, s.x0, s.t0A);
      s.mean_B = mp.het.mean_lambda(s.y0, s.x0, EventDesign::never_treated);
      s.lam_factor = prior_factor;
    }
  }
  return out;
}

struct DrawNoise {
  Eigen::Vector2d z_lambda;
  Vector eps;       // scaled by sd(eps)
  Vector shocks_u;  // scaled
  Matrix shocks_x;  // T x K, row t-1 already multiplied by the Sigma_X factor
};

void draw_noise(DrawNoise& nz, const ModelParams& mp, std::uint64_t seed, int i,
                int d, const Matrix& x_factor, double sd_u, double sd_eps) {
  const int T = mp.design.T, K = mp.design.K, J = mp.design.J_max;
  const std::uint64_t ui = static_cast<std::uint64_t>(i);
  const std::uint64_t ud = static_cast<std::uint64_t>(d);
  Substream lam(seed, {stream::lambda, ui, ud});
  nz.z_lambda = lam.std_normal_vec(2);
  Substream eps_s(seed, {stream::eps, ui, ud});
  nz.eps = sd_eps * eps_s.std_normal_vec(J);
  Substream x_s(seed, {stream::shock_x, ui, ud});
  nz.shocks_x.resize(T, K);
  for (int t = 1; t <= T; ++t)
    nz.shocks_x.row(t - 1) = (x_factor * x_s.std_normal_vec(K)).transpose();
  Substream u_s(seed, {stream::shock_u, ui, ud});
  nz.shocks_u = sd_u * u_s.std_normal_vec(T);
}

// One arm's forward pass. forced_x, when set, replaces the feedback draw with
// a fixed covariate path (the outcome still responds to it through beta).
void run_arm(Vector& y_out, Matrix& x_out, const ModelParams& mp,
             const UnitSetup& s, int t0_eff, double alpha, const Vector& delta,
             const DrawNoise& nz, const Matrix* forced_x) {
  const int T = mp.design.T;
  double y_prev = s.y0;
  Vector x_prev = s.x0;
  for (int t = 1; t <= T; ++t) {
    Vector x_t;
    if (forced_x) {
      x_t = forced_x->row(t - 1).transpose();
    } else {
      x_t = mp.feedback.cond_mean(mp.design, x_prev, y_prev, t, t0_eff) +
            nz.shocks_x.row(t - 1).transpose();
    }
    const double u_t = nz.shocks_u[t - 1];
    const int j = mp.design.active_event_time(t, t0_eff);
    const double y_t = mp.theta.rho_Y * y_prev + alpha +
                       x_t.dot(mp.theta.beta) + (j >= 0 ? delta[j] : 0.0) +
                       mp.theta.gamma_at(t) + u_t;
    x_out.row(t - 1) = x_t;
    y_out[t - 1] = y_t;
    x_prev = x_t;
    y_prev = y_t;
  }
}

// Mean over draws and Monte Carlo standard error of that mean, from per-draw
// values in fixed draw order.
void mean_and_se(const double* per_draw, int D, double& mean, double& se) {
  mean = pairwise_sum(per_draw, D) / D;
  if (D < 2) {
    se = 0.0;
    return;
  }
  std::vector<double> dev(static_cast<std::size_t>(D));
  for (int d = 0; d < D; ++d) {
    const double c = per_draw[d] - mean;
    dev[static_cast<std::size_t>(d)] = c * c;
  }
  se = std::sqrt(pairwise_sum(dev.data(), D) / (D - 1) / D);
}

}  // namespace

ScenarioResult simulate_scenario(const ModelParams& params, const PanelData& panel,
                                 const Scenario& scenario, int threads,
                                 bool keep_paths) {
  params.validate();
  scenario.validate(params.design, panel.N());
  const std::vector<UnitSetup> setup = prepare_units(params, panel, scenario);
  const int N = panel.N(), T = params.design.T, K = params.design.K;
  const int D = scenario.n_draws;
  const Matrix x_factor = psd_factor(params.feedback.Sigma_X);
  const double sd_u = std::sqrt(params.theta.sigma2_U);
  const double sd_eps = std::sqrt(params.theta.sigma2_eps);

  ScenarioResult res;
  res.y_draws.resize(static_cast<std::size_t>(D));
  if (keep_paths) res.x_draws.resize(static_cast<std::size_t>(D));
  parallel_for(D, threads, [&](int d) {
    Matrix Y(N, T);
    Matrix Xflat;
    if (keep_paths) Xflat.resize(N, T * K);
    DrawNoise nz;
    Vector y(T);
    Matrix x(T, K);
    for (int i = 0; i < N; ++i) {
      const UnitSetup& s = setup[static_cast<std::size_t>(i)];
      draw_noise(nz, params, scenario.seed, i, d, x_factor, sd_u, sd_eps);
      const Eigen::Vector2d lam = s.mean_AC + s.lam_factor * nz.z_lambda;
      const Vector delta = delta_path(lam[1], nz.eps, params.theta.rho_delta);
      run_arm(y, x, params, s, s.t0A, lam[0], delta, nz, nullptr);
      Y.row(i) = y;
      if (keep_paths)
        for (int t = 0; t < T; ++t) Xflat.row(i).segment(t * K, K) = x.row(t);
    }
    res.y_draws[static_cast<std::size_t>(d)] = std::move(Y);
    if (keep_paths) res.x_draws[static_cast<std::size_t>(d)] = std::move(Xflat);
  });

  res.unit_mean_y = Matrix::Zero(N, T);
  for (int d = 0; d < D; ++d)
    res.unit_mean_y += res.y_draws[static_cast<std::size_t>(d)];
  res.unit_mean_y /= D;

  res.mean_path.resize(T);
  res.se_path.resize(T);
  std::vector<double> per_draw(static_cast<std::size_t>(D));
  for (int t = 0; t < T; ++t) {
    for (int d = 0; d < D; ++d)
      per_draw[static_cast<std::size_t>(d)] =
          res.y_draws[static_cast<std::size_t>(d)].col(t).sum() / N;
    mean_and_se(per_draw.data(), D, res.mean_path[t], res.se_path[t]);
  }
  if (!keep_paths) res.y_draws.clear();
  return res;
}

DecompositionResult decompose(const ModelParams& params, const PanelData& panel,
                              const Scenario& scenario_treated, int threads,
                              bool keep_draws) {
  params.validate();
  scenario_treated.validate(params.design, panel.N());
  const std::vector<UnitSetup> setup =
      prepare_units(params, panel, scenario_treated);
  const int N = panel.N(), T = params.design.T, K = params.design.K;
  const int D = scenario_treated.n_draws;
  const Matrix x_factor = psd_factor(params.feedback.Sigma_X);
  const double sd_u = std::sqrt(params.theta.sigma2_U);
  const double sd_eps = std::sqrt(params.theta.sigma2_eps);

  // Event-time cells over units with a finite scenario event date.
  std::map<int, std::vector<std::pair<int, int>>> ev_members;  // j -> (unit, t)
  for (int i = 0; i < N; ++i) {
    const int t0 = setup[static_cast<std::size_t>(i)].t0A;
    if (t0 == EventDesign::never_treated) continue;
    for (int t = 1; t <= T; ++t) ev_members[t - t0].emplace_back(i, t);
  }
  std::vector<int> ev_index;
  for (const auto& kv : ev_members) ev_index.push_back(kv.first);
  const int n_ev = static_cast<int>(ev_index.size());

  Matrix ev_tot(D, n_ev), ev_dir(D, n_ev), ev_ind(D, n_ev);
  Matrix cal_tot(D, T), cal_dir(D, T), cal_ind(D, T);

  DecompositionResult res;
  res.n_draws = D;
  res.seed = scenario_treated.seed;
  if (keep_draws) {
    res.draw_total.resize(static_cast<std::size_t>(D));
    res.draw_direct.resize(static_cast<std::size_t>(D));
    res.draw_indirect.resize(static_cast<std::size_t>(D));
  }

  parallel_for(D, threads, [&](int d) {
    DrawNoise nz;
    Vector yA(T), yB(T), yC(T);
    Matrix xA(T, K), xB(T, K), xC(T, K);
    Matrix tot(N, T), dir(N, T), ind(N, T);
    for (int i = 0; i < N; ++i) {
      const UnitSetup& s = setup[static_cast<std::size_t>(i)];
      draw_noise(nz, params, scenario_treated.seed, i, d, x_factor, sd_u, sd_eps);
      const Eigen::Vector2d lamAC = s.mean_AC + s.lam_factor * nz.z_lambda;
      const Eigen::Vector2d lamB = s.mean_B + s.lam_factor * nz.z_lambda;
      const Vector delta = delta_path(lamAC[1], nz.eps, params.theta.rho_delta);
      run_arm(yA, xA, params, s, s.t0A, lamAC[0], delta, nz, nullptr);
      run_arm(yB, xB, params, s, EventDesign::never_treated, lamB[0], delta, nz,
              nullptr);
      run_arm(yC, xC, params, s, s.t0A, lamAC[0], delta, nz, &xB);
      for (int t = 0; t < T; ++t) {
        tot(i, t) = yA[t] - yB[t];
        dir(i, t) = yC[t] - yB[t];
        ind(i, t) = yA[t] - yC[t];
      }
    }
    for (int t = 0; t < T; ++t) {
      cal_tot(d, t) = tot.col(t).sum() / N;
      cal_dir(d, t) = dir.col(t).sum() / N;
      cal_ind(d, t) = ind.col(t).sum() / N;
    }
    for (int e = 0; e < n_ev; ++e) {
      const auto& members = ev_members.at(ev_index[static_cast<std::size_t>(e)]);
      double st = 0.0, sd_ = 0.0, si = 0.0;
      for (const auto& [i, t] : members) {
        st += tot(i, t - 1);
        sd_ += dir(i, t - 1);
        si += ind(i, t - 1);
      }
      const double n = static_cast<double>(members.size());
      ev_tot(d, e) = st / n;
      ev_dir(d, e) = sd_ / n;
      ev_ind(d, e) = si / n;
    }
    if (keep_draws) {
      res.draw_total[static_cast<std::size_t>(d)] = std::move(tot);
      res.draw_direct[static_cast<std::size_t>(d)] = std::move(dir);
      res.draw_indirect[static_cast<std::size_t>(d)] = std::move(ind);
    }
  });

  auto fill_cells = [D](std::vector<EffectCell>& cells, const Matrix& mt,
                        const Matrix& md, const Matrix& mi, int col, int index,
                        int n_units) {
    EffectCell c;
    c.index = index;
    c.n_units = n_units;
    mean_and_se(mt.col(col).data(), D, c.total, c.se_total);
    mean_and_se(md.col(col).data(), D, c.direct, c.se_direct);
    mean_and_se(mi.col(col).data(), D, c.indirect, c.se_indirect);
    cells.push_back(c);
  };

  for (int e = 0; e < n_ev; ++e)
    fill_cells(res.by_event_time, ev_tot, ev_dir, ev_ind, e,
               ev_index[static_cast<std::size_t>(e)],
               static_cast<int>(ev_members.at(ev_index[static_cast<std::size_t>(e)]).size()));
  for (int t = 0; t < T; ++t)
    fill_cells(res.by_calendar_time, cal_tot, cal_dir, cal_ind, t, t + 1, N);
  return res;
}

}  // namespace evpanel
