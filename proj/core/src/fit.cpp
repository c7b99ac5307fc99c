#include "evpanel/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "evpanel/marginal.hpp"
#include "evpanel/parallel.hpp"
#include "evpanel/rng.hpp"
#include "marginal_internal.hpp"

namespace evpanel {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

// Pooled multi-response least squares with collinearity detection; failures
// name the offending regressor columns.
struct OlsCore {
  Matrix coef;      // p x m
  Matrix coef_se;   // p x m
  Matrix resid;     // n x m
  Matrix resid_cov; // m x m, divisor n - p
  Vector gram_inv_diag;
};

OlsCore ols(const Matrix& Z, const Matrix& Y,
            const std::vector<std::string>& colnames) {
  const int n = static_cast<int>(Z.rows());
  const int p = static_cast<int>(Z.cols());
  require(n > p, ErrorCode::data, "least squares needs more than ", p,
          " rows, got ", n);
  Eigen::ColPivHouseholderQR<Matrix> qr(Z);
  if (qr.rank() < p) {
    const auto& perm = qr.colsPermutation().indices();
    const int r = static_cast<int>(qr.rank());
    const Matrix R = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    std::string cols;
    for (int j = r; j < p; ++j) {
      if (!cols.empty()) cols += "; ";
      cols += colnames[static_cast<std::size_t>(perm[j])];
      if (r == 0) continue;
      const Vector w =
          R.topLeftCorner(r, r).triangularView<Eigen::Upper>().solve(
              Vector(R.col(j).head(r)));
      std::string partners;
      const double scale = std::max(1.0, w.cwiseAbs().maxCoeff());
      for (int i = 0; i < r; ++i) {
        if (std::abs(w[i]) > 1e-8 * scale) {
          if (!partners.empty()) partners += ", ";
          partners += colnames[static_cast<std::size_t>(perm[i])];
        }
      }
      if (!partners.empty()) cols += " (collinear with " + partners + ")";
    }
    fail(ErrorCode::rank_deficient,
         "regressor matrix is rank deficient (rank ", r, " of ", p,
         "); dependent columns: ", cols);
  }

  OlsCore out;
  out.coef = qr.solve(Y);
  out.resid = Y - Z * out.coef;
  const Matrix gram_e = out.resid.transpose() * out.resid;
  out.resid_cov = (0.5 * (gram_e + gram_e.transpose())) / static_cast<double>(n - p);

  const Matrix gram = Z.transpose() * Z;
  const Matrix gram_inv =
      gram.ldlt().solve(Matrix::Identity(p, p));
  out.gram_inv_diag = gram_inv.diagonal();
  out.coef_se.resize(p, Y.cols());
  for (int k = 0; k < Y.cols(); ++k)
    out.coef_se.col(k) =
        (out.resid_cov(k, k) * out.gram_inv_diag).cwiseMax(0.0).cwiseSqrt();
  return out;
}

double y_at(const UnitData& u, int t) { return t == 0 ? u.y0 : u.y[t - 1]; }

Vector x_at(const UnitData& u, int t) {
  return t == 0 ? u.x0 : Vector(u.x.row(t - 1));
}

void check_panel(const EventDesign& design, const PanelData& panel) {
  design.validate();
  panel.validate(design);
}

// The marginal mean is affine in (beta, gamma, mean_coef) with coefficients
// that depend only on the remaining seven packed coordinates, so those linear
// parameters have a closed-form GLS optimum for every setting of the others.
// Optimizing the concentrated likelihood over the seven-dimensional remainder
// sidesteps the near-flat valley that couples rho_Y with the y0 channel of
// the alpha mean.
struct ProfileSplit {
  ParamLayout lay;

  int lin_dim() const { return lay.idx_chol() - lay.idx_beta(); }

  Vector phi_of(const Vector& packed) const {
    Vector phi(7);
    phi.head(4) = packed.head(4);
    phi.tail(3) = packed.segment(lay.idx_chol(), 3);
    return phi;
  }

  Vector assemble(const Vector& phi, const Vector& m) const {
    Vector p(lay.dim());
    p.head(4) = phi.head(4);
    p.segment(lay.idx_beta(), lin_dim()) = m;
    p.segment(lay.idx_chol(), 3) = phi.tail(3);
    return p;
  }
};

struct ProfileEval {
  double loglik = -kInf;
  Vector m;
  bool ok = false;
};

ProfileEval profile_mean_gls(const Vector& phi, const EventDesign& design,
                             const PanelData& panel,
                             const std::vector<int>& cohort_values,
                             GammaMode gamma_mode, int threads) {
  const ParamLayout lay{design.T, design.K,
                        static_cast<int>(cohort_values.size()), gamma_mode};
  const ProfileSplit split{lay};
  const int p = split.lin_dim();
  const int T = design.T, K = design.K, N = panel.N();
  const int Q = 2 + K + static_cast<int>(cohort_values.size());
  const int n_gamma = lay.n_gamma();

  ProfileEval out;
  StructuralParams theta;
  HeterogeneityModel het;
  std::map<int, detail::CohortCovariance> table;
  try {
    auto pr = unpack_params(split.assemble(phi, Vector::Zero(p)), design,
                            cohort_values, gamma_mode);
    theta = std::move(pr.first);
    het = std::move(pr.second);
    table = detail::cohort_table(theta, het, design, panel);
  } catch (const Error&) {
    return out;
  }
  const double rho = theta.rho_Y;

  // Fixed-size blocks accumulated sequentially afterwards keep the normal
  // equations bitwise independent of the thread count.
  constexpr int kBlock = 64;
  const int n_blocks = (N + kBlock - 1) / kBlock;
  struct Partial {
    Matrix G;
    Vector g;
    double sq = 0.0;
    double logdet = 0.0;
  };
  std::vector<Partial> parts(static_cast<std::size_t>(n_blocks));
  parallel_for(n_blocks, threads, [&](int bi) {
    Partial& part = parts[static_cast<std::size_t>(bi)];
    part.G = Matrix::Zero(p, p);
    part.g = Vector::Zero(p);
    Matrix A(T, p);
    Matrix SA(T, p);
    Vector r(T), xb(K), sol(T);
    const int lo = bi * kBlock, hi = std::min(N, lo + kBlock);
    for (int i = lo; i < hi; ++i) {
      const UnitData& u = panel.units[static_cast<std::size_t>(i)];
      const detail::CohortCovariance& c = table.at(u.t0);
      A.setZero();
      xb.setZero();
      double rp = 1.0;
      for (int t = 1; t <= T; ++t) {
        xb = rho * xb + u.x.row(t - 1).transpose();
        A.row(t - 1).head(K) = xb.transpose();
        rp *= rho;
        r[t - 1] = rp * u.y0;
      }
      for (int s = 2; s <= T && n_gamma > 0; ++s) {
        double wt = 1.0;
        for (int t = s; t <= T; ++t) {
          A(t - 1, K + s - 2) = wt;
          wt *= rho;
        }
      }
      const Vector w = het.regressor(u.y0, u.x0, u.t0);
      for (int row = 0; row < 2; ++row)
        for (int q = 0; q < Q; ++q)
          A.col(K + n_gamma + row * Q + q) = c.L_lambda.col(row) * w[q];
      SA = c.chol.matrixL().solve(A);
      sol = u.y - r;
      c.chol.matrixL().solveInPlace(sol);
      part.G.noalias() += SA.transpose() * SA;
      part.g.noalias() += SA.transpose() * sol;
      part.sq += sol.squaredNorm();
      part.logdet += c.logdet;
    }
  });

  Matrix G = Matrix::Zero(p, p);
  Vector g = Vector::Zero(p);
  double sq = 0.0, logdet_sum = 0.0;
  for (const Partial& part : parts) {
    G += part.G;
    g += part.g;
    sq += part.sq;
    logdet_sum += part.logdet;
  }

  // Minimum-norm solve; a rank-deficient mean design still yields the
  // concentrated maximum, just without a unique argmax.
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(G);
  const Vector m = cod.solve(g);
  if (!m.allFinite()) return out;
  const double quad = sq - 2.0 * m.dot(g) + m.dot(G * m);
  out.loglik = -0.5 * (static_cast<double>(N) * T * detail::kLog2Pi +
                       logdet_sum + quad);
  out.m = m;
  out.ok = true;
  return out;
}

}  // namespace

std::vector<int> estimation_cohort_values(const PanelData& panel,
                                          bool cohort_dummies) {
  if (!cohort_dummies) return {};
  std::set<int> seen;
  for (const UnitData& u : panel.units) seen.insert(u.t0);
  std::vector<int> ordered;
  if (seen.count(EventDesign::never_treated)) {
    ordered.push_back(EventDesign::never_treated);
    seen.erase(EventDesign::never_treated);
  }
  ordered.insert(ordered.end(), seen.begin(), seen.end());
  // The leading category is the reference and carries no dummy.
  if (!ordered.empty()) ordered.erase(ordered.begin());
  return ordered;
}

Vector default_start(const PanelData& panel, const EventDesign& design,
                     const std::vector<int>& cohort_values,
                     GammaMode gamma_mode) {
  const int N = panel.N(), T = design.T, K = design.K;
  const int rows = N * T;
  Matrix Z(rows, 1 + K);
  Vector dy(rows);
  int r = 0;
  for (const UnitData& u : panel.units) {
    for (int t = 1; t <= T; ++t, ++r) {
      dy[r] = y_at(u, t) - y_at(u, t - 1);
      Z(r, 0) = 1.0;
      Z.row(r).tail(K) = (x_at(u, t) - x_at(u, t - 1)).transpose();
    }
  }

  Vector beta = Vector::Zero(K);
  double resid_var = dy.squaredNorm() / std::max(1, rows - 1);
  const Matrix gram = Z.transpose() * Z;
  Eigen::LDLT<Matrix> ldlt(gram);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    const Vector b = ldlt.solve(Z.transpose() * dy);
    const Vector e = dy - Z * b;
    if (b.allFinite()) {
      beta = b.tail(K);
      resid_var = e.squaredNorm() / std::max(1, rows - 1 - K);
    }
  }

  StructuralParams theta;
  theta.rho_Y = 0.0;
  theta.rho_delta = 0.0;
  theta.beta = beta;
  theta.sigma2_U = std::max(0.5 * resid_var, 1e-4);
  theta.sigma2_eps = std::max(0.1 * theta.sigma2_U, 1e-4);
  if (gamma_mode == GammaMode::estimate) theta.gamma = Vector::Zero(T);

  HeterogeneityModel het;
  het.cohort_values = cohort_values;
  het.mean_coef = Matrix::Zero(2, 2 + K + static_cast<int>(cohort_values.size()));
  het.cov = 0.1 * Eigen::Matrix2d::Identity();
  return pack_params(theta, het, design, gamma_mode);
}

std::vector<std::string> param_names(const EventDesign& design,
                                     const std::vector<int>& cohort_values,
                                     GammaMode gamma_mode) {
  std::vector<std::string> names = {"rho_Y", "rho_delta", "sigma2_U",
                                    "sigma2_eps"};
  for (int k = 1; k <= design.K; ++k) names.push_back(cat("beta_", k));
  if (gamma_mode == GammaMode::estimate)
    for (int t = 2; t <= design.T; ++t) names.push_back(cat("gamma_", t));
  for (const char* row : {"mu_alpha", "mu_delta0"}) {
    names.push_back(cat(row, "_const"));
    names.push_back(cat(row, "_y0"));
    for (int k = 1; k <= design.K; ++k) names.push_back(cat(row, "_x0_", k));
    for (int v : cohort_values)
      names.push_back(v == EventDesign::never_treated
                          ? cat(row, "_cohort_never")
                          : cat(row, "_cohort_", v));
  }
  names.push_back("sigma_lambda_11");
  names.push_back("sigma_lambda_12");
  names.push_back("sigma_lambda_22");
  return names;
}

Vector natural_params(const Vector& packed, const EventDesign& design,
                      const std::vector<int>& cohort_values,
                      GammaMode gamma_mode) {
  auto [theta, het] = unpack_params(packed, design, cohort_values, gamma_mode);
  Vector nat(packed.size());
  int i = 0;
  nat[i++] = theta.rho_Y;
  nat[i++] = theta.rho_delta;
  nat[i++] = theta.sigma2_U;
  nat[i++] = theta.sigma2_eps;
  for (int k = 0; k < design.K; ++k) nat[i++] = theta.beta[k];
  if (gamma_mode == GammaMode::estimate)
    for (int t = 2; t <= design.T; ++t) nat[i++] = theta.gamma[t - 1];
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < het.mean_coef.cols(); ++c) nat[i++] = het.mean_coef(r, c);
  nat[i++] = het.cov(0, 0);
  nat[i++] = het.cov(0, 1);
  nat[i++] = het.cov(1, 1);
  return nat;
}

SeReport standard_errors(const Objective& negloglik, const Vector& packed,
                         const EventDesign& design,
                         const std::vector<int>& cohort_values,
                         GammaMode gamma_mode) {
  const int n = static_cast<int>(packed.size());
  SeReport rep;

  Vector h(n);
  for (int i = 0; i < n; ++i) h[i] = 5e-4 * (1.0 + std::abs(packed[i]));

  Matrix H(n, n);
  Vector xp = packed;
  // Diagonal terms from the 1d central second difference.
  const double f0 = negloglik(packed);
  for (int i = 0; i < n; ++i) {
    xp[i] = packed[i] + h[i];
    const double fp = negloglik(xp);
    xp[i] = packed[i] - h[i];
    const double fm = negloglik(xp);
    xp[i] = packed[i];
    H(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      xp[i] = packed[i] + h[i];
      xp[j] = packed[j] + h[j];
      const double fpp = negloglik(xp);
      xp[j] = packed[j] - h[j];
      const double fpm = negloglik(xp);
      xp[i] = packed[i] - h[i];
      const double fmm = negloglik(xp);
      xp[j] = packed[j] + h[j];
      const double fmp = negloglik(xp);
      xp[i] = packed[i];
      xp[j] = packed[j];
      H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
    }
  }

  if (!H.allFinite()) {
    rep.flags.push_back("hessian_not_finite");
    rep.cov_packed = Matrix::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
    rep.se_packed = Vector::Constant(n, std::numeric_limits<double>::quiet_NaN());
    rep.se_natural = rep.se_packed;
    return rep;
  }

  Eigen::SelfAdjointEigenSolver<Matrix> es(H);
  const Vector ev = es.eigenvalues();
  const double ev_max = ev.cwiseAbs().maxCoeff();
  const double ev_min = ev.cwiseAbs().minCoeff();
  rep.hessian_cond = ev_min > 0.0 ? ev_max / ev_min : kInf;

  const bool pd = ev.minCoeff() > 0.0;
  if (pd) {
    rep.cov_packed = H.ldlt().solve(Matrix::Identity(n, n));
  } else {
    rep.flags.push_back("hessian_not_pd");
    // Moore-Penrose on the eigenvalue scale; flat or indefinite directions
    // get zero variance rather than poisoning the rest.
    Vector inv_ev(n);
    const double tol = 1e-12 * std::max(1.0, ev_max);
    for (int i = 0; i < n; ++i)
      inv_ev[i] = std::abs(ev[i]) > tol ? 1.0 / ev[i] : 0.0;
    rep.cov_packed =
        es.eigenvectors() * inv_ev.asDiagonal() * es.eigenvectors().transpose();
  }

  rep.se_packed = rep.cov_packed.diagonal().cwiseMax(0.0).cwiseSqrt();
  if (rep.cov_packed.diagonal().minCoeff() < 0.0)
    rep.flags.push_back("negative_variance_clipped");

  // Delta method through the packed -> natural reparametrization.
  Matrix J(n, n);
  Vector xj = packed;
  for (int j = 0; j < n; ++j) {
    const double hj = 1e-6 * (1.0 + std::abs(packed[j]));
    xj[j] = packed[j] + hj;
    const Vector np = natural_params(xj, design, cohort_values, gamma_mode);
    xj[j] = packed[j] - hj;
    const Vector nm = natural_params(xj, design, cohort_values, gamma_mode);
    xj[j] = packed[j];
    J.col(j) = (np - nm) / (2.0 * hj);
  }
  rep.se_natural =
      (J * rep.cov_packed * J.transpose()).diagonal().cwiseMax(0.0).cwiseSqrt();
  return rep;
}

FitResult fit_outcome_model(const PanelData& panel, const EventDesign& design,
                            const FitOptions& options) {
  check_panel(design, panel);
  const std::vector<int> cohort_values =
      estimation_cohort_values(panel, options.cohort_dummies);

  int n_treated = 0;
  bool untreated_obs = false;
  for (const UnitData& u : panel.units) {
    if (u.t0 != EventDesign::never_treated) ++n_treated;
    for (int t = 1; t <= design.T && !untreated_obs; ++t)
      if (design.active_event_time(t, u.t0) < 0) untreated_obs = true;
  }
  require(n_treated >= 1, ErrorCode::data,
          "panel has no treated unit; treatment parameters are unidentified");
  require(untreated_obs, ErrorCode::data,
          "panel has no untreated observations; baseline is unidentified");
  const int min_units = 2 + design.K + static_cast<int>(cohort_values.size());
  require(panel.N() >= min_units, ErrorCode::data, "need at least ", min_units,
          " units to identify the heterogeneity mean, got ", panel.N());
  const ParamLayout lay{design.T, design.K,
                        static_cast<int>(cohort_values.size()),
                        options.gamma_mode};

  Vector start;
  if (options.start_packed.size() > 0) {
    require(options.start_packed.size() == lay.dim(), ErrorCode::dimension,
            "start vector has length ", options.start_packed.size(),
            ", expected ", lay.dim());
    start = options.start_packed;
  } else {
    start = default_start(panel, design, cohort_values, options.gamma_mode);
  }

  // Per-unit scale keeps gradient magnitudes and tolerance thresholds
  // independent of N.
  const double inv_n = 1.0 / static_cast<double>(panel.N());
  const Objective obj = [&](const Vector& packed) -> double {
    try {
      auto [theta, het] =
          unpack_params(packed, design, cohort_values, options.gamma_mode);
      return -loglik(theta, het, design, panel, options.threads) * inv_n;
    } catch (const Error&) {
      return kInf;
    }
  };

  OptimOptions oo;
  oo.max_iter = options.max_iter;
  oo.tol_obj = options.tol_obj;
  oo.tol_step = options.tol_step;
  oo.fd_step = options.fd_step;
  oo.nm_max_iter = options.nm_max_iter;

  const ProfileSplit split{lay};
  const Objective obj_prof = [&](const Vector& phi) -> double {
    const ProfileEval ev = profile_mean_gls(
        phi, design, panel, cohort_values, options.gamma_mode, options.threads);
    return ev.ok ? -ev.loglik * inv_n : kInf;
  };

  FitResult res;
  res.gamma_mode = options.gamma_mode;
  const Vector phi_start = split.phi_of(start);

  // The concentrated likelihood is multimodal in the two autoregressive
  // coordinates even at large N, so the start matters. Race a deterministic
  // coarse grid over those coordinates (plus any requested random starts)
  // with a cheap budget, then spend the full budget on the two best racers.
  std::vector<Vector> cands;
  cands.push_back(phi_start);
  const double edge = std::atanh(0.9);
  for (double gy : {-edge, edge}) {
    for (double gd : {-edge, edge}) {
      Vector v = phi_start;
      v[0] = gy;
      v[1] = gd;
      bool dup = false;
      for (const Vector& c : cands) dup = dup || (c - v).norm() == 0.0;
      if (!dup) cands.push_back(v);
    }
  }
  for (int m = 1; m < std::max(1, options.multi_start); ++m) {
    Substream s(options.start_seed,
                {stream::start_perturb, static_cast<std::uint64_t>(m)});
    Vector v = phi_start;
    for (int i = 0; i < v.size(); ++i)
      v[i] += 0.25 * (1.0 + std::abs(phi_start[i])) * s.std_normal();
    cands.push_back(v);
  }
  res.n_starts = static_cast<int>(cands.size());

  OptimOptions oo_short = oo;
  oo_short.max_rounds = 1;
  oo_short.max_iter = std::min(oo.max_iter, 60);
  oo_short.nm_max_iter = std::min(oo.nm_max_iter, 120);
  oo_short.keep_trace = false;

  std::vector<std::pair<double, int>> raced;
  std::vector<Vector> raced_x(cands.size());
  for (int ci = 0; ci < static_cast<int>(cands.size()); ++ci) {
    OptimResult r = minimize(obj_prof, cands[static_cast<std::size_t>(ci)],
                             oo_short);
    res.n_evals += r.n_evals;
    raced.emplace_back(std::isfinite(r.f) ? r.f : kInf, ci);
    raced_x[static_cast<std::size_t>(ci)] = std::move(r.x);
  }
  std::stable_sort(raced.begin(), raced.end());

  OptimResult stage;
  bool have_best = false;
  const int finalists = std::min<int>(2, static_cast<int>(raced.size()));
  for (int fi = 0; fi < finalists; ++fi) {
    const int ci = raced[static_cast<std::size_t>(fi)].second;
    OptimResult run =
        minimize(obj_prof, raced_x[static_cast<std::size_t>(ci)], oo);
    res.n_evals += run.n_evals;
    if (!have_best || run.f < stage.f) {
      stage = std::move(run);
      res.best_start = ci;
      have_best = true;
    }
  }

  // Re-expand the winner and polish on the full parametrization; the
  // concentrated optimum is already the joint optimum, so this pass settles
  // in a round or two and supplies the full-space gradient diagnostics.
  OptimResult best;
  if (std::isfinite(stage.f)) {
    const ProfileEval ev = profile_mean_gls(stage.x, design, panel,
                                            cohort_values, options.gamma_mode,
                                            options.threads);
    const Vector packed0 = ev.ok ? split.assemble(stage.x, ev.m) : start;
    best = minimize(obj, packed0, oo);
    res.n_evals += best.n_evals;
    res.iterations = stage.iterations + best.iterations;
    res.converged =
        stage.converged && best.converged && std::isfinite(best.f);
    res.trace = std::move(stage.trace);
    const int offset = static_cast<int>(res.trace.size());
    for (TracePoint p : best.trace) {
      p.iter += offset;
      res.trace.push_back(p);
    }
  } else {
    best = std::move(stage);
    best.x = start;
    res.iterations = best.iterations;
    res.converged = false;
    res.trace = std::move(best.trace);
  }

  res.packed = best.x;
  res.loglik_Y = -best.f * static_cast<double>(panel.N());
  res.grad_inf_norm = best.grad_inf_norm;
  res.param_names = param_names(design, cohort_values, options.gamma_mode);
  if (!std::isfinite(best.f)) {
    res.flags.push_back("objective_infinite_at_every_start");
    res.theta = StructuralParams{};
    res.het = HeterogeneityModel{};
    res.natural = Vector::Constant(lay.dim(),
                                   std::numeric_limits<double>::quiet_NaN());
    return res;
  }

  auto [theta, het] =
      unpack_params(res.packed, design, cohort_values, options.gamma_mode);
  res.theta = std::move(theta);
  res.het = std::move(het);
  res.natural =
      natural_params(res.packed, design, cohort_values, options.gamma_mode);

  if (options.compute_se) {
    // The covariance must invert the total-likelihood Hessian, not the
    // per-unit one.
    const Objective total = [&](const Vector& packed) -> double {
      return obj(packed) * static_cast<double>(panel.N());
    };
    SeReport rep = standard_errors(total, res.packed, design, cohort_values,
                                   options.gamma_mode);
    res.se_packed = std::move(rep.se_packed);
    res.se_natural = std::move(rep.se_natural);
    res.cov_packed = std::move(rep.cov_packed);
    res.hessian_cond = rep.hessian_cond;
    for (auto& f : rep.flags) res.flags.push_back(std::move(f));
  }
  return res;
}

FitResult fit_full_model(const PanelData& panel, const EventDesign& design,
                         const FitOptions& options) {
  FitResult res = fit_outcome_model(panel, design, options);
  res.feedback = fit_feedback(panel, design);
  res.has_feedback = true;
  return res;
}

FeedbackFit fit_feedback(const PanelData& panel, const EventDesign& design) {
  check_panel(design, panel);
  const int N = panel.N(), T = design.T, K = design.K, J = design.J_max;
  const int p = 2 + K + (J + 1);
  const int rows = N * T;
  require(rows >= K * (K + 2 + J + 1) + 5, ErrorCode::data,
          "feedback fit needs at least ", K * (K + 2 + J + 1) + 5,
          " observations, got ", rows);

  std::vector<std::string> names;
  names.push_back("const");
  for (int k = 1; k <= K; ++k) names.push_back(cat("x", k, "_lag"));
  names.push_back("y_lag");
  for (int j = 0; j <= J; ++j) names.push_back(cat("d", j));

  Matrix Z = Matrix::Zero(rows, p);
  Matrix X(rows, K);
  int r = 0;
  for (const UnitData& u : panel.units) {
    for (int t = 1; t <= T; ++t, ++r) {
      Z(r, 0) = 1.0;
      Z.row(r).segment(1, K) = x_at(u, t - 1).transpose();
      Z(r, 1 + K) = y_at(u, t - 1);
      const int j = design.active_event_time(t, u.t0);
      if (j >= 0) Z(r, 2 + K + j) = 1.0;
      X.row(r) = u.x.row(t - 1);
    }
  }

  OlsCore core = ols(Z, X, names);
  FeedbackFit fit;
  fit.coef = std::move(core.coef);
  fit.coef_se = std::move(core.coef_se);
  fit.colnames = std::move(names);
  fit.nobs = rows;

  fit.model.c = fit.coef.row(0).transpose();
  fit.model.A_x = fit.coef.middleRows(1, K).transpose();
  fit.model.a_y = fit.coef.row(1 + K).transpose();
  fit.model.a_d = fit.coef.bottomRows(J + 1).transpose();
  fit.model.Sigma_X = core.resid_cov;

  Eigen::LLT<Matrix> llt(fit.model.Sigma_X);
  if (llt.info() == Eigen::Success) {
    double logdet = 0.0;
    for (int k = 0; k < K; ++k) logdet += 2.0 * std::log(llt.matrixL()(k, k));
    const double quad =
        llt.matrixL().solve(core.resid.transpose()).squaredNorm();
    fit.loglik_X = -0.5 * (rows * (K * kLog2Pi + logdet) + quad);
  } else {
    fit.flags.push_back("sigma_x_not_pd");
    fit.loglik_X = std::numeric_limits<double>::quiet_NaN();
  }
  return fit;
}

NaiveFit naive_ols(const PanelData& panel, const EventDesign& design) {
  check_panel(design, panel);
  const int N = panel.N(), T = design.T, K = design.K, J = design.J_max;
  const int p = 2 + K + (J + 1) + (T - 1);
  const int rows = N * T;

  std::vector<std::string> names;
  names.push_back("const");
  names.push_back("y_lag");
  for (int k = 1; k <= K; ++k) names.push_back(cat("x", k));
  for (int j = 0; j <= J; ++j) names.push_back(cat("d", j));
  for (int t = 2; t <= T; ++t) names.push_back(cat("t", t));

  Matrix Z = Matrix::Zero(rows, p);
  Vector y(rows);
  int r = 0;
  for (const UnitData& u : panel.units) {
    for (int t = 1; t <= T; ++t, ++r) {
      Z(r, 0) = 1.0;
      Z(r, 1) = y_at(u, t - 1);
      Z.row(r).segment(2, K) = u.x.row(t - 1);
      const int j = design.active_event_time(t, u.t0);
      if (j >= 0) Z(r, 2 + K + j) = 1.0;
      if (t >= 2) Z(r, 2 + K + (J + 1) + (t - 2)) = 1.0;
      y[r] = u.y[t - 1];
    }
  }

  OlsCore core = ols(Z, y, names);
  NaiveFit fit;
  fit.coef = core.coef.col(0);
  fit.se = core.coef_se.col(0);
  fit.colnames = std::move(names);
  fit.rho_Y = fit.coef[1];
  fit.beta = fit.coef.segment(2, K);
  fit.delta = fit.coef.segment(2 + K, J + 1);
  fit.sigma2 = core.resid_cov(0, 0);
  fit.nobs = rows;
  return fit;
}

}  // namespace evpanel
