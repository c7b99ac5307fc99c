#include "evpanel/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace evpanel {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool rel_obj_small(double f_old, double f_new, double tol) {
  return std::abs(f_old - f_new) <= tol * (1.0 + std::abs(f_new));
}

}  // namespace

Vector fd_gradient(const Objective& f, const Vector& x, double f_x,
                   double fd_step, int* n_evals) {
  const int n = static_cast<int>(x.size());
  Vector g(n);
  Vector xp = x;
  for (int i = 0; i < n; ++i) {
    const double h = fd_step * (1.0 + std::abs(x[i]));
    xp[i] = x[i] + h;
    double fp = f(xp);
    if (n_evals) ++*n_evals;
    if (std::isfinite(fp)) {
      g[i] = (fp - f_x) / h;
    } else {
      xp[i] = x[i] - h;
      fp = f(xp);
      if (n_evals) ++*n_evals;
      g[i] = std::isfinite(fp) ? (f_x - fp) / h : 0.0;
    }
    xp[i] = x[i];
  }
  return g;
}

OptimResult minimize_bfgs(const Objective& f, const Vector& x0,
                          const OptimOptions& opts) {
  const int n = static_cast<int>(x0.size());
  OptimResult res;
  res.x = x0;
  res.f = f(x0);
  ++res.n_evals;
  if (!std::isfinite(res.f)) return res;

  Vector g = fd_gradient(f, res.x, res.f, opts.fd_step, &res.n_evals);
  res.grad_inf_norm = g.lpNorm<Eigen::Infinity>();
  Matrix H = Matrix::Identity(n, n);
  bool first_update = true;

  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    Vector d = -(H * g);
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      H.setIdentity();
      d = -g;
      slope = g.dot(d);
      if (!(slope < 0.0)) break;  // gradient numerically zero
    }

    double step = 1.0;
    double f_new = kInf;
    Vector x_new;
    bool accepted = false;
    for (int ls = 0; ls < 48; ++ls) {
      x_new = res.x + step * d;
      f_new = f(x_new);
      ++res.n_evals;
      if (std::isfinite(f_new) && f_new <= res.f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    const Vector s = x_new - res.x;
    const Vector g_new = fd_gradient(f, x_new, f_new, opts.fd_step, &res.n_evals);
    const Vector yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (first_update) {
        H = (sy / yv.squaredNorm()) * Matrix::Identity(n, n);
        first_update = false;
      }
      const Vector Hy = H * yv;
      const double yHy = yv.dot(Hy);
      H += ((sy + yHy) / (sy * sy)) * (s * s.transpose());
      const Matrix Hys = Hy * s.transpose();
      H -= (Hys + Hys.transpose()) / sy;
    }

    const double f_old = res.f;
    const double step_inf = s.lpNorm<Eigen::Infinity>();
    res.x = x_new;
    res.f = f_new;
    g = g_new;
    res.grad_inf_norm = g.lpNorm<Eigen::Infinity>();
    res.iterations = iter;
    if (opts.keep_trace)
      res.trace.push_back({iter, res.f, res.grad_inf_norm, step_inf});
    if (rel_obj_small(f_old, res.f, opts.tol_obj) && step_inf <= opts.tol_step &&
        res.grad_inf_norm <= 1e-4 * (1.0 + std::abs(res.f))) {
      res.converged = true;
      break;
    }
  }
  return res;
}

OptimResult nelder_mead(const Objective& f, const Vector& x0,
                        const OptimOptions& opts) {
  const int n = static_cast<int>(x0.size());
  OptimResult res;
  res.x = x0;
  res.f = f(x0);
  ++res.n_evals;
  if (n == 0) {
    res.converged = true;
    return res;
  }

  std::vector<Vector> pts(static_cast<std::size_t>(n + 1), x0);
  std::vector<double> fv(static_cast<std::size_t>(n + 1));
  fv[0] = res.f;
  for (int i = 0; i < n; ++i) {
    pts[static_cast<std::size_t>(i + 1)][i] += 0.02 * (1.0 + std::abs(x0[i]));
    fv[static_cast<std::size_t>(i + 1)] = f(pts[static_cast<std::size_t>(i + 1)]);
    ++res.n_evals;
  }

  std::vector<int> order(static_cast<std::size_t>(n + 1));
  for (int iter = 1; iter <= opts.nm_max_iter; ++iter) {
    for (int i = 0; i <= n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return fv[static_cast<std::size_t>(a)] < fv[static_cast<std::size_t>(b)];
    });
    const int best = order[0], worst = order[static_cast<std::size_t>(n)];
    const int second_worst = order[static_cast<std::size_t>(n - 1)];

    double diam = 0.0;
    for (int i = 1; i <= n; ++i)
      diam = std::max(diam, (pts[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] -
                             pts[static_cast<std::size_t>(best)])
                                .lpNorm<Eigen::Infinity>());
    if (rel_obj_small(fv[static_cast<std::size_t>(worst)],
                      fv[static_cast<std::size_t>(best)], opts.tol_obj) &&
        diam <= opts.tol_step) {
      res.converged = true;
      res.iterations = iter - 1;
      break;
    }
    res.iterations = iter;

    Vector centroid = Vector::Zero(n);
    for (int i = 0; i <= n; ++i)
      if (i != worst) centroid += pts[static_cast<std::size_t>(i)];
    centroid /= n;

    const Vector refl = centroid + (centroid - pts[static_cast<std::size_t>(worst)]);
    const double f_refl = f(refl);
    ++res.n_evals;
    if (f_refl < fv[static_cast<std::size_t>(best)]) {
      const Vector expa = centroid + 2.0 * (centroid - pts[static_cast<std::size_t>(worst)]);
      const double f_expa = f(expa);
      ++res.n_evals;
      if (f_expa < f_refl) {
        pts[static_cast<std::size_t>(worst)] = expa;
        fv[static_cast<std::size_t>(worst)] = f_expa;
      } else {
        pts[static_cast<std::size_t>(worst)] = refl;
        fv[static_cast<std::size_t>(worst)] = f_refl;
      }
    } else if (f_refl < fv[static_cast<std::size_t>(second_worst)]) {
      pts[static_cast<std::size_t>(worst)] = refl;
      fv[static_cast<std::size_t>(worst)] = f_refl;
    } else {
      const bool outside = f_refl < fv[static_cast<std::size_t>(worst)];
      const Vector& anchor =
          outside ? refl : pts[static_cast<std::size_t>(worst)];
      const Vector contr = centroid + 0.5 * (anchor - centroid);
      const double f_contr = f(contr);
      ++res.n_evals;
      if (f_contr < std::min(f_refl, fv[static_cast<std::size_t>(worst)])) {
        pts[static_cast<std::size_t>(worst)] = contr;
        fv[static_cast<std::size_t>(worst)] = f_contr;
      } else {
        for (int i = 0; i <= n; ++i) {
          if (i == best) continue;
          pts[static_cast<std::size_t>(i)] =
              pts[static_cast<std::size_t>(best)] +
              0.5 * (pts[static_cast<std::size_t>(i)] - pts[static_cast<std::size_t>(best)]);
          fv[static_cast<std::size_t>(i)] = f(pts[static_cast<std::size_t>(i)]);
          ++res.n_evals;
        }
      }
    }
  }

  int best = 0;
  for (int i = 1; i <= n; ++i)
    if (fv[static_cast<std::size_t>(i)] < fv[static_cast<std::size_t>(best)]) best = i;
  res.x = pts[static_cast<std::size_t>(best)];
  res.f = fv[static_cast<std::size_t>(best)];
  return res;
}

OptimResult minimize(const Objective& f, const Vector& x0,
                     const OptimOptions& opts) {
  OptimResult res;
  res.x = x0;
  res.f = kInf;
  bool stalled = false;
  int trace_len = 0;
  for (int round = 0; round < std::max(1, opts.max_rounds); ++round) {
    OptimResult bfgs = minimize_bfgs(f, res.x, opts);
    res.n_evals += bfgs.n_evals;
    if (!std::isfinite(bfgs.f)) {
      if (round == 0) {
        res.f = bfgs.f;
        res.iterations += bfgs.iterations;
      }
      return res;
    }
    OptimResult polish = nelder_mead(f, bfgs.x, opts);
    res.n_evals += polish.n_evals;
    res.iterations += bfgs.iterations + polish.iterations;
    res.grad_inf_norm = bfgs.grad_inf_norm;
    if (opts.keep_trace) {
      for (TracePoint p : bfgs.trace) {
        p.iter = ++trace_len;
        res.trace.push_back(p);
      }
    }

    const Vector x_round = polish.f < bfgs.f ? polish.x : bfgs.x;
    const double f_round = std::min(polish.f, bfgs.f);
    const double f_prev = res.f;
    const double step_inf = (x_round - res.x).lpNorm<Eigen::Infinity>();
    if (f_round < res.f) {
      res.x = x_round;
      res.f = f_round;
      if (opts.keep_trace && polish.f < bfgs.f)
        res.trace.push_back({++trace_len, res.f, bfgs.grad_inf_norm, step_inf});
    }
    res.converged = bfgs.converged || polish.converged;
    const bool improved =
        f_prev - res.f > opts.tol_obj * (1.0 + std::abs(res.f));
    if (!improved) {
      stalled = true;
      break;
    }
  }
  if (!stalled) res.converged = false;
  return res;
}

}  // namespace evpanel
