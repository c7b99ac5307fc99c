#include "evpanel/demean.hpp"

#include "evpanel/parallel.hpp"

namespace evpanel {

namespace {

double column_mean(std::vector<double>& buf, int n) {
  return pairwise_sum(buf.data(), n) / n;
}

double& y_slot(UnitData& u, int t) { return t == 0 ? u.y0 : u.y[t - 1]; }
double& x_slot(UnitData& u, int t, int k) {
  return t == 0 ? u.x0[k] : u.x(t - 1, k);
}

// Largest absolute column mean across y and every covariate.
double panel_means(PanelData& p, std::vector<double>& buf, Vector& my,
                   Matrix& mx) {
  const int N = p.N(), T = p.T, K = p.K;
  double level = 0.0;
  for (int t = 0; t <= T; ++t) {
    for (int i = 0; i < N; ++i)
      buf[static_cast<std::size_t>(i)] =
          y_slot(p.units[static_cast<std::size_t>(i)], t);
    my[t] = column_mean(buf, N);
    level = std::max(level, std::abs(my[t]));
    for (int k = 0; k < K; ++k) {
      for (int i = 0; i < N; ++i)
        buf[static_cast<std::size_t>(i)] =
            x_slot(p.units[static_cast<std::size_t>(i)], t, k);
      mx(t, k) = column_mean(buf, N);
      level = std::max(level, std::abs(mx(t, k)));
    }
  }
  return level;
}

void subtract_means(PanelData& p, const Vector& my, const Matrix& mx) {
  const int N = p.N(), T = p.T, K = p.K;
  for (int t = 0; t <= T; ++t) {
    for (int i = 0; i < N; ++i) {
      UnitData& u = p.units[static_cast<std::size_t>(i)];
      y_slot(u, t) -= my[t];
      for (int k = 0; k < K; ++k) x_slot(u, t, k) -= mx(t, k);
    }
  }
}

}  // namespace

// Residual means after one subtraction sit at rounding level and can cycle
// between bit patterns, so an update is committed only while it strictly
// shrinks the largest column mean. The stopping state is a pure function of
// the data, which makes the result an exact fixed point of the map.
DemeanedPanel demean_panel(const PanelData& panel) {
  const int N = panel.N(), T = panel.T, K = panel.K;
  require(N >= 2, ErrorCode::data,
          "cross-sectional demeaning needs at least 2 units, got ", N);

  DemeanedPanel out;
  out.panel = panel;
  out.means.y_mean = Vector::Zero(T + 1);
  out.means.x_mean = Matrix::Zero(T + 1, K);

  std::vector<double> buf(static_cast<std::size_t>(N));
  Vector my(T + 1), my_next(T + 1);
  Matrix mx(T + 1, K), mx_next(T + 1, K);
  double level = panel_means(out.panel, buf, my, mx);
  require(std::isfinite(level), ErrorCode::data,
          "cross-sectional demeaning needs finite data");
  for (int iter = 0; level > 0.0; ++iter) {
    require(iter < 64, ErrorCode::data,
            "cross-sectional demeaning did not stabilize");
    PanelData next = out.panel;
    subtract_means(next, my, mx);
    const double level_next = panel_means(next, buf, my_next, mx_next);
    if (!(level_next < level)) break;
    out.panel = std::move(next);
    out.means.y_mean += my;
    out.means.x_mean += mx;
    my = my_next;
    mx = mx_next;
    level = level_next;
  }
  return out;
}

}  // namespace evpanel
