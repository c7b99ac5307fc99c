#include "evpanel/loadings.hpp"

#include <cmath>

namespace evpanel {

Vector delta_path(double delta0, const Vector& eps, double rho_delta) {
  const int J = static_cast<int>(eps.size());
  Vector d(J + 1);
  d[0] = delta0;
  for (int j = 1; j <= J; ++j) d[j] = rho_delta * d[j - 1] + eps[j - 1];
  return d;
}

void UnitLoadings::resize(int T, int J_max) {
  b.resize(T);
  L_alpha.resize(T);
  L_delta0.resize(T);
  L_eps.resize(T, J_max);
  L_U.resize(T, T);
}

UnitLoadings build_loadings(const StructuralParams& theta, const EventDesign& design,
                            const UnitData& unit) {
  UnitLoadings out;
  build_loadings_into(out, theta, design, unit);
  return out;
}

void build_loadings_into(UnitLoadings& out, const StructuralParams& theta,
                         const EventDesign& design, const UnitData& unit) {
  const int T = design.T;
  const int J = design.J_max;
  require(unit.x.rows() == T && unit.x.cols() == design.K, ErrorCode::dimension,
          "build_loadings: x path is ", unit.x.rows(), "x", unit.x.cols(),
          ", expected ", T, "x", design.K);
  require(design.t0_valid(unit.t0), ErrorCode::data,
          "build_loadings: invalid event date ", unit.t0);
  const double rY = theta.rho_Y;
  const double rd = theta.rho_delta;

  out.resize(T, J);
  out.L_eps.setZero();
  out.L_U.setZero();

  // Every loading satisfies v_t = rho_Y * v_{t-1} + (own period-t source), so
  // a single forward pass fills each column.
  double pow_rY = 1.0;            // rho_Y^t
  double b_prev = 0.0, a_prev = 0.0, w_prev = 0.0;
  for (int t = 1; t <= T; ++t) {
    pow_rY *= rY;
    const double drive = unit.x.row(t - 1).dot(theta.beta) + theta.gamma_at(t);
    const double b_t = rY * b_prev + drive;
    const double a_t = rY * a_prev + 1.0;
    const int j = design.active_event_time(t, unit.t0);
    const double w_t = rY * w_prev + (j >= 0 ? std::pow(rd, j) : 0.0);
    out.b[t - 1] = pow_rY * unit.y0 + b_t;
    out.L_alpha[t - 1] = a_t;
    out.L_delta0[t - 1] = w_t;
    b_prev = b_t;
    a_prev = a_t;
    w_prev = w_t;
  }

  for (int k = 1; k <= J; ++k) {
    double e_prev = 0.0;
    for (int t = 1; t <= T; ++t) {
      const int j = design.active_event_time(t, unit.t0);
      const double src = (j >= k) ? std::pow(rd, j - k) : 0.0;
      const double e_t = rY * e_prev + src;
      out.L_eps(t - 1, k - 1) = e_t;
      e_prev = e_t;
    }
  }

  for (int s = 1; s <= T; ++s) {
    double p = 1.0;
    for (int t = s; t <= T; ++t) {
      out.L_U(t - 1, s - 1) = p;
      p *= rY;
    }
  }
}

}  // namespace evpanel
