#pragma once

#include "evpanel/types.hpp"

namespace evpanel {

// Whether additive time effects enter the likelihood as free parameters
// (gamma_1 is normalized to 0 to break the level ambiguity with the alpha
// intercept) or are pinned at zero.
enum class GammaMode { none, estimate };

// Index map for the unconstrained parameter vector used by the optimizer:
//   [ atanh(rho_Y), atanh(rho_delta), log sigma2_U, log sigma2_eps,
//     beta (K), gamma_2..gamma_T (if estimated),
//     mean_coef row-major (2 x (2+K+C)),
//     log L00, L10, log L11 ]   with Sigma_lambda = L L'.
struct ParamLayout {
  int T = 0;
  int K = 0;
  int C = 0;
  GammaMode gamma_mode = GammaMode::none;

  int n_gamma() const { return gamma_mode == GammaMode::estimate ? T - 1 : 0; }
  int n_mean_coef() const { return 2 * (2 + K + C); }

  int idx_rho_Y() const { return 0; }
  int idx_rho_delta() const { return 1; }
  int idx_sigma2_U() const { return 2; }
  int idx_sigma2_eps() const { return 3; }
  int idx_beta() const { return 4; }
  int idx_gamma() const { return 4 + K; }
  int idx_mean_coef() const { return idx_gamma() + n_gamma(); }
  int idx_chol() const { return idx_mean_coef() + n_mean_coef(); }
  int dim() const { return idx_chol() + 3; }
};

// Bijection between the admissible natural-scale parameters and R^dim.
// pack rejects non-admissible inputs (sigma2 <= 0, |rho_Y| >= 1,
// |rho_delta| > 1, singular Sigma_lambda); |rho_delta| = 1 is admitted and
// mapped to the saturation point of atanh.
Vector pack_params(const StructuralParams& theta, const HeterogeneityModel& het,
                   const EventDesign& design, GammaMode gamma_mode);

std::pair<StructuralParams, HeterogeneityModel> unpack_params(
    const Vector& packed, const EventDesign& design,
    const std::vector<int>& cohort_values, GammaMode gamma_mode);

}  // namespace evpanel
