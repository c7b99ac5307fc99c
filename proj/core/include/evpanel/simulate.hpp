#pragma once

#include "evpanel/types.hpp"

namespace evpanel {

// Law of the exogenous initial conditions (Y0, X0).
struct InitialLaw {
  enum class Kind { fixed, gaussian };
  Kind kind = Kind::fixed;
  // fixed
  double y0 = 0.0;
  Vector x0;
  // gaussian over the stacked (Y0, X0) vector, dimension 1+K
  Vector mean;
  Matrix cov;

  void validate(const EventDesign& design) const;
};

// Distribution of the event date. values lists the admissible t0 draws
// (EventDesign::never_treated for the never-treated category); probs must sum
// to one. Optional tilts make the category log-probabilities linear in
// (Y0, X0), which induces dependence between the cohort and the initial
// conditions without touching the heterogeneity law.
struct CohortLaw {
  std::vector<int> values;
  Vector probs;
  Vector tilt_y0;  // per category, empty = no tilt
  Matrix tilt_x0;  // n_categories x K, empty = no tilt

  bool tilted() const { return tilt_y0.size() > 0 || tilt_x0.size() > 0; }
  Vector category_probs(double y0, const Vector& x0) const;
  void validate(const EventDesign& design) const;
};

struct SimConfig {
  int N = 0;
  EventDesign design;
  StructuralParams theta;
  HeterogeneityModel het;
  FeedbackModel feedback;
  InitialLaw initial;
  CohortLaw cohorts;
  std::uint64_t seed = 0;

  void validate() const;
};

// Latent draws retained per unit for oracle tests.
struct UnitLatent {
  Lambda lambda;
  Vector eps;       // J_max
  Vector shocks_u;  // T
};

struct LatentRecord {
  std::vector<UnitLatent> units;
};

struct SimResult {
  PanelData panel;
  LatentRecord latents;
};

// Generates a panel from the joint data-generating process. Per unit and
// period, the covariate X_it is drawn from the feedback law given the
// realized history before the outcome shock U_it is drawn and Y_it formed;
// X_it therefore never depends on current or future outcome shocks. Per-unit
// substreams keyed by (seed, unit) make the result independent of the thread
// schedule, and a panel of size N is a prefix of any larger panel drawn from
// the same seed.
SimResult simulate_panel(const SimConfig& cfg, int threads = 0);

// The two log-factors of the joint conditional likelihood of one unit's
// trajectory given lambda: the outcome block given the covariate path, and
// the covariate feedback block. The feedback factor is free of lambda by
// construction.
struct JointLogDensity {
  double log_y_given_x_lambda = 0.0;
  double log_x_feedback = 0.0;
};

JointLogDensity joint_logdensity(const StructuralParams& theta,
                                 const FeedbackModel& feedback,
                                 const EventDesign& design, const UnitData& unit,
                                 const UnitLatent& latent);

}  // namespace evpanel
