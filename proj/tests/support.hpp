#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "evpanel/rng.hpp"
#include "evpanel/simulate.hpp"
#include "evpanel/types.hpp"

namespace testsup {

using namespace evpanel;

// Canonical small generating process: K covariates, C cohort dummies in the
// heterogeneity mean (cohort list taken from `cohorts` below), moderate
// persistence in both recursions.
struct Dgp {
  EventDesign design;
  StructuralParams theta;
  HeterogeneityModel het;
  FeedbackModel feedback;
  InitialLaw initial;
  CohortLaw cohorts;

  SimConfig sim(int N, std::uint64_t seed) const {
    SimConfig cfg;
    cfg.N = N;
    cfg.design = design;
    cfg.theta = theta;
    cfg.het = het;
    cfg.feedback = feedback;
    cfg.initial = initial;
    cfg.cohorts = cohorts;
    cfg.seed = seed;
    return cfg;
  }
};

// cohort_dummies controls whether the heterogeneity mean carries per-cohort
// columns; without them the lambda law is the same for every event date,
// which some exactness tests rely on.
inline Dgp make_dgp(int T = 4, int K = 1, int J_max = 2,
                    bool cohort_dummies = true) {
  Dgp d;
  d.design = EventDesign{T, K, J_max};

  d.theta.rho_Y = 0.6;
  d.theta.rho_delta = 0.7;
  d.theta.beta = Vector::Constant(K, 0.5);
  if (K > 1) d.theta.beta[1] = -0.3;
  d.theta.sigma2_U = 1.0;
  d.theta.sigma2_eps = 0.15;

  std::vector<int> values;
  for (int t0 = 2; t0 <= T && static_cast<int>(values.size()) < 3; ++t0) {
    values.push_back(t0);
  }
  values.push_back(EventDesign::never_treated);
  d.cohorts.values = values;
  d.cohorts.probs = Vector::Constant(static_cast<Eigen::Index>(values.size()),
                                     1.0 / static_cast<double>(values.size()));

  const int C = cohort_dummies ? static_cast<int>(values.size()) : 0;
  d.het.mean_coef = Matrix::Zero(2, 2 + K + C);
  d.het.mean_coef(0, 0) = 0.2;
  d.het.mean_coef(0, 1) = 0.1;
  d.het.mean_coef(0, 2) = 0.05;
  d.het.mean_coef(1, 0) = 0.1;
  d.het.mean_coef(1, 1) = 0.05;
  for (int c = 0; c < C; ++c) {
    d.het.mean_coef(0, 2 + K + c) = 0.03 * (c + 1);
    d.het.mean_coef(1, 2 + K + c) = -0.02 * (c + 1);
  }
  d.het.cov << 0.25, 0.05, 0.05, 0.16;
  if (cohort_dummies) d.het.cohort_values = values;

  d.feedback.A_x = Matrix::Identity(K, K) * 0.5;
  d.feedback.a_y = Vector::Constant(K, 0.2);
  d.feedback.a_d = Matrix::Zero(K, J_max + 1);
  d.feedback.a_d(0, 0) = 0.1;
  if (J_max >= 1) d.feedback.a_d(0, 1) = 0.05;
  d.feedback.c = Vector::Constant(K, 0.1);
  d.feedback.Sigma_X = Matrix::Identity(K, K) * 0.5;

  d.initial.kind = InitialLaw::Kind::gaussian;
  d.initial.mean = Vector::Zero(1 + K);
  d.initial.cov = Matrix::Identity(1 + K, 1 + K);
  for (int k = 0; k < K; ++k) {
    d.initial.cov(0, 1 + k) = 0.2;
    d.initial.cov(1 + k, 0) = 0.2;
  }
  return d;
}

// Random admissible structural parameters for property tests.
inline StructuralParams random_theta(Substream& s, const EventDesign& d,
                                     bool with_gamma = false) {
  StructuralParams th;
  th.rho_Y = 1.9 * s.uniform() - 0.95;
  th.rho_delta = 2.0 * s.uniform() - 1.0;
  th.beta = s.std_normal_vec(d.K) * 0.5;
  th.sigma2_U = 0.3 + s.uniform();
  th.sigma2_eps = 0.05 + 0.3 * s.uniform();
  if (with_gamma) th.gamma = s.std_normal_vec(d.T) * 0.3;
  return th;
}

inline HeterogeneityModel random_het(Substream& s, const EventDesign& d) {
  HeterogeneityModel het;
  het.mean_coef = Matrix::Zero(2, 2 + d.K);
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2 + d.K; ++c) het.mean_coef(r, c) = 0.3 * s.std_normal();
  }
  Matrix a(2, 2);
  a << 0.5 + 0.3 * s.uniform(), 0.2 * s.std_normal(), 0.2 * s.std_normal(),
      0.4 + 0.3 * s.uniform();
  het.cov = a * a.transpose();
  return het;
}

inline UnitData random_unit(Substream& s, const EventDesign& d, int t0) {
  UnitData u;
  u.t0 = t0;
  u.y0 = s.std_normal();
  u.x0 = s.std_normal_vec(d.K);
  u.y = s.std_normal_vec(d.T);
  u.x = Matrix::Zero(d.T, d.K);
  for (int t = 0; t < d.T; ++t) u.x.row(t) = s.std_normal_vec(d.K).transpose();
  return u;
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline void spit(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::string scratch_dir(const std::string& name) {
  const std::string dir = "/tmp/evpanel_tests/" + name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

struct CliResult {
  int exit_code = -1;
  std::string output;
};

// Runs the command-line tool, capturing combined stdout and stderr.
inline CliResult run_cli(const std::string& cli, const std::string& args) {
  CliResult res;
  const std::string cmd = cli + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return res;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe)) {
    res.output.append(buf, n);
  }
  const int status = pclose(pipe);
  if (WIFEXITED(status)) res.exit_code = WEXITSTATUS(status);
  return res;
}

}  // namespace testsup
