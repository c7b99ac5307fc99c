#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "evpanel/types.hpp"

namespace evpanel {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Purpose tags for derived substreams. Keying every stream by
// (seed, purpose, ids...) makes draws independent of loop order and thread
// schedule, and lets counterfactual arms share the exact draw sequences they
// must have in common.
namespace stream {
constexpr std::uint64_t init = 1;
constexpr std::uint64_t cohort = 2;
constexpr std::uint64_t lambda = 3;
constexpr std::uint64_t eps = 4;
constexpr std::uint64_t shock_u = 5;
constexpr std::uint64_t shock_x = 6;
constexpr std::uint64_t start_perturb = 7;
constexpr std::uint64_t replication = 8;
}  // namespace stream

// Deterministic substream: a generator whose state is a pure function of the
// base seed and an id path. Draws always consume the underlying engine even
// for degenerate (zero-variance) laws, so consumption patterns do not depend
// on parameter values.
class Substream {
 public:
  Substream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = splitmix64(seed ^ 0x5851F42D4C957F2DULL);
    for (std::uint64_t id : path) s = splitmix64(s ^ splitmix64(id));
    eng_.seed(s);
  }

  double uniform() { return u01_(eng_); }

  double std_normal() { return n01_(eng_); }

  double normal(double mean, double sd) { return mean + sd * std_normal(); }

  Vector std_normal_vec(int n) {
    Vector z(n);
    for (int i = 0; i < n; ++i) z[i] = std_normal();
    return z;
  }

  // Categorical draw by CDF walk over `probs` (need not be exactly normalized).
  int categorical(const Vector& probs) {
    const double u = uniform() * probs.sum();
    double acc = 0.0;
    for (int i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u <= acc) return i;
    }
    return static_cast<int>(probs.size()) - 1;
  }

 private:
  std::mt19937_64 eng_;
  std::normal_distribution<double> n01_{0.0, 1.0};
  std::uniform_real_distribution<double> u01_{0.0, 1.0};
};

// Derived 64-bit seed keyed like a Substream; used where a child computation
// needs a full seed of its own (e.g. one replication of a study).
inline std::uint64_t derive_seed(std::uint64_t seed,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = splitmix64(seed ^ 0x5851F42D4C957F2DULL);
  for (std::uint64_t id : path) s = splitmix64(s ^ splitmix64(id));
  return s;
}

// Lower factor F with F F' = m for a symmetric PSD matrix: Cholesky when
// possible, eigenvalue square root with negative eigenvalues clipped to zero
// otherwise (covers singular covariances used by degenerate test fixtures).
inline Matrix psd_factor(const Matrix& m) {
  if (m.rows() == 0) return m;
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  Vector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal();
}

}  // namespace evpanel
