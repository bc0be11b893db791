#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

#include "tapsphere/rng.hpp"

namespace tapsphere {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Convergence or conditioning failure inside a numerical routine.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  int p = 0;
  int n = 0;
  double delta = 0.0;
  std::uint64_t seed = 0;

  ModelConfig() = default;
  ModelConfig(int p_, int n_, double delta_, std::uint64_t seed_)
      : p(p_), n(n_), delta(delta_), seed(seed_) {
    if (p < 3) throw std::invalid_argument("ModelConfig: p must be >= 3");
    if (n < 1) throw std::invalid_argument("ModelConfig: n must be >= 1");
    if (!(delta > 0.0)) throw std::invalid_argument("ModelConfig: delta must be > 0");
  }

  double alpha() const { return static_cast<double>(n) / static_cast<double>(p); }
};

// One disorder draw of the well-specified model: y = X beta0 + eps.
struct Instance {
  Mat X;      // n x p, entries iid N(0, 1/n)
  Vec beta0;  // ground truth on the sphere of radius sqrt(p)
  Vec eps;    // iid N(0, delta)
  Vec y;

  int p() const { return static_cast<int>(X.cols()); }
  int n() const { return static_cast<int>(X.rows()); }
};

struct PerturbationConfig {
  double lambda0 = 0.75;
  double eps_p = 0.1;
  std::uint64_t seed = 0;

  PerturbationConfig() = default;
  PerturbationConfig(double lambda0_, double eps_p_, std::uint64_t seed_)
      : lambda0(lambda0_), eps_p(eps_p_), seed(seed_) {
    if (lambda0 < 0.5 || lambda0 > 1.0)
      throw std::invalid_argument("PerturbationConfig: lambda0 must lie in [1/2, 1]");
    if (!(eps_p > 0.0 && eps_p < 1.0))
      throw std::invalid_argument("PerturbationConfig: eps_p must lie in (0, 1)");
  }
};

// Rate for the side-channel strength: eps_p -> 0 while p * eps_p -> infinity.
inline double eps_p_schedule(int p) { return std::pow(static_cast<double>(p), -0.25); }

// Gaussian side channel y_pert = sqrt(lambda0 eps_p) beta0 + Z.
struct PerturbedInstance {
  Instance base;
  Vec Z;  // N(0, I_p)
  Vec y_pert;
  double lambda0 = 0.0;
  double eps_p = 0.0;
};

// Uniform draw from the sphere of the given radius: a normalized Gaussian
// vector (redrawn in the measure-zero all-zero case).
inline Vec sample_uniform_sphere(int p, double radius, RngStream& rng) {
  if (p < 2) throw std::invalid_argument("sample_uniform_sphere: p must be >= 2");
  if (!(radius > 0.0)) throw std::invalid_argument("sample_uniform_sphere: radius must be > 0");
  Vec g(p);
  double norm = 0.0;
  do {
    for (int i = 0; i < p; ++i) g[i] = rng.normal();
    norm = g.norm();
  } while (norm == 0.0);
  return g * (radius / norm);
}

inline Instance generate_instance(const ModelConfig& cfg) {
  RngStream root = RngStream::seeded(cfg.seed);
  RngStream sx = root.split("X");
  RngStream sb = root.split("beta0");
  RngStream se = root.split("eps");

  Instance inst;
  inst.X.resize(cfg.n, cfg.p);
  const double sd = 1.0 / std::sqrt(static_cast<double>(cfg.n));
  for (int i = 0; i < cfg.n; ++i)
    for (int j = 0; j < cfg.p; ++j) inst.X(i, j) = sd * sx.normal();

  inst.beta0 = sample_uniform_sphere(cfg.p, std::sqrt(static_cast<double>(cfg.p)), sb);

  inst.eps.resize(cfg.n);
  const double sd_eps = std::sqrt(cfg.delta);
  for (int i = 0; i < cfg.n; ++i) inst.eps[i] = sd_eps * se.normal();

  const Vec xb = inst.X * inst.beta0;
  inst.y = xb + inst.eps;
  return inst;
}

inline PerturbedInstance make_perturbed(const Instance& inst, const PerturbationConfig& pcfg) {
  RngStream sz = RngStream::seeded(pcfg.seed).split("Z");
  PerturbedInstance pert;
  pert.base = inst;
  pert.lambda0 = pcfg.lambda0;
  pert.eps_p = pcfg.eps_p;
  pert.Z.resize(inst.p());
  for (int i = 0; i < inst.p(); ++i) pert.Z[i] = sz.normal();
  pert.y_pert = std::sqrt(pcfg.lambda0 * pcfg.eps_p) * inst.beta0 + pert.Z;
  return pert;
}

// Density of the normalized length of the projection of a uniform sphere
// point onto a k-dimensional subspace:
//   (1/sqrt(pi)) * Gamma(p/2) / Gamma((p-k)/2) * (1 - x^2)^((p-k-2)/2).
// Normalized over (-1, 1) for k = 1.
inline double projection_density(double x, int p, int k) {
  if (k < 1 || p <= k) throw std::invalid_argument("projection_density: need p > k >= 1");
  if (!(std::abs(x) < 1.0)) throw std::domain_error("projection_density: |x| must be < 1");
  const double lg = std::lgamma(0.5 * p) - std::lgamma(0.5 * (p - k));
  const double expo = 0.5 * (p - k - 2) * std::log1p(-x * x);
  return std::exp(lg - 0.5 * std::log(M_PI) + expo);
}

// H(beta) = ||y - X beta||^2 / (2 delta).
inline double hamiltonian(const Instance& inst, double delta, const Vec& beta) {
  if (beta.size() != inst.p()) throw std::invalid_argument("hamiltonian: beta has wrong dimension");
  return (inst.y - inst.X * beta).squaredNorm() / (2.0 * delta);
}

// H_gauss(beta) = -lambda0 eps_p beta0'beta - sqrt(lambda0 eps_p) Z'beta
//                 + lambda0 eps_p ||beta||^2 / 2.
inline double hamiltonian_gauss(const PerturbedInstance& pert, const Vec& beta) {
  if (beta.size() != pert.base.p())
    throw std::invalid_argument("hamiltonian_gauss: beta has wrong dimension");
  const double le = pert.lambda0 * pert.eps_p;
  return -le * pert.base.beta0.dot(beta) - std::sqrt(le) * pert.Z.dot(beta) +
         0.5 * le * beta.squaredNorm();
}

inline double hamiltonian_perturbed(const PerturbedInstance& pert, double delta, const Vec& beta) {
  return hamiltonian(pert.base, delta, beta) + hamiltonian_gauss(pert, beta);
}

}  // namespace tapsphere
