#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "tapsphere/model.hpp"

namespace tapsphere {

// Eigen-reduced Hamiltonian H(beta) = (1/2) beta'M beta - h'beta + constant
// over the sphere S^{dim-1}(sqrt(dim)): eigvals are the spectrum of M
// (ascending), linear the field coefficients in the eigenbasis.
struct QuadraticForm {
  Vec eigvals;
  Vec linear;
  double constant = 0.0;
  int dim = 0;
  Mat eigvecs;  // columns: eigenbasis of M (identity when built directly)

  static QuadraticForm from_eigen(Vec eigvals, Vec linear, double constant) {
    QuadraticForm qf;
    qf.dim = static_cast<int>(eigvals.size());
    qf.eigvals = std::move(eigvals);
    qf.linear = std::move(linear);
    qf.constant = constant;
    return qf;
  }

  // Eigendecomposition of a dense symmetric M with field h.
  static QuadraticForm from_dense(const Mat& M, const Vec& h, double constant) {
    Eigen::SelfAdjointEigenSolver<Mat> es(M);
    if (es.info() != Eigen::Success)
      throw NumericalError("QuadraticForm: eigendecomposition failed, matrix norm " +
                           std::to_string(M.norm()));
    QuadraticForm qf;
    qf.dim = static_cast<int>(M.rows());
    qf.eigvals = es.eigenvalues();
    qf.eigvecs = es.eigenvectors();
    qf.linear = qf.eigvecs.transpose() * h;
    qf.constant = constant;
    const double mnorm = M.norm();
    if (mnorm > 0.0) {
      const double recon =
          (qf.eigvecs * qf.eigvals.asDiagonal() * qf.eigvecs.transpose() - M).norm() / mnorm;
      if (recon > 1e-10)
        throw NumericalError("QuadraticForm: reconstruction error " + std::to_string(recon) +
                             ", condition estimate " +
                             std::to_string(qf.eigvals.cwiseAbs().maxCoeff() /
                                            std::max(qf.eigvals.cwiseAbs().minCoeff(), 1e-300)));
    }
    return qf;
  }
};

enum class FreeEnergyMethod { saddle, contour, monte_carlo };

inline const char* to_string(FreeEnergyMethod m) {
  switch (m) {
    case FreeEnergyMethod::saddle: return "saddle";
    case FreeEnergyMethod::contour: return "contour";
    case FreeEnergyMethod::monte_carlo: return "monte-carlo";
  }
  return "?";
}

struct FreeEnergyEstimate {
  double value = 0.0;  // (1/p) ln Z
  FreeEnergyMethod method = FreeEnergyMethod::saddle;
  double std_err = 0.0;  // 0 for deterministic methods
  double correction = 0.0;  // second-order Laplace term, informational
};

struct ContourResult {
  double saddle = 0.0;
  double phi_at_saddle = 0.0;
  double phi_second = 0.0;
  double quadrature_value = 0.0;
};

struct SecondMomentReport {
  double annealed_phi = 0.0;       // (1/p) ln E[Z]
  double log_EZ2_over_p = 0.0;     // (1/p) ln E[Z^2]
  double log_gamma0_over_p = 0.0;  // (1/p) ln (4 E[Z^2] / E[Z]^2)
  double cq = 0.0;                 // -g''(1)
  bool high_temperature = false;   // cq > 0
};

// H(beta) = ||y - X beta||^2/(2 delta) expanded around the eigenbasis of
// M = X'X/delta, with field h = X'y/delta and constant ||y||^2/(2 delta).
inline QuadraticForm reduce_to_quadratic(const Instance& inst, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("reduce_to_quadratic: delta must be > 0");
  const Mat M = inst.X.transpose() * inst.X / delta;
  const Vec h = inst.X.transpose() * inst.y / delta;
  return QuadraticForm::from_dense(M, h, inst.y.squaredNorm() / (2.0 * delta));
}

namespace detail {

// Phi(z) = p z - (1/2) sum ln(lam_i + 2z) + (1/2) sum c_i^2/(lam_i + 2z),
// the exponent of the contour representation of the spherical integral.
struct PhiDerivs {
  double phi, d1, d2, d3, d4;
};

inline PhiDerivs phi_derivs(const Vec& lam, const Vec& csq, int p, double z) {
  PhiDerivs out{static_cast<double>(p) * z, static_cast<double>(p), 0.0, 0.0, 0.0};
  const int m = static_cast<int>(lam.size());
  for (int i = 0; i < m; ++i) {
    const double d = lam[i] + 2.0 * z;
    const double id = 1.0 / d;
    const double id2 = id * id;
    const double c2 = csq[i];
    out.phi += -0.5 * std::log(d) + 0.5 * c2 * id;
    out.d1 += -id - c2 * id2;
    out.d2 += 2.0 * id2 + 4.0 * c2 * id2 * id;
    out.d3 += -8.0 * id2 * id - 24.0 * c2 * id2 * id2;
    out.d4 += 48.0 * id2 * id2 + 192.0 * c2 * id2 * id2 * id;
  }
  return out;
}

inline double phi_prime(const Vec& lam, const Vec& csq, int p, double z) {
  double d1 = static_cast<double>(p);
  const int m = static_cast<int>(lam.size());
  for (int i = 0; i < m; ++i) {
    const double id = 1.0 / (lam[i] + 2.0 * z);
    d1 += -id - csq[i] * id * id;
  }
  return d1;
}

inline std::complex<double> phi_complex(const Vec& lam, const Vec& csq, int p,
                                        std::complex<double> z) {
  std::complex<double> phi = static_cast<double>(p) * z;
  const int m = static_cast<int>(lam.size());
  for (int i = 0; i < m; ++i) {
    const std::complex<double> d = lam[i] + 2.0 * z;
    phi += -0.5 * std::log(d) + 0.5 * csq[i] / d;
  }
  return phi;
}

// Unique root of Phi' on (-min(lam)/2, inf): Phi is strictly convex there,
// so bracket, bisect, then polish with Newton.
inline double find_saddle(const Vec& lam, const Vec& csq, int p) {
  const double lam_min = lam.size() > 0 ? lam.minCoeff() : 0.0;
  const double lo0 = -0.5 * lam_min + 1e-12;
  double hi = lo0 + 1.0;
  int guard = 0;
  while (phi_prime(lam, csq, p, hi) <= 0.0) {
    hi = lo0 + 2.0 * (hi - lo0);
    if (++guard > 200)
      throw NumericalError("find_saddle: no sign change of Phi' up to z = " + std::to_string(hi));
  }
  double lo = lo0;
  while (hi - lo > 1e-13) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (phi_prime(lam, csq, p, mid) < 0.0 ? lo : hi) = mid;
  }
  double z = 0.5 * (lo + hi);
  for (int it = 0; it < 2; ++it) {
    const PhiDerivs d = phi_derivs(lam, csq, p, z);
    const double step = d.d1 / d.d2;
    const double znew = z - step;
    if (znew > lo0) z = znew;
  }
  return z;
}

// Relative next-order Laplace term of the contour integral.
inline double laplace_correction(const PhiDerivs& d) {
  return d.d4 / (8.0 * d.d2 * d.d2) - 5.0 * d.d3 * d.d3 / (24.0 * d.d2 * d.d2 * d.d2);
}

struct ContourPiece {
  double log_integral;  // Phi(z*) + ln integral of exp(Phi(z*+it)-Phi(z*)) dt
  double tail;          // integrand magnitude at the last node, relative to peak
  ContourResult diag;
};

inline ContourPiece contour_quadrature(const Vec& lam, const Vec& csq, int p, double z,
                                       double half_width_T, int nodes) {
  const double phi0 = phi_derivs(lam, csq, p, z).phi;
  const double h = 2.0 * half_width_T / nodes;
  double sum = 0.0;
  double tail = 0.0;
  for (int k = 0; k <= nodes; ++k) {
    const double t = -half_width_T + h * k;
    const std::complex<double> g =
        std::exp(phi_complex(lam, csq, p, std::complex<double>(z, t)) - phi0);
    const double w = (k == 0 || k == nodes) ? 0.5 : 1.0;
    sum += w * g.real();
    if (k == 0 || k == nodes) tail = std::max(tail, std::abs(g));
  }
  ContourPiece out;
  out.log_integral = phi0 + std::log(sum * h);
  out.tail = tail;
  const PhiDerivs d = phi_derivs(lam, csq, p, z);
  out.diag = ContourResult{z, d.phi, d.d2, out.log_integral};
  return out;
}

// Widen T until the polynomially decaying tail drops below threshold.
inline double widened_half_width(const Vec& lam, const Vec& csq, int p, double z, double T) {
  const double phi0 = phi_derivs(lam, csq, p, z).phi;
  for (int it = 0; it < 60; ++it) {
    const double mag =
        std::abs(std::exp(phi_complex(lam, csq, p, std::complex<double>(z, T)) - phi0));
    if (mag <= 1e-13) return T;
    T *= 2.0;
  }
  return T;
}

}  // namespace detail

// Deterministic (1/p) ln Z via the saddle point of the contour representation,
// differenced against the zero-Hamiltonian baseline evaluated by the same
// Laplace formula so surface-measure constants cancel identically.
inline FreeEnergyEstimate log_partition_saddle(const QuadraticForm& qf) {
  const int p = qf.dim;
  const Vec csq = qf.linear.array().square();
  const double z1 = detail::find_saddle(qf.eigvals, csq, p);
  const detail::PhiDerivs d1 = detail::phi_derivs(qf.eigvals, csq, p, z1);
  const double L1 = d1.phi - 0.5 * std::log(d1.d2);

  // Baseline lam = c = 0: z* = 1/2, Phi = p/2, Phi'' = 2p.
  const double L0 = 0.5 * p - 0.5 * std::log(2.0 * p);
  const double r0 = -1.0 / (6.0 * p);

  FreeEnergyEstimate est;
  est.method = FreeEnergyMethod::saddle;
  est.value = (-qf.constant + L1 - L0) / p;
  est.correction = (detail::laplace_correction(d1) - r0) / p;
  return est;
}

// Vertical-line quadrature through the saddle; validates the saddle method.
inline FreeEnergyEstimate log_partition_contour(const QuadraticForm& qf, double half_width = 12.0,
                                                int nodes = 4096,
                                                ContourResult* diag = nullptr) {
  if (nodes < 64) throw std::invalid_argument("log_partition_contour: nodes must be >= 64");
  const int p = qf.dim;
  const Vec csq = qf.linear.array().square();
  const Vec lam0 = Vec::Zero(p);
  const Vec csq0 = Vec::Zero(p);

  auto piece = [&](const Vec& lam, const Vec& cs, double z) {
    const double d2 = detail::phi_derivs(lam, cs, p, z).d2;
    double T = half_width / std::sqrt(d2);
    detail::ContourPiece pc = detail::contour_quadrature(lam, cs, p, z, T, nodes);
    if (pc.tail > 1e-12) {
      std::cerr << "tapsphere: contour tail " << pc.tail << " above 1e-12, widening T once\n";
      T = detail::widened_half_width(lam, cs, p, z, T);
      pc = detail::contour_quadrature(lam, cs, p, z, T, nodes);
      if (pc.tail > 1e-12)
        throw NumericalError("log_partition_contour: oscillatory tail not converged, magnitude " +
                             std::to_string(pc.tail));
    }
    return pc;
  };

  const double z1 = detail::find_saddle(qf.eigvals, csq, p);
  const detail::ContourPiece p1 = piece(qf.eigvals, csq, z1);
  const detail::ContourPiece p0 = piece(lam0, csq0, 0.5);

  if (diag) *diag = p1.diag;
  FreeEnergyEstimate est;
  est.method = FreeEnergyMethod::contour;
  est.value = (-qf.constant + p1.log_integral - p0.log_integral) / p;
  return est;
}

// (1/p) ln of the sample mean of exp(-H) over uniform sphere draws, computed
// by log-sum-exp; std_err by jackknife over 20 blocks.
inline FreeEnergyEstimate mc_log_partition(const Instance& inst, double delta, long num_samples,
                                           RngStream& rng) {
  if (num_samples < 1000)
    throw std::invalid_argument("mc_log_partition: num_samples must be >= 1000");
  const int p = inst.p();
  const double sqrt_p = std::sqrt(static_cast<double>(p));

  std::vector<double> expo(static_cast<size_t>(num_samples));
  const long block = 4096;
  Mat B(p, block);
  long done = 0;
  while (done < num_samples) {
    const long m = std::min(block, num_samples - done);
    for (long k = 0; k < m; ++k) {
      double nrm2 = 0.0;
      for (int i = 0; i < p; ++i) {
        const double g = rng.normal();
        B(i, k) = g;
        nrm2 += g * g;
      }
      B.col(k) *= sqrt_p / std::sqrt(nrm2);
    }
    const Mat R = inst.X * B.leftCols(m);
    for (long k = 0; k < m; ++k)
      expo[static_cast<size_t>(done + k)] = -(inst.y - R.col(k)).squaredNorm() / (2.0 * delta);
    done += m;
  }

  const double m0 = *std::max_element(expo.begin(), expo.end());
  if (!std::isfinite(m0)) throw NumericalError("mc_log_partition: non-finite Hamiltonian");
  if (m0 < -700.0)
    throw NumericalError(
        "mc_log_partition: all weights underflow (max exponent < -700); recenter the "
        "Hamiltonian by its minimum before sampling");

  const int nblocks = 20;
  std::vector<double> bsum(nblocks, 0.0);
  std::vector<long> bcnt(nblocks, 0);
  for (long k = 0; k < num_samples; ++k) {
    const int b = static_cast<int>((k * nblocks) / num_samples);
    bsum[b] += std::exp(expo[static_cast<size_t>(k)] - m0);
    bcnt[b] += 1;
  }
  double total = 0.0;
  for (double s : bsum) total += s;

  FreeEnergyEstimate est;
  est.method = FreeEnergyMethod::monte_carlo;
  est.value = (m0 + std::log(total / num_samples)) / p;

  std::vector<double> loo(nblocks);
  double loo_mean = 0.0;
  for (int b = 0; b < nblocks; ++b) {
    loo[b] = (m0 + std::log((total - bsum[b]) / (num_samples - bcnt[b]))) / p;
    loo_mean += loo[b];
  }
  loo_mean /= nblocks;
  double ss = 0.0;
  for (int b = 0; b < nblocks; ++b) ss += (loo[b] - loo_mean) * (loo[b] - loo_mean);
  est.std_err = std::sqrt(ss * (nblocks - 1) / nblocks);
  return est;
}

// phi_p(delta) = (1/p) ln E[Z] = -(n/2p) ln(1 + p/(delta n)) for the model
// without external field.
inline double annealed_free_energy(int p, int n, double delta) {
  if (p <= 0 || n <= 0 || !(delta > 0.0))
    throw std::invalid_argument("annealed_free_energy: arguments must be positive");
  const double r = static_cast<double>(p) / (delta * n);
  return -(0.5 * n / p) * std::log1p(r);
}

namespace detail {

// Adaptive Simpson with an absolute-scale tolerance.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double fa, double fm, double fb, double whole, double tol,
                               int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0)
    throw NumericalError("adaptive_simpson: no convergence on [" + std::to_string(a) + ", " +
                         std::to_string(b) + "], residual " + std::to_string(delta));
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-12, int depth = 48) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, depth);
}

}  // namespace detail

// Annealed second moment E[Z^2] by 1-D quadrature of
// [(1 + p/(dn))^2 - (Q p/(dn))^2]^{-n/2} against the overlap density, plus the
// temperature criterion C_Q = -g''(1) from the same calculation.
inline SecondMomentReport annealed_second_moment(int p, int n, double delta) {
  if (p <= 2 || n <= 0 || !(delta > 0.0))
    throw std::invalid_argument("annealed_second_moment: arguments must be positive (p > 2)");
  const double r = static_cast<double>(p) / (delta * n);
  const double alpha = static_cast<double>(n) / p;
  const double log_EZ = -(0.5 * n) * std::log1p(r);

  // log integrand of E[Z^2] as a function of the overlap t = beta'sigma / p.
  auto log_g = [&](double t) {
    const double b = (1.0 + r) * (1.0 + r) - (t * r) * (t * r);
    return -(0.5 * n) * std::log(b) +
           std::lgamma(0.5 * p) - std::lgamma(0.5 * (p - 1)) - 0.5 * std::log(M_PI) +
           0.5 * (p - 3) * std::log1p(-t * t);
  };
  const double edge = 1.0 - 1e-12;
  double gmax = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 4000; ++i) {
    const double t = -edge + 2.0 * edge * i / 4000.0;
    gmax = std::max(gmax, log_g(t));
  }
  auto f = [&](double t) { return std::exp(log_g(t) - gmax); };
  const double integral = detail::integrate(f, -edge, edge, 1e-12, 48);
  const double log_EZ2 = gmax + std::log(integral);

  const double onepr2 = (1.0 + r) * (1.0 + r);
  const double g2_at_1 = alpha * r * r * (onepr2 + r * r) / ((onepr2 - r * r) * (onepr2 - r * r)) -
                         0.5;

  SecondMomentReport rep;
  rep.annealed_phi = log_EZ / p;
  rep.log_EZ2_over_p = log_EZ2 / p;
  rep.log_gamma0_over_p = (std::log(4.0) + log_EZ2 - 2.0 * log_EZ) / p;
  rep.cq = -g2_at_1;
  rep.high_temperature = rep.cq > 0.0;
  return rep;
}

// Direct Monte Carlo of the annealed mean E_X[Z] for the model without
// external field: one uniform sphere point per disorder draw gives an
// unbiased estimate of E_{X,beta} exp(-||X beta||^2 / (2 delta)).
// Returns ((1/p) ln mean, jackknife std err of that log-mean).
inline std::pair<double, double> annealed_ez_mc(int p, int n, double delta, long draws,
                                                RngStream& rng) {
  if (draws < 100) throw std::invalid_argument("annealed_ez_mc: draws must be >= 100");
  const double sd = 1.0 / std::sqrt(static_cast<double>(n));
  const double sqrt_p = std::sqrt(static_cast<double>(p));
  std::vector<double> expo(static_cast<size_t>(draws));
  Mat X(n, p);
  for (long k = 0; k < draws; ++k) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j) X(i, j) = sd * rng.normal();
    const Vec beta = sample_uniform_sphere(p, sqrt_p, rng);
    expo[static_cast<size_t>(k)] = -(X * beta).squaredNorm() / (2.0 * delta);
  }
  const double m0 = *std::max_element(expo.begin(), expo.end());
  const int nb = 20;
  std::vector<double> bsum(nb, 0.0);
  std::vector<long> bcnt(nb, 0);
  double total = 0.0;
  for (long k = 0; k < draws; ++k) {
    const int b = static_cast<int>((k * nb) / draws);
    const double w = std::exp(expo[static_cast<size_t>(k)] - m0);
    bsum[b] += w;
    bcnt[b] += 1;
    total += w;
  }
  const double value = (m0 + std::log(total / draws)) / p;
  std::vector<double> loo(nb);
  double lm = 0.0;
  for (int b = 0; b < nb; ++b) {
    loo[b] = (m0 + std::log((total - bsum[b]) / (draws - bcnt[b]))) / p;
    lm += loo[b];
  }
  lm /= nb;
  double ss = 0.0;
  for (int b = 0; b < nb; ++b) ss += (loo[b] - lm) * (loo[b] - lm);
  return {value, std::sqrt(ss * (nb - 1) / nb)};
}

// (1/p) ln gamma_0 along a p-sweep at fixed aspect ratio; positive and
// decreasing toward 0 in the high-temperature phase.
inline std::vector<double> log_gamma0_trend(const std::vector<int>& p_list, double alpha,
                                            double delta) {
  std::vector<double> out;
  out.reserve(p_list.size());
  for (int p : p_list) {
    const int n = static_cast<int>(std::lround(alpha * p));
    const SecondMomentReport rep = annealed_second_moment(p, n, delta);
    if (!rep.high_temperature)
      throw std::invalid_argument("log_gamma0_trend: not in the high-temperature phase, C_Q = " +
                                  std::to_string(rep.cq));
    out.push_back(rep.log_gamma0_over_p);
  }
  return out;
}

namespace detail {

// Orthonormal basis of the orthogonal complement of the span of the given
// (nonzero, independent) vectors, via a full QR factorization.
inline Mat complement_basis(const std::vector<Vec>& span, int p) {
  const int m = static_cast<int>(span.size());
  if (m == 0) return Mat::Identity(p, p);
  Mat A(p, m);
  for (int j = 0; j < m; ++j) A.col(j) = span[j];
  Eigen::HouseholderQR<Mat> qr(A);
  const Mat Q = qr.householderQ();
  return Q.rightCols(p - m);
}

// Nonzero members of {a, X'(y - Xa)}. At any ridge-path stationary point the
// recentered field is exactly mu * a, so a parallel pair collapses to the
// one-dimensional span rather than erroring; the decomposition only needs the
// span itself.
inline std::vector<Vec> band_span(const Instance& inst, const Vec& a) {
  const Vec g = inst.X.transpose() * (inst.y - inst.X * a);
  const double tol = 1e-12;
  std::vector<Vec> span;
  if (a.norm() > tol * std::sqrt(static_cast<double>(inst.p()))) span.push_back(a);
  if (g.norm() > tol * std::max(1.0, inst.y.norm())) {
    const bool parallel =
        !span.empty() && std::abs(a.dot(g)) / (a.norm() * g.norm()) > 1.0 - 1e-10;
    if (!parallel) span.push_back(g);
  }
  return span;
}

}  // namespace detail

struct BandDecomposition {
  double onsager_term = 0.0;
  double volume_term = 0.0;
  double recentered_fit = 0.0;
};

// Three-term decomposition of the free energy on the band B(a, eps): the
// recentered fit, the subspace free energy at effective noise
// pd/(p - ||a||^2), and the band volume (1/2) ln(1 - ||a||^2/p).
inline BandDecomposition band_free_energy(const Instance& inst, double delta, const Vec& a) {
  const int p = inst.p();
  const double s = a.squaredNorm() / p;
  if (!(s < 1.0)) throw std::domain_error("band_free_energy: require ||a|| < sqrt(p) strictly");

  const std::vector<Vec> span = detail::band_span(inst, a);
  const Mat W = detail::complement_basis(span, p);
  const int d = static_cast<int>(W.cols());

  const double delta_eff = delta / (1.0 - s);
  const Mat S = W.transpose() * (inst.X.transpose() * inst.X) * W;
  const double scale = (static_cast<double>(p) / d) / delta_eff;
  const QuadraticForm qf = QuadraticForm::from_dense(scale * S, Vec::Zero(d), 0.0);

  BandDecomposition out;
  out.onsager_term = (static_cast<double>(d) / p) * log_partition_saddle(qf).value;
  out.volume_term = 0.5 * std::log1p(-s);
  out.recentered_fit = -(inst.y - inst.X * a).squaredNorm() / (2.0 * delta * p);
  return out;
}

// Restricted free energy f_p(d): the contribution of the posterior slice
// where the alignment beta'beta0 / p equals d. Precomputes the rotated,
// eigen-reduced subproblem once so a whole profile is cheap.
class RestrictedProfile {
 public:
  RestrictedProfile(const Instance& inst, double delta, const PerturbedInstance* pert = nullptr)
      : p_(inst.p()), delta_(delta) {
    // Householder reflection sending beta0/sqrt(p) to e1; applied to X's
    // columns it makes the ground truth axis-aligned, exactly.
    const int p = p_;
    Vec u = inst.beta0 / std::sqrt(static_cast<double>(p));
    u(0) -= 1.0;
    Mat Xt;
    const double unrm2 = u.squaredNorm();
    if (unrm2 > 1e-24) {
      Xt = inst.X - (inst.X * u) * (2.0 / unrm2) * u.transpose();
    } else {
      Xt = inst.X;
    }
    const Vec x1 = Xt.col(0);
    const Mat Xr = Xt.rightCols(p - 1);

    x1_sq_ = x1.squaredNorm();
    x1_eps_ = x1.dot(inst.eps);
    eps_sq_ = inst.eps.squaredNorm();

    const Mat S = Xr.transpose() * Xr;
    Eigen::SelfAdjointEigenSolver<Mat> es(S);
    if (es.info() != Eigen::Success)
      throw NumericalError("RestrictedProfile: eigendecomposition failed");
    lamS_ = es.eigenvalues();
    const Mat& V = es.eigenvectors();
    vt_g1_ = V.transpose() * (Xr.transpose() * x1) * std::sqrt(static_cast<double>(p));
    vt_g2_ = V.transpose() * (Xr.transpose() * inst.eps);

    if (pert) {
      perturbed_ = true;
      lam0eps_ = pert->lambda0 * pert->eps_p;
      Vec Zt = pert->Z;
      if (unrm2 > 1e-24) Zt -= u * (2.0 / unrm2 * u.dot(pert->Z));
      z1_tilde_ = Zt(0);
      vt_z_ = V.transpose() * Zt.tail(p - 1);
    }
  }

  double h_norm_sq(double d) const {
    return (1.0 - d) * (1.0 - d) * p_ * x1_sq_ +
           2.0 * (1.0 - d) * std::sqrt(static_cast<double>(p_)) * x1_eps_ + eps_sq_;
  }

  double operator()(double d) const {
    if (!(std::abs(d) < 1.0))
      throw std::domain_error("restricted_free_energy: require |delta_align| < 1");
    const int p = p_;
    const double one_md2 = 1.0 - d * d;
    const double scale_m = p * one_md2 / ((p - 1) * delta_);
    const double kappa = std::sqrt(p * one_md2 / (p - 1.0)) / delta_;

    Vec c = kappa * ((1.0 - d) * vt_g1_ + vt_g2_);
    double extra_const = 0.0;
    if (perturbed_) {
      const double kappa2 = std::sqrt(p * one_md2 / (p - 1.0));
      c += std::sqrt(lam0eps_) * kappa2 * vt_z_;
      extra_const = lam0eps_ * p * d + std::sqrt(lam0eps_) * std::sqrt(static_cast<double>(p)) *
                                           d * z1_tilde_ -
                    0.5 * lam0eps_ * p;
    }
    const QuadraticForm qf = QuadraticForm::from_eigen(scale_m * lamS_, c, 0.0);
    const double f_sub = log_partition_saddle(qf).value;
    const double log_density = std::lgamma(0.5 * p) - std::lgamma(0.5 * (p - 1)) -
                               0.5 * std::log(M_PI) + 0.5 * (p - 3) * std::log1p(-d * d);
    return (log_density - h_norm_sq(d) / (2.0 * delta_) + extra_const + (p - 1) * f_sub) / p;
  }

 private:
  int p_;
  double delta_;
  double x1_sq_ = 0.0, x1_eps_ = 0.0, eps_sq_ = 0.0;
  Vec lamS_, vt_g1_, vt_g2_;
  bool perturbed_ = false;
  double lam0eps_ = 0.0, z1_tilde_ = 0.0;
  Vec vt_z_;
};

inline double restricted_free_energy(const Instance& inst, double delta, double delta_align) {
  return RestrictedProfile(inst, delta)(delta_align);
}

}  // namespace tapsphere
