#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "tapsphere/model.hpp"
#include "tapsphere/oracle.hpp"

namespace tapsphere {

struct SpectrumReport {
  Vec eigvals;  // of X'X, ascending
  double sigma_max = 0.0;
  double mp_ks_distance = 0.0;
  double quantile_deviation = 0.0;  // max_i |theta^i - theta_{i/p}|
  bool in_good_set = false;
};

// Good set: sigma_max(X) < 1 + alpha^{-1/2} + kappa and ||eps|| < kappa sqrt(p delta).
// delta is taken from the noise actually carried by the instance.
inline bool good_set_check(const Instance& inst, double kappa, double delta) {
  if (!(kappa > 0.0)) throw std::invalid_argument("good_set_check: kappa must be > 0");
  const double alpha = inst.n() / static_cast<double>(inst.p());
  const double sigma_max = std::sqrt(
      Eigen::SelfAdjointEigenSolver<Mat>(inst.X.transpose() * inst.X).eigenvalues().maxCoeff());
  return sigma_max < 1.0 + 1.0 / std::sqrt(alpha) + kappa &&
         inst.eps.norm() < kappa * std::sqrt(inst.p() * delta);
}

// Marchenko-Pastur law for X'X with entries of variance 1/n: ratio c = p/n,
// continuous density sqrt((b-x)(x-a)) / (2 pi c x) on [(1-sqrt(c))^2,
// (1+sqrt(c))^2], plus an atom of mass 1 - 1/c at zero when p > n.
class MarchenkoPastur {
 public:
  MarchenkoPastur(int p, int n) : c_(static_cast<double>(p) / n) {
    const double sc = std::sqrt(c_);
    a_ = (1.0 - sc) * (1.0 - sc);
    b_ = (1.0 + sc) * (1.0 + sc);
    atom_ = c_ > 1.0 ? 1.0 - 1.0 / c_ : 0.0;
  }

  double cdf(double x) const {
    if (x < 0.0) return 0.0;
    double f = atom_;
    if (x <= a_) return f;
    const double hi = std::min(x, b_);
    // substitution x = a + (b-a) sin^2(phi) removes both edge singularities
    const double phi_hi = std::asin(std::sqrt((hi - a_) / (b_ - a_)));
    auto integrand = [&](double phi) {
      const double sp = std::sin(phi), cp = std::cos(phi);
      const double xv = a_ + (b_ - a_) * sp * sp;
      return (b_ - a_) * (b_ - a_) * sp * sp * cp * cp / (M_PI * c_ * xv);
    };
    f += detail::integrate(integrand, 0.0, phi_hi, 1e-10, 48);
    return std::min(f, 1.0);
  }

  double quantile(double t) const {
    if (t <= atom_) return 0.0;
    double lo = a_, hi = b_;
    for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
      const double mid = 0.5 * (lo + hi);
      (cdf(mid) < t ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

  double support_lo() const { return a_; }
  double support_hi() const { return b_; }
  double atom_mass() const { return atom_; }

 private:
  double c_, a_, b_, atom_;
};

inline SpectrumReport mp_diagnostics(const Instance& inst, double delta, double kappa = 100.0) {
  const int p = inst.p();
  const int n = inst.n();
  SpectrumReport rep;
  Eigen::SelfAdjointEigenSolver<Mat> es(inst.X.transpose() * inst.X);
  if (es.info() != Eigen::Success) throw NumericalError("mp_diagnostics: eigendecomposition failed");
  rep.eigvals = es.eigenvalues();
  rep.sigma_max = std::sqrt(rep.eigvals.maxCoeff());

  const MarchenkoPastur mp(p, n);
  // the rank-deficiency atom at zero is one tied block for KS purposes
  int atom_count = 0;
  while (atom_count < p && std::abs(rep.eigvals[atom_count]) <= 1e-10) ++atom_count;
  double ks = std::abs(mp.atom_mass() - static_cast<double>(atom_count) / p);
  double qdev = 0.0;
  for (int i = atom_count; i < p; ++i) {
    const double f = mp.cdf(rep.eigvals[i]);
    ks = std::max(ks, std::abs(f - static_cast<double>(i + 1) / p));
    ks = std::max(ks, std::abs(f - static_cast<double>(i) / p));
  }
  for (int i = 0; i < p; ++i)
    qdev = std::max(qdev, std::abs(rep.eigvals[i] - mp.quantile((i + 1.0) / p)));
  rep.mp_ks_distance = ks;
  rep.quantile_deviation = qdev;
  rep.in_good_set = good_set_check(inst, kappa, delta);
  return rep;
}

enum class SingularBound { largest, smallest };

// Empirical frequency of sqrt(n) - sqrt(p) - t <= sigma_min(A) (resp.
// sigma_max(A) <= sqrt(n) + sqrt(p) + t) over fresh standard-normal designs;
// the tail bound predicts frequency >= 1 - 2 exp(-t^2/2).
inline double singular_bound_frequency(const ModelConfig& cfg, double t, int trials,
                                       SingularBound which = SingularBound::largest) {
  if (trials < 100) throw std::invalid_argument("singular_bound_frequency: trials must be >= 100");
  RngStream root = RngStream::seeded(cfg.seed).split("singular-bound");
  long hits = 0;
  for (int k = 0; k < trials; ++k) {
    ModelConfig c = cfg;
    c.seed = root.split(k)();
    const Instance inst = generate_instance(c);
    // A = sqrt(n) X has standard normal entries
    Eigen::SelfAdjointEigenSolver<Mat> es(inst.X.transpose() * inst.X);
    const double scale = std::sqrt(static_cast<double>(cfg.n));
    if (which == SingularBound::largest) {
      const double smax = scale * std::sqrt(es.eigenvalues().maxCoeff());
      hits += smax <= std::sqrt(static_cast<double>(cfg.n)) +
                          std::sqrt(static_cast<double>(cfg.p)) + t;
    } else {
      const double smin = scale * std::sqrt(std::max(0.0, es.eigenvalues().minCoeff()));
      hits += smin >= std::sqrt(static_cast<double>(cfg.n)) -
                          std::sqrt(static_cast<double>(cfg.p)) - t;
    }
  }
  return static_cast<double>(hits) / trials;
}

struct InterlacingResult {
  double max_gap = 0.0;       // max_i |s_i - lambda_i|, both ascending
  double worst_violation = 0.0;  // of lambda_i <= s_i <= lambda_{i+2}
};

// Eigenvalues of the compression of X'X onto Span(u, v)-perp interlace the
// full spectrum: lambda_i <= s_i <= lambda_{i+2}.
inline InterlacingResult interlacing_check(const Instance& inst, const Vec& u, const Vec& v) {
  const int p = inst.p();
  const double cosang = std::abs(u.dot(v)) / (u.norm() * v.norm());
  if (u.norm() == 0.0 || v.norm() == 0.0 || cosang > 1.0 - 1e-12)
    throw std::invalid_argument("interlacing_check: u, v must be linearly independent");
  const Mat W = detail::complement_basis({u, v}, p);
  const Mat XtX = inst.X.transpose() * inst.X;
  Eigen::SelfAdjointEigenSolver<Mat> full(XtX);
  Eigen::SelfAdjointEigenSolver<Mat> minor(W.transpose() * XtX * W);
  const Vec lam = full.eigenvalues();
  const Vec s = minor.eigenvalues();

  InterlacingResult out;
  for (int i = 0; i < p - 2; ++i) {
    out.max_gap = std::max(out.max_gap, std::abs(s[i] - lam[i]));
    out.worst_violation = std::max(out.worst_violation, lam[i] - s[i]);
    out.worst_violation = std::max(out.worst_violation, s[i] - lam[i + 2]);
  }
  return out;
}

}  // namespace tapsphere
