#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tapsphere/model.hpp"

namespace tapsphere {

// Evaluation at ||a||^2 >= p, where the functional is -infinity.
struct TapBoundaryError : std::domain_error {
  using std::domain_error::domain_error;
};

struct TapValue {
  double value = 0.0;
  double term_fit = 0.0;      // -||y - Xa||^2 / (2 delta p)
  double term_onsager = 0.0;  // -(alpha/2) ln(1 + (1-s)/(delta alpha))
  double term_volume = 0.0;   // (1/2) ln(1 - s)
  double s = 0.0;             // ||a||^2 / p
  double q = 0.0;             // ||y - Xa||^2 / p
};

enum class TapMethod { svd_path, gradient_ascent };

inline const char* to_string(TapMethod m) {
  return m == TapMethod::svd_path ? "svd-path" : "gradient-ascent";
}

struct TapOptimum {
  Vec a_star;
  double value = 0.0;
  double s_star = 0.0;
  double mu_star = 0.0;
  TapMethod method = TapMethod::svd_path;
  long iterations = 0;
};

// Thin SVD of the design plus the rotated field, enough to walk the ridge
// path of the constrained least-squares subproblem without touching X again.
struct SvdCache {
  Vec singular_values;  // descending
  Vec rotated_field;    // V'X'y, one entry per singular value
  double y_norm_sq = 0.0;
  Mat V;                // right singular vectors (thin)
  Vec null_dir;         // first null right-singular direction (empty if none)
  int p = 0;
  int n = 0;
};

// Assembles the TAP terms from the scalars (q, s); the functional depends on
// a only through them.
inline TapValue tap_value_from_scalars(double q, double s, double delta, double alpha) {
  if (!(s < 1.0)) throw TapBoundaryError("tap_value: ||a||^2 >= p");
  TapValue v;
  v.s = s;
  v.q = q;
  v.term_fit = -q / (2.0 * delta);
  v.term_onsager = -(alpha / 2.0) * std::log1p((1.0 - s) / (delta * alpha));
  v.term_volume = 0.5 * std::log1p(-s);
  v.value = v.term_fit + v.term_onsager + v.term_volume;
  return v;
}

inline TapValue tap_value(const Instance& inst, double delta, const Vec& a) {
  const int p = inst.p();
  const double s = a.squaredNorm() / p;
  const double q = (inst.y - inst.X * a).squaredNorm() / p;
  return tap_value_from_scalars(q, s, delta, inst.n() / static_cast<double>(p));
}

// Radial derivative bracket shared by the two s-dependent terms.
inline double tap_radial_bracket(double s, double delta, double alpha) {
  return 1.0 / (2.0 * (delta + (1.0 - s) / alpha)) - 1.0 / (2.0 * (1.0 - s));
}

inline Vec tap_gradient(const Instance& inst, double delta, const Vec& a) {
  const int p = inst.p();
  const double s = a.squaredNorm() / p;
  if (!(s < 1.0)) throw TapBoundaryError("tap_gradient: ||a||^2 >= p");
  const double alpha = inst.n() / static_cast<double>(p);
  return (inst.X.transpose() * (inst.y - inst.X * a)) / (delta * p) +
         a * (2.0 / p) * tap_radial_bracket(s, delta, alpha);
}

inline SvdCache build_svd_cache(const Instance& inst) {
  const int p = inst.p();
  const int n = inst.n();
  Eigen::BDCSVD<Mat> svd(inst.X, Eigen::ComputeThinU | Eigen::ComputeFullV);
  if (svd.info() != Eigen::Success) throw NumericalError("build_svd_cache: SVD failed");

  SvdCache cache;
  cache.p = p;
  cache.n = n;
  cache.singular_values = svd.singularValues();
  const int m = static_cast<int>(cache.singular_values.size());
  cache.V = svd.matrixV().leftCols(m);
  cache.y_norm_sq = inst.y.squaredNorm();
  cache.rotated_field = cache.singular_values.cwiseProduct(svd.matrixU().transpose() * inst.y);
  if (p > m) cache.null_dir = svd.matrixV().col(m);

  const double xnorm = inst.X.norm();
  if (xnorm > 0.0) {
    const Mat recon = svd.matrixU() * cache.singular_values.asDiagonal() *
                      svd.matrixV().leftCols(m).transpose();
    if ((recon - inst.X).norm() / xnorm > 1e-10)
      throw NumericalError("build_svd_cache: SVD reconstruction error above 1e-10");
  }
  return cache;
}

struct FitOnSphere {
  double q_star = 0.0;
  double mu = 0.0;
  Vec a;
};

namespace detail {

inline double fit_value(const SvdCache& c, const Vec& t) {
  double q = c.y_norm_sq;
  for (int i = 0; i < t.size(); ++i)
    q += -2.0 * c.rotated_field[i] * t[i] +
         c.singular_values[i] * c.singular_values[i] * t[i] * t[i];
  return q / c.p;
}

}  // namespace detail

// Minimizes ||y - Xa||^2/p over ||a||^2 = p s along the ridge path
// t_i(mu) = c_i / (sigma_i^2 + mu). When a null space exists and the
// least-squares point fits inside the sphere, the deficit is padded along the
// first null direction at zero fit cost.
inline FitOnSphere min_fit_on_sphere(const SvdCache& cache, double s) {
  if (!(s >= 0.0 && s < 1.0)) throw std::domain_error("min_fit_on_sphere: s must lie in [0, 1)");
  const int p = cache.p;
  const int m = static_cast<int>(cache.singular_values.size());
  const double target = p * s;

  FitOnSphere out;
  if (s == 0.0) {
    out.a = Vec::Zero(p);
    out.q_star = cache.y_norm_sq / p;
    out.mu = std::numeric_limits<double>::infinity();
    return out;
  }

  const double sig_max = cache.singular_values.size() ? cache.singular_values[0] : 0.0;
  const double sig_tol = std::max(1e-13 * sig_max, 1e-300);
  double sig_min_eff2 = std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i) {
    if (std::abs(cache.rotated_field[i]) > 0.0 && cache.singular_values[i] > sig_tol)
      sig_min_eff2 =
          std::min(sig_min_eff2, cache.singular_values[i] * cache.singular_values[i]);
  }

  auto norm_sq_at = [&](double mu) {
    double nsq = 0.0;
    for (int i = 0; i < m; ++i) {
      if (cache.singular_values[i] <= sig_tol) continue;
      const double t = cache.rotated_field[i] /
                       (cache.singular_values[i] * cache.singular_values[i] + mu);
      nsq += t * t;
    }
    return nsq;
  };

  // Least-squares point (pseudo-inverse); padding along a kernel direction
  // reaches the prescribed norm at zero fit cost.
  const double ls_norm_sq = norm_sq_at(0.0);
  const bool has_free_dir =
      cache.null_dir.size() > 0 || (m > 0 && cache.singular_values[m - 1] <= sig_tol);
  if (has_free_dir && ls_norm_sq <= target) {
    Vec t(m);
    for (int i = 0; i < m; ++i)
      t[i] = cache.singular_values[i] > sig_tol
                 ? cache.rotated_field[i] /
                       (cache.singular_values[i] * cache.singular_values[i])
                 : 0.0;
    const double pad = std::sqrt(target - ls_norm_sq);
    if (cache.null_dir.size() > 0) {
      out.a = cache.V * t + pad * cache.null_dir;
    } else {
      t[m - 1] += pad;
      out.a = cache.V * t;
    }
    out.q_star = detail::fit_value(cache, t);
    out.mu = 0.0;
    return out;
  }

  // ||a(mu)||^2 is strictly decreasing on (-sig_min_eff^2, inf): bracket and
  // bisect to |norm^2 - p s| <= 1e-10 p.
  double lo = std::isfinite(sig_min_eff2) ? -sig_min_eff2 : 0.0;
  double hi = std::max(1.0, -lo);
  while (norm_sq_at(hi) > target) hi *= 2.0;
  const double tol_abs = 1e-10 * p;
  double mu = hi;
  for (int it = 0; it < 400; ++it) {
    mu = 0.5 * (lo + hi);
    const double nsq = norm_sq_at(mu);
    if (std::abs(nsq - target) <= tol_abs) break;
    (nsq > target ? lo : hi) = mu;
  }

  Vec t(m);
  for (int i = 0; i < m; ++i)
    t[i] = cache.singular_values[i] > sig_tol
               ? cache.rotated_field[i] /
                     (cache.singular_values[i] * cache.singular_values[i] + mu)
               : 0.0;
  out.a = cache.V * t;
  out.q_star = detail::fit_value(cache, t);
  out.mu = mu;
  return out;
}

namespace detail {

struct SProfilePoint {
  double phi;
  double q_star;
  double mu;
};

inline SProfilePoint s_profile(const SvdCache& cache, double s, double delta, double alpha,
                               bool with_onsager) {
  const FitOnSphere fit = min_fit_on_sphere(cache, s);
  double phi = -fit.q_star / (2.0 * delta) + 0.5 * std::log1p(-s);
  if (with_onsager) phi += -(alpha / 2.0) * std::log1p((1.0 - s) / (delta * alpha));
  return {phi, fit.q_star, fit.mu};
}

// d phi / ds along the ridge path: the envelope theorem gives
// d(-q*(s)/(2 delta))/ds = mu/(2 delta), and the radial terms are analytic.
inline double s_profile_slope(const SvdCache& cache, double s, double delta, double alpha,
                              bool with_onsager) {
  const FitOnSphere fit = min_fit_on_sphere(cache, s);
  double slope = fit.mu / (2.0 * delta) - 1.0 / (2.0 * (1.0 - s));
  if (with_onsager) slope += 1.0 / (2.0 * (delta + (1.0 - s) / alpha));
  return slope;
}

// Coarse grid, then a derivative bisection inside the best cell (phi' is
// analytic along the ridge path); golden section is the fallback when the
// slope does not change sign there. Grid ties break toward the smaller s.
inline std::pair<double, long> maximize_s_profile(const SvdCache& cache, double delta,
                                                  double alpha, bool with_onsager, int grid_size,
                                                  double tol) {
  const double s_hi = 1.0 - 1e-6;
  long evals = 0;
  auto phi = [&](double s) {
    ++evals;
    return s_profile(cache, s, delta, alpha, with_onsager).phi;
  };
  auto slope = [&](double s) {
    ++evals;
    return s_profile_slope(cache, s, delta, alpha, with_onsager);
  };

  int best = 0;
  double best_phi = -std::numeric_limits<double>::infinity();
  std::vector<double> grid(grid_size + 1);
  for (int i = 0; i <= grid_size; ++i) {
    grid[i] = s_hi * i / grid_size;
    const double v = phi(grid[i]);
    if (v > best_phi + 1e-12) {
      best_phi = v;
      best = i;
    }
  }

  double lo = grid[std::max(0, best - 1)];
  double hi = grid[std::min(grid_size, best + 1)];
  if (best == 0 && slope(std::min(1e-12, hi)) < 0.0) return {0.0, evals};
  if (slope(lo) > 0.0 && slope(hi) < 0.0) {
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      (slope(mid) > 0.0 ? lo : hi) = mid;
    }
    return {0.5 * (lo + hi), evals};
  }

  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - invphi * (hi - lo);
  double x2 = lo + invphi * (hi - lo);
  double f1 = phi(x1), f2 = phi(x2);
  while (hi - lo > tol) {
    if (f1 >= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - invphi * (hi - lo);
      f1 = phi(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + invphi * (hi - lo);
      f2 = phi(x2);
    }
  }
  return {0.5 * (lo + hi), evals};
}

}  // namespace detail

// Global maximizer of f_TAP via the exact ridge-path reduction to a 1-D
// profile in s = ||a||^2/p.
inline TapOptimum sup_tap_svd(const Instance& inst, double delta, int grid_size = 512,
                              double tol = 1e-11) {
  if (grid_size < 64) throw std::invalid_argument("sup_tap_svd: grid_size must be >= 64");
  const double alpha = inst.n() / static_cast<double>(inst.p());
  const SvdCache cache = build_svd_cache(inst);
  auto [s_star, evals] = detail::maximize_s_profile(cache, delta, alpha, true, grid_size, tol);
  const FitOnSphere fit = min_fit_on_sphere(cache, s_star);

  TapOptimum opt;
  opt.a_star = fit.a;
  opt.s_star = s_star;
  opt.mu_star = fit.mu;
  opt.value = tap_value_from_scalars(fit.q_star, s_star, delta, alpha).value;
  opt.method = TapMethod::svd_path;
  opt.iterations = evals;
  return opt;
}

// Projected gradient ascent with Armijo backtracking; iterates that leave the
// ball are pulled back to radius sqrt(p (1 - 1e-8)).
inline TapOptimum sup_tap_gradient_ascent(const Instance& inst, double delta, const Vec& a0,
                                          long max_iters = 2000, double tol = 1e-10) {
  const int p = inst.p();
  if (!(a0.squaredNorm() / p < 1.0))
    throw TapBoundaryError("sup_tap_gradient_ascent: start outside the open ball");
  const double r_cap = std::sqrt(p * (1.0 - 1e-8));
  const double armijo = 1e-4;

  Vec a = a0;
  double f = tap_value(inst, delta, a).value;
  long it = 0;
  for (; it < max_iters; ++it) {
    const Vec g = tap_gradient(inst, delta, a);
    const double gnorm2 = g.squaredNorm();
    double step = 1.0;
    Vec a_new;
    double f_new = f;
    bool accepted = false;
    while (step > 1e-18) {
      a_new = a + step * g;
      if (a_new.norm() > r_cap) a_new *= r_cap / a_new.norm();
      f_new = tap_value(inst, delta, a_new).value;
      if (!std::isfinite(f_new))
        throw NumericalError("sup_tap_gradient_ascent: non-finite value at iterate " +
                             std::to_string(it) + ", s = " +
                             std::to_string(a_new.squaredNorm() / p));
      if (f_new >= f + armijo * step * gnorm2) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    a = a_new;
    f = f_new;
    if (step * std::sqrt(gnorm2) < tol) {
      ++it;
      break;
    }
  }

  TapOptimum opt;
  opt.a_star = a;
  opt.s_star = a.squaredNorm() / p;
  opt.value = f;
  opt.method = TapMethod::gradient_ascent;
  opt.iterations = it;
  return opt;
}

// sup f_TAP - sup f_noons, where f_noons drops the Onsager term; never
// positive since the Onsager term is <= 0 pointwise.
inline double onsager_gap(const Instance& inst, double delta, int grid_size = 512,
                          double tol = 1e-11) {
  const double alpha = inst.n() / static_cast<double>(inst.p());
  const SvdCache cache = build_svd_cache(inst);
  auto [s_tap, e1] = detail::maximize_s_profile(cache, delta, alpha, true, grid_size, tol);
  auto [s_non, e2] = detail::maximize_s_profile(cache, delta, alpha, false, grid_size, tol);
  const double f_tap = detail::s_profile(cache, s_tap, delta, alpha, true).phi;
  const double f_non = detail::s_profile(cache, s_non, delta, alpha, false).phi;
  return f_tap - f_non;
}

// Grid-level near-optima of phi(s) within the given slack of the maximum;
// reported instead of asserting a unique maximizer.
inline std::vector<double> tap_near_optima(const Instance& inst, double delta, int grid_size = 512,
                                           double slack = 1e-6) {
  const double alpha = inst.n() / static_cast<double>(inst.p());
  const SvdCache cache = build_svd_cache(inst);
  const double s_hi = 1.0 - 1e-6;
  std::vector<double> phis(grid_size + 1);
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= grid_size; ++i) {
    phis[i] = detail::s_profile(cache, s_hi * i / grid_size, delta, alpha, true).phi;
    best = std::max(best, phis[i]);
  }
  std::vector<double> out;
  for (int i = 0; i <= grid_size; ++i)
    if (phis[i] >= best - slack) out.push_back(s_hi * i / grid_size);
  return out;
}

}  // namespace tapsphere
