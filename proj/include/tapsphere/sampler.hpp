#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tapsphere/model.hpp"
#include "tapsphere/oracle.hpp"

namespace tapsphere {

struct ChainConfig {
  long steps = 20000;
  long burn_in = 2000;
  int thin = 1;
  double target_accept = 0.4;
  double initial_angle = 0.5;  // geodesic step, radians
  std::uint64_t seed = 0;

  ChainConfig() = default;
  ChainConfig(long steps_, long burn_in_, int thin_, double target_accept_, double initial_angle_,
              std::uint64_t seed_)
      : steps(steps_), burn_in(burn_in_), thin(thin_), target_accept(target_accept_),
        initial_angle(initial_angle_), seed(seed_) {
    if (burn_in >= steps) throw std::invalid_argument("ChainConfig: burn_in must be < steps");
    if (thin < 1) throw std::invalid_argument("ChainConfig: thin must be >= 1");
    if (!(target_accept > 0.0 && target_accept < 1.0))
      throw std::invalid_argument("ChainConfig: target_accept must lie in (0, 1)");
    if (!(initial_angle > 0.0))
      throw std::invalid_argument("ChainConfig: initial_angle must be > 0");
  }
};

struct ReplicaSet {
  std::vector<std::pair<int, Vec>> samples;  // (chain_id, beta)
  double accept_rate = 0.0;
  double ess = 0.0;
  int num_chains = 0;
  long retained_per_chain = 0;
  std::vector<std::vector<double>> energy_traces;  // retained energies per chain
};

struct OverlapStats {
  double mean_r12 = 0.0;
  double var_r12 = 0.0;
  double mean_r1star = 0.0;
  double se_r12 = 0.0;
  double se_r1star = 0.0;
  long num_pairs = 0;
};

// Posterior on the sphere in the eigenbasis of M = X'X/delta:
// H(t) = (1/2) sum lam t^2 - sum c t + constant. An orthogonal change of
// coordinates, so the chain in t maps back exactly to beta = V t.
struct PosteriorTarget {
  Vec lam;
  Vec c;
  double constant = 0.0;
  Mat V;
  int p = 0;

  static PosteriorTarget from_instance(const Instance& inst, double delta) {
    const QuadraticForm qf = reduce_to_quadratic(inst, delta);
    return {qf.eigvals, qf.linear, qf.constant, qf.eigvecs, qf.dim};
  }

  // Perturbed posterior: the side channel adds the linear field
  // lambda0 eps_p beta0 + sqrt(lambda0 eps_p) Z plus a constant on the sphere.
  static PosteriorTarget from_perturbed(const PerturbedInstance& pert, double delta) {
    const Instance& inst = pert.base;
    QuadraticForm qf = reduce_to_quadratic(inst, delta);
    const double le = pert.lambda0 * pert.eps_p;
    const Vec extra = le * inst.beta0 + std::sqrt(le) * pert.Z;
    PosteriorTarget t{qf.eigvals, qf.linear + qf.eigvecs.transpose() * extra,
                      qf.constant + 0.5 * le * inst.p(), qf.eigvecs, qf.dim};
    return t;
  }

  double energy(const Vec& t) const {
    double h = constant;
    for (int i = 0; i < p; ++i) h += 0.5 * lam[i] * t[i] * t[i] - c[i] * t[i];
    return h;
  }
};

namespace detail {

// Integrated autocorrelation time with Geyer's initial-positive-sequence
// truncation.
inline double autocorr_time(const std::vector<double>& x) {
  const long n = static_cast<long>(x.size());
  if (n < 8) return 1.0;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double c0 = 0.0;
  for (double v : x) c0 += (v - mean) * (v - mean);
  c0 /= n;
  if (c0 <= 0.0) return 1.0;
  double tau = 1.0;
  for (long k = 1; k + 1 < n / 3; k += 2) {
    double ck = 0.0, ck1 = 0.0;
    for (long i = 0; i + k < n; ++i) ck += (x[i] - mean) * (x[i + k] - mean);
    for (long i = 0; i + k + 1 < n; ++i) ck1 += (x[i] - mean) * (x[i + k + 1] - mean);
    ck /= n * c0;
    ck1 /= n * c0;
    const double pair = ck + ck1;
    if (pair <= 0.0) break;
    tau += 2.0 * pair;
  }
  return std::max(tau, 1.0);
}

}  // namespace detail

// Geodesic random-walk Metropolis: propose cos(theta) beta + sin(theta)
// sqrt(p) w with w a uniform unit tangent, accept with min(1, e^{H - H'}).
// The step angle is adapted toward target_accept during burn-in
// (Robbins-Monro on ln theta), then frozen.
inline ReplicaSet mcmc_posterior(const PosteriorTarget& target, const ChainConfig& cfg,
                                 int num_chains) {
  if (num_chains < 2) throw std::invalid_argument("mcmc_posterior: num_chains must be >= 2");
  const int p = target.p;
  const double sqrt_p = std::sqrt(static_cast<double>(p));

  ReplicaSet out;
  out.num_chains = num_chains;
  const long retained = (cfg.steps - cfg.burn_in) / cfg.thin;
  out.retained_per_chain = retained;
  out.samples.reserve(static_cast<size_t>(retained) * num_chains);
  out.energy_traces.assign(num_chains, {});

  double total_accept = 0.0;
  long total_post_steps = 0;
  double tau_sum = 0.0;

  for (int chain = 0; chain < num_chains; ++chain) {
    RngStream rng = RngStream::seeded(cfg.seed).split("chain").split(chain);
    Vec t = sample_uniform_sphere(p, sqrt_p, rng);
    double energy = target.energy(t);
    double theta = cfg.initial_angle;
    long accepted_post = 0;
    auto& trace = out.energy_traces[chain];
    trace.reserve(retained);

    for (long step = 0; step < cfg.steps; ++step) {
      // tangent direction: Gaussian projected orthogonal to t, normalized
      Vec w(p);
      for (int i = 0; i < p; ++i) w[i] = rng.normal();
      w -= (w.dot(t) / p) * t;  // t't = p
      double wn = w.norm();
      while (wn == 0.0) {
        for (int i = 0; i < p; ++i) w[i] = rng.normal();
        w -= (w.dot(t) / p) * t;
        wn = w.norm();
      }
      w /= wn;

      const Vec prop = std::cos(theta) * t + std::sin(theta) * sqrt_p * w;
      const double e_prop = target.energy(prop);
      const bool accept = std::log(rng.uniform_pos()) < energy - e_prop;
      if (accept) {
        t = prop;
        energy = e_prop;
      }

      if (step < cfg.burn_in) {
        const double gamma = 1.0 / std::pow(step + 1.0, 0.6);
        theta *= std::exp(gamma * ((accept ? 1.0 : 0.0) - cfg.target_accept));
        theta = std::clamp(theta, 1e-6, 0.5 * M_PI);
      } else {
        accepted_post += accept ? 1 : 0;
        ++total_post_steps;
        if ((step - cfg.burn_in) % cfg.thin == cfg.thin - 1 &&
            static_cast<long>(trace.size()) < retained) {
          out.samples.emplace_back(chain, target.V.size() > 0 ? Vec(target.V * t) : t);
          trace.push_back(energy);
        }
      }
      if ((step & 511) == 511) t *= sqrt_p / t.norm();  // curb rounding drift
    }

    total_accept += accepted_post;
    const double rate = accepted_post / std::max(1.0, static_cast<double>(cfg.steps - cfg.burn_in));
    if (rate < 0.01)
      std::cerr << "tapsphere: stuck chain " << chain << " (accept rate " << rate << ", theta "
                << theta << ", last energy " << energy << ")\n";
    tau_sum += detail::autocorr_time(trace);
  }

  out.accept_rate = total_accept / std::max(1L, total_post_steps);
  out.ess = static_cast<double>(retained) * num_chains / (tau_sum / num_chains);
  return out;
}

inline ReplicaSet mcmc_posterior(const Instance& inst, double delta, const ChainConfig& cfg,
                                 int num_chains) {
  return mcmc_posterior(PosteriorTarget::from_instance(inst, delta), cfg, num_chains);
}

inline ReplicaSet mcmc_posterior(const PerturbedInstance& pert, double delta,
                                 const ChainConfig& cfg, int num_chains) {
  return mcmc_posterior(PosteriorTarget::from_perturbed(pert, delta), cfg, num_chains);
}

// Replica overlaps: R12 over cross-chain pairs only (matched retained index,
// so pairs are independent draws), R1* over all retained samples. Standard
// errors by batch means.
inline OverlapStats overlap_stats(const ReplicaSet& replicas, const Vec& beta0) {
  if (replicas.num_chains < 2) throw std::invalid_argument("overlap_stats: need >= 2 chains");
  const long k = replicas.retained_per_chain;
  if (k < 10) throw std::invalid_argument("overlap_stats: fewer than 10 retained samples per chain");
  const int nc = replicas.num_chains;
  const double p = static_cast<double>(beta0.size());

  // samples are stored chain-major in retained order
  auto sample = [&](int chain, long idx) -> const Vec& {
    return replicas.samples[static_cast<size_t>(chain) * k + idx].second;
  };

  OverlapStats st;
  std::vector<double> r12;
  r12.reserve(static_cast<size_t>(k) * nc * (nc - 1) / 2);
  for (int c1 = 0; c1 < nc; ++c1)
    for (int c2 = c1 + 1; c2 < nc; ++c2)
      for (long i = 0; i < k; ++i) r12.push_back(sample(c1, i).dot(sample(c2, i)) / p);
  st.num_pairs = static_cast<long>(r12.size());

  double mean = 0.0;
  for (double v : r12) mean += v;
  mean /= st.num_pairs;
  double var = 0.0;
  for (double v : r12) var += (v - mean) * (v - mean);
  st.mean_r12 = mean;
  st.var_r12 = var / st.num_pairs;

  const int nblocks = static_cast<int>(std::min<long>(20, k));
  std::vector<double> block_means;
  const long pairs_per_series = k;
  const int nseries = nc * (nc - 1) / 2;
  for (int s = 0; s < nseries; ++s) {
    for (int b = 0; b < nblocks; ++b) {
      const long lo = b * pairs_per_series / nblocks, hi = (b + 1) * pairs_per_series / nblocks;
      if (hi <= lo) continue;
      double bm = 0.0;
      for (long i = lo; i < hi; ++i) bm += r12[static_cast<size_t>(s) * k + i];
      block_means.push_back(bm / (hi - lo));
    }
  }
  double bvar = 0.0;
  for (double v : block_means) bvar += (v - mean) * (v - mean);
  st.se_r12 = std::sqrt(bvar / (block_means.size() - 1)) / std::sqrt(block_means.size());

  double mean1 = 0.0;
  std::vector<double> star_blocks;
  for (int c = 0; c < nc; ++c) {
    for (int b = 0; b < nblocks; ++b) {
      const long lo = b * k / nblocks, hi = (b + 1) * k / nblocks;
      if (hi <= lo) continue;
      double bm = 0.0;
      for (long i = lo; i < hi; ++i) bm += sample(c, i).dot(beta0) / p;
      star_blocks.push_back(bm / (hi - lo));
      mean1 += bm;
    }
  }
  mean1 /= static_cast<double>(k) * nc;
  st.mean_r1star = mean1;
  double bvar1 = 0.0;
  for (double v : star_blocks) bvar1 += (v - mean1) * (v - mean1);
  st.se_r1star = std::sqrt(bvar1 / (star_blocks.size() - 1)) / std::sqrt(star_blocks.size());
  return st;
}

struct NishimoriReport {
  double mean_r12 = 0.0;
  double mean_r1star = 0.0;
  double difference = 0.0;
  double combined_se = 0.0;
  int disorder_draws = 0;
  bool pass = false;
};

// E<R12> = E<R1*> for the well-specified model; Monte Carlo check averaged
// over independent disorder draws.
inline NishimoriReport nishimori_check(const ModelConfig& model, const ChainConfig& cfg,
                                       int disorder_draws, int num_chains = 4) {
  if (disorder_draws < 10)
    throw std::invalid_argument("nishimori_check: disorder_draws must be >= 10");
  std::vector<double> diffs, r12s, r1stars;
  RngStream seeds = RngStream::seeded(model.seed).split("nishimori");
  for (int d = 0; d < disorder_draws; ++d) {
    ModelConfig mc = model;
    mc.seed = seeds.split(d)();
    const Instance inst = generate_instance(mc);
    ChainConfig ccfg = cfg;
    ccfg.seed = seeds.split(d).split("chains")();
    const ReplicaSet reps = mcmc_posterior(inst, model.delta, ccfg, num_chains);
    const OverlapStats st = overlap_stats(reps, inst.beta0);
    diffs.push_back(st.mean_r12 - st.mean_r1star);
    r12s.push_back(st.mean_r12);
    r1stars.push_back(st.mean_r1star);
  }
  NishimoriReport rep;
  rep.disorder_draws = disorder_draws;
  double md = 0.0, m12 = 0.0, m1s = 0.0;
  for (int d = 0; d < disorder_draws; ++d) {
    md += diffs[d];
    m12 += r12s[d];
    m1s += r1stars[d];
  }
  md /= disorder_draws;
  rep.mean_r12 = m12 / disorder_draws;
  rep.mean_r1star = m1s / disorder_draws;
  rep.difference = md;
  double sv = 0.0;
  for (double v : diffs) sv += (v - md) * (v - md);
  rep.combined_se = std::sqrt(sv / (disorder_draws - 1)) / std::sqrt(disorder_draws);
  rep.pass = std::abs(rep.difference) <= 3.0 * rep.combined_se;
  return rep;
}

struct OverlapConcentrationRow {
  int p = 0;
  double second_moment = 0.0;
  double se = 0.0;
  double mean_r12 = 0.0;
};

// Centered second moment of R12 under the lambda0-averaged perturbed
// posterior, for each p in the sweep; the theorem's bound decreases in p.
// fixed_lambda0 > 0 pins the side-channel strength instead of averaging.
inline std::vector<OverlapConcentrationRow> overlap_concentration_sweep(
    double alpha, double delta, const std::vector<int>& p_list, const PerturbationConfig& pcfg_base,
    const ChainConfig& cfg, int disorder_draws, int lambda0_draws, int num_chains = 4,
    double fixed_lambda0 = 0.0) {
  std::vector<OverlapConcentrationRow> rows;
  RngStream root = RngStream::seeded(pcfg_base.seed).split("overlap-conc");
  for (int p : p_list) {
    const int n = static_cast<int>(std::lround(alpha * p));
    const double eps_p = eps_p_schedule(p);
    std::vector<std::vector<double>> pair_values(disorder_draws);
    for (int d = 0; d < disorder_draws; ++d) {
      RngStream dstream = root.split(p).split(d);
      const Instance inst = generate_instance(ModelConfig(p, n, delta, dstream.split("inst")()));
      for (int l = 0; l < lambda0_draws; ++l) {
        RngStream lstream = dstream.split("lambda0").split(l);
        const double drawn = 0.5 + 0.5 * lstream.uniform();
        const double lambda0 = fixed_lambda0 > 0.0 ? fixed_lambda0 : drawn;
        const PerturbedInstance pert =
            make_perturbed(inst, PerturbationConfig(lambda0, eps_p, lstream.split("Z")()));
        ChainConfig ccfg = cfg;
        ccfg.seed = lstream.split("chains")();
        const ReplicaSet reps = mcmc_posterior(pert, delta, ccfg, num_chains);
        const long k = reps.retained_per_chain;
        const double pp = static_cast<double>(p);
        auto sample = [&](int chain, long idx) -> const Vec& {
          return reps.samples[static_cast<size_t>(chain) * k + idx].second;
        };
        for (int c1 = 0; c1 < num_chains; ++c1)
          for (int c2 = c1 + 1; c2 < num_chains; ++c2)
            for (long i = 0; i < k; ++i)
              pair_values[d].push_back(sample(c1, i).dot(sample(c2, i)) / pp);
      }
    }
    double grand_mean = 0.0;
    long total = 0;
    for (const auto& v : pair_values)
      for (double r : v) {
        grand_mean += r;
        ++total;
      }
    grand_mean /= total;
    std::vector<double> per_draw(disorder_draws, 0.0);
    double second = 0.0;
    for (int d = 0; d < disorder_draws; ++d) {
      double acc = 0.0;
      for (double r : pair_values[d]) acc += (r - grand_mean) * (r - grand_mean);
      per_draw[d] = acc / pair_values[d].size();
      second += per_draw[d];
    }
    second /= disorder_draws;
    double sv = 0.0;
    for (double v : per_draw) sv += (v - second) * (v - second);
    OverlapConcentrationRow row;
    row.p = p;
    row.second_moment = second;
    row.se = std::sqrt(sv / std::max(1, disorder_draws - 1)) / std::sqrt(disorder_draws);
    row.mean_r12 = grand_mean;
    rows.push_back(row);
  }
  return rows;
}

struct OverlapBoundsReport {
  double mean_r12 = 0.0;
  double se = 0.0;
  bool pass = false;
};

// Disorder-averaged E<R12> must land strictly inside [0, 1): the check allows
// -3 SE of noise at the bottom and a 0.01 margin at the top.
inline OverlapBoundsReport overlap_bounds_check(double alpha, double delta, int p,
                                                int disorder_draws, const ChainConfig& cfg,
                                                int num_chains = 4,
                                                std::uint64_t seed = 0x0b5e7f) {
  const int n = static_cast<int>(std::lround(alpha * p));
  std::vector<double> means;
  RngStream root = RngStream::seeded(seed).split("overlap-bounds");
  for (int d = 0; d < disorder_draws; ++d) {
    const Instance inst = generate_instance(ModelConfig(p, n, delta, root.split(d)()));
    ChainConfig ccfg = cfg;
    ccfg.seed = root.split(d).split("chains")();
    const ReplicaSet reps = mcmc_posterior(inst, delta, ccfg, num_chains);
    means.push_back(overlap_stats(reps, inst.beta0).mean_r12);
  }
  OverlapBoundsReport rep;
  double m = 0.0;
  for (double v : means) m += v;
  m /= means.size();
  rep.mean_r12 = m;
  double sv = 0.0;
  for (double v : means) sv += (v - m) * (v - m);
  rep.se = std::sqrt(sv / std::max<size_t>(1, means.size() - 1)) / std::sqrt(means.size());
  rep.pass = m >= -3.0 * rep.se && m <= 1.0 - 0.01;
  return rep;
}

struct BandMcReport {
  double mc_value = 0.0;           // (1/p)[ln accept_fraction + ln mean weight]
  double reference = 0.0;          // onsager_term + box-volume term
  double onsager_term = 0.0;
  double volume_box_term = 0.0;    // (1/p) ln Vol(a, eps) by 2-D quadrature
  double accept_fraction = 0.0;
  long num_accepted = 0;
  double se = 0.0;
  double c_const = 0.0;            // per-run O(eps) constant
  bool pass = false;
};

namespace detail {

// Vol(a, eps) from the joint density of two sphere coordinates,
// C_p (1 - w1^2 - w2^2)^{(p-4)/2} over the box |w_i - center_i| < eps
// (1-D marginal when the span is one-dimensional).
inline double log_band_volume_box(int p, const std::vector<double>& centers, double eps) {
  const int m = static_cast<int>(centers.size());
  if (m == 0) return 0.0;
  if (m == 1) {
    auto f = [&](double w) {
      const double u = 1.0 - w * w;
      return u > 0.0 ? projection_density(w, p, 1) : 0.0;
    };
    const double lo = std::max(-1.0 + 1e-15, centers[0] - eps);
    const double hi = std::min(1.0 - 1e-15, centers[0] + eps);
    return std::log(detail::integrate(f, lo, hi, 1e-14, 48));
  }
  const double log_cp =
      std::lgamma(0.5 * p) - std::lgamma(0.5 * (p - 2)) - std::log(M_PI);
  const int nq = 400;
  const double lo1 = centers[0] - eps, hi1 = centers[0] + eps;
  const double lo2 = centers[1] - eps, hi2 = centers[1] + eps;
  const double h1 = (hi1 - lo1) / nq, h2 = (hi2 - lo2) / nq;
  double acc = 0.0;
  for (int i = 0; i <= nq; ++i) {
    const double w1 = lo1 + h1 * i;
    const double wi = (i == 0 || i == nq) ? 0.5 : 1.0;
    for (int j = 0; j <= nq; ++j) {
      const double w2 = lo2 + h2 * j;
      const double wj = (j == 0 || j == nq) ? 0.5 : 1.0;
      const double u = 1.0 - w1 * w1 - w2 * w2;
      if (u <= 0.0) continue;
      acc += wi * wj * std::exp(0.5 * (p - 4) * std::log(u));
    }
  }
  return log_cp + std::log(acc * h1 * h2);
}

// Orthogonal basis of the band span, each vector of norm sqrt(p).
inline std::vector<Vec> band_orthobasis(const Instance& inst, const Vec& a) {
  const int p = inst.p();
  const double sqrt_p = std::sqrt(static_cast<double>(p));
  const std::vector<Vec> span = band_span(inst, a);
  std::vector<Vec> vbasis;
  for (const Vec& v : span) {
    Vec u = v;
    for (const Vec& w : vbasis) u -= (w.dot(u) / p) * w;
    const double nrm = u.norm();
    if (nrm > 1e-12 * sqrt_p) vbasis.push_back(u * (sqrt_p / nrm));
  }
  return vbasis;
}

}  // namespace detail

// ln Vol(a, eps): prior mass of the band, by quadrature of the projection
// density over the box. Cheap, so callers can size eps before sampling.
inline double band_box_log_volume(const Instance& inst, const Vec& a, double eps_band) {
  const int p = inst.p();
  std::vector<double> centers;
  for (const Vec& v : detail::band_orthobasis(inst, a)) centers.push_back(v.dot(a) / p);
  return detail::log_band_volume_box(p, centers, eps_band);
}

// Rejection-samples the band B(a, eps) and Monte Carlo-estimates the
// recentered band free energy, then compares against the subspace + volume
// prediction. The O(eps) slack constant comes from the per-run recentering
// magnitudes.
inline BandMcReport band_mc_check(const Instance& inst, double delta, const Vec& a,
                                  double eps_band, long num_samples, RngStream& rng) {
  const int p = inst.p();
  const double s = a.squaredNorm() / p;
  if (!(s < 1.0)) throw std::domain_error("band_mc_check: require ||a|| < sqrt(p)");

  const std::vector<Vec> vbasis = detail::band_orthobasis(inst, a);

  const Mat XtX = inst.X.transpose() * inst.X;
  const double sqrt_p = std::sqrt(static_cast<double>(p));
  std::vector<double> weights;
  long accepted = 0;
  for (long k = 0; k < num_samples; ++k) {
    const Vec beta = sample_uniform_sphere(p, sqrt_p, rng);
    bool in_band = true;
    for (const Vec& v : vbasis)
      if (std::abs(v.dot(beta - a)) >= p * eps_band) {
        in_band = false;
        break;
      }
    if (!in_band) continue;
    ++accepted;
    const Vec d = beta - a;
    weights.push_back(-d.dot(XtX * d) / (2.0 * delta));
  }
  if (accepted < 100)
    throw NumericalError("band_mc_check: only " + std::to_string(accepted) +
                         " accepted samples; enlarge eps_band or use importance sampling");

  const double m0 = *std::max_element(weights.begin(), weights.end());
  double sum = 0.0;
  for (double w : weights) sum += std::exp(w - m0);

  BandMcReport rep;
  rep.num_accepted = accepted;
  rep.accept_fraction = static_cast<double>(accepted) / num_samples;
  rep.mc_value =
      (std::log(rep.accept_fraction) + m0 + std::log(sum / accepted)) / p;

  const BandDecomposition bd = band_free_energy(inst, delta, a);
  std::vector<double> centers;
  for (const Vec& v : vbasis) centers.push_back(v.dot(a) / p);
  rep.onsager_term = bd.onsager_term;
  rep.volume_box_term = detail::log_band_volume_box(p, centers, eps_band) / p;
  rep.reference = bd.onsager_term + rep.volume_box_term;

  // jackknife over 20 blocks of the joint (acceptance, weight) estimate
  {
    const int nb = 20;
    std::vector<double> bsum(nb, 0.0);
    std::vector<long> bacc(nb, 0);
    for (long i = 0; i < accepted; ++i) {
      const int b = static_cast<int>((i * nb) / accepted);
      bsum[b] += std::exp(weights[static_cast<size_t>(i)] - m0);
      bacc[b] += 1;
    }
    std::vector<double> loo;
    for (int b = 0; b < nb; ++b) {
      const double acc_f = static_cast<double>(accepted - bacc[b]) /
                           (num_samples - num_samples / nb);
      const double mw = (sum - bsum[b]) / (accepted - bacc[b]);
      loo.push_back((std::log(acc_f) + m0 + std::log(mw)) / p);
    }
    double lm = 0.0;
    for (double v : loo) lm += v;
    lm /= loo.size();
    double ss = 0.0;
    for (double v : loo) ss += (v - lm) * (v - lm);
    rep.se = std::sqrt(ss * (loo.size() - 1) / loo.size());
  }

  const Vec g = inst.X.transpose() * (inst.y - inst.X * a);
  const double xtx_norm = XtX.operatorNorm();
  rep.c_const = std::sqrt(2.0) * g.norm() / (sqrt_p * delta) + 2.0 * xtx_norm / delta +
                std::sqrt(s) * (1.0 / delta + 1.0 / (1.0 - s));
  rep.pass = std::abs(rep.mc_value - rep.reference) <= rep.c_const * eps_band + 3.0 * rep.se;
  return rep;
}

}  // namespace tapsphere
