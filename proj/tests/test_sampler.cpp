#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tapsphere/sampler.hpp"
#include "tapsphere/tap.hpp"
#include "testutil.hpp"

using namespace tapsphere;

namespace {

Instance zero_instance(int p, int n) {
  Instance inst;
  inst.X = Mat::Zero(n, p);
  inst.beta0 = Vec::Zero(p);
  inst.eps = Vec::Zero(n);
  inst.y = Vec::Zero(n);
  return inst;
}

ReplicaSet constant_replicas(const Vec& beta, int chains, long k) {
  ReplicaSet reps;
  reps.num_chains = chains;
  reps.retained_per_chain = k;
  for (int c = 0; c < chains; ++c)
    for (long i = 0; i < k; ++i) reps.samples.emplace_back(c, beta);
  return reps;
}

}  // namespace

TEST_CASE("chain config validation") {
  CHECK_THROWS_AS(ChainConfig(100, 100, 1, 0.4, 0.5, 0), std::invalid_argument);
  CHECK_THROWS_AS(ChainConfig(100, 10, 0, 0.4, 0.5, 0), std::invalid_argument);
  CHECK_THROWS_AS(ChainConfig(100, 10, 1, 1.4, 0.5, 0), std::invalid_argument);
  CHECK_THROWS_AS(ChainConfig(100, 10, 1, 0.4, 0.0, 0), std::invalid_argument);
}

TEST_CASE("reduced targets match the direct Hamiltonians on the sphere") {
  const ModelConfig cfg(25, 50, 10.0, 19);
  const Instance inst = generate_instance(cfg);
  const PerturbedInstance pert = make_perturbed(inst, PerturbationConfig(0.8, 0.3, 23));
  const PosteriorTarget plain = PosteriorTarget::from_instance(inst, cfg.delta);
  const PosteriorTarget tilted = PosteriorTarget::from_perturbed(pert, cfg.delta);
  RngStream rng = RngStream::seeded(29);
  for (int k = 0; k < 10; ++k) {
    const Vec beta = sample_uniform_sphere(25, std::sqrt(25.0), rng);
    const Vec t = plain.V.transpose() * beta;
    CHECK(plain.energy(t) == Catch::Approx(hamiltonian(inst, cfg.delta, beta)).margin(1e-9));
    CHECK(tilted.energy(t) ==
          Catch::Approx(hamiltonian_perturbed(pert, cfg.delta, beta)).margin(1e-9));
  }
}

TEST_CASE("uniform target") {
  const Instance inst = zero_instance(20, 10);
  const ChainConfig cfg(4000, 500, 1, 0.4, 0.5, 1);
  const ReplicaSet reps = mcmc_posterior(inst, 1.0, cfg, 4);

  SECTION("every proposal is accepted") { CHECK(reps.accept_rate == 1.0); }

  SECTION("sphere constraint holds for every retained sample") {
    for (const auto& [chain, beta] : reps.samples)
      CHECK(beta.squaredNorm() == Catch::Approx(20.0).epsilon(1e-8));
  }

  SECTION("overlap with a fixed direction is centered") {
    const Vec dir = Vec::Unit(20, 3) * std::sqrt(20.0);
    const OverlapStats st = overlap_stats(reps, dir);
    CHECK(std::abs(st.mean_r1star) <= 3.0 * st.se_r1star + 1e-12);
    CHECK(std::abs(st.mean_r12) <= 3.0 * st.se_r12 + 1e-12);
  }
}

TEST_CASE("detailed balance at p=3: stationary polar-angle histogram") {
  // Axially symmetric target: H depends only on u = beta_3 / sqrt(3), and
  // under the prior u is uniform on [-1, 1] (Archimedes). Cell masses follow
  // from 1-D numerical normalization of exp(-c2 3u^2 - c1 sqrt(3) u) / 2.
  const double c1 = 0.8, c2 = 0.5;
  Instance inst = zero_instance(3, 3);
  inst.X(0, 2) = std::sqrt(2.0 * c2);  // beta'X'X beta / 2 = c2 beta_3^2
  inst.eps = Vec::Zero(3);
  inst.y = Vec::Zero(3);
  inst.y[0] = -c1 / std::sqrt(2.0 * c2);  // cross term gives +c1 beta_3
  const double delta = 1.0;

  const int bins = 20;
  std::vector<double> mass(bins, 0.0);
  double total = 0.0;
  for (int b = 0; b < bins; ++b) {
    const double lo = -1.0 + 2.0 * b / bins;
    const int sub = 400;
    for (int i = 0; i < sub; ++i) {
      const double u = lo + (2.0 / bins) * (i + 0.5) / sub;
      mass[b] += std::exp(-3.0 * c2 * u * u - std::sqrt(3.0) * c1 * u) * (2.0 / bins) / sub;
    }
    total += mass[b];
  }

  const ChainConfig cfg(500000, 20000, 20, 0.4, 0.8, 7);
  const ReplicaSet reps = mcmc_posterior(inst, delta, cfg, 2);
  std::vector<long> counts(bins, 0);
  long n = 0;
  for (const auto& [chain, beta] : reps.samples) {
    const double u = beta[2] / std::sqrt(3.0);
    counts[std::clamp(static_cast<int>((u + 1.0) * bins / 2.0), 0, bins - 1)] += 1;
    ++n;
  }
  double chi2 = 0.0;
  for (int b = 0; b < bins; ++b) {
    const double expected = n * mass[b] / total;
    chi2 += (counts[b] - expected) * (counts[b] - expected) / expected;
  }
  CHECK(chi2 < 36.19);  // 1% critical value, 19 dof
}

TEST_CASE("posterior alignment is detectable at p=100") {
  const ModelConfig cfg(100, 200, 10.0, 21);
  const Instance inst = generate_instance(cfg);
  const ChainConfig ccfg(12000, 3000, 2, 0.4, 0.5, 5);
  const ReplicaSet reps = mcmc_posterior(inst, 10.0, ccfg, 4);
  const OverlapStats st = overlap_stats(reps, inst.beta0);
  CHECK(st.mean_r1star > 3.0 * st.se_r1star);

  SECTION("acceptance lands near the adaptation target") {
    CHECK(std::abs(reps.accept_rate - 0.4) < 0.1);
  }

  SECTION("energy trace self-consistency across independent runs") {
    const ChainConfig doubled(24000, 6000, 2, 0.4, 0.5, 1055);
    const ReplicaSet reps2 = mcmc_posterior(inst, 10.0, doubled, 4);
    auto trace_stats = [](const ReplicaSet& r) {
      double m = 0.0;
      long n = 0;
      for (const auto& t : r.energy_traces)
        for (double e : t) {
          m += e;
          ++n;
        }
      m /= n;
      std::vector<double> bm;
      for (const auto& t : r.energy_traces) {
        const int nb = 20;
        for (int b = 0; b < nb; ++b) {
          const size_t lo = b * t.size() / nb, hi = (b + 1) * t.size() / nb;
          double acc = 0.0;
          for (size_t i = lo; i < hi; ++i) acc += t[i];
          bm.push_back(acc / (hi - lo));
        }
      }
      double var = 0.0;
      for (double v : bm) var += (v - m) * (v - m);
      return std::pair{m, std::sqrt(var / (bm.size() - 1) / bm.size())};
    };
    const auto [m1, se1] = trace_stats(reps);
    const auto [m2, se2] = trace_stats(reps2);
    CHECK(std::abs(m1 - m2) <= 3.0 * std::sqrt(se1 * se1 + se2 * se2));
  }
}

TEST_CASE("overlap_stats") {
  SECTION("all replicas equal to beta0") {
    const Vec beta0 = Vec::Constant(16, 1.0) * std::sqrt(16.0 / 16.0);
    const ReplicaSet reps = constant_replicas(beta0, 3, 20);
    const OverlapStats st = overlap_stats(reps, beta0);
    CHECK(st.mean_r12 == Catch::Approx(beta0.squaredNorm() / 16));
    CHECK(st.var_r12 == 0.0);
    CHECK(st.mean_r1star == Catch::Approx(beta0.squaredNorm() / 16));
    CHECK(st.num_pairs == 3 * 20);
  }

  SECTION("antipodal pair") {
    const Vec beta = Vec::Unit(8, 0) * std::sqrt(8.0);
    ReplicaSet reps;
    reps.num_chains = 2;
    reps.retained_per_chain = 10;
    for (long i = 0; i < 10; ++i) reps.samples.emplace_back(0, beta);
    for (long i = 0; i < 10; ++i) reps.samples.emplace_back(1, Vec(-beta));
    const OverlapStats st = overlap_stats(reps, beta);
    CHECK(st.mean_r12 == Catch::Approx(-1.0));
    CHECK(st.var_r12 == 0.0);
  }

  SECTION("chain-label permutation leaves the statistics unchanged") {
    const ModelConfig cfg(20, 40, 10.0, 77);
    const Instance inst = generate_instance(cfg);
    const ChainConfig ccfg(3000, 1000, 1, 0.4, 0.5, 3);
    const ReplicaSet reps = mcmc_posterior(inst, 10.0, ccfg, 3);
    ReplicaSet permuted = reps;
    const long k = reps.retained_per_chain;
    // swap chains 0 and 2 wholesale
    for (long i = 0; i < k; ++i) {
      std::swap(permuted.samples[i], permuted.samples[2 * k + i]);
      permuted.samples[i].first = 0;
      permuted.samples[2 * k + i].first = 2;
    }
    const OverlapStats a = overlap_stats(reps, inst.beta0);
    const OverlapStats b = overlap_stats(permuted, inst.beta0);
    CHECK(a.mean_r12 == Catch::Approx(b.mean_r12).margin(1e-12));
    CHECK(a.mean_r1star == Catch::Approx(b.mean_r1star).margin(1e-12));
  }

  SECTION("too few retained samples") {
    const ReplicaSet reps = constant_replicas(Vec::Unit(4, 0) * 2.0, 2, 5);
    CHECK_THROWS_AS(overlap_stats(reps, Vec::Unit(4, 0) * 2.0), std::invalid_argument);
  }
}

TEST_CASE("nishimori_check") {
  SECTION("identity holds for the well-specified model") {
    const ChainConfig ccfg(9000, 3000, 2, 0.4, 0.5, 0);
    const NishimoriReport rep = nishimori_check(ModelConfig(50, 100, 10.0, 3), ccfg, 12, 4);
    CHECK(rep.pass);
    CHECK(rep.disorder_draws == 12);
  }

  SECTION("pure prior: both overlaps vanish") {
    // X = 0 carries no information, so R12 and R1* are both centered
    const ChainConfig ccfg(4000, 1000, 1, 0.4, 0.5, 0);
    std::vector<double> r12s, r1s;
    RngStream root = RngStream::seeded(5);
    for (int d = 0; d < 10; ++d) {
      Instance inst = zero_instance(40, 20);
      RngStream bs = root.split(d);
      inst.beta0 = sample_uniform_sphere(40, std::sqrt(40.0), bs);
      ChainConfig c = ccfg;
      c.seed = root.split(d).split("c")();
      const ReplicaSet reps = mcmc_posterior(inst, 1.0, c, 4);
      const OverlapStats st = overlap_stats(reps, inst.beta0);
      r12s.push_back(st.mean_r12);
      r1s.push_back(st.mean_r1star);
    }
    double m12 = 0.0, m1 = 0.0;
    for (int d = 0; d < 10; ++d) {
      m12 += r12s[d] / 10;
      m1 += r1s[d] / 10;
    }
    CHECK(std::abs(m12) < 0.02);
    CHECK(std::abs(m1) < 0.02);
  }

  SECTION("misspecified signal norm: report only") {
    // beta0 off the prior sphere (norm sqrt(2p)) leaves the identity without
    // its guarantee; the check must still run and return finite numbers.
    const ModelConfig cfg(30, 60, 10.0, 9);
    Instance inst = generate_instance(cfg);
    inst.beta0 *= std::sqrt(2.0);
    inst.y = inst.X * inst.beta0 + inst.eps;
    const ChainConfig ccfg(4000, 1000, 1, 0.4, 0.5, 2);
    const ReplicaSet reps = mcmc_posterior(inst, 10.0, ccfg, 4);
    const OverlapStats st = overlap_stats(reps, inst.beta0);
    CHECK(std::isfinite(st.mean_r12));
    CHECK(std::isfinite(st.mean_r1star));
  }

  SECTION("draw floor is enforced") {
    const ChainConfig ccfg(2000, 500, 1, 0.4, 0.5, 0);
    CHECK_THROWS_AS(nishimori_check(ModelConfig(10, 20, 10.0, 1), ccfg, 5),
                    std::invalid_argument);
  }
}

TEST_CASE("overlap_concentration_sweep: perturbation is gentle and lambda0 averaging sane") {
  SECTION("free-energy shift stays within the side-channel budget") {
    // (1/p)|ln Z_pert - ln Z| <= 2 eps_p measured through the oracle
    for (int seed = 0; seed < 10; ++seed) {
      const ModelConfig cfg(60, 120, 10.0, 400 + seed);
      const Instance inst = generate_instance(cfg);
      const double eps_p = eps_p_schedule(60);
      const PerturbedInstance pert =
          make_perturbed(inst, PerturbationConfig(0.75, eps_p, 900 + seed));
      const PosteriorTarget t = PosteriorTarget::from_perturbed(pert, cfg.delta);
      const QuadraticForm pert_qf =
          QuadraticForm::from_eigen(t.lam, t.c, t.constant);
      const double f_pert = log_partition_saddle(pert_qf).value;
      const double f_base = log_partition_saddle(reduce_to_quadratic(inst, cfg.delta)).value;
      CHECK(std::abs(f_pert - f_base) <= 2.0 * eps_p);
    }
  }

  SECTION("fixed vs averaged lambda0") {
    const ChainConfig ccfg(4000, 1200, 2, 0.4, 0.5, 0);
    const PerturbationConfig base(0.75, 0.1, 31);
    const auto averaged = overlap_concentration_sweep(2.0, 10.0, {40}, base, ccfg, 6, 4, 4);
    const auto pinned =
        overlap_concentration_sweep(2.0, 10.0, {40}, base, ccfg, 6, 4, 4, 0.75);
    REQUIRE(averaged.size() == 1);
    REQUIRE(pinned.size() == 1);
    CHECK(averaged[0].second_moment <= 2.0 * pinned[0].second_moment + 3.0 * averaged[0].se +
                                           3.0 * pinned[0].se);
  }
}

TEST_CASE("overlap_bounds_check in the weak-signal phase") {
  const ChainConfig ccfg(6000, 2000, 2, 0.4, 0.5, 0);
  const OverlapBoundsReport rep = overlap_bounds_check(2.0, 10.0, 100, 8, ccfg, 4);
  CHECK(rep.pass);
  CHECK(rep.mean_r12 > 0.0);
  CHECK(rep.mean_r12 < 0.5);

  SECTION("posterior collapses to the prior as delta grows") {
    const OverlapBoundsReport far = overlap_bounds_check(2.0, 1e4, 60, 8, ccfg, 4);
    CHECK(std::abs(far.mean_r12) <= 3.0 * far.se + 0.01);
  }

  SECTION("strong signal stays below the 0.99 ceiling") {
    const OverlapBoundsReport strong = overlap_bounds_check(2.0, 0.01, 30, 8, ccfg, 4);
    CHECK(strong.mean_r12 > 0.5);
    CHECK(strong.pass);
  }
}

TEST_CASE("band_mc_check") {
  SECTION("geometry only: acceptance matches the box integral") {
    const ModelConfig cfg(80, 160, 10.0, 61);
    const Instance inst = generate_instance(cfg);
    RngStream rng = RngStream::seeded(63);
    // delta so large the weights are 1: mc value reduces to ln(acceptance)/p
    const BandMcReport rep = band_mc_check(inst, 1e12, Vec::Zero(80), 0.1, 400000, rng);
    CHECK(std::abs(rep.mc_value - std::log(rep.accept_fraction) / 80) < 1e-9);
    CHECK(std::abs(std::log(rep.accept_fraction) / 80 - rep.volume_box_term) <= 3.0 * rep.se + 1e-4);
  }

  SECTION("wide band covers most of the sphere") {
    const ModelConfig cfg(40, 80, 10.0, 67);
    const Instance inst = generate_instance(cfg);
    RngStream rng = RngStream::seeded(69);
    const BandMcReport rep = band_mc_check(inst, cfg.delta, Vec::Zero(40), 1.0, 200000, rng);
    CHECK(rep.accept_fraction == 1.0);
    // band constraint vacuous: mc equals the full recentered free energy
    const QuadraticForm qf = reduce_to_quadratic(inst, cfg.delta);
    const QuadraticForm no_field = QuadraticForm::from_eigen(qf.eigvals, Vec::Zero(40), 0.0);
    const double full = log_partition_saddle(no_field).value;
    CHECK(rep.mc_value == Catch::Approx(full).margin(3.0 * rep.se + 5e-3));
  }

  SECTION("TAP maximizer band at p=120 passes the decomposition check") {
    const ModelConfig cfg(120, 240, 10.0, 5);
    const Instance inst = generate_instance(cfg);
    const TapOptimum opt = sup_tap_svd(inst, 10.0);
    RngStream rng = RngStream::seeded(55);
    const BandMcReport rep = band_mc_check(inst, 10.0, opt.a_star, 0.05, 1000000, rng);
    CHECK(rep.pass);
    CHECK(rep.num_accepted >= 100);
  }

  SECTION("too-narrow band errors with advice") {
    const ModelConfig cfg(100, 200, 10.0, 71);
    const Instance inst = generate_instance(cfg);
    RngStream rng = RngStream::seeded(73);
    CHECK_THROWS_AS(band_mc_check(inst, 10.0, 0.9 * inst.beta0, 0.001, 2000, rng),
                    NumericalError);
  }
}
