#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tapsphere/spectra.hpp"
#include "testutil.hpp"

using namespace tapsphere;

TEST_CASE("good_set_check") {
  SECTION("kappa = 100 holds on essentially every instance") {
    int hits = 0;
    for (int seed = 0; seed < 100; ++seed)
      hits += good_set_check(generate_instance(ModelConfig(50, 100, 10.0, seed)), 100.0, 10.0);
    CHECK(hits >= 99);
  }

  SECTION("tiny kappa fails for typical instances") {
    const Instance inst = generate_instance(ModelConfig(50, 100, 10.0, 1));
    CHECK_FALSE(good_set_check(inst, 1e-4, 10.0));
  }

  SECTION("trivial instance is in the good set") {
    Instance inst;
    inst.X = Mat::Zero(10, 5);
    inst.beta0 = Vec::Zero(5);
    inst.eps = Vec::Zero(10);
    inst.y = Vec::Zero(10);
    CHECK(good_set_check(inst, 100.0, 1.0));
  }

  SECTION("kappa must be positive") {
    const Instance inst = generate_instance(ModelConfig(10, 20, 1.0, 2));
    CHECK_THROWS_AS(good_set_check(inst, 0.0, 1.0), std::invalid_argument);
  }
}

TEST_CASE("singular_bound_frequency") {
  const ModelConfig cfg(100, 200, 1.0, 1);

  SECTION("t = 3 is rarely violated") {
    CHECK(singular_bound_frequency(cfg, 3.0, 500) >= 0.98);
    CHECK(singular_bound_frequency(cfg, 3.0, 500, SingularBound::smallest) >= 0.98);
  }

  SECTION("t = 0 is report-only") {
    const double f = singular_bound_frequency(cfg, 0.0, 100);
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
  }

  SECTION("trial floor") {
    CHECK_THROWS_AS(singular_bound_frequency(cfg, 3.0, 50), std::invalid_argument);
  }
}

TEST_CASE("mp_diagnostics") {
  SECTION("KS distance against the MP law at desk scale") {
    const Instance inst = generate_instance(ModelConfig(400, 800, 10.0, 9));
    const SpectrumReport rep = mp_diagnostics(inst, 10.0);
    CHECK(rep.mp_ks_distance < 0.05);
    CHECK(rep.in_good_set);
    CHECK(std::is_sorted(rep.eigvals.data(), rep.eigvals.data() + 400));
    CHECK(rep.eigvals.minCoeff() >= -1e-10);
  }

  SECTION("rank deficiency gives exactly p - n zero eigenvalues") {
    const Instance inst = generate_instance(ModelConfig(400, 200, 1.0, 4));
    const SpectrumReport rep = mp_diagnostics(inst, 1.0);
    int zeros = 0;
    for (int i = 0; i < 400; ++i) zeros += std::abs(rep.eigvals[i]) < 1e-8;
    CHECK(zeros == 200);
    CHECK(rep.mp_ks_distance < 0.05);
  }

  SECTION("eigenvalue sum equals the trace") {
    const Instance inst = generate_instance(ModelConfig(150, 300, 1.0, 5));
    const SpectrumReport rep = mp_diagnostics(inst, 1.0);
    const double trace = (inst.X.transpose() * inst.X).trace();
    CHECK(rep.eigvals.sum() == Catch::Approx(trace).epsilon(1e-8));
  }

  SECTION("quantile deviation shrinks with p (median over seeds)") {
    auto median_dev = [](int p) {
      std::vector<double> devs;
      for (int seed = 0; seed < 10; ++seed) {
        const Instance inst = generate_instance(ModelConfig(p, 2 * p, 1.0, 600 + seed));
        devs.push_back(mp_diagnostics(inst, 1.0).quantile_deviation);
      }
      return testutil::median(devs);
    };
    const double d100 = median_dev(100);
    const double d400 = median_dev(400);
    CHECK(d400 < d100);
  }

  SECTION("MP edge approach: sigma_max^2 toward (1 + sqrt(p/n))^2") {
    auto median_edge_gap = [](int p) {
      std::vector<double> gaps;
      for (int seed = 0; seed < 10; ++seed) {
        const Instance inst = generate_instance(ModelConfig(p, 2 * p, 1.0, 700 + seed));
        const SpectrumReport rep = mp_diagnostics(inst, 1.0);
        const double edge = (1.0 + std::sqrt(0.5)) * (1.0 + std::sqrt(0.5));
        gaps.push_back(std::abs(rep.sigma_max * rep.sigma_max - edge));
      }
      return testutil::median(gaps);
    };
    CHECK(median_edge_gap(400) < median_edge_gap(100));
  }
}

TEST_CASE("MarchenkoPastur CDF") {
  const MarchenkoPastur mp(200, 400);
  CHECK(mp.cdf(mp.support_lo() - 1e-9) == 0.0);
  CHECK(mp.cdf(mp.support_hi()) == Catch::Approx(1.0).margin(1e-8));
  CHECK(mp.atom_mass() == 0.0);
  // quantile inverts the cdf
  for (double t : {0.1, 0.5, 0.9}) CHECK(mp.cdf(mp.quantile(t)) == Catch::Approx(t).margin(1e-8));

  const MarchenkoPastur wide(400, 200);
  CHECK(wide.atom_mass() == Catch::Approx(0.5));
  CHECK(wide.cdf(0.0) == Catch::Approx(0.5));
}

TEST_CASE("interlacing_check") {
  SECTION("principal minor via standard basis vectors") {
    const Instance inst = generate_instance(ModelConfig(30, 60, 1.0, 11));
    const InterlacingResult res =
        interlacing_check(inst, Vec::Unit(30, 28), Vec::Unit(30, 29));
    CHECK(res.worst_violation <= 1e-10);
  }

  SECTION("random directions: interlacing exact, gap below the spread") {
    RngStream rng = RngStream::seeded(13);
    for (int seed = 0; seed < 20; ++seed) {
      const Instance inst = generate_instance(ModelConfig(60, 120, 1.0, 800 + seed));
      const Vec u = sample_uniform_sphere(60, 1.0, rng);
      const Vec v = sample_uniform_sphere(60, 1.0, rng);
      const InterlacingResult res = interlacing_check(inst, u, v);
      CHECK(res.worst_violation <= 1e-9);
      const SpectrumReport rep = mp_diagnostics(inst, 1.0);
      CHECK(res.max_gap < rep.eigvals.maxCoeff() - rep.eigvals.minCoeff());
    }
  }

  SECTION("gap shrinks with dimension (median over seeds)") {
    RngStream rng = RngStream::seeded(17);
    auto median_gap = [&](int p) {
      std::vector<double> gaps;
      for (int seed = 0; seed < 10; ++seed) {
        const Instance inst = generate_instance(ModelConfig(p, 2 * p, 1.0, 900 + seed));
        const Vec u = sample_uniform_sphere(p, 1.0, rng);
        const Vec v = sample_uniform_sphere(p, 1.0, rng);
        gaps.push_back(interlacing_check(inst, u, v).max_gap);
      }
      return testutil::median(gaps);
    };
    const double g100 = median_gap(100);
    const double g400 = median_gap(400);
    CHECK(g400 < g100);
  }

  SECTION("degenerate directions are rejected") {
    const Instance inst = generate_instance(ModelConfig(10, 20, 1.0, 19));
    const Vec u = Vec::Unit(10, 0);
    CHECK_THROWS_AS(interlacing_check(inst, u, 2.0 * u), std::invalid_argument);
  }

  SECTION("Levy concentration companion for a Lipschitz functional") {
    // f = mean of coordinates on the unit sphere has Lipschitz constant
    // 1/sqrt(p); deviations above L t occur with frequency <= exp(pi - p t^2/4)
    const int p = 100, draws = 10000;
    const double t = 0.5;
    RngStream rng = RngStream::seeded(23);
    long exceed = 0;
    for (int k = 0; k < draws; ++k) {
      const Vec s = sample_uniform_sphere(p, 1.0, rng);
      exceed += std::abs(s.mean()) > t / std::sqrt(static_cast<double>(p));
    }
    const double freq = static_cast<double>(exceed) / draws;
    const double bound = std::exp(M_PI - p * t * t / 4.0);
    CHECK(freq <= bound + 3.0 * std::sqrt(bound / draws) + 1e-3);
  }
}
