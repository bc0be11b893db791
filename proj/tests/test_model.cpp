#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tapsphere/model.hpp"
#include "testutil.hpp"

using namespace tapsphere;

TEST_CASE("generated instance satisfies the sphere and consistency invariants") {
  const ModelConfig cfg(3, 6, 1.0, 42);
  const Instance inst = generate_instance(cfg);
  CHECK(inst.beta0.squaredNorm() == Catch::Approx(3.0).epsilon(1e-10));
  // y is defined as the rounded sum X beta0 + eps; recomputing it the same
  // way must reproduce it bit for bit
  const Vec xb = inst.X * inst.beta0;
  const Vec expected = xb + inst.eps;
  CHECK(inst.y == expected);
}

TEST_CASE("same seed reproduces a bit-identical instance") {
  const ModelConfig cfg(5, 10, 2.0, 7);
  const Instance a = generate_instance(cfg);
  const Instance b = generate_instance(cfg);
  CHECK(a.X == b.X);
  CHECK(a.beta0 == b.beta0);
  CHECK(a.eps == b.eps);
  CHECK(a.y == b.y);
}

TEST_CASE("design entries have the prescribed first two moments") {
  const int p = 400, n = 800;
  const Instance inst = generate_instance(ModelConfig(p, n, 1.0, 3));
  const double count = static_cast<double>(p) * n;
  const double mean = inst.X.sum() / count;
  const double var = (inst.X.array() - mean).square().sum() / count;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(count * n));
  CHECK(var == Catch::Approx(1.0 / n).epsilon(0.05));
}

TEST_CASE("uniform sphere sampling") {
  SECTION("exact norm") {
    RngStream rng = RngStream::seeded(1).split("norm");
    for (int k = 0; k < 50; ++k) {
      const Vec b = sample_uniform_sphere(17, 3.5, rng);
      CHECK(b.norm() == Catch::Approx(3.5).epsilon(1e-12));
    }
  }

  SECTION("p=2 angle is uniform (KS at 1%)") {
    RngStream rng = RngStream::seeded(2).split("angle");
    const int n = 100000;
    std::vector<double> angles(n);
    for (int k = 0; k < n; ++k) {
      const Vec b = sample_uniform_sphere(2, 1.0, rng);
      angles[k] = std::atan2(b[1], b[0]) + M_PI;  // [0, 2pi)
    }
    const double d = testutil::ks_statistic(
        angles, [](double x) { return x / (2.0 * M_PI); });
    CHECK(d < testutil::ks_crit_1pct(n));
  }

  SECTION("first coordinate matches the projection density (KS at 1%)") {
    const int p = 50, n = 100000;
    RngStream rng = RngStream::seeded(3).split("proj");
    std::vector<double> xs(n);
    const double sqrt_p = std::sqrt(static_cast<double>(p));
    for (int k = 0; k < n; ++k)
      xs[k] = sample_uniform_sphere(p, sqrt_p, rng)[0] / sqrt_p;
    // CDF of the k=1 projection density by quadrature on a fine grid
    const int grid = 4000;
    std::vector<double> cdf(grid + 1, 0.0);
    for (int i = 1; i <= grid; ++i) {
      const double a = -1.0 + 2.0 * (i - 1) / grid, b = -1.0 + 2.0 * i / grid;
      const double fa = (std::abs(a) < 1.0) ? projection_density(a, p, 1) : 0.0;
      const double fb = (std::abs(b) < 1.0) ? projection_density(b, p, 1) : 0.0;
      const double fm = projection_density(0.5 * (a + b), p, 1);
      cdf[i] = cdf[i - 1] + (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    }
    const double total = cdf[grid];
    const double d = testutil::ks_statistic(xs, [&](double x) {
      const double pos = (x + 1.0) * grid / 2.0;
      const int i = std::clamp(static_cast<int>(pos), 0, grid - 1);
      const double frac = pos - i;
      return (cdf[i] * (1.0 - frac) + cdf[i + 1] * frac) / total;
    });
    CHECK(d < testutil::ks_crit_1pct(n));
  }

  SECTION("rotation invariance of a linear functional (two-sample KS)") {
    const int p = 20, n = 10000;
    RngStream rng = RngStream::seeded(4).split("rot");
    Vec u = sample_uniform_sphere(p, 1.0, rng);
    for (int rep = 0; rep < 2; ++rep) {
      const Mat Q = testutil::random_orthogonal(p, rng);
      std::vector<double> plain(n), rotated(n);
      for (int k = 0; k < n; ++k) {
        plain[k] = u.dot(sample_uniform_sphere(p, std::sqrt(p * 1.0), rng));
        rotated[k] = u.dot(Q * sample_uniform_sphere(p, std::sqrt(p * 1.0), rng));
      }
      CHECK(testutil::ks_two_sample(plain, rotated) < testutil::ks_two_sample_crit_1pct(n, n));
    }
  }
}

TEST_CASE("projection density") {
  SECTION("closed-form point value") {
    CHECK(projection_density(0.0, 4, 1) == Catch::Approx(2.0 / M_PI).epsilon(1e-12));
  }

  SECTION("k=1 normalization") {
    for (int p : {5, 20, 101}) {
      const int grid = 20000;
      double integral = 0.0;
      for (int i = 1; i <= grid; ++i) {
        const double a = -1.0 + 2.0 * (i - 1) / grid, b = -1.0 + 2.0 * i / grid;
        const double m = 0.5 * (a + b);
        const double fa = std::abs(a) < 1.0 ? projection_density(a, p, 1) : 0.0;
        const double fb = std::abs(b) < 1.0 ? projection_density(b, p, 1) : 0.0;
        integral += (b - a) / 6.0 * (fa + 4.0 * projection_density(m, p, 1) + fb);
      }
      CHECK(integral == Catch::Approx(1.0).margin(1e-8));
    }
  }

  SECTION("vanishes at the boundary when p-k-2 > 0") {
    CHECK(projection_density(0.999999, 10, 1) < 1e-10);
    CHECK(projection_density(-0.999999, 10, 2) < 1e-8);
  }

  SECTION("domain errors") {
    CHECK_THROWS_AS(projection_density(1.0, 10, 1), std::domain_error);
    CHECK_THROWS_AS(projection_density(-1.5, 10, 1), std::domain_error);
    CHECK_THROWS_AS(projection_density(0.0, 3, 3), std::invalid_argument);
  }

  SECTION("squared 2-D projection follows Beta(1, (p-2)/2)") {
    // the k = 2 band volume rests on ||proj||^2 / p ~ Beta(k/2, (p-k)/2),
    // whose CDF for k = 2 is 1 - (1 - t)^{(p-2)/2}
    const int p = 40, n = 100000;
    RngStream rng = RngStream::seeded(6).split("beta2");
    const double sqrt_p = std::sqrt(static_cast<double>(p));
    std::vector<double> ts(n);
    for (int k = 0; k < n; ++k) {
      const Vec b = sample_uniform_sphere(p, sqrt_p, rng);
      ts[k] = (b[0] * b[0] + b[1] * b[1]) / p;
    }
    const double d = testutil::ks_statistic(
        ts, [&](double t) { return 1.0 - std::pow(1.0 - t, 0.5 * (p - 2)); });
    CHECK(d < testutil::ks_crit_1pct(n));
  }

  SECTION("chi-square goodness of fit, 20 bins, 1e5 draws, 1% level") {
    const int p = 30, n = 100000, bins = 20;
    RngStream rng = RngStream::seeded(5).split("chisq");
    std::vector<long> counts(bins, 0);
    const double sqrt_p = std::sqrt(static_cast<double>(p));
    for (int k = 0; k < n; ++k) {
      const double x = sample_uniform_sphere(p, sqrt_p, rng)[0] / sqrt_p;
      const int b = std::clamp(static_cast<int>((x + 1.0) * bins / 2.0), 0, bins - 1);
      counts[b] += 1;
    }
    double chi2 = 0.0;
    for (int b = 0; b < bins; ++b) {
      const double lo = -1.0 + 2.0 * b / bins, hi = -1.0 + 2.0 * (b + 1) / bins;
      // expected mass by Simpson within the bin
      const int sub = 200;
      double mass = 0.0;
      for (int i = 1; i <= sub; ++i) {
        const double a = lo + (hi - lo) * (i - 1) / sub, c = lo + (hi - lo) * i / sub;
        const double fa = std::abs(a) < 1.0 ? projection_density(a, p, 1) : 0.0;
        const double fc = std::abs(c) < 1.0 ? projection_density(c, p, 1) : 0.0;
        mass += (c - a) / 6.0 * (fa + 4.0 * projection_density(0.5 * (a + c), p, 1) + fc);
      }
      const double expected = n * mass;
      if (expected > 1e-9) chi2 += (counts[b] - expected) * (counts[b] - expected) / expected;
    }
    CHECK(chi2 < 36.19);  // chi-square 1% critical value, 19 dof
  }
}

TEST_CASE("hamiltonian") {
  SECTION("zero at an exact fit") {
    Instance inst = generate_instance(ModelConfig(4, 8, 1.0, 11));
    inst.eps.setZero();
    inst.y = inst.X * inst.beta0;
    CHECK(hamiltonian(inst, 1.0, inst.beta0) == 0.0);
  }

  SECTION("independent of beta when X = 0") {
    Instance inst;
    inst.X = Mat::Zero(4, 3);
    inst.beta0 = Vec::Constant(3, 1.0);
    inst.eps = Vec::Constant(4, 2.0);
    inst.y = inst.eps;
    RngStream rng = RngStream::seeded(6);
    const double h0 = hamiltonian(inst, 2.0, Vec::Zero(3));
    CHECK(h0 == Catch::Approx(inst.y.squaredNorm() / 4.0));
    for (int k = 0; k < 5; ++k)
      CHECK(hamiltonian(inst, 2.0, sample_uniform_sphere(3, std::sqrt(3.0), rng)) ==
            Catch::Approx(h0));
  }

  SECTION("matches the direct quadratic expansion") {
    const Instance inst = generate_instance(ModelConfig(3, 2, 1.5, 13));
    RngStream rng = RngStream::seeded(7);
    const double delta = 1.5;
    for (int k = 0; k < 10; ++k) {
      const Vec beta = sample_uniform_sphere(3, std::sqrt(3.0), rng);
      const double direct = inst.y.squaredNorm() / (2.0 * delta) -
                            inst.y.dot(inst.X * beta) / delta +
                            beta.dot(inst.X.transpose() * inst.X * beta) / (2.0 * delta);
      CHECK(hamiltonian(inst, delta, beta) == Catch::Approx(direct).epsilon(1e-12));
    }
  }

  SECTION("invariant under a simultaneous rotation") {
    const Instance inst = generate_instance(ModelConfig(3, 5, 1.0, 17));
    RngStream rng = RngStream::seeded(8);
    for (int k = 0; k < 5; ++k) {
      const Mat Q = testutil::random_orthogonal(3, rng);
      const Vec beta = sample_uniform_sphere(3, std::sqrt(3.0), rng);
      Instance rot = inst;
      rot.X = inst.X * Q.transpose();
      const double a = hamiltonian(inst, 1.0, beta);
      const double b = hamiltonian(rot, 1.0, Q * beta);
      CHECK(a == Catch::Approx(b).margin(1e-10));
    }
  }
}

TEST_CASE("perturbed model") {
  const Instance inst = generate_instance(ModelConfig(40, 80, 10.0, 19));

  SECTION("construction invariant and determinism") {
    const PerturbationConfig pcfg(0.8, 0.2, 23);
    const PerturbedInstance pert = make_perturbed(inst, pcfg);
    const Vec z_rec = pert.y_pert - std::sqrt(0.8 * 0.2) * inst.beta0;
    CHECK((z_rec - pert.Z).lpNorm<Eigen::Infinity>() < 1e-12);
    const PerturbedInstance again = make_perturbed(inst, pcfg);
    CHECK(pert.Z == again.Z);
  }

  SECTION("Z norm concentrates (chi-square LLN)") {
    const int p = 400, draws = 100;
    const Instance big = generate_instance(ModelConfig(p, 800, 1.0, 29));
    std::vector<double> vals(draws);
    for (int d = 0; d < draws; ++d)
      vals[d] = make_perturbed(big, PerturbationConfig(0.75, 0.1, 1000 + d)).Z.squaredNorm() / p;
    double mean = 0.0, var = 0.0;
    for (double v : vals) mean += v;
    mean /= draws;
    for (double v : vals) var += (v - mean) * (v - mean);
    const double se = std::sqrt(var / (draws - 1)) / std::sqrt(static_cast<double>(draws));
    CHECK(std::abs(mean - 1.0) <= 3.0 * se);
  }

  SECTION("gauss hamiltonian closed-form points") {
    PerturbedInstance pert = make_perturbed(inst, PerturbationConfig(0.9, 0.3, 31));

    PerturbedInstance zeroed = pert;
    zeroed.lambda0 = 0.0;  // evaluate the lambda0 eps_p = 0 limit directly
    CHECK(hamiltonian_gauss(zeroed, inst.beta0) == 0.0);

    PerturbedInstance no_z = pert;
    no_z.Z.setZero();
    const double le = 0.9 * 0.3;
    const double p = inst.p();
    CHECK(hamiltonian_gauss(no_z, inst.beta0) == Catch::Approx(-le * p / 2.0).epsilon(1e-12));
  }

  SECTION("Cauchy-Schwarz bound on the sphere") {
    const PerturbedInstance pert = make_perturbed(inst, PerturbationConfig(0.7, 0.2, 37));
    const double le = 0.7 * 0.2;
    const double p = inst.p();
    const double bound = le * p + std::sqrt(le) * pert.Z.norm() * std::sqrt(p) + le * p / 2.0;
    RngStream rng = RngStream::seeded(41);
    for (int k = 0; k < 20; ++k) {
      const Vec beta = sample_uniform_sphere(inst.p(), std::sqrt(p), rng);
      CHECK(std::abs(hamiltonian_gauss(pert, beta)) <= bound);
    }
  }

  SECTION("config validation") {
    CHECK_THROWS_AS(PerturbationConfig(0.4, 0.1, 1), std::invalid_argument);
    CHECK_THROWS_AS(PerturbationConfig(0.7, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(PerturbationConfig(0.7, 1.5, 1), std::invalid_argument);
  }
}

TEST_CASE("rng streams") {
  SECTION("replaying a stream reproduces it") {
    RngStream a = RngStream::seeded(99).split("x").split(4);
    RngStream b = RngStream::seeded(99).split("x").split(4);
    for (int k = 0; k < 100; ++k) CHECK(a() == b());
  }

  SECTION("sibling streams are decorrelated") {
    RngStream parent = RngStream::seeded(7);
    RngStream a = parent.split(0);
    RngStream b = parent.split(1);
    double corr = 0.0;
    const int n = 20000;
    for (int k = 0; k < n; ++k) corr += (a.uniform() - 0.5) * (b.uniform() - 0.5);
    corr /= n / 12.0;  // normalize by Var(U) = 1/12
    CHECK(std::abs(corr) < 4.0 / std::sqrt(static_cast<double>(n)));
  }

  SECTION("uniform and normal moments") {
    RngStream rng = RngStream::seeded(11).split("moments");
    const int n = 200000;
    double su = 0.0, su2 = 0.0, sn = 0.0, sn2 = 0.0, sn4 = 0.0;
    for (int k = 0; k < n; ++k) {
      const double u = rng.uniform();
      const double g = rng.normal();
      su += u;
      su2 += u * u;
      sn += g;
      sn2 += g * g;
      sn4 += g * g * g * g;
    }
    CHECK(su / n == Catch::Approx(0.5).margin(4.0 / std::sqrt(12.0 * n)));
    CHECK(su2 / n == Catch::Approx(1.0 / 3.0).margin(0.003));
    CHECK(sn / n == Catch::Approx(0.0).margin(4.0 / std::sqrt(static_cast<double>(n))));
    CHECK(sn2 / n == Catch::Approx(1.0).epsilon(0.02));
    CHECK(sn4 / n == Catch::Approx(3.0).epsilon(0.05));
  }

  SECTION("label splits differ from index splits") {
    RngStream root = RngStream::seeded(1);
    CHECK(root.split("X").key() != root.split("eps").key());
    CHECK(root.split(0).key() != root.split(1).key());
  }
}

TEST_CASE("model config validation") {
  CHECK_THROWS_AS(ModelConfig(2, 4, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(ModelConfig(3, 0, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(ModelConfig(3, 4, 0.0, 0), std::invalid_argument);
  CHECK(ModelConfig(4, 8, 1.0, 0).alpha() == 2.0);
}
