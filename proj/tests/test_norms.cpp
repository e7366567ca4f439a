#include <catch2/catch_amalgamated.hpp>

#include "rflab/norms.hpp"

using namespace rflab;

namespace {

ScalarField sine_x(const GridSpec& g) {
  ScalarField f(g);
  for (std::int64_t p = 0; p < g.num_points(); ++p)
    f.at(p) = std::sin(2.0 * M_PI * g.point(p)[0] / g.period(0));
  return f;
}

ScalarField random_scalar(const GridSpec& g, std::uint64_t seed) {
  ScalarField f(g);
  Rng rng(seed);
  for (std::int64_t p = 0; p < g.num_points(); ++p) f.at(p) = rng.normal();
  return f;
}

}  // namespace

TEST_CASE("sup_norm basics") {
  GridSpec g({32, 32}, {1.0, 1.0});
  ScalarField z(g);
  CHECK(sup_norm(z) == 0.0);
  ScalarField f = sine_x(g);
  CHECK(sup_norm(f) == Catch::Approx(1.0));  // N divisible by 4: extremum on the grid
  SymTensorField e(g);
  for (std::int64_t p = 0; p < g.num_points(); ++p) {
    e.at(p, 0, 0) = 3.0;
    e.at(p, 0, 1) = 1.0;
    e.at(p, 1, 1) = -2.0;
  }
  // Frobenius norm with both off-diagonal entries: sqrt(9 + 2*1 + 4)
  CHECK(sup_norm(e) == Catch::Approx(std::sqrt(15.0)));
  MetricField flat = MetricField::flat(g);
  CHECK(sup_norm(e, flat) == Catch::Approx(std::sqrt(15.0)));
}

TEST_CASE("holder seminorm: constants, homogeneity, coordinate ramp oracle") {
  GridSpec g({32}, {1.0});
  HolderParams hp;  // alpha = 1/2, max_sep = 1/4
  ScalarField c(g);
  c.fill(4.2);
  CHECK(holder_seminorm(c, hp) == 0.0);

  // f(x) = x (stored values of the coordinate): 1-Lipschitz in the chart, so
  // the quotient is maximal at the distance cap: max_sep^{1-alpha} = 0.5.
  ScalarField ramp(g);
  for (std::int64_t p = 0; p < g.num_points(); ++p) ramp.at(p) = g.point(p)[0];
  const double sn = holder_seminorm(ramp, hp);
  // independent exhaustive oracle over all non-wrapped pairs
  double oracle = 0.0;
  for (int i = 0; i < 32; ++i)
    for (int j = i + 1; j < 32; ++j) {
      const double dist = (j - i) / 32.0;
      if (dist < 1.0 / 32.0 - 1e-12 || dist > 0.25 + 1e-12) continue;
      oracle = std::max(oracle, dist / std::pow(dist, hp.alpha));
    }
  CHECK(sn == Catch::Approx(oracle).epsilon(1e-12));
  CHECK(sn == Catch::Approx(std::pow(0.25, 0.5)).epsilon(1e-12));

  ScalarField r3 = scaled(3.0, ramp);
  CHECK(holder_seminorm(r3, hp) == Catch::Approx(3.0 * sn).epsilon(1e-12));
}

TEST_CASE("holder seminorm sampling is deterministic in the seed") {
  GridSpec g({48, 48}, {1.0, 1.0});  // above the exhaustive cutoff
  ScalarField f = random_scalar(g, 5);
  HolderParams hp;
  hp.sample_pairs = 20000;
  const double a = holder_seminorm(f, hp);
  const double b = holder_seminorm(f, hp);
  CHECK(a == b);
  hp.seed = 999;
  const double c = holder_seminorm(f, hp);
  CHECK(a != c);  // different pair sample
  CHECK(std::abs(a - c) / a < 0.5);
}

TEST_CASE("degenerate holder params are rejected") {
  GridSpec g({8}, {1.0});
  ScalarField f(g);
  HolderParams hp;
  hp.min_sep = 0.3;
  hp.max_sep = 0.2;
  CHECK_THROWS_AS(holder_seminorm(f, hp), error);
  hp = HolderParams{};
  hp.alpha = 1.5;
  CHECK_THROWS_AS(holder_seminorm(f, hp), error);
}

TEST_CASE("ck_norm: zero, constant, analytic sine") {
  GridSpec g({64}, {1.0});
  ScalarField z(g);
  CHECK(ck_norm(z, 2) == 0.0);
  ScalarField c(g);
  c.fill(-2.5);
  CHECK(ck_norm(c, 2) == Catch::Approx(2.5));
  ScalarField f = sine_x(g);
  // k = 1, no Holder term: sup|f| + sup|f'| = 1 + 2*pi up to O(h^4)
  CHECK(ck_norm(f, 1) == Catch::Approx(1.0 + 2.0 * M_PI).margin(2e-4));
  CHECK_THROWS_AS(ck_norm(f, 5), error);
}

TEST_CASE("ck_norm is monotone in k") {
  GridSpec g({16, 16}, {1.0, 1.0});
  HolderParams hp;
  ScalarField f = random_scalar(g, 11);
  CHECK(ck_norm(f, 2, &hp) <= ck_norm(f, 4, &hp));
}

TEST_CASE("norm axioms hold to machine precision") {
  GridSpec g({16, 16}, {1.0, 1.0});
  HolderParams hp;
  ScalarField f1 = random_scalar(g, 1), f2 = random_scalar(g, 2);
  for (int k : {0, 2}) {
    const double n1 = ck_norm(f1, k, &hp), n2 = ck_norm(f2, k, &hp);
    CHECK(n1 > 0.0);
    CHECK(ck_norm(axpy(1.0, f2, f1), k, &hp) <= n1 + n2 + 1e-12 * (n1 + n2));
    CHECK(ck_norm(scaled(-2.0, f1), k, &hp) == Catch::Approx(2.0 * n1).epsilon(1e-13));
  }
}

TEST_CASE("l2 pairing: unit volume, discrete orthogonality, symmetry") {
  GridSpec g({32, 32}, {1.0, 1.0});
  MetricField flat = MetricField::flat(g);
  ScalarField one(g);
  one.fill(1.0);
  CHECK(l2_pairing(one, one, flat) == Catch::Approx(1.0).epsilon(1e-14));

  ScalarField s(g), c(g);
  for (std::int64_t p = 0; p < g.num_points(); ++p) {
    const double x = g.point(p)[0];
    s.at(p) = std::sin(2.0 * M_PI * x);
    c.at(p) = std::cos(2.0 * M_PI * x);
  }
  CHECK(std::abs(l2_pairing(s, c, flat)) < 1e-13);

  ScalarField u = random_scalar(g, 3), v = random_scalar(g, 4);
  CHECK(l2_pairing(u, v, flat) == l2_pairing(v, u, flat));
}

TEST_CASE("l2_norm bounded by sup norm times sqrt(volume)") {
  GridSpec g({16, 16}, {1.5, 2.0});
  SymTensorField t(g);
  Rng rng(17);
  for (std::int64_t p = 0; p < g.num_points(); ++p) {
    t.at(p, 0, 0) = 2.0 + 0.1 * rng.normal();
    t.at(p, 1, 1) = 1.0 + 0.1 * rng.normal();
    t.at(p, 0, 1) = 0.1 * rng.normal();
  }
  MetricField gm(t);
  ScalarField u = random_scalar(g, 8);
  CHECK(l2_norm(u, gm) <= sup_norm(u) * std::sqrt(volume(gm)) * (1 + 1e-13));
}
