#include <catch2/catch_amalgamated.hpp>

#include "rflab/norms.hpp"

using namespace rflab;

namespace {

ScalarField sine_field(const GridSpec& g, int axis, int mode = 1) {
  ScalarField f(g);
  for (std::int64_t p = 0; p < g.num_points(); ++p) {
    const auto x = g.point(p);
    f.at(p) = std::sin(2.0 * M_PI * mode * x[axis] / g.period(axis));
  }
  return f;
}

ScalarField random_scalar(const GridSpec& g, std::uint64_t seed) {
  ScalarField f(g);
  Rng rng(seed);
  for (std::int64_t p = 0; p < g.num_points(); ++p) f.at(p) = rng.normal();
  return f;
}

}  // namespace

TEST_CASE("GridSpec validation") {
  CHECK_THROWS_AS(GridSpec({4}, {1.0}), error);          // N < 8
  CHECK_THROWS_AS(GridSpec({8, 8}, {1.0, -1.0}), error); // L <= 0
  CHECK_THROWS_AS(GridSpec({8, 8, 8, 8}, {1, 1, 1, 1}), error);
  GridSpec g({16, 8}, {2.0, 1.0});
  CHECK(g.num_points() == 128);
  CHECK(g.spacing(0) == Catch::Approx(0.125));
  CHECK(g.flatten(g.unflatten(77)) == 77);
}

TEST_CASE("SymTensorField packing and MetricField positivity") {
  GridSpec g({8, 8}, {1.0, 1.0});
  SymTensorField t(g);
  for (std::int64_t p = 0; p < g.num_points(); ++p) {
    t.at(p, 0, 0) = 2.0;
    t.at(p, 1, 1) = 1.0;
    t.at(p, 0, 1) = 0.5;
  }
  CHECK(t.at(3, 1, 0) == 0.5);  // symmetric accessor
  CHECK_NOTHROW(MetricField(t));
  for (std::int64_t p = 0; p < g.num_points(); ++p) t.at(p, 0, 1) = 1.5;  // det < 0
  CHECK_THROWS_AS(MetricField(t), error);
}

TEST_CASE("derivative of constant field is zero") {
  GridSpec g({16, 12}, {1.0, 2.0});
  ScalarField f(g);
  f.fill(3.25);
  for (int axis = 0; axis < 2; ++axis)
    for (int order = 1; order <= 2; ++order) {
      ScalarField d = partial_derivative(f, axis, order);
      CHECK(sup_norm(d) < 1e-11);  // roundoff of the stencil cancellation
    }
}

TEST_CASE("derivative matches analytic oracle at 4th order") {
  auto err_of = [](int N) {
    GridSpec g({N}, {1.0});
    ScalarField f = sine_field(g, 0);
    ScalarField d = partial_derivative(f, 0, 1);
    double err = 0.0;
    for (std::int64_t p = 0; p < g.num_points(); ++p) {
      const auto x = g.point(p);
      err = std::max(err, std::abs(d.at(p) - 2.0 * M_PI * std::cos(2.0 * M_PI * x[0])));
    }
    return err;
  };
  const double e32 = err_of(32), e64 = err_of(64);
  CHECK(e32 < 1e-3);
  // convergence order >= 3.9 under grid doubling
  CHECK(std::log2(e32 / e64) >= 3.9);
}

TEST_CASE("derivative of axis-independent field along that axis is zero") {
  GridSpec g({16, 16}, {1.0, 1.0});
  ScalarField f = sine_field(g, 1);
  CHECK(sup_norm(partial_derivative(f, 0, 1)) < 1e-13);
}

TEST_CASE("derivative is linear to machine precision") {
  GridSpec g({12, 12}, {1.0, 1.0});
  ScalarField f1 = random_scalar(g, 1), f2 = random_scalar(g, 2);
  ScalarField combo = axpy(-2.5, f2, scaled(1.75, f1));
  ScalarField lhs = partial_derivative(combo, 1, 1);
  ScalarField rhs = axpy(-2.5, partial_derivative(f2, 1, 1), scaled(1.75, partial_derivative(f1, 1, 1)));
  CHECK(sup_norm(difference(lhs, rhs)) < 1e-12 * sup_norm(lhs));
}

TEST_CASE("mixed partials commute exactly") {
  GridSpec g({16, 12}, {1.0, 1.5});
  ScalarField f = random_scalar(g, 5);
  ScalarField ab = partial_derivative(f, 0, 2, 1);
  ScalarField ba = partial_derivative(f, 1, 2, 0);
  CHECK(sup_norm(difference(ab, ba)) == 0.0);
}

TEST_CASE("grid operations commute with cyclic shifts") {
  GridSpec g({12, 16}, {1.0, 1.0});
  ScalarField f = random_scalar(g, 9);
  const std::array<int, kMaxDim> off{1, 0, 0};
  SECTION("derivatives") {
    for (int axis = 0; axis < 2; ++axis) {
      ScalarField a = shifted(partial_derivative(f, axis, 1), off);
      ScalarField b = partial_derivative(shifted(f, off), axis, 1);
      CHECK(sup_norm(difference(a, b)) == 0.0);
    }
  }
  SECTION("interpolation at shifted points") {
    Interpolator ia(f);
    Interpolator ib(shifted(f, off));
    std::array<double, kMaxDim> x{0.37, 0.81, 0.0};
    std::array<double, kMaxDim> xs{x[0] + g.spacing(0), x[1], 0.0};
    double va, vb;
    ia.eval(x, &va);
    ib.eval(xs, &vb);
    CHECK(va == Catch::Approx(vb).margin(1e-12));
  }
}

TEST_CASE("axis out of range is an error") {
  GridSpec g({8, 8}, {1.0, 1.0});
  ScalarField f(g);
  CHECK_THROWS_AS(partial_derivative(f, 2, 1), error);
  CHECK_THROWS_AS(partial_derivative(f, 0, 2, 3), error);
}

TEST_CASE("interpolation is exact at grid nodes") {
  GridSpec g({16, 16}, {1.0, 1.0});
  ScalarField f = random_scalar(g, 33);
  Interpolator interp(f);
  for (std::int64_t p : {0L, 37L, 255L}) {
    double v;
    interp.eval(g.point(p), &v);
    CHECK(v == Catch::Approx(f.at(p)).margin(1e-12));
  }
}

TEST_CASE("interpolation of a band-limited mode at midpoints") {
  GridSpec g({32}, {1.0});
  ScalarField f = sine_field(g, 0);
  Interpolator interp(f);
  REQUIRE(interp.trigonometric());
  double worst = 0.0;
  for (int i = 0; i < 32; ++i) {
    const double x = (i + 0.5) / 32.0;
    double v;
    interp.eval({x, 0.0, 0.0}, &v);
    worst = std::max(worst, std::abs(v - std::sin(2.0 * M_PI * x)));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("interpolation of a constant field is the constant") {
  GridSpec g({8, 8, 8}, {1.0, 1.0, 2.0});
  ScalarField f(g);
  f.fill(-7.5);
  Interpolator interp(f);
  double v;
  interp.eval({0.123, 0.456, 1.789}, &v);
  CHECK(v == Catch::Approx(-7.5).margin(1e-12));
}

TEST_CASE("cubic fallback engages above 64 and stays 4th order") {
  GridSpec g({96}, {1.0});
  ScalarField f = sine_field(g, 0);
  Interpolator interp(f);
  REQUIRE_FALSE(interp.trigonometric());
  double worst = 0.0;
  for (int i = 0; i < 96; ++i) {
    const double x = (i + 0.5) / 96.0;
    double v;
    interp.eval({x, 0.0, 0.0}, &v);
    worst = std::max(worst, std::abs(v - std::sin(2.0 * M_PI * x)));
  }
  CHECK(worst < 5e-6);  // O(h^4) at this resolution
}

TEST_CASE("point reduction mod periods") {
  GridSpec g({16}, {1.0});
  ScalarField f = sine_field(g, 0);
  Interpolator interp(f);
  double a, b;
  interp.eval({0.3, 0, 0}, &a);
  interp.eval({0.3 + 3.0, 0, 0}, &b);
  CHECK(a == Catch::Approx(b).margin(1e-9));
}
