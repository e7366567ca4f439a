#include <catch2/catch_amalgamated.hpp>

#include "rflab/spectral.hpp"

using namespace rflab;

namespace {

OperatorMatrix flat_lichnerowicz(const GridSpec& g) {
  MetricField flat = MetricField::flat(g);
  auto rc = std::make_shared<kernels::ReferenceCache>(kernels::reference_cache(flat.tensor()));
  return assemble([rc](const SymTensorField& h) { return kernels::lichnerowicz_of(*rc, h); }, g,
                  "lichnerowicz[flat]");
}

Eigen::VectorXd random_vec(std::int64_t n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd v(n);
  for (std::int64_t i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

/// RK4 integration of u' = A u with a small fixed step: the independent
/// oracle for the contour semigroup.
Eigen::VectorXd rk4_linear_flow(const Eigen::SparseMatrix<double>& A, double t,
                                const Eigen::VectorXd& u0, int nsteps) {
  Eigen::VectorXd u = u0;
  const double dt = t / nsteps;
  for (int s = 0; s < nsteps; ++s) {
    Eigen::VectorXd k1 = A * u;
    Eigen::VectorXd k2 = A * (u + 0.5 * dt * k1);
    Eigen::VectorXd k3 = A * (u + 0.5 * dt * k2);
    Eigen::VectorXd k4 = A * (u + dt * k3);
    u += (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return u;
}

}  // namespace

TEST_CASE("assemble: T^1 circulant row of the composed stencil") {
  GridSpec g({8}, {1.0});
  OperatorMatrix M = flat_lichnerowicz(g);
  REQUIRE(M.n_rows == 8);
  // row of D1(D1 .)): convolution of the first-derivative taps with themselves
  const double h2 = (1.0 / 8) * (1.0 / 8);
  std::map<int, double> expect;
  const double taps[5] = {1.0 / 12, -8.0 / 12, 0.0, 8.0 / 12, -1.0 / 12};
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) expect[(i - 2) + (j - 2)] += taps[i] * taps[j] / h2;
  Eigen::MatrixXd A(M.A);
  for (int off = -4; off <= 4; ++off)
    CHECK(A(0, ((off % 8) + 8) % 8) == Catch::Approx(expect[off]).margin(1e-9));
}

TEST_CASE("assemble: zero operator gives the zero matrix") {
  GridSpec g({8, 8}, {1.0, 1.0});
  OperatorMatrix M = assemble([](const SymTensorField& h) { return SymTensorField(h.grid()); },
                              g, "zero");
  CHECK(M.A.nonZeros() == 0);
  CHECK(M.symmetric_flag);
}

TEST_CASE("assemble: flat operator matrix is symmetric and matches the operator") {
  GridSpec g({8, 8}, {1.0, 1.0});
  OperatorMatrix M = flat_lichnerowicz(g);
  CHECK(M.symmetric_flag);
  Eigen::SparseMatrix<double> At = M.A.transpose();
  Eigen::SparseMatrix<double> D = M.A - At;
  double asym = 0.0;
  for (int k = 0; k < D.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(D, k); it; ++it)
      asym = std::max(asym, std::abs(it.value()));
  CHECK(asym < 1e-12);
  // matrix-vector agreement on a random field
  MetricField flat = MetricField::flat(g);
  SymTensorField f(g);
  Rng rng(5);
  for (std::int64_t i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
  Eigen::VectorXd Ax = M.A * to_stacked(f);
  Eigen::VectorXd ox = to_stacked(lichnerowicz(flat, f));
  CHECK((Ax - ox).cwiseAbs().maxCoeff() < 1e-12 * ox.cwiseAbs().maxCoeff());
}

TEST_CASE("assemble rejects nonlinear operators") {
  GridSpec g({8}, {1.0});
  auto nonlinear = [](const SymTensorField& h) {
    SymTensorField out = h;
    for (std::int64_t i = 0; i < out.size(); ++i) out.data()[i] = h.data()[i] * h.data()[i];
    return out;
  };
  CHECK_THROWS_AS(assemble(nonlinear, g, "sq"), error);
}

TEST_CASE("top_spectrum of the flat operator on T^2") {
  GridSpec g({8, 8}, {1.0, 1.0});
  OperatorMatrix M = flat_lichnerowicz(g);
  SpectrumResult sp = top_spectrum(M, 16, /*force_general=*/true);
  CHECK(sp.max_residual < 1e-8);
  for (double im : sp.im) CHECK(std::abs(im) < 1e-8);
  // exactly 3 zero eigenvalues (constant symmetric tensors)
  int zeros = 0;
  for (double re : sp.re) zeros += std::abs(re) < 1e-10 ? 1 : 0;
  CHECK(zeros == 3);
  // next cluster: symbol value of the lowest mode, multiplicity 4 modes x 3 comps
  const double mu = composed_laplacian_symbol(1, 8, 1.0 / 8);
  for (int i = 3; i < 15; ++i) CHECK(sp.re[i] == Catch::Approx(mu).margin(1e-9));
}

TEST_CASE("shift-invert path agrees with the dense path") {
  GridSpec g({8, 8}, {1.0, 1.0});
  OperatorMatrix M = flat_lichnerowicz(g);
  SpectrumResult dense = top_spectrum(M, 5);
  SpectrumResult si = detail::shift_invert_spectrum(M, 5, 1.0);
  CHECK(si.max_residual < 1e-8);
  for (int i = 0; i < 5; ++i) CHECK(si.re[i] == Catch::Approx(dense.re[i]).margin(1e-7));
}

TEST_CASE("resolvent eigen-identity and normal-operator norms") {
  GridSpec g({8, 8}, {1.0, 1.0});
  OperatorMatrix M = flat_lichnerowicz(g);
  const std::int64_t n = M.n_rows;
  SECTION("eigenvector of the zero eigenvalue: R_2 f = f/2") {
    SymTensorField c(g);
    for (std::int64_t p = 0; p < g.num_points(); ++p) {
      c.at(p, 0, 0) = 1.0;
      c.at(p, 0, 1) = -0.5;
      c.at(p, 1, 1) = 2.0;
    }
    Eigen::VectorXcd f = to_stacked(c).cast<Complex>();
    Eigen::VectorXcd rf = resolvent_apply(M, Complex(2.0, 0.0), f);
    CHECK((rf - f / 2.0).norm() < 1e-12 * f.norm());
  }
  SECTION("l2 norm = 1/dist(lambda, spectrum) for the self-adjoint operator") {
    NormEstimate e1 = resolvent_norm(M, Complex(1.0, 0.0), NormKind::l2);
    CHECK(e1.value == Catch::Approx(1.0).epsilon(1e-6));  // nearest eigenvalue is 0
    NormEstimate e2 = resolvent_norm(M, Complex(1.0, 1000.0), NormKind::l2);
    CHECK(e2.value == Catch::Approx(1.0 / std::abs(Complex(1.0, 1000.0))).epsilon(1e-6));
  }
  SECTION("sup-kind norms are finite and consistent with norm equivalence") {
    NormEstimate l2 = resolvent_norm(M, Complex(1.0, 0.0), NormKind::l2);
    NormEstimate sup = resolvent_norm(M, Complex(1.0, 0.0), NormKind::sup);
    CHECK(sup.certified_lower);
    CHECK(sup.value > 0.0);
    CHECK(sup.upper >= sup.value * (1 - 1e-9));
    // lower bound can exceed the l2 norm by at most sqrt(n)
    CHECK(sup.value <= std::sqrt(static_cast<double>(n)) * l2.value * (1 + 1e-9));
  }
  SECTION("guard distance rejects lambda on the spectrum") {
    std::vector<Complex> spec{Complex(0.0, 0.0)};
    Eigen::VectorXcd f = random_vec(n, 3).cast<Complex>();
    CHECK_THROWS_AS(resolvent_apply(M, Complex(1e-14, 0.0), f, &spec), error);
  }
}

TEST_CASE("sector scan: restricted half-plane and full sector") {
  GridSpec g({8, 8}, {1.0, 1.0});
  OperatorMatrix M = flat_lichnerowicz(g);
  std::vector<double> radii;
  for (int j = 0; j <= 9; ++j) radii.push_back(std::pow(10.0, j / 3.0));
  const double K = 1.0;
  SECTION("restricted: products stay at 1 for the normal operator") {
    std::vector<double> rays{0.0, M_PI / 3, -M_PI / 3, 3 * M_PI / 4, -3 * M_PI / 4};
    SectorReport rep = sector_scan(M, K, rays, radii, NormKind::l2, true);
    CHECK(rep.violations == 0);
    CHECK(rep.M_estimate <= 1.0 + 1e-6);
    for (const auto& s : rep.samples) CHECK(s.lambda.real() > K);
  }
  SECTION("full sector: 3pi/4 ray products bounded, resolution-stable") {
    std::vector<double> rays{3 * M_PI / 4};
    SectorReport r8 = sector_scan(M, K, rays, radii, NormKind::l2, false);
    CHECK(r8.violations == 0);
    CHECK(r8.M_estimate < 1.5);
    GridSpec g12({12, 12}, {1.0, 1.0});
    SectorReport r12 = sector_scan(flat_lichnerowicz(g12), K, rays, radii, NormKind::l2, false);
    CHECK(std::abs(r12.M_estimate - r8.M_estimate) / r8.M_estimate < 0.05);
  }
  SECTION("huge imaginary lambda on the boundary line stays bounded") {
    std::vector<double> rays{M_PI / 2};
    SectorReport rep = sector_scan(M, K, rays, {1e4, 1e5}, NormKind::l2, false);
    for (const auto& s : rep.samples) {
      CHECK(s.ok);
      CHECK(s.product <= 1.0 + 1e-6);
    }
  }
}

TEST_CASE("semigroup by contour quadrature") {
  GridSpec g({16}, {1.0});
  OperatorMatrix M = flat_lichnerowicz(g);
  const std::int64_t n = M.n_rows;
  SECTION("eigenvector with a small circle around its eigenvalue") {
    // constant field: eigenvalue 0; circle of radius 1 around 0
    Eigen::VectorXd f = Eigen::VectorXd::Ones(n);
    ContourSpec c;
    c.shape = ContourSpec::Shape::circle;
    c.omega = 0.0;
    c.radius = 1.0;
    c.nodes = 64;
    SemigroupResult r = semigroup_apply(M, 0.3, f, c, 1e-8);
    CHECK((r.u - std::exp(0.0) * f).norm() < 1e-9 * f.norm());
  }
  SECTION("random data vs the RK4 linear-flow oracle") {
    Eigen::VectorXd f = random_vec(n, 11);
    ContourSpec c;  // default sector contour
    SemigroupResult r = semigroup_apply(M, 0.1, f, c, 1e-6);
    Eigen::VectorXd oracle = rk4_linear_flow(M.A, 0.1, f, 20000);
    CHECK((r.u - oracle).norm() / oracle.norm() < 1e-6);
    CHECK(r.node_doubling_delta < 1e-8);
  }
  SECTION("t -> 0 limit returns the identity at O(t)") {
    Eigen::VectorXd f = random_vec(n, 13);
    ContourSpec c;
    double prev = -1.0;
    for (double t : {4e-4, 2e-4, 1e-4}) {
      SemigroupResult r = semigroup_apply(M, t, f, c, 1e-5);
      const double err = (r.u - f).norm() / f.norm();
      if (prev >= 0.0) CHECK(err < 0.65 * prev);  // ~linear decrease in t
      prev = err;
    }
  }
  SECTION("semigroup property e^{sA} e^{tA} = e^{(s+t)A}") {
    Eigen::VectorXd f = random_vec(n, 17);
    ContourSpec c;
    SemigroupResult ut = semigroup_apply(M, 0.05, f, c, 1e-6);
    SemigroupResult ust = semigroup_apply(M, 0.03, ut.u, c, 1e-6);
    SemigroupResult direct = semigroup_apply(M, 0.08, f, c, 1e-6);
    const double tol = 2.0 * std::max({ut.node_doubling_delta, ust.node_doubling_delta,
                                       direct.node_doubling_delta, 1e-12});
    CHECK((ust.u - direct.u).norm() / direct.u.norm() < std::max(tol, 1e-9));
  }
  SECTION("too few nodes is an error") {
    ContourSpec c;
    c.nodes = 8;
    Eigen::VectorXd f = random_vec(n, 1);
    CHECK_THROWS_AS(semigroup_apply(M, 0.1, f, c), error);
  }
}

TEST_CASE("weighted operator norm by power iteration") {
  // diagonal matrix: the weighted similarity leaves the norm at max |d_i|
  const int n = 50;
  Eigen::SparseMatrix<double> A(n, n);
  std::vector<Eigen::Triplet<double>> trips;
  Rng rng(3);
  double expect = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = rng.uniform(-3.0, 3.0);
    expect = std::max(expect, std::abs(v));
    trips.emplace_back(i, i, v);
  }
  A.setFromTriplets(trips.begin(), trips.end());
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < n; i += 3) w[i] = 2.0;
  CHECK(weighted_operator_norm_l2(A, w) == Catch::Approx(expect).epsilon(1e-8));
}
