#pragma once

#include <complex>
#include <fstream>
#include <functional>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "rflab/curvature.hpp"

namespace rflab {

using Complex = std::complex<double>;

/// Stacked-coordinate layout of a symmetric tensor field: row index is
/// point*ncomp + packed component.
struct StackInfo {
  std::int64_t npoints = 0;
  int ncomp = 1;
  std::vector<double> comp_weights;  // Frobenius weights per component
};

struct OperatorMatrix {
  Eigen::SparseMatrix<double> A;
  std::int64_t n_rows = 0;
  bool symmetric_flag = false;
  std::string source;
  StackInfo stack;
};

inline Eigen::VectorXd to_stacked(const SymTensorField& f) {
  return Eigen::Map<const Eigen::VectorXd>(f.data(), f.size());
}

inline SymTensorField from_stacked(const GridSpec& g, const Eigen::VectorXd& v) {
  SymTensorField f(g);
  if (v.size() != f.size()) throw error("from_stacked: size mismatch");
  std::copy(v.data(), v.data() + v.size(), f.data());
  return f;
}

constexpr std::int64_t kDenseLimit = 4000;

/// Realize a linear operator on symmetric tensor fields as a sparse matrix,
/// column by basis column. Verifies linearity and matrix-operator agreement
/// on random fields.
inline OperatorMatrix assemble(const std::function<SymTensorField(const SymTensorField&)>& op,
                               const GridSpec& grid, const std::string& source = "",
                               double check_tol = 1e-12) {
  const int nc = sym_size(grid.dim());
  const std::int64_t n = grid.num_points() * nc;

  // linearity spot-check on random fields
  Rng rng(0x5eedULL);
  SymTensorField f1(grid), f2(grid);
  for (std::int64_t i = 0; i < f1.size(); ++i) {
    f1.data()[i] = rng.normal();
    f2.data()[i] = rng.normal();
  }
  const double a = 0.37, b = -1.25;
  SymTensorField lhs = op(axpy(b, f2, scaled(a, f1)));
  SymTensorField rhs = axpy(b, op(f2), scaled(a, op(f1)));
  double scale = std::max(sup_norm(lhs), 1.0);
  if (sup_norm(difference(lhs, rhs)) > 1e-9 * scale)
    throw error("assemble: operator failed the linearity spot-check");

  Eigen::SparseMatrix<double> A(n, n);
  std::vector<Eigen::Triplet<double>> trips;
  SymTensorField basis(grid);
  for (std::int64_t j = 0; j < n; ++j) {
    basis.data()[j] = 1.0;
    SymTensorField col = op(basis);
    basis.data()[j] = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
      if (col.data()[i] != 0.0)
        trips.emplace_back(static_cast<int>(i), static_cast<int>(j), col.data()[i]);
  }
  A.setFromTriplets(trips.begin(), trips.end());

  // matrix-vector product must reproduce the operator
  Eigen::VectorXd x = to_stacked(f1);
  Eigen::VectorXd Ax = A * x;
  Eigen::VectorXd ox = to_stacked(op(f1));
  const double rel = (Ax - ox).cwiseAbs().maxCoeff() / std::max(1.0, ox.cwiseAbs().maxCoeff());
  if (rel > check_tol * 1e3 && rel > 1e-9)
    throw error("assemble: matrix/operator disagreement");

  Eigen::SparseMatrix<double> At = Eigen::SparseMatrix<double>(A.transpose());
  Eigen::SparseMatrix<double> D = A - At;
  double asym = 0.0;
  for (int k = 0; k < D.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(D, k); it; ++it)
      asym = std::max(asym, std::abs(it.value()));

  OperatorMatrix out;
  out.A = std::move(A);
  out.n_rows = n;
  out.symmetric_flag = asym < 1e-12 * std::max(1.0, Ax.cwiseAbs().maxCoeff());
  out.source = source;
  out.stack.npoints = grid.num_points();
  out.stack.ncomp = nc;
  out.stack.comp_weights.resize(nc);
  for (int c = 0; c < nc; ++c) out.stack.comp_weights[c] = sym_weight(grid.dim(), c);
  return out;
}

struct SpectrumResult {
  std::vector<double> re, im;  // sorted by descending real part
  double max_residual = 0.0;
};

namespace detail {

inline SpectrumResult dense_spectrum(const OperatorMatrix& M, int m, bool force_general) {
  Eigen::MatrixXd A = Eigen::MatrixXd(M.A);
  SpectrumResult out;
  std::vector<std::pair<Complex, Eigen::VectorXcd>> pairs;
  if (M.symmetric_flag && !force_general) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    if (es.info() != Eigen::Success) throw error("top_spectrum: dense solver failed");
    for (int i = 0; i < es.eigenvalues().size(); ++i)
      pairs.emplace_back(Complex(es.eigenvalues()[i], 0.0),
                         es.eigenvectors().col(i).cast<Complex>());
  } else {
    Eigen::EigenSolver<Eigen::MatrixXd> es(A);
    if (es.info() != Eigen::Success) throw error("top_spectrum: dense solver failed");
    for (int i = 0; i < es.eigenvalues().size(); ++i)
      pairs.emplace_back(es.eigenvalues()[i], es.eigenvectors().col(i));
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const auto& x, const auto& y) { return x.first.real() > y.first.real(); });
  const int take = std::min<std::int64_t>(m, M.n_rows);
  Eigen::MatrixXcd Ac = A.cast<Complex>();
  for (int i = 0; i < take; ++i) {
    out.re.push_back(pairs[i].first.real());
    out.im.push_back(pairs[i].first.imag());
    const Eigen::VectorXcd& v = pairs[i].second;
    const double res = (Ac * v - pairs[i].first * v).norm() / v.norm();
    out.max_residual = std::max(out.max_residual, res);
  }
  return out;
}

inline SpectrumResult shift_invert_spectrum(const OperatorMatrix& M, int m, double sigma) {
  // subspace iteration on (sigma I - A)^{-1}, Rayleigh-Ritz on A
  const std::int64_t n = M.n_rows;
  Eigen::SparseMatrix<double> S = -M.A;
  for (std::int64_t i = 0; i < n; ++i) S.coeffRef(i, i) += sigma;
  S.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(S);
  if (lu.info() != Eigen::Success) throw error("top_spectrum: shift-invert factorization failed");
  const int k = std::min<std::int64_t>(m + 6, n);
  Rng rng(0xabcdULL);
  Eigen::MatrixXd V(n, k);
  for (std::int64_t i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) V(i, j) = rng.normal();
  Eigen::MatrixXd AV;
  SpectrumResult out;
  for (int iter = 0; iter < 200; ++iter) {
    for (int j = 0; j < k; ++j) V.col(j) = lu.solve(V.col(j).eval());
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(V);
    V = qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
    AV = M.A * V;
    Eigen::MatrixXd H = V.transpose() * AV;
    Eigen::EigenSolver<Eigen::MatrixXd> es(H);
    std::vector<std::pair<Complex, int>> ev;
    for (int j = 0; j < k; ++j) ev.emplace_back(es.eigenvalues()[j], j);
    std::sort(ev.begin(), ev.end(),
              [](const auto& a, const auto& b) { return a.first.real() > b.first.real(); });
    if (iter >= 8) {
      out.re.clear();
      out.im.clear();
      out.max_residual = 0.0;
      Eigen::MatrixXcd Vc = V.cast<Complex>();
      Eigen::MatrixXcd vecs = es.eigenvectors();
      bool converged = true;
      for (int t = 0; t < m; ++t) {
        const Complex lam = ev[t].first;
        Eigen::VectorXcd w = Vc * vecs.col(ev[t].second);
        const double res = (M.A.cast<Complex>() * w - lam * w).norm() / w.norm();
        out.max_residual = std::max(out.max_residual, res);
        out.re.push_back(lam.real());
        out.im.push_back(lam.imag());
        if (res > 1e-8) converged = false;
      }
      if (converged) return out;
    }
  }
  if (out.max_residual > 1e-8) throw error("top_spectrum: shift-invert iteration did not converge");
  return out;
}

}  // namespace detail

/// The m largest-real-part eigenvalues. Dense below kDenseLimit rows,
/// shift-invert subspace iteration above. `force_general` bypasses the
/// self-adjoint fast path (used to measure imaginary parts honestly).
inline SpectrumResult top_spectrum(const OperatorMatrix& M, int m, bool force_general = false,
                                   double sigma = 1.0) {
  if (m < 1 || m > M.n_rows) throw error("top_spectrum: m out of range");
  if (M.n_rows <= kDenseLimit) return detail::dense_spectrum(M, m, force_general);
  return detail::shift_invert_spectrum(M, m, sigma);
}

// ---------------------------------------------------------------------------
// Resolvent machinery.

class ResolventSolver {
 public:
  ResolventSolver(const OperatorMatrix& M, Complex lambda) : n_(M.n_rows) {
    dense_ = M.n_rows <= kDenseLimit;
    if (dense_) {
      Eigen::MatrixXcd B = (-M.A).cast<Complex>();
      for (std::int64_t i = 0; i < n_; ++i) B(i, i) += lambda;
      lu_.compute(B);
      probe_check(B);
    } else {
      Eigen::SparseMatrix<Complex> B = (-M.A).cast<Complex>();
      for (std::int64_t i = 0; i < n_; ++i) B.coeffRef(i, i) += lambda;
      B.makeCompressed();
      slu_.compute(B);
      ok_ = slu_.info() == Eigen::Success;
      Eigen::SparseMatrix<Complex> Badj = B.adjoint();
      slu_adj_.compute(Badj);
      ok_ = ok_ && slu_adj_.info() == Eigen::Success;
      if (ok_) {
        Eigen::SparseMatrix<Complex> Bc = B;
        probe_check_sparse(Bc);
      }
    }
  }

  bool ok() const { return ok_; }
  std::int64_t size() const { return n_; }

  Eigen::VectorXcd apply(const Eigen::VectorXcd& f) const {
    return dense_ ? lu_.solve(f).eval() : slu_.solve(f).eval();
  }
  Eigen::VectorXcd apply_adjoint(const Eigen::VectorXcd& f) const {
    return dense_ ? lu_.adjoint().solve(f).eval() : slu_adj_.solve(f).eval();
  }

 private:
  template <typename Mat>
  void probe_check(const Mat& B) {
    Rng rng(0x9dULL);
    Eigen::VectorXcd f(n_);
    for (std::int64_t i = 0; i < n_; ++i) f[i] = Complex(rng.normal(), rng.normal());
    Eigen::VectorXcd x = lu_.solve(f);
    ok_ = x.allFinite() && (B * x - f).norm() <= 1e-8 * f.norm();
  }
  void probe_check_sparse(const Eigen::SparseMatrix<Complex>& B) {
    Rng rng(0x9dULL);
    Eigen::VectorXcd f(n_);
    for (std::int64_t i = 0; i < n_; ++i) f[i] = Complex(rng.normal(), rng.normal());
    Eigen::VectorXcd x = slu_.solve(f);
    ok_ = x.allFinite() && (B * x - f).norm() <= 1e-8 * f.norm();
  }

  std::int64_t n_;
  bool dense_ = true;
  bool ok_ = false;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu_;
  Eigen::SparseLU<Eigen::SparseMatrix<Complex>> slu_, slu_adj_;
};

/// R_lambda f with a guard against requesting lambda inside (or numerically
/// touching) the spectrum.
inline Eigen::VectorXcd resolvent_apply(const OperatorMatrix& M, Complex lambda,
                                        const Eigen::VectorXcd& f,
                                        const std::vector<Complex>* known_spectrum = nullptr,
                                        double min_dist = 1e-10) {
  if (known_spectrum)
    for (const Complex& mu : *known_spectrum)
      if (std::abs(lambda - mu) < min_dist)
        throw error("resolvent_apply: lambda within guard distance of the spectrum");
  ResolventSolver solver(M, lambda);
  if (!solver.ok()) throw error("resolvent_apply: solver breakdown near the spectrum");
  return solver.apply(f);
}

enum class NormKind { l2, sup };

inline const char* to_string(NormKind k) { return k == NormKind::l2 ? "l2" : "sup"; }

struct NormEstimate {
  double value = 0.0;       // l2: power-iteration estimate; sup: certified lower bound
  double upper = 0.0;       // sup only: upper bound (exact block bound when dense)
  bool certified_lower = false;
};

namespace detail {

inline double power_iteration_l2(const ResolventSolver& R, Rng& rng,
                                 Eigen::VectorXcd* warm = nullptr) {
  const std::int64_t n = R.size();
  Eigen::VectorXcd v(n);
  if (warm && warm->size() == n && warm->allFinite() && warm->norm() > 0)
    v = *warm;
  else
    for (std::int64_t i = 0; i < n; ++i) v[i] = Complex(rng.normal(), rng.normal());
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < 500; ++it) {
    Eigen::VectorXcd w = R.apply(v);
    const double s = w.norm();
    Eigen::VectorXcd z = R.apply_adjoint(w);
    const double zn = z.norm();
    if (zn == 0.0) return 0.0;
    v = z / zn;
    if (it > 2 && std::abs(s - sigma) <= 1e-11 * std::max(1.0, s)) {
      sigma = s;
      break;
    }
    sigma = s;
  }
  if (warm) *warm = v;
  return sigma;
}

/// Pointwise-weighted sup norm of a stacked complex vector.
inline double stacked_sup(const Eigen::VectorXcd& v, const StackInfo& st) {
  double m = 0.0;
  for (std::int64_t p = 0; p < st.npoints; ++p) {
    double s = 0.0;
    for (int c = 0; c < st.ncomp; ++c) s += st.comp_weights[c] * std::norm(v[p * st.ncomp + c]);
    m = std::max(m, s);
  }
  return std::sqrt(m);
}

}  // namespace detail

/// Operator norm of the resolvent. l2: largest singular value by power
/// iteration on R*R. sup: certified lower bound from extreme-vector and
/// column probing, plus an upper bound (exact block-row bound when the
/// explicit dense resolvent is affordable).
inline NormEstimate resolvent_norm(const OperatorMatrix& M, Complex lambda, NormKind kind,
                                   std::uint64_t seed = 2024, Eigen::VectorXcd* warm = nullptr) {
  ResolventSolver R(M, lambda);
  if (!R.ok()) throw error("resolvent_norm: solver breakdown near the spectrum");
  Rng rng(seed);
  NormEstimate out;
  if (kind == NormKind::l2) {
    out.value = detail::power_iteration_l2(R, rng, warm);
    return out;
  }
  const StackInfo& st = M.stack;
  const std::int64_t n = M.n_rows;
  double lower = 0.0;
  // 100 random extreme (+-1) vectors
  for (int probe = 0; probe < 100; ++probe) {
    Eigen::VectorXcd f(n);
    for (std::int64_t i = 0; i < n; ++i) f[i] = rng.uniform01() < 0.5 ? -1.0 : 1.0;
    const double fs = detail::stacked_sup(f, st);
    lower = std::max(lower, detail::stacked_sup(R.apply(f), st) / fs);
  }
  // column probing
  const int cols = static_cast<int>(std::min<std::int64_t>(n, 32));
  for (int j = 0; j < cols; ++j) {
    Eigen::VectorXcd e = Eigen::VectorXcd::Zero(n);
    e[rng.uniform_int(0, n - 1)] = 1.0;
    lower = std::max(lower, detail::stacked_sup(R.apply(e), st) / detail::stacked_sup(e, st));
  }
  out.value = lower;
  out.certified_lower = true;
  if (n <= kDenseLimit) {
    // exact upper bound for the pointwise-norm sup topology:
    // max_p sum_q sigma_max(W_p^{1/2} R_pq W_q^{-1/2})
    Eigen::MatrixXcd Rfull(n, n);
    Eigen::VectorXcd e = Eigen::VectorXcd::Zero(n);
    for (std::int64_t j = 0; j < n; ++j) {
      e[j] = 1.0;
      Rfull.col(j) = R.apply(e);
      e[j] = 0.0;
    }
    const int nc = st.ncomp;
    double best = 0.0;
    for (std::int64_t p = 0; p < st.npoints; ++p) {
      double row = 0.0;
      for (std::int64_t q = 0; q < st.npoints; ++q) {
        // weighted block: |B_{cd}| = sqrt(w_c/w_d) |R[(p,c),(q,d)]|;
        // sigma_max(B) <= sigma_max(|B|), evaluated from the Gram matrix
        double bb[6][6];
        bool nonzero = false;
        for (int c = 0; c < nc; ++c)
          for (int d = 0; d < nc; ++d) {
            bb[c][d] = std::abs(Rfull(p * nc + c, q * nc + d)) *
                       std::sqrt(st.comp_weights[c] / st.comp_weights[d]);
            if (bb[c][d] != 0.0) nonzero = true;
          }
        if (!nonzero) continue;
        double smax2;
        if (nc <= 3) {
          double packed[6], ev[3];
          for (int c = 0; c < nc; ++c)
            for (int d = c; d < nc; ++d) {
              double s = 0.0;
              for (int k = 0; k < nc; ++k) s += bb[k][c] * bb[k][d];
              packed[sym_index(nc, c, d)] = s;
            }
          smallmat::eigenvalues(nc, packed, ev);
          smax2 = ev[nc - 1];
        } else {  // Frobenius fallback for wider blocks
          smax2 = 0.0;
          for (int c = 0; c < nc; ++c)
            for (int d = 0; d < nc; ++d) smax2 += bb[c][d] * bb[c][d];
        }
        row += std::sqrt(std::max(0.0, smax2));
      }
      best = std::max(best, row);
    }
    out.upper = best;
  } else {
    out.upper = std::sqrt(static_cast<double>(n)) *
                detail::power_iteration_l2(R, rng, nullptr);  // norm-equivalence fallback
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sector scan.

struct SectorSample {
  Complex lambda;
  double resolvent_norm = 0.0;
  double product = 0.0;        // |lambda| * resolvent_norm
  double product_upper = 0.0;  // sup kind only
  bool ok = false;
};

struct SectorReport {
  double K = 0.0;
  NormKind norm_kind = NormKind::l2;
  std::vector<SectorSample> samples;
  double M_estimate = 0.0;
  int violations = 0;
  bool restricted_half_plane = true;
};

/// Probe |lambda| * ||R_lambda|| over rays lambda = K + r e^{i phi}.
/// With restrict_half_plane (the Re(lambda) > K regime of the resolvent
/// bound), samples left of the line are skipped; otherwise they are probed
/// and recorded, and only failures with Re(lambda) > K count as violations.
inline SectorReport sector_scan(const OperatorMatrix& M, double K,
                                const std::vector<double>& rays,
                                const std::vector<double>& radii, NormKind kind,
                                bool restrict_half_plane = true) {
  SectorReport rep;
  rep.K = K;
  rep.norm_kind = kind;
  rep.restricted_half_plane = restrict_half_plane;
  for (double phi : rays) {
    Eigen::VectorXcd warm;
    for (double r : radii) {
      const Complex lambda = Complex(K, 0.0) + r * std::polar(1.0, phi);
      if (restrict_half_plane && !(lambda.real() > K)) continue;
      SectorSample s;
      s.lambda = lambda;
      try {
        NormEstimate est = resolvent_norm(M, lambda, kind, 2024, kind == NormKind::l2 ? &warm : nullptr);
        s.resolvent_norm = est.value;
        s.product = std::abs(lambda) * est.value;
        s.product_upper = std::abs(lambda) * est.upper;
        s.ok = true;
      } catch (const error&) {
        s.ok = false;
        if (lambda.real() > K) ++rep.violations;
      }
      rep.samples.push_back(s);
    }
  }
  for (const auto& s : rep.samples)
    if (s.ok) rep.M_estimate = std::max(rep.M_estimate, s.product);
  return rep;
}

// ---------------------------------------------------------------------------
// Contour-integral semigroup.

struct ContourSpec {
  enum class Shape { circle, sector_boundary };
  Shape shape = Shape::sector_boundary;
  double omega = 1.0;       // circle centre or sector vertex
  double radius = 0.0;      // circle radius (required for circle)
  double theta = 2.356194490192345;  // sector half-angle, in (pi/2, pi)
  int nodes = 192;          // quadrature nodes (per ray for the sector shape)
  double truncation = 0.0;  // sector ray length; 0 -> 50/t

  void validate() const {
    if (nodes < 16) throw error("ContourSpec: nodes must be >= 16");
    if (shape == Shape::sector_boundary && !(theta > 1.5707963267948966 && theta < 3.14159265358979323846))
      throw error("ContourSpec: theta must be in (pi/2, pi)");
    if (shape == Shape::circle && !(radius > 0.0)) throw error("ContourSpec: circle needs radius");
  }
};

struct SemigroupResult {
  Eigen::VectorXd u;
  double node_doubling_delta = 0.0;
};

namespace detail {

// 16-point Gauss-Legendre rule on [-1, 1]
inline const std::array<double, 16>& gl16_nodes() {
  static const std::array<double, 16> x = {
      -0.9894009349916499, -0.9445750230732326, -0.8656312023878318, -0.7554044083550030,
      -0.6178762444026438, -0.4580167776572274, -0.2816035507792589, -0.0950125098376374,
      0.0950125098376374,  0.2816035507792589,  0.4580167776572274,  0.6178762444026438,
      0.7554044083550030,  0.8656312023878318,  0.9445750230732326,  0.9894009349916499};
  return x;
}
inline const std::array<double, 16>& gl16_weights() {
  static const std::array<double, 16> w = {
      0.0271524594117541, 0.0622535239386479, 0.0951585116824928, 0.1246289712555339,
      0.1495959888165767, 0.1691565193950025, 0.1826034150449236, 0.1894506104550685,
      0.1894506104550685, 0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
      0.1246289712555339, 0.0951585116824928, 0.0622535239386479, 0.0271524594117541};
  return w;
}

inline Eigen::VectorXd contour_quadrature(const OperatorMatrix& M, double t,
                                          const Eigen::VectorXd& f, const ContourSpec& c,
                                          int nodes) {
  const std::int64_t n = M.n_rows;
  Eigen::VectorXcd total = Eigen::VectorXcd::Zero(n);
  const Complex twopii(0.0, 6.283185307179586);
  if (c.shape == ContourSpec::Shape::circle) {
    // trapezoid rule, spectrally accurate on the periodic contour
    for (int j = 0; j < nodes; ++j) {
      const double th = 6.283185307179586 * j / nodes;
      const Complex lam = c.omega + c.radius * std::polar(1.0, th);
      ResolventSolver R(M, lam);
      if (!R.ok()) throw error("semigroup_apply: contour touches the spectrum");
      const Complex dlam = Complex(0, 1) * c.radius * std::polar(1.0, th);
      total += (std::exp(t * lam) * dlam) * R.apply(f.cast<Complex>());
    }
    total *= 6.283185307179586 / nodes;
    return (total / twopii).real();
  }
  // sector boundary: two rays lam = omega + s e^{+- i theta}, s in (0, R],
  // geometric Gauss-Legendre panels resolving the e^{t s cos(theta)} decay
  const double R = c.truncation > 0.0 ? c.truncation : 50.0 / t;
  const int panels = std::max(2, nodes / 16);
  std::vector<double> edges;
  edges.push_back(0.0);
  for (int j = panels - 1; j >= 0; --j) edges.push_back(R / std::pow(2.0, j));
  const auto& xs = gl16_nodes();
  const auto& ws = gl16_weights();
  for (int sign : {+1, -1}) {
    const Complex dir = std::polar(1.0, sign * c.theta);
    for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
      const double a = edges[e], b = edges[e + 1];
      for (int q = 0; q < 16; ++q) {
        const double s = 0.5 * (b - a) * (xs[q] + 1.0) + a;
        const double w = 0.5 * (b - a) * ws[q];
        const Complex lam = c.omega + s * dir;
        ResolventSolver Rs(M, lam);
        if (!Rs.ok()) throw error("semigroup_apply: contour touches the spectrum");
        total += (static_cast<double>(sign) * w * std::exp(t * lam) * dir) *
                 Rs.apply(f.cast<Complex>());
      }
    }
  }
  return (total / twopii).real();
}

}  // namespace detail

/// e^{tA} f by contour quadrature of the resolvent. Node doubling is used as
/// the convergence certificate; exceeding `doubling_tol` is an error.
inline SemigroupResult semigroup_apply(const OperatorMatrix& M, double t,
                                       const Eigen::VectorXd& f, const ContourSpec& contour,
                                       double doubling_tol = 1e-6) {
  if (!(t > 0.0)) throw error("semigroup_apply: t must be positive");
  contour.validate();
  Eigen::VectorXd u_half = detail::contour_quadrature(M, t, f, contour, contour.nodes / 2);
  Eigen::VectorXd u_full = detail::contour_quadrature(M, t, f, contour, contour.nodes);
  SemigroupResult out;
  out.u = u_full;
  out.node_doubling_delta = (u_full - u_half).norm() / std::max(1e-300, u_full.norm());
  if (out.node_doubling_delta > doubling_tol)
    throw error("semigroup_apply: quadrature not converged under node doubling");
  return out;
}

/// Weighted matrix 2-norm ||W^{1/2} A W^{-1/2}||_2 by power iteration
/// (used for the perturbation-ball condition on assembled differences).
inline double weighted_operator_norm_l2(const Eigen::SparseMatrix<double>& A,
                                        const Eigen::VectorXd& w, std::uint64_t seed = 7) {
  const std::int64_t n = A.rows();
  Eigen::VectorXd sq = w.cwiseSqrt();
  Eigen::VectorXd isq = sq.cwiseInverse();
  Rng rng(seed);
  Eigen::VectorXd v(n);
  for (std::int64_t i = 0; i < n; ++i) v[i] = rng.normal();
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < 300; ++it) {
    Eigen::VectorXd Bv = sq.asDiagonal() * (A * (isq.asDiagonal() * v));
    const double s = Bv.norm();
    Eigen::VectorXd z = isq.asDiagonal() * (A.transpose() * (sq.asDiagonal() * Bv));
    const double zn = z.norm();
    if (zn == 0.0) return 0.0;
    v = z / zn;
    if (it > 2 && std::abs(s - sigma) <= 1e-11 * std::max(1.0, s)) return s;
    sigma = s;
  }
  return sigma;
}

/// Eigenvalue list as CSV rows {re, im, residual}.
inline void write_spectrum_csv(const SpectrumResult& s, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot open for writing: " + path);
  os << "re,im,residual\n";
  os.precision(17);
  for (std::size_t i = 0; i < s.re.size(); ++i)
    os << s.re[i] << ',' << s.im[i] << ',' << s.max_residual << '\n';
}

}  // namespace rflab
