#pragma once

#include <complex>

#include "rflab/field.hpp"

namespace rflab {

namespace detail {

// Wrapped neighbour index tables for one axis.
struct WrapTable {
  std::vector<int> m2, m1, p1, p2;
  explicit WrapTable(int N) : m2(N), m1(N), p1(N), p2(N) {
    for (int i = 0; i < N; ++i) {
      m2[i] = (i - 2 + N) % N;
      m1[i] = (i - 1 + N) % N;
      p1[i] = (i + 1) % N;
      p2[i] = (i + 2) % N;
    }
  }
};

/// Apply a 5-tap centered stencil along `axis` to every component.
/// taps = {c_{-2}, c_{-1}, c_0, c_{+1}, c_{+2}}, already divided by h powers.
template <typename F>
F apply_stencil(const F& f, int axis, const std::array<double, 5>& taps) {
  const GridSpec& g = f.grid();
  const int N = g.extent(axis);
  const std::int64_t s = g.stride(axis) * f.components();
  const std::int64_t nlines = g.num_points() / N;
  const std::int64_t line_block = static_cast<std::int64_t>(N) * g.stride(axis);
  const int nc = f.components();
  WrapTable w(N);
  F out = f;
  const double* in = f.data();
  double* o = out.data();
#pragma omp parallel for schedule(static) if (g.num_points() >= kOmpGrainPoints)
  for (std::int64_t l = 0; l < nlines; ++l) {
    const std::int64_t inner = g.stride(axis);
    const std::int64_t base = (l / inner) * line_block + (l % inner);
    for (int i = 0; i < N; ++i) {
      const std::int64_t pc = (base + 0) * nc;  // component base of this line
      const double* fm2 = in + pc + w.m2[i] * s;
      const double* fm1 = in + pc + w.m1[i] * s;
      const double* f0 = in + pc + static_cast<std::int64_t>(i) * s;
      const double* fp1 = in + pc + w.p1[i] * s;
      const double* fp2 = in + pc + w.p2[i] * s;
      double* op = o + pc + static_cast<std::int64_t>(i) * s;
      for (int c = 0; c < nc; ++c)
        op[c] = taps[0] * fm2[c] + taps[1] * fm1[c] + taps[2] * f0[c] +
                taps[3] * fp1[c] + taps[4] * fp2[c];
    }
  }
  return out;
}

}  // namespace detail

/// First derivative, 4th-order 5-point stencil, periodic.
template <typename F>
F derivative1(const F& f, int axis) {
  if (axis < 0 || axis >= f.grid().dim()) throw error("derivative: axis out of range");
  const double h = f.grid().spacing(axis);
  return detail::apply_stencil(
      f, axis, {1.0 / (12 * h), -8.0 / (12 * h), 0.0, 8.0 / (12 * h), -1.0 / (12 * h)});
}

/// Second derivative along one axis, direct 4th-order 5-point stencil.
template <typename F>
F derivative2(const F& f, int axis) {
  if (axis < 0 || axis >= f.grid().dim()) throw error("derivative: axis out of range");
  const double h2 = f.grid().spacing(axis) * f.grid().spacing(axis);
  return detail::apply_stencil(f, axis,
                               {-1.0 / (12 * h2), 16.0 / (12 * h2), -30.0 / (12 * h2),
                                16.0 / (12 * h2), -1.0 / (12 * h2)});
}

/// partial_derivative: order 1 along `axis`, or order 2 along (axis, axis2).
/// Mixed second derivatives compose two first-derivative stencils in
/// canonical (ascending-axis) order, so discrete mixed partials commute
/// bit-exactly.
template <typename F>
F partial_derivative(const F& f, int axis, int order = 1, int axis2 = -1) {
  if (order == 1) return derivative1(f, axis);
  if (order != 2) throw error("partial_derivative: order must be 1 or 2");
  if (axis2 < 0 || axis2 == axis) return derivative2(f, axis);
  if (axis2 >= f.grid().dim()) throw error("derivative: axis out of range");
  return derivative1(derivative1(f, std::min(axis, axis2)), std::max(axis, axis2));
}

/// Mixed higher derivative D^{mi}: per axis, direct second-derivative
/// stencils in pairs plus one first-derivative stencil for an odd remainder.
template <typename F>
F derivative_multi(const F& f, const std::array<int, kMaxDim>& mi) {
  F out = f;
  for (int a = 0; a < f.grid().dim(); ++a) {
    int c = mi[a];
    while (c >= 2) {
      out = derivative2(out, a);
      c -= 2;
    }
    if (c == 1) out = derivative1(out, a);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Interpolation: trigonometric when every extent <= 64 (exact at nodes,
// spectrally accurate), tensor-product cubic Lagrange otherwise (order 4).

class Interpolator {
 public:
  explicit Interpolator(const FieldBase& f)
      : grid_(f.grid()), ncomp_(f.components()) {
    int maxN = 0;
    for (int a = 0; a < grid_.dim(); ++a) maxN = std::max(maxN, grid_.extent(a));
    trig_ = maxN <= 64;
    if (trig_)
      build_trig(f);
    else
      values_.assign(f.data(), f.data() + f.size());
  }

  int components() const { return ncomp_; }
  bool trigonometric() const { return trig_; }

  /// Evaluate all components at x (reduced mod periods). out[ncomp].
  void eval(const std::array<double, kMaxDim>& x, double* out) const {
    if (trig_)
      eval_trig(x, out);
    else
      eval_cubic(x, out);
  }

 private:
  void build_trig(const FieldBase& f) {
    const std::int64_t n = f.size();
    coef_.assign(f.data(), f.data() + n);
    // separable naive DFT along each grid axis, normalized by 1/N
    for (int a = 0; a < grid_.dim(); ++a) {
      const int N = grid_.extent(a);
      const std::int64_t s = grid_.stride(a) * ncomp_;
      const std::int64_t nlines = grid_.num_points() / N;
      const std::int64_t line_block = static_cast<std::int64_t>(N) * grid_.stride(a);
      std::vector<std::complex<double>> tw(static_cast<std::size_t>(N) * N);
      for (int k = 0; k < N; ++k)
        for (int i = 0; i < N; ++i)
          tw[k * N + i] = std::polar(1.0 / N, -2.0 * 3.14159265358979323846 * k * i / N);
#pragma omp parallel for schedule(static) if (grid_.num_points() >= kOmpGrainPoints)
      for (std::int64_t l = 0; l < nlines; ++l) {
        const std::int64_t inner = grid_.stride(a);
        const std::int64_t base = ((l / inner) * line_block + (l % inner)) * ncomp_;
        std::vector<std::complex<double>> tmp(static_cast<std::size_t>(N) * ncomp_);
        for (int k = 0; k < N; ++k) {
          for (int c = 0; c < ncomp_; ++c) tmp[k * ncomp_ + c] = 0.0;
          for (int i = 0; i < N; ++i) {
            const std::complex<double> w = tw[k * N + i];
            const std::complex<double>* src = coef_.data() + base + i * s;
            for (int c = 0; c < ncomp_; ++c) tmp[k * ncomp_ + c] += w * src[c];
          }
        }
        for (int k = 0; k < N; ++k) {
          std::complex<double>* dst = coef_.data() + base + k * s;
          for (int c = 0; c < ncomp_; ++c) dst[c] = tmp[k * ncomp_ + c];
        }
      }
    }
  }

  void axis_phases(int a, double xa, std::complex<double>* amp) const {
    const int N = grid_.extent(a);
    const double L = grid_.period(a);
    const std::complex<double> e1 = std::polar(1.0, 2.0 * 3.14159265358979323846 * xa / L);
    amp[0] = 1.0;
    for (int k = 1; k <= N / 2; ++k) amp[k] = amp[k - 1] * e1;
    for (int k = 1; k < (N + 1) / 2; ++k) amp[N - k] = std::conj(amp[k]);
    if (N % 2 == 0)  // symmetric (cosine) treatment of the Nyquist mode
      amp[N / 2] = std::cos(3.14159265358979323846 * N * xa / L);
  }

  void eval_trig(const std::array<double, kMaxDim>& x, double* out) const {
    const int d = grid_.dim();
    std::array<std::vector<std::complex<double>>, kMaxDim> amp;
    for (int a = 0; a < d; ++a) {
      amp[a].resize(grid_.extent(a));
      amp[a].assign(grid_.extent(a), 0.0);
      axis_phases(a, x[a], amp[a].data());
    }
    std::vector<std::complex<double>> acc(ncomp_, 0.0);
    if (d == 1) {
      const int N0 = grid_.extent(0);
      for (int k = 0; k < N0; ++k) {
        const std::complex<double> w = amp[0][k];
        const std::complex<double>* c = coef_.data() + static_cast<std::int64_t>(k) * ncomp_;
        for (int q = 0; q < ncomp_; ++q) acc[q] += w * c[q];
      }
    } else if (d == 2) {
      const int N0 = grid_.extent(0), N1 = grid_.extent(1);
      std::vector<std::complex<double>> inner(ncomp_);
      for (int k0 = 0; k0 < N0; ++k0) {
        for (int q = 0; q < ncomp_; ++q) inner[q] = 0.0;
        const std::complex<double>* row =
            coef_.data() + static_cast<std::int64_t>(k0) * N1 * ncomp_;
        for (int k1 = 0; k1 < N1; ++k1) {
          const std::complex<double> w = amp[1][k1];
          for (int q = 0; q < ncomp_; ++q) inner[q] += w * row[k1 * ncomp_ + q];
        }
        for (int q = 0; q < ncomp_; ++q) acc[q] += amp[0][k0] * inner[q];
      }
    } else {
      const int N0 = grid_.extent(0), N1 = grid_.extent(1), N2 = grid_.extent(2);
      std::vector<std::complex<double>> in1(ncomp_), in2(ncomp_);
      for (int k0 = 0; k0 < N0; ++k0) {
        for (int q = 0; q < ncomp_; ++q) in1[q] = 0.0;
        for (int k1 = 0; k1 < N1; ++k1) {
          for (int q = 0; q < ncomp_; ++q) in2[q] = 0.0;
          const std::complex<double>* row =
              coef_.data() + (static_cast<std::int64_t>(k0) * N1 + k1) * N2 * ncomp_;
          for (int k2 = 0; k2 < N2; ++k2) {
            const std::complex<double> w = amp[2][k2];
            for (int q = 0; q < ncomp_; ++q) in2[q] += w * row[k2 * ncomp_ + q];
          }
          for (int q = 0; q < ncomp_; ++q) in1[q] += amp[1][k1] * in2[q];
        }
        for (int q = 0; q < ncomp_; ++q) acc[q] += amp[0][k0] * in1[q];
      }
    }
    for (int q = 0; q < ncomp_; ++q) out[q] = acc[q].real();
  }

  void eval_cubic(const std::array<double, kMaxDim>& x, double* out) const {
    const int d = grid_.dim();
    std::array<std::array<double, 4>, kMaxDim> w{};
    std::array<std::array<int, 4>, kMaxDim> idx{};
    for (int a = 0; a < d; ++a) {
      const int N = grid_.extent(a);
      const double L = grid_.period(a);
      const double h = grid_.spacing(a);
      double xa = std::fmod(x[a], L);
      if (xa < 0) xa += L;
      const int i0 = std::min(static_cast<int>(xa / h), N - 1);
      const double t = xa / h - i0;
      idx[a] = {(i0 - 1 + N) % N, i0, (i0 + 1) % N, (i0 + 2) % N};
      w[a] = {-t * (t - 1) * (t - 2) / 6.0, (t + 1) * (t - 1) * (t - 2) / 2.0,
              -(t + 1) * t * (t - 2) / 2.0, (t + 1) * t * (t - 1) / 6.0};
    }
    for (int q = 0; q < ncomp_; ++q) out[q] = 0.0;
    const int taps = 1 << (2 * d);  // 4^d
    for (int m = 0; m < taps; ++m) {
      double weight = 1.0;
      std::array<int, kMaxDim> gi{0, 0, 0};
      int mm = m;
      for (int a = 0; a < d; ++a) {
        const int j = mm & 3;
        mm >>= 2;
        weight *= w[a][j];
        gi[a] = idx[a][j];
      }
      const std::int64_t p = grid_.flatten(gi);
      const double* src = values_.data() + p * ncomp_;
      for (int q = 0; q < ncomp_; ++q) out[q] += weight * src[q];
    }
  }

  GridSpec grid_;
  int ncomp_;
  bool trig_;
  std::vector<std::complex<double>> coef_;
  std::vector<double> values_;
};

/// One-off interpolation of all components of f at a point.
inline std::vector<double> interpolate(const FieldBase& f,
                                       const std::array<double, kMaxDim>& x) {
  Interpolator interp(f);
  std::vector<double> out(f.components());
  interp.eval(x, out.data());
  return out;
}

}  // namespace rflab
