#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rflab {

class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class io_error : public error {
 public:
  using error::error;
};

class config_error : public error {
 public:
  using error::error;
};

/// Time stepper hit dt_min without producing an acceptable stage.
class stiff_failure : public error {
 public:
  using error::error;
};

/// Diffeomorphism lost orientation (non-positive Jacobian determinant).
class gauge_failure : public error {
 public:
  using error::error;
};

constexpr int kMaxDim = 3;

/// Grid-point count below which per-field loops stay serial (OpenMP region
/// launch overhead exceeds the work on small grids).
constexpr std::int64_t kOmpGrainPoints = 4096;
constexpr std::int64_t kOmpGrainElems = 32768;

/// Periodic uniform grid on a flat torus T^dim, one global chart.
/// Point index is row-major over axes; spacing h_a = L_a / N_a.
class GridSpec {
 public:
  GridSpec(std::vector<int> resolution, std::vector<double> periods) {
    dim_ = static_cast<int>(resolution.size());
    if (dim_ < 1 || dim_ > kMaxDim) throw error("GridSpec: dim must be 1, 2 or 3");
    if (periods.size() != resolution.size())
      throw error("GridSpec: resolution/periods size mismatch");
    n_.fill(1);
    period_.fill(1.0);
    for (int a = 0; a < dim_; ++a) {
      if (resolution[a] < 8) throw error("GridSpec: resolution must be >= 8");
      if (!(periods[a] > 0.0)) throw error("GridSpec: periods must be positive");
      n_[a] = resolution[a];
      period_[a] = periods[a];
    }
    strides_.fill(1);
    for (int a = dim_ - 2; a >= 0; --a) strides_[a] = strides_[a + 1] * n_[a + 1];
    npoints_ = 1;
    for (int a = 0; a < dim_; ++a) npoints_ *= n_[a];
  }

  int dim() const { return dim_; }
  int extent(int axis) const { return n_[axis]; }
  double period(int axis) const { return period_[axis]; }
  double spacing(int axis) const { return period_[axis] / n_[axis]; }
  std::int64_t num_points() const { return npoints_; }
  std::int64_t stride(int axis) const { return strides_[axis]; }

  double min_spacing() const {
    double m = spacing(0);
    for (int a = 1; a < dim_; ++a) m = std::min(m, spacing(a));
    return m;
  }
  double min_period() const {
    double m = period_[0];
    for (int a = 1; a < dim_; ++a) m = std::min(m, period_[a]);
    return m;
  }
  double cell_volume() const {
    double v = 1.0;
    for (int a = 0; a < dim_; ++a) v *= spacing(a);
    return v;
  }

  std::array<int, kMaxDim> unflatten(std::int64_t p) const {
    std::array<int, kMaxDim> idx{0, 0, 0};
    for (int a = 0; a < dim_; ++a) {
      idx[a] = static_cast<int>(p / strides_[a]);
      p -= idx[a] * strides_[a];
    }
    return idx;
  }
  std::int64_t flatten(const std::array<int, kMaxDim>& idx) const {
    std::int64_t p = 0;
    for (int a = 0; a < dim_; ++a) p += static_cast<std::int64_t>(idx[a]) * strides_[a];
    return p;
  }
  /// Coordinates of grid point p.
  std::array<double, kMaxDim> point(std::int64_t p) const {
    auto idx = unflatten(p);
    std::array<double, kMaxDim> x{0.0, 0.0, 0.0};
    for (int a = 0; a < dim_; ++a) x[a] = idx[a] * spacing(a);
    return x;
  }

  bool operator==(const GridSpec& o) const {
    return dim_ == o.dim_ && n_ == o.n_ && period_ == o.period_;
  }
  bool operator!=(const GridSpec& o) const { return !(*this == o); }

 private:
  int dim_;
  std::array<int, kMaxDim> n_;
  std::array<double, kMaxDim> period_;
  std::array<std::int64_t, kMaxDim> strides_;
  std::int64_t npoints_;
};

// ---------------------------------------------------------------------------
// Packed symmetric storage: components listed as (i,j), i <= j, lexicographic.
// dim 2: 00 01 11;  dim 3: 00 01 02 11 12 22.

inline int sym_size(int dim) { return dim * (dim + 1) / 2; }

inline int sym_index(int dim, int i, int j) {
  if (i > j) std::swap(i, j);
  // offset of row i = i*dim - i*(i-1)/2
  return i * dim - i * (i - 1) / 2 + (j - i);
}

/// Frobenius weight of packed component c (2 for off-diagonal entries).
inline double sym_weight(int dim, int c) {
  for (int i = 0, k = 0; i < dim; ++i)
    for (int j = i; j < dim; ++j, ++k)
      if (k == c) return i == j ? 1.0 : 2.0;
  return 1.0;
}

namespace smallmat {

// Pointwise helpers on packed symmetric dim x dim matrices (dim <= 3).

inline double det(int dim, const double* s) {
  if (dim == 1) return s[0];
  if (dim == 2) return s[0] * s[2] - s[1] * s[1];
  const double a = s[0], b = s[1], c = s[2], d = s[3], e = s[4], f = s[5];
  return a * (d * f - e * e) - b * (b * f - e * c) + c * (b * e - d * c);
}

/// Inverse of a packed symmetric matrix; returns determinant.
inline double invert(int dim, const double* s, double* out) {
  const double dt = det(dim, s);
  if (dim == 1) {
    out[0] = 1.0 / s[0];
  } else if (dim == 2) {
    out[0] = s[2] / dt;
    out[1] = -s[1] / dt;
    out[2] = s[0] / dt;
  } else {
    const double a = s[0], b = s[1], c = s[2], d = s[3], e = s[4], f = s[5];
    out[0] = (d * f - e * e) / dt;
    out[1] = (c * e - b * f) / dt;
    out[2] = (b * e - c * d) / dt;
    out[3] = (a * f - c * c) / dt;
    out[4] = (b * c - a * e) / dt;
    out[5] = (a * d - b * b) / dt;
  }
  return dt;
}

/// Eigenvalues of a packed symmetric matrix, ascending. Analytic (Smith's
/// trigonometric method for 3x3).
inline void eigenvalues(int dim, const double* s, double* ev) {
  if (dim == 1) {
    ev[0] = s[0];
    return;
  }
  if (dim == 2) {
    const double tr = s[0] + s[2];
    const double d = std::sqrt(std::max(0.0, (s[0] - s[2]) * (s[0] - s[2]) + 4 * s[1] * s[1]));
    ev[0] = 0.5 * (tr - d);
    ev[1] = 0.5 * (tr + d);
    return;
  }
  const double a = s[0], b = s[1], c = s[2], d = s[3], e = s[4], f = s[5];
  const double q = (a + d + f) / 3.0;
  const double aa = a - q, dd = d - q, ff = f - q;
  const double p2 = (aa * aa + dd * dd + ff * ff + 2 * (b * b + c * c + e * e)) / 6.0;
  const double p = std::sqrt(std::max(p2, 0.0));
  if (p < 1e-300) {
    ev[0] = ev[1] = ev[2] = q;
    return;
  }
  // det((A - qI)/p) / 2
  const double m00 = aa / p, m01 = b / p, m02 = c / p;
  const double m11 = dd / p, m12 = e / p, m22 = ff / p;
  double r = 0.5 * (m00 * (m11 * m22 - m12 * m12) - m01 * (m01 * m22 - m12 * m02) +
                    m02 * (m01 * m12 - m11 * m02));
  r = std::min(1.0, std::max(-1.0, r));
  const double phi = std::acos(r) / 3.0;
  const double e1 = q + 2 * p * std::cos(phi);
  const double e3 = q + 2 * p * std::cos(phi + 2.0943951023931953);  // + 2*pi/3
  ev[0] = e3;
  ev[1] = 3 * q - e1 - e3;
  ev[2] = e1;
}

inline double min_eigenvalue(int dim, const double* s) {
  double ev[3];
  eigenvalues(dim, s, ev);
  return ev[0];
}
inline double max_abs_eigenvalue(int dim, const double* s) {
  double ev[3];
  eigenvalues(dim, s, ev);
  return std::max(std::abs(ev[0]), std::abs(ev[dim - 1]));
}

}  // namespace smallmat

// ---------------------------------------------------------------------------
// Deterministic RNG (splitmix64 + Box-Muller); bit-stable across platforms.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Stateless hash of (seed, counter); used for reproducible pair sampling.
inline std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t counter) {
  std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL * (counter + 1));
  return splitmix64(s);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) { splitmix64(state_); }

  std::uint64_t next_u64() { return splitmix64(state_); }

  double uniform01() {  // in [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }
  double uniform(double a, double b) { return a + (b - a) * uniform01(); }
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {  // inclusive
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }
  double normal() {
    if (have_cache_) {
      have_cache_ = false;
      return cache_;
    }
    double u1 = uniform01(), u2 = uniform01();
    while (u1 <= 1e-300) u1 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 6.283185307179586 * u2;
    cache_ = r * std::sin(th);
    have_cache_ = true;
    return r * std::cos(th);
  }

 private:
  std::uint64_t state_;
  double cache_ = 0.0;
  bool have_cache_ = false;
};

// ---------------------------------------------------------------------------
// Multi-index utilities for higher derivatives (norms module).

/// All multi-indices over `dim` axes with |I| = order.
inline std::vector<std::array<int, kMaxDim>> multi_indices(int dim, int order) {
  std::vector<std::array<int, kMaxDim>> out;
  std::array<int, kMaxDim> mi{0, 0, 0};
  if (dim == 1) {
    mi[0] = order;
    out.push_back(mi);
    return out;
  }
  for (int c0 = order; c0 >= 0; --c0) {
    if (dim == 2) {
      out.push_back({c0, order - c0, 0});
    } else {
      for (int c1 = order - c0; c1 >= 0; --c1) out.push_back({c0, c1, order - c0 - c1});
    }
  }
  return out;
}

inline double multinomial(const std::array<int, kMaxDim>& mi) {
  auto fact = [](int n) {
    double f = 1;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
  };
  const int n = mi[0] + mi[1] + mi[2];
  return fact(n) / (fact(mi[0]) * fact(mi[1]) * fact(mi[2]));
}

/// Symbol of the 4th-order first-derivative stencil at phase theta = k*h:
/// D1 e^{ikx} = i*(sigma1(theta)/h) e^{ikx}.
inline double stencil_sigma1(double theta) {
  return (8.0 * std::sin(theta) - std::sin(2.0 * theta)) / 6.0;
}

/// Symbol of the composed Laplacian sum_a D1_a D1_a for integer mode m on a
/// grid with extent N and spacing h (tends to -(2 pi m / L)^2 as N grows).
inline double composed_laplacian_symbol(int m, int N, double h) {
  const double theta = 2.0 * 3.14159265358979323846 * m / N;
  const double s = stencil_sigma1(theta) / h;
  return -s * s;
}

}  // namespace rflab
