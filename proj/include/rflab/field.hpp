#pragma once

#include <algorithm>
#include <utility>

#include "rflab/core.hpp"

namespace rflab {

/// Flat storage for a tensor field: [point][component], components fastest.
/// Fields are value types; operations never mutate their inputs.
class FieldBase {
 public:
  const GridSpec& grid() const { return grid_; }
  int components() const { return ncomp_; }
  int rank() const { return rank_; }
  bool symmetric() const { return symmetric_; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  std::int64_t size() const { return static_cast<std::int64_t>(v_.size()); }

  double& at(std::int64_t p, int c = 0) { return v_[p * ncomp_ + c]; }
  double at(std::int64_t p, int c = 0) const { return v_[p * ncomp_ + c]; }

  /// Frobenius weight of component c in the coordinate (delta) norm.
  double comp_weight(int c) const {
    return symmetric_ ? sym_weight(grid_.dim(), c) : 1.0;
  }

  bool all_finite() const {
    for (double x : v_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  void fill(double x) { std::fill(v_.begin(), v_.end(), x); }

 protected:
  FieldBase(GridSpec grid, int ncomp, int rank, bool symmetric)
      : grid_(std::move(grid)),
        ncomp_(ncomp),
        rank_(rank),
        symmetric_(symmetric),
        v_(static_cast<std::size_t>(grid_.num_points()) * ncomp, 0.0) {}

  GridSpec grid_;
  int ncomp_;
  int rank_;
  bool symmetric_;
  std::vector<double> v_;
};

class ScalarField : public FieldBase {
 public:
  explicit ScalarField(const GridSpec& g) : FieldBase(g, 1, 0, false) {}
  using FieldBase::at;
};

class VectorField : public FieldBase {
 public:
  explicit VectorField(const GridSpec& g) : FieldBase(g, g.dim(), 1, false) {}
  using FieldBase::at;
};

class SymTensorField : public FieldBase {
 public:
  explicit SymTensorField(const GridSpec& g)
      : FieldBase(g, sym_size(g.dim()), 2, true) {}

  using FieldBase::at;  // (point, packed component)
  double& at(std::int64_t p, int i, int j) {
    return v_[p * ncomp_ + sym_index(grid_.dim(), i, j)];
  }
  double at(std::int64_t p, int i, int j) const {
    return v_[p * ncomp_ + sym_index(grid_.dim(), i, j)];
  }
  double& comp(std::int64_t p, int c) { return v_[p * ncomp_ + c]; }
  double comp(std::int64_t p, int c) const { return v_[p * ncomp_ + c]; }
};

/// Internal container for stacked derivative tuples and similar aggregates.
class CompField : public FieldBase {
 public:
  CompField(const GridSpec& g, int ncomp, std::vector<double> weights)
      : FieldBase(g, ncomp, -1, false), weights_(std::move(weights)) {}
  double comp_weight_of(int c) const { return weights_.empty() ? 1.0 : weights_[c]; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<double> weights_;
};

// --- pointwise field arithmetic (same shape) -------------------------------

namespace detail {
template <typename F>
inline void check_same_shape(const F& a, const F& b) {
  if (a.grid() != b.grid() || a.components() != b.components())
    throw error("field shape mismatch");
}
}  // namespace detail

template <typename F>
F axpy(double alpha, const F& x, const F& y) {  // alpha*x + y
  detail::check_same_shape(x, y);
  F out = y;
  const double* xs = x.data();
  double* os = out.data();
  const std::int64_t n = x.size();
#pragma omp parallel for schedule(static) if (n >= kOmpGrainElems)
  for (std::int64_t i = 0; i < n; ++i) os[i] += alpha * xs[i];
  return out;
}

template <typename F>
F scaled(double alpha, const F& x) {
  F out = x;
  double* os = out.data();
  const std::int64_t n = x.size();
#pragma omp parallel for schedule(static) if (n >= kOmpGrainElems)
  for (std::int64_t i = 0; i < n; ++i) os[i] *= alpha;
  return out;
}

template <typename F>
F difference(const F& a, const F& b) {
  return axpy(-1.0, b, a);
}

/// Cyclic shift by whole grid cells (used by equivariance tests).
template <typename F>
F shifted(const F& f, const std::array<int, kMaxDim>& offset) {
  const GridSpec& g = f.grid();
  F out = f;
  const std::int64_t npts = g.num_points();
  const int nc = f.components();
#pragma omp parallel for schedule(static) if (npts >= kOmpGrainPoints)
  for (std::int64_t p = 0; p < npts; ++p) {
    auto idx = g.unflatten(p);
    for (int a = 0; a < g.dim(); ++a) {
      int N = g.extent(a);
      idx[a] = ((idx[a] + offset[a]) % N + N) % N;
    }
    const std::int64_t q = g.flatten(idx);
    for (int c = 0; c < nc; ++c) out.at(q, c) = f.at(p, c);
  }
  return out;
}

// --- metric -----------------------------------------------------------------

/// Pointwise smallest eigenvalue over the grid.
inline double min_metric_eigenvalue(const SymTensorField& t) {
  const int dim = t.grid().dim();
  const std::int64_t npts = t.grid().num_points();
  const int nc = t.components();
  double m = std::numeric_limits<double>::infinity();
  for (std::int64_t p = 0; p < npts; ++p)
    m = std::min(m, smallmat::min_eigenvalue(dim, t.data() + p * nc));
  return m;
}

/// A SymTensorField that is pointwise positive definite.
class MetricField {
 public:
  explicit MetricField(SymTensorField t) : t_(std::move(t)) {
    if (!t_.all_finite()) throw error("MetricField: non-finite entries");
    if (!(min_metric_eigenvalue(t_) > 0.0))
      throw error("MetricField: not positive definite");
  }

  static MetricField constant(const GridSpec& g, const std::vector<double>& packed) {
    SymTensorField t(g);
    const int nc = t.components();
    if (static_cast<int>(packed.size()) != nc)
      throw error("MetricField::constant: wrong component count");
    for (std::int64_t p = 0; p < g.num_points(); ++p)
      for (int c = 0; c < nc; ++c) t.comp(p, c) = packed[c];
    return MetricField(std::move(t));
  }
  static MetricField flat(const GridSpec& g) {
    std::vector<double> id(sym_size(g.dim()), 0.0);
    for (int i = 0; i < g.dim(); ++i) id[sym_index(g.dim(), i, i)] = 1.0;
    return constant(g, id);
  }

  const SymTensorField& tensor() const { return t_; }
  operator const SymTensorField&() const { return t_; }
  const GridSpec& grid() const { return t_.grid(); }
  double at(std::int64_t p, int i, int j) const { return t_.at(p, i, j); }

 private:
  SymTensorField t_;
};

/// Discretized diffeomorphism F(x) = x + u(x) with periodic displacement u.
class DiffeoMap {
 public:
  explicit DiffeoMap(VectorField displacement) : u_(std::move(displacement)) {}

  static DiffeoMap identity(const GridSpec& g) { return DiffeoMap(VectorField(g)); }

  const VectorField& displacement() const { return u_; }
  VectorField& displacement() { return u_; }
  const GridSpec& grid() const { return u_.grid(); }

 private:
  VectorField u_;
};

}  // namespace rflab
