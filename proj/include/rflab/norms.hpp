#pragma once

#include "rflab/calculus.hpp"

namespace rflab {

struct HolderParams {
  double alpha = 0.5;
  double min_sep = 0.0;   // 0 -> one grid spacing
  double max_sep = 0.0;   // 0 -> quarter of the smallest period
  int sample_pairs = 200000;
  std::uint64_t seed = 12345;
};

namespace detail {

/// Pointwise coordinate (delta) norm squared, honoring component weights.
inline double point_norm2(const FieldBase& f, std::int64_t p) {
  double s = 0.0;
  for (int c = 0; c < f.components(); ++c) {
    const double v = f.at(p, c);
    s += f.comp_weight(c) * v * v;
  }
  return s;
}

inline double point_norm2_weighted(const CompField& f, std::int64_t p) {
  double s = 0.0;
  for (int c = 0; c < f.components(); ++c) {
    const double v = f.at(p, c);
    s += f.comp_weight_of(c) * v * v;
  }
  return s;
}

/// Pointwise g-norm squared: scalars plain, vectors contravariant (lowered
/// with g), rank-2 covariant (raised with g^{-1}).
inline double point_gnorm2(const FieldBase& f, const SymTensorField& g, std::int64_t p) {
  const int dim = g.grid().dim();
  switch (f.rank()) {
    case 0: {
      const double v = f.at(p, 0);
      return v * v;
    }
    case 1: {
      double s = 0.0;
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) s += g.at(p, i, j) * f.at(p, i) * f.at(p, j);
      return s;
    }
    case 2: {
      double inv[6];
      smallmat::invert(dim, g.data() + p * g.components(), inv);
      double s = 0.0;
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
          for (int k = 0; k < dim; ++k)
            for (int l = 0; l < dim; ++l) {
              const double gik = inv[sym_index(dim, i, k)];
              const double gjl = inv[sym_index(dim, j, l)];
              s += gik * gjl * f.at(p, sym_index(dim, i, j)) * f.at(p, sym_index(dim, k, l));
            }
      return s;
    }
    default:
      throw error("g-norm: unsupported rank");
  }
}

}  // namespace detail

/// Max over grid points of the pointwise norm (coordinate norm, or the
/// g-norm when a metric is supplied).
inline double sup_norm(const FieldBase& f) {
  double m = 0.0;
  for (std::int64_t p = 0; p < f.grid().num_points(); ++p)
    m = std::max(m, detail::point_norm2(f, p));
  return std::sqrt(m);
}

inline double sup_norm(const FieldBase& f, const MetricField& g) {
  if (f.grid() != g.grid()) throw error("sup_norm: grid mismatch");
  double m = 0.0;
  for (std::int64_t p = 0; p < f.grid().num_points(); ++p)
    m = std::max(m, detail::point_gnorm2(f, g.tensor(), p));
  return std::sqrt(m);
}

namespace detail {

struct ResolvedHolder {
  double alpha, min_sep, max_sep;
  int sample_pairs;
  std::uint64_t seed;
};

inline ResolvedHolder resolve(const GridSpec& g, const HolderParams& p) {
  ResolvedHolder r;
  if (!(p.alpha > 0.0 && p.alpha < 1.0)) throw error("HolderParams: alpha must be in (0,1)");
  r.alpha = p.alpha;
  r.min_sep = p.min_sep > 0.0 ? p.min_sep : g.min_spacing();
  r.max_sep = p.max_sep > 0.0 ? p.max_sep : 0.25 * g.min_period();
  if (!(r.min_sep < r.max_sep)) throw error("HolderParams: min_sep must be < max_sep");
  r.sample_pairs = p.sample_pairs;
  r.seed = p.seed;
  return r;
}

/// Shared pair enumeration: exhaustive when every extent <= 24, sampled
/// otherwise. Distances are literal coordinate distances in the global chart
/// (no periodic wrap), mirroring a single chart-ball restriction.
template <typename PointNorm>
double holder_quotient_max(const GridSpec& g, const ResolvedHolder& r, PointNorm&& diff_norm) {
  const int d = g.dim();
  std::array<int, kMaxDim> kmax{0, 0, 0};
  for (int a = 0; a < d; ++a)
    kmax[a] = std::min(g.extent(a) - 1, static_cast<int>(r.max_sep / g.spacing(a)));

  int maxN = 0;
  for (int a = 0; a < d; ++a) maxN = std::max(maxN, g.extent(a));
  double best = -1.0;

  auto consider = [&](const std::array<int, kMaxDim>& i0, const std::array<int, kMaxDim>& i1) {
    double d2 = 0.0;
    for (int a = 0; a < d; ++a) {
      const double dx = (i1[a] - i0[a]) * g.spacing(a);
      d2 += dx * dx;
    }
    const double dist = std::sqrt(d2);
    if (dist < r.min_sep - 1e-15 || dist > r.max_sep + 1e-15) return;
    const double q = diff_norm(g.flatten(i0), g.flatten(i1)) / std::pow(dist, r.alpha);
    if (q > best) best = q;
  };

  if (maxN <= 24) {  // exhaustive: every point x every in-range offset
    const std::int64_t npts = g.num_points();
    for (std::int64_t p = 0; p < npts; ++p) {
      const auto i0 = g.unflatten(p);
      std::array<int, kMaxDim> off{0, 0, 0};
      std::array<int, kMaxDim> i1{0, 0, 0};
      for (off[0] = 0; off[0] <= kmax[0]; ++off[0])
        for (off[1] = (d > 1 ? -kmax[1] : 0); off[1] <= (d > 1 ? kmax[1] : 0); ++off[1])
          for (off[2] = (d > 2 ? -kmax[2] : 0); off[2] <= (d > 2 ? kmax[2] : 0); ++off[2]) {
            if (off[0] == 0 && off[1] <= 0 && off[2] <= 0 && !(off[1] == 0 && off[2] > 0))
              continue;  // count each unordered pair once
            bool ok = true;
            for (int a = 0; a < d; ++a) {
              i1[a] = i0[a] + off[a];
              if (i1[a] < 0 || i1[a] >= g.extent(a)) ok = false;
            }
            if (ok) consider(i0, i1);
          }
    }
  } else {
    for (int s = 0; s < r.sample_pairs; ++s) {
      Rng rng(counter_hash(r.seed, static_cast<std::uint64_t>(s)));
      std::array<int, kMaxDim> i0{0, 0, 0}, i1{0, 0, 0};
      bool ok = true;
      for (int a = 0; a < d; ++a) {
        i0[a] = static_cast<int>(rng.uniform_int(0, g.extent(a) - 1));
        const int off = static_cast<int>(rng.uniform_int(-kmax[a], kmax[a]));
        i1[a] = i0[a] + off;
        if (i1[a] < 0 || i1[a] >= g.extent(a)) ok = false;
      }
      if (ok && !(i0 == i1)) consider(i0, i1);
    }
  }
  if (best < 0.0) throw error("holder_seminorm: no valid pairs (degenerate params)");
  return best;
}

}  // namespace detail

/// Max over point pairs of |f(x)-f(x')|_delta / |x-x'|^alpha.
inline double holder_seminorm(const FieldBase& f, const HolderParams& params) {
  const auto r = detail::resolve(f.grid(), params);
  return detail::holder_quotient_max(f.grid(), r, [&](std::int64_t p, std::int64_t q) {
    double s = 0.0;
    for (int c = 0; c < f.components(); ++c) {
      const double dv = f.at(p, c) - f.at(q, c);
      s += f.comp_weight(c) * dv * dv;
    }
    return std::sqrt(s);
  });
}

inline double holder_seminorm(const CompField& f, const HolderParams& params) {
  const auto r = detail::resolve(f.grid(), params);
  return detail::holder_quotient_max(f.grid(), r, [&](std::int64_t p, std::int64_t q) {
    double s = 0.0;
    for (int c = 0; c < f.components(); ++c) {
      const double dv = f.at(p, c) - f.at(q, c);
      s += f.comp_weight_of(c) * dv * dv;
    }
    return std::sqrt(s);
  });
}

namespace detail {

/// Stack of all |I| = order derivatives of f, multinomially weighted so the
/// pointwise norm equals |D^(order) f|_delta.
template <typename F>
CompField derivative_stack_weighted(const F& f, int order) {
  const GridSpec& g = f.grid();
  const auto mis = multi_indices(g.dim(), order);
  const int nc = f.components();
  const int total = static_cast<int>(mis.size()) * nc;
  std::vector<double> w(total);
  std::vector<double> vals(static_cast<std::size_t>(g.num_points()) * total);
  int col = 0;
  for (const auto& mi : mis) {
    F df = derivative_multi(f, mi);
    const double mw = multinomial(mi);
    for (int c = 0; c < nc; ++c, ++col) {
      w[col] = mw * f.comp_weight(c);
      for (std::int64_t p = 0; p < g.num_points(); ++p)
        vals[static_cast<std::size_t>(p) * total + col] = df.at(p, c);
    }
  }
  CompField out(g, total, std::move(w));
  std::copy(vals.begin(), vals.end(), out.data());
  return out;
}

}  // namespace detail

/// Discrete h^{k,alpha} estimator:
///   sum_{i<=k} sup |D^(i) f|  (+ Holder seminorm of D^(k) f when params given)
template <typename F>
double ck_norm(const F& f, int k, const HolderParams* params = nullptr) {
  if (k > 4) throw error("ck_norm: k must be <= 4 (stencil accuracy budget)");
  double total = 0.0;
  for (int order = 0; order <= k; ++order) {
    CompField st = detail::derivative_stack_weighted(f, order);
    double m = 0.0;
    for (std::int64_t p = 0; p < st.grid().num_points(); ++p)
      m = std::max(m, detail::point_norm2_weighted(st, p));
    total += std::sqrt(m);
  }
  if (params) {
    CompField st = detail::derivative_stack_weighted(f, k);
    total += holder_seminorm(st, *params);
  }
  return total;
}

// --- L^2 --------------------------------------------------------------------

namespace detail {
inline double point_pair_g(const FieldBase& u, const FieldBase& v, const SymTensorField& g,
                           std::int64_t p) {
  const int dim = g.grid().dim();
  switch (u.rank()) {
    case 0:
      return u.at(p, 0) * v.at(p, 0);
    case 1: {
      double s = 0.0;
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) s += g.at(p, i, j) * u.at(p, i) * v.at(p, j);
      return s;
    }
    case 2: {
      double inv[6];
      smallmat::invert(dim, g.data() + p * g.components(), inv);
      double s = 0.0;
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
          for (int kk = 0; kk < dim; ++kk)
            for (int l = 0; l < dim; ++l)
              s += inv[sym_index(dim, i, kk)] * inv[sym_index(dim, j, l)] *
                   u.at(p, sym_index(dim, i, j)) * v.at(p, sym_index(dim, kk, l));
      return s;
    }
    default:
      throw error("l2_pairing: unsupported rank");
  }
}
}  // namespace detail

/// Riemann-sum quadrature of \int <u,v>_g dvol_g.
inline double l2_pairing(const FieldBase& u, const FieldBase& v, const MetricField& g) {
  if (u.grid() != v.grid() || u.grid() != g.grid() || u.components() != v.components() ||
      u.rank() != v.rank())
    throw error("l2_pairing: shape mismatch");
  const SymTensorField& gt = g.tensor();
  const double cellv = u.grid().cell_volume();
  double s = 0.0;
  for (std::int64_t p = 0; p < u.grid().num_points(); ++p) {
    const double dg = smallmat::det(u.grid().dim(), gt.data() + p * gt.components());
    s += detail::point_pair_g(u, v, gt, p) * std::sqrt(dg);
  }
  return s * cellv;
}

inline double l2_norm(const FieldBase& u, const MetricField& g) {
  return std::sqrt(std::max(0.0, l2_pairing(u, u, g)));
}

/// Total Riemannian volume (Riemann sum of sqrt(det g)).
inline double volume(const MetricField& g) {
  const SymTensorField& gt = g.tensor();
  double s = 0.0;
  for (std::int64_t p = 0; p < g.grid().num_points(); ++p)
    s += std::sqrt(smallmat::det(g.grid().dim(), gt.data() + p * gt.components()));
  return s * g.grid().cell_volume();
}

}  // namespace rflab
