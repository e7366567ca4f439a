#pragma once

#include "rflab/norms.hpp"

namespace rflab {

/// Gamma^k_{pq}, packed symmetric in (p,q): component index k*sym_size + pq.
class ChristoffelField : public FieldBase {
 public:
  explicit ChristoffelField(const GridSpec& g)
      : FieldBase(g, g.dim() * sym_size(g.dim()), -1, false) {}
  double& at(std::int64_t p, int k, int lo, int hi) {
    return v_[p * ncomp_ + k * sym_size(grid_.dim()) + sym_index(grid_.dim(), lo, hi)];
  }
  double at(std::int64_t p, int k, int lo, int hi) const {
    return v_[p * ncomp_ + k * sym_size(grid_.dim()) + sym_index(grid_.dim(), lo, hi)];
  }
};

/// Fully lowered curvature tensor in the slot order Rm[i,a,b,j] used by the
/// Lichnerowicz formula; antisymmetric in (i,a) and in (b,j).
class RiemannField : public FieldBase {
 public:
  explicit RiemannField(const GridSpec& g)
      : FieldBase(g, g.dim() * g.dim() * g.dim() * g.dim(), -1, false) {}
  double& at(std::int64_t p, int i, int a, int b, int j) {
    const int d = grid_.dim();
    return v_[p * ncomp_ + ((i * d + a) * d + b) * d + j];
  }
  double at(std::int64_t p, int i, int a, int b, int j) const {
    const int d = grid_.dim();
    return v_[p * ncomp_ + ((i * d + a) * d + b) * d + j];
  }
};

struct CurvatureBundle {
  RiemannField riemann;
  SymTensorField ricci;
  ScalarField scalar;
};

namespace kernels {

/// Pointwise inverse with condition guard (design default 1e12).
inline SymTensorField invert_metric(const SymTensorField& g, double cond_limit = 1e12) {
  const GridSpec& gr = g.grid();
  const int dim = gr.dim();
  const int nc = g.components();
  SymTensorField inv(gr);
  const std::int64_t npts = gr.num_points();
  std::vector<char> bad(static_cast<std::size_t>(npts), 0);
#pragma omp parallel for schedule(static) if (npts >= kOmpGrainPoints)
  for (std::int64_t p = 0; p < npts; ++p) {
    double ev[3];
    smallmat::eigenvalues(dim, g.data() + p * nc, ev);
    const double lo = std::abs(ev[0]);
    const double hi = std::abs(ev[dim - 1]);
    if (!(lo > 0.0) || hi / lo > cond_limit) {
      bad[p] = 1;
      continue;
    }
    smallmat::invert(dim, g.data() + p * nc, inv.data() + p * nc);
  }
  for (std::int64_t p = 0; p < npts; ++p)
    if (bad[p]) throw error("singular or ill-conditioned metric at a grid point");
  return inv;
}

inline ChristoffelField christoffel_of(const SymTensorField& g, const SymTensorField& inv) {
  const GridSpec& gr = g.grid();
  const int d = gr.dim();
  std::vector<SymTensorField> dg;
  dg.reserve(d);
  for (int a = 0; a < d; ++a) dg.push_back(derivative1(g, a));
  ChristoffelField gam(gr);
  const std::int64_t npts = gr.num_points();
#pragma omp parallel for schedule(static) if (npts >= kOmpGrainPoints)
  for (std::int64_t pt = 0; pt < npts; ++pt) {
    for (int k = 0; k < d; ++k)
      for (int p = 0; p < d; ++p)
        for (int q = p; q < d; ++q) {
          double s = 0.0;
          for (int l = 0; l < d; ++l)
            s += inv.at(pt, k, l) *
                 (dg[p].at(pt, q, l) + dg[q].at(pt, p, l) - dg[l].at(pt, p, q));
          gam.at(pt, k, p, q) = 0.5 * s;
        }
  }
  return gam;
}

/// Curvature from a metric and its cached inverse/Christoffel fields.
/// Rup^l_{iab} = d_a G^l_{bi} - d_b G^l_{ai} + G^l_{ap}G^p_{bi} - G^l_{bp}G^p_{ai}
/// Rm[i,a,b,j] = antisym_(i,a) of g_{al} Rup^l_{ibj};  Rc symmetrized;
/// Scal = g^{ij} Rc_{ij} (pointwise identity with the stored ricci).
inline CurvatureBundle curvature_of(const SymTensorField& g, const SymTensorField& inv,
                                    const ChristoffelField& gam) {
  const GridSpec& gr = g.grid();
  const int d = gr.dim();
  std::vector<ChristoffelField> dgam;
  dgam.reserve(d);
  for (int a = 0; a < d; ++a) dgam.push_back(derivative1(gam, a));
  CurvatureBundle out{RiemannField(gr), SymTensorField(gr), ScalarField(gr)};
  const std::int64_t npts = gr.num_points();
#pragma omp parallel for schedule(static) if (npts >= kOmpGrainPoints)
  for (std::int64_t pt = 0; pt < npts; ++pt) {
    double rup[3][3][3][3];  // [l][i][a][b], antisymmetric in (a,b)
    for (int l = 0; l < d; ++l)
      for (int i = 0; i < d; ++i) {
        for (int a = 0; a < d; ++a) rup[l][i][a][a] = 0.0;
        for (int a = 0; a < d; ++a)
          for (int b = a + 1; b < d; ++b) {
            double s = dgam[a].at(pt, l, b, i) - dgam[b].at(pt, l, a, i);
            for (int p = 0; p < d; ++p)
              s += gam.at(pt, l, a, p) * gam.at(pt, p, b, i) -
                   gam.at(pt, l, b, p) * gam.at(pt, p, a, i);
            rup[l][i][a][b] = s;
            rup[l][i][b][a] = -s;
          }
      }
    // Ricci (symmetrized) and scalar
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        double rij = 0.0, rji = 0.0;
        for (int a = 0; a < d; ++a) {
          rij += rup[a][i][a][j];
          rji += rup[a][j][a][i];
        }
        out.ricci.at(pt, i, j) = 0.5 * (rij + rji);
      }
    double sc = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) sc += inv.at(pt, i, j) * out.ricci.at(pt, i, j);
    out.scalar.at(pt) = sc;
    // lowered, reordered, (i,a)-antisymmetrized Riemann
    double raw[3][3][3][3];
    for (int i = 0; i < d; ++i)
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          for (int j = 0; j < d; ++j) {
            double s = 0.0;
            for (int l = 0; l < d; ++l) s += g.at(pt, a, l) * rup[l][i][b][j];
            raw[i][a][b][j] = s;
          }
    for (int i = 0; i < d; ++i)
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          for (int j = 0; j < d; ++j)
            out.riemann.at(pt, i, a, b, j) = 0.5 * (raw[i][a][b][j] - raw[a][i][b][j]);
  }
  return out;
}

/// Ricci tensor only (no Riemann storage); the fast path for flow stages.
inline SymTensorField ricci_of(const SymTensorField& g, const SymTensorField& inv,
                               const ChristoffelField& gam) {
  (void)inv;
  const GridSpec& gr = g.grid();
  const int d = gr.dim();
  std::vector<ChristoffelField> dgam;
  dgam.reserve(d);
  for (int a = 0; a < d; ++a) dgam.push_back(derivative1(gam, a));
  SymTensorField ricci(gr);
  const std::int64_t npts = gr.num_points();
#pragma omp parallel for schedule(static) if (npts >= kOmpGrainPoints)
  for (std::int64_t pt = 0; pt < npts; ++pt)
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        // Rc_ij = Rup[a, i, a, j], symmetrized in (i, j)
        double rij = 0.0, rji = 0.0;
        for (int a = 0; a < d; ++a) {
          double s = dgam[a].at(pt, a, j, i) - dgam[j].at(pt, a, a, i);
          double r = dgam[a].at(pt, a, i, j) - dgam[i].at(pt, a, a, j);
          for (int p = 0; p < d; ++p) {
            s += gam.at(pt, a, a, p) * gam.at(pt, p, j, i) -
                 gam.at(pt, a, j, p) * gam.at(pt, p, a, i);
            r += gam.at(pt, a, a, p) * gam.at(pt, p, i, j) -
                 gam.at(pt, a, i, p) * gam.at(pt, p, a, j);
          }
          rij += s;
          rji += r;
        }
        ricci.at(pt, i, j) = 0.5 * (rij + rji);
      }
  return ricci;
}

inline VectorField deturck_vector_of(const SymTensorField& g, const SymTensorField& inv,
                                     const ChristoffelField& gam,
                                     const ChristoffelField& gam_ref) {
  const GridSpec& gr = g.grid();
  const int d = gr.dim();
  VectorField W(gr);
  const std::int64_t npts = gr.num_points();
#pragma omp parallel for schedule(static) if (npts >= kOmpGrainPoints)
  for (std::int64_t pt = 0; pt < npts; ++pt)
    for (int k = 0; k < d; ++k) {
      double s = 0.0;
      for (int p = 0; p < d; ++p)
        for (int q = 0; q < d; ++q)
          s += inv.at(pt, p, q) * (gam.at(pt, k, p, q) - gam_ref.at(pt, k, p, q));
      W.at(pt, k) = s;
    }
  return W;
}

inline SymTensorField lie_derivative_of(const VectorField& W, const SymTensorField& g,
                                        const ChristoffelField& gam) {
  const GridSpec& gr = g.grid();
  const int d = gr.dim();
  VectorField Wlow(gr);
  const std::int64_t npts = gr.num_points();
#pragma omp parallel for schedule(static) if (npts >= kOmpGrainPoints)
  for (std::int64_t pt = 0; pt < npts; ++pt)
    for (int j = 0; j < d; ++j) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += g.at(pt, j, k) * W.at(pt, k);
      Wlow.at(pt, j) = s;
    }
  std::vector<VectorField> dW;
  dW.reserve(d);
  for (int a = 0; a < d; ++a) dW.push_back(derivative1(Wlow, a));
  SymTensorField out(gr);
#pragma omp parallel for schedule(static) if (npts >= kOmpGrainPoints)
  for (std::int64_t pt = 0; pt < npts; ++pt)
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        double cij = dW[i].at(pt, j), cji = dW[j].at(pt, i);
        for (int p = 0; p < d; ++p) {
          cij -= gam.at(pt, p, i, j) * Wlow.at(pt, p);
          cji -= gam.at(pt, p, j, i) * Wlow.at(pt, p);
        }
        out.at(pt, i, j) = cij + cji;
      }
  return out;
}

}  // namespace kernels

// --- spec-level operations --------------------------------------------------

inline ChristoffelField christoffel(const MetricField& g) {
  const SymTensorField& gt = g.tensor();
  return kernels::christoffel_of(gt, kernels::invert_metric(gt));
}

inline CurvatureBundle riemann(const MetricField& g) {
  const SymTensorField& gt = g.tensor();
  SymTensorField inv = kernels::invert_metric(gt);
  return kernels::curvature_of(gt, inv, kernels::christoffel_of(gt, inv));
}

inline VectorField deturck_vector(const MetricField& g, const MetricField& g_ref) {
  if (g.grid() != g_ref.grid()) throw error("deturck_vector: grid mismatch");
  const SymTensorField& gt = g.tensor();
  const SymTensorField& rt = g_ref.tensor();
  SymTensorField inv = kernels::invert_metric(gt);
  SymTensorField inv_ref = kernels::invert_metric(rt);
  return kernels::deturck_vector_of(gt, inv, kernels::christoffel_of(gt, inv),
                                    kernels::christoffel_of(rt, inv_ref));
}

inline SymTensorField lie_derivative_sym(const VectorField& W, const MetricField& g) {
  if (W.grid() != g.grid()) throw error("lie_derivative_sym: grid mismatch");
  const SymTensorField& gt = g.tensor();
  SymTensorField inv = kernels::invert_metric(gt);
  return kernels::lie_derivative_of(W, gt, kernels::christoffel_of(gt, inv));
}

enum class LieConvention { standard, paper };

namespace kernels {

/// Gauge-fixed right-hand side; `standard` is -2 Rc + L_W g, `paper` is the
/// -2 Rc - 2 L_W g variant kept for comparison runs.
inline SymTensorField deturck_rhs_of(const SymTensorField& g, const ChristoffelField& gam_ref,
                                     LieConvention conv) {
  SymTensorField inv = invert_metric(g);
  ChristoffelField gam = christoffel_of(g, inv);
  SymTensorField ricci = ricci_of(g, inv, gam);
  VectorField W = deturck_vector_of(g, inv, gam, gam_ref);
  SymTensorField lie = lie_derivative_of(W, g, gam);
  const double lie_coeff = conv == LieConvention::standard ? 1.0 : -2.0;
  SymTensorField out = scaled(-2.0, ricci);
  return axpy(lie_coeff, lie, out);
}

}  // namespace kernels

inline SymTensorField ricci_deturck_rhs(const MetricField& g, const MetricField& g_ref,
                                        LieConvention conv = LieConvention::standard) {
  if (g.grid() != g_ref.grid()) throw error("ricci_deturck_rhs: grid mismatch");
  const SymTensorField& rt = g_ref.tensor();
  SymTensorField inv_ref = kernels::invert_metric(rt);
  return kernels::deturck_rhs_of(g.tensor(), kernels::christoffel_of(rt, inv_ref), conv);
}

inline SymTensorField ricci_rhs(const MetricField& g) {
  return scaled(-2.0, riemann(g).ricci);
}

inline SymTensorField normalized_rhs(const MetricField& g) {
  SymTensorField out = scaled(-2.0, riemann(g).ricci);
  return axpy(-4.0, g.tensor(), out);
}

// --- Lichnerowicz Laplacian ---------------------------------------------------

namespace kernels {

struct ReferenceCache {
  SymTensorField inv;
  ChristoffelField gamma;
  CurvatureBundle curv;
};

inline ReferenceCache reference_cache(const SymTensorField& gref) {
  SymTensorField inv = invert_metric(gref);
  ChristoffelField gam = christoffel_of(gref, inv);
  CurvatureBundle curv = curvature_of(gref, inv, gam);
  return ReferenceCache{std::move(inv), std::move(gam), std::move(curv)};
}

/// DL h_ij = g^ab Cov_a Cov_b h_ij + 2 Rm[i,a,b,j] h^{ab} - Rc_ia h^a_j - Rc_aj h^a_i.
/// Second derivatives are composed first-derivative stencils so that this is
/// exactly the linearization of the discrete DeTurck operator at g = g_ref.
inline SymTensorField lichnerowicz_of(const ReferenceCache& rc, const SymTensorField& h) {
  const GridSpec& gr = h.grid();
  const int d = gr.dim();
  const std::int64_t npts = gr.num_points();
  // first covariant derivative T[a]_{ij}
  std::vector<SymTensorField> T;
  T.reserve(d);
  for (int a = 0; a < d; ++a) {
    SymTensorField Ta = derivative1(h, a);
#pragma omp parallel for schedule(static) if (npts >= kOmpGrainPoints)
    for (std::int64_t pt = 0; pt < npts; ++pt)
      for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
          double s = Ta.at(pt, i, j);
          for (int p = 0; p < d; ++p)
            s -= rc.gamma.at(pt, p, a, i) * h.at(pt, p, j) +
                 rc.gamma.at(pt, p, a, j) * h.at(pt, i, p);
          Ta.at(pt, i, j) = s;
        }
    T.push_back(std::move(Ta));
  }
  // second: U[a][b] = Cov_a T[b], contracted with g^{ab} on the fly
  SymTensorField out(gr);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) {
      SymTensorField dT = derivative1(T[b], a);
#pragma omp parallel for schedule(static) if (npts >= kOmpGrainPoints)
      for (std::int64_t pt = 0; pt < npts; ++pt) {
        const double w = rc.inv.at(pt, a, b);
        for (int i = 0; i < d; ++i)
          for (int j = i; j < d; ++j) {
            double s = dT.at(pt, i, j);
            for (int p = 0; p < d; ++p)
              s -= rc.gamma.at(pt, p, a, b) * T[p].at(pt, i, j) +
                   rc.gamma.at(pt, p, a, i) * T[b].at(pt, p, j) +
                   rc.gamma.at(pt, p, a, j) * T[b].at(pt, i, p);
            out.at(pt, i, j) += w * s;
          }
      }
    }
  // curvature terms
#pragma omp parallel for schedule(static) if (npts >= kOmpGrainPoints)
  for (std::int64_t pt = 0; pt < npts; ++pt) {
    double hup[3][3], hmix[3][3];
    for (int a = 0; a < d; ++a)
      for (int j = 0; j < d; ++j) {
        double s = 0.0;
        for (int p = 0; p < d; ++p) s += rc.inv.at(pt, a, p) * h.at(pt, p, j);
        hmix[a][j] = s;
      }
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) {
        double s = 0.0;
        for (int q = 0; q < d; ++q) s += hmix[a][q] * rc.inv.at(pt, q, b);
        hup[a][b] = s;
      }
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        double s = 0.0;
        for (int a = 0; a < d; ++a) {
          for (int b = 0; b < d; ++b) s += 2.0 * rc.curv.riemann.at(pt, i, a, b, j) * hup[a][b];
          s -= rc.curv.ricci.at(pt, i, a) * hmix[a][j];
          s -= rc.curv.ricci.at(pt, a, j) * hmix[a][i];
        }
        out.at(pt, i, j) += s;
      }
  }
  return out;
}

}  // namespace kernels

inline SymTensorField lichnerowicz(const MetricField& g_ref, const SymTensorField& h) {
  if (g_ref.grid() != h.grid()) throw error("lichnerowicz: grid mismatch");
  return kernels::lichnerowicz_of(kernels::reference_cache(g_ref.tensor()), h);
}

/// Central-difference linearization of the DeTurck operator at g.
inline SymTensorField linearized_deturck(const MetricField& g_ref, const MetricField& g,
                                         const SymTensorField& h, double eps = 1e-5,
                                         LieConvention conv = LieConvention::standard) {
  if (g.grid() != h.grid() || g_ref.grid() != h.grid())
    throw error("linearized_deturck: grid mismatch");
  SymTensorField gp = axpy(eps, h, g.tensor());
  SymTensorField gm = axpy(-eps, h, g.tensor());
  if (!(min_metric_eigenvalue(gp) > 0.0) || !(min_metric_eigenvalue(gm) > 0.0))
    throw error("linearized_deturck: perturbation breaks positive definiteness");
  const SymTensorField& rt = g_ref.tensor();
  const ChristoffelField gam_ref = kernels::christoffel_of(rt, kernels::invert_metric(rt));
  SymTensorField fp = kernels::deturck_rhs_of(gp, gam_ref, conv);
  SymTensorField fm = kernels::deturck_rhs_of(gm, gam_ref, conv);
  SymTensorField out = difference(fp, fm);
  return scaled(1.0 / (2.0 * eps), out);
}

struct EllipticityReport {
  double min_quotient;
  bool elliptic;
};

/// Samples the principal-symbol quadratic form of the linearized operator
/// (g^{ab} xi_a xi_b |eta|^2, dependent only on the inverse metric) against
/// |xi|^2 |eta|^2 and reports the minimum quotient.
inline EllipticityReport strong_ellipticity_check(const MetricField& g_ref, const MetricField& g,
                                                  int sample_count, std::uint64_t seed) {
  (void)g_ref;  // the principal symbol does not involve the reference metric
  const SymTensorField& gt = g.tensor();
  SymTensorField inv = kernels::invert_metric(gt);
  const GridSpec& gr = g.grid();
  const int d = gr.dim();
  Rng rng(seed);
  double minq = std::numeric_limits<double>::infinity();
  for (int s = 0; s < sample_count; ++s) {
    const std::int64_t pt = rng.uniform_int(0, gr.num_points() - 1);
    double xi[3] = {0, 0, 0};
    double n2 = 0.0;
    while (n2 < 1e-12) {
      n2 = 0.0;
      for (int a = 0; a < d; ++a) {
        xi[a] = rng.normal();
        n2 += xi[a] * xi[a];
      }
    }
    // random symmetric eta; the symbol acts as a multiple of the identity on
    // eta, so its norm appears in numerator and denominator alike
    double eta2 = 0.0;
    for (int c = 0; c < sym_size(d); ++c) {
      const double e = rng.normal();
      eta2 += sym_weight(d, c) * e * e;
    }
    double q = 0.0;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) q += inv.at(pt, a, b) * xi[a] * xi[b];
    minq = std::min(minq, (q * eta2) / (n2 * eta2));
  }
  return EllipticityReport{minq, minq > 0.0};
}

/// Warped-product scalar curvature identity right-hand side on the 2-torus
/// factor: Scal(h) - 2 Lap_h u - 2 |grad u|_h^2.
inline ScalarField scalar_curvature_warped(const ScalarField& u, const MetricField& h) {
  if (u.grid() != h.grid()) throw error("scalar_curvature_warped: grid mismatch");
  if (u.grid().dim() != 2) throw error("scalar_curvature_warped: expects the T^2 factor");
  const SymTensorField& ht = h.tensor();
  SymTensorField inv = kernels::invert_metric(ht);
  ChristoffelField gam = kernels::christoffel_of(ht, inv);
  CurvatureBundle curv = kernels::curvature_of(ht, inv, gam);
  const GridSpec& gr = u.grid();
  const int d = 2;
  std::vector<ScalarField> du;
  for (int a = 0; a < d; ++a) du.push_back(derivative1(u, a));
  ScalarField hess[2][2] = {{ScalarField(gr), ScalarField(gr)},
                            {ScalarField(gr), ScalarField(gr)}};
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b) {
      std::array<int, kMaxDim> mi{0, 0, 0};
      mi[a] += 1;
      mi[b] += 1;
      hess[a][b] = derivative_multi(u, mi);
    }
  ScalarField out(gr);
  const std::int64_t npts = gr.num_points();
#pragma omp parallel for schedule(static) if (npts >= kOmpGrainPoints)
  for (std::int64_t pt = 0; pt < npts; ++pt) {
    double lap = 0.0, grad2 = 0.0;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) {
        double hab = hess[std::min(a, b)][std::max(a, b)].at(pt);
        for (int p = 0; p < d; ++p) hab -= gam.at(pt, p, a, b) * du[p].at(pt);
        lap += inv.at(pt, a, b) * hab;
        grad2 += inv.at(pt, a, b) * du[a].at(pt) * du[b].at(pt);
      }
    out.at(pt) = curv.scalar.at(pt) - 2.0 * lap - 2.0 * grad2;
  }
  return out;
}

}  // namespace rflab
