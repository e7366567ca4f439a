#pragma once

#include <fstream>
#include <functional>
#include <optional>

#include "rflab/curvature.hpp"

namespace rflab {

enum class RhsKind { ricci, deturck, normalized };

inline const char* to_string(RhsKind k) {
  switch (k) {
    case RhsKind::ricci: return "ricci";
    case RhsKind::deturck: return "deturck";
    case RhsKind::normalized: return "normalized";
  }
  return "?";
}

struct StepControl {
  double dt_init = 1e-2;       // cap on the step size
  double dt_min = 1e-12;
  double safety = 0.9;         // in (0,1)
  double cfl_c = 1.0;          // dt <= safety*min(h^2)/(cfl_c*dim*|g^-1|*(1+|Rm|))
  double curvature_cap = 1e6;  // blow-up threshold on |Rm|_inf
  double eig_floor = 1e-8;     // positive-definiteness floor
  double t_end = 1.0;
  int snapshot_every = 50;     // steps between stored snapshots
  double conv_tol = 1e-9;      // on |dg/dt|_inf, checked at snapshots
  int conv_checks = 3;         // consecutive confirmations
  int gauge_substeps = 1;      // RK4 substeps per snapshot interval in diffeo_flow

  void validate() const {
    if (!(dt_min < dt_init) || !(dt_min > 0.0)) throw error("StepControl: need 0 < dt_min < dt_init");
    if (!(safety > 0.0 && safety < 1.0)) throw error("StepControl: safety must be in (0,1)");
    if (!(curvature_cap > 0.0 && eig_floor > 0.0 && t_end > 0.0 && cfl_c > 0.0))
      throw error("StepControl: thresholds must be positive");
    if (snapshot_every < 1 || gauge_substeps < 1) throw error("StepControl: cadence must be >= 1");
  }
};

enum class Termination { reached_t_end, blowup, converged };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::reached_t_end: return "reached_t_end";
    case Termination::blowup: return "blowup";
    case Termination::converged: return "converged";
  }
  return "?";
}

struct DiagRow {
  double t, dt, rm_sup, rc_sup, dtg_sup, min_eig;
};

struct FlowTrajectory {
  RhsKind kind = RhsKind::ricci;
  std::vector<double> times;             // snapshot times, strictly increasing
  std::vector<SymTensorField> metrics;   // snapshots (positive definite)
  std::vector<DiagRow> diag;             // one row per accepted step
  Termination termination = Termination::reached_t_end;
  double t_final = 0.0;
};

namespace detail {

/// Sup over points of the fully g-contracted norm of the Riemann tensor.
inline double riemann_sup(const RiemannField& rm, const SymTensorField& inv) {
  const GridSpec& gr = rm.grid();
  const int d = gr.dim();
  const std::int64_t npts = gr.num_points();
  std::vector<double> vals(static_cast<std::size_t>(npts));
#pragma omp parallel for schedule(static) if (npts >= kOmpGrainPoints)
  for (std::int64_t pt = 0; pt < npts; ++pt) {
    double r1[3][3][3][3], r2[3][3][3][3];
    auto raise = [&](auto& src, auto& dst, int slot) {
      for (int i = 0; i < d; ++i)
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b)
            for (int j = 0; j < d; ++j) {
              double s = 0.0;
              for (int m = 0; m < d; ++m) {
                int ii = i, aa = a, bb = b, jj = j;
                if (slot == 0) ii = m;
                if (slot == 1) aa = m;
                if (slot == 2) bb = m;
                if (slot == 3) jj = m;
                const int lower = slot == 0 ? i : slot == 1 ? a : slot == 2 ? b : j;
                s += inv.at(pt, lower, m) * src[ii][aa][bb][jj];
              }
              dst[i][a][b][j] = s;
            }
    };
    for (int i = 0; i < d; ++i)
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          for (int j = 0; j < d; ++j) r1[i][a][b][j] = rm.at(pt, i, a, b, j);
    raise(r1, r2, 0);
    raise(r2, r1, 1);
    raise(r1, r2, 2);
    raise(r2, r1, 3);
    double s = 0.0;
    for (int i = 0; i < d; ++i)
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          for (int j = 0; j < d; ++j) s += r1[i][a][b][j] * rm.at(pt, i, a, b, j);
    vals[pt] = std::abs(s);
  }
  double m = 0.0;
  for (std::int64_t pt = 0; pt < npts; ++pt) m = std::max(m, vals[pt]);
  return std::sqrt(m);
}

inline double coord_sup(const SymTensorField& f) { return sup_norm(f); }

struct RhsEval {
  SymTensorField value;
  double rm_sup, rc_sup, min_eig, max_inv_eig;
};

/// One right-hand-side evaluation with curvature diagnostics, fused into a
/// single pointwise pass (the Riemann tensor stays in registers).
inline RhsEval eval_rhs(RhsKind kind, const SymTensorField& g, const ChristoffelField* gam_ref,
                        LieConvention conv) {
  const GridSpec& gr = g.grid();
  const int d = gr.dim();
  const std::int64_t npts = gr.num_points();
  SymTensorField inv = kernels::invert_metric(g);
  ChristoffelField gam = kernels::christoffel_of(g, inv);
  std::vector<ChristoffelField> dgam;
  dgam.reserve(d);
  for (int a = 0; a < d; ++a) dgam.push_back(derivative1(gam, a));

  SymTensorField ricci(gr);
  std::vector<double> rm2(static_cast<std::size_t>(npts)), rc2(static_cast<std::size_t>(npts)),
      emin(static_cast<std::size_t>(npts)), einv(static_cast<std::size_t>(npts));
#pragma omp parallel for schedule(static) if (npts >= kOmpGrainPoints)
  for (std::int64_t pt = 0; pt < npts; ++pt) {
    double rup[3][3][3][3];
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
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        double rij = 0.0, rji = 0.0;
        for (int a = 0; a < d; ++a) {
          rij += rup[a][i][a][j];
          rji += rup[a][j][a][i];
        }
        ricci.at(pt, i, j) = 0.5 * (rij + rji);
      }
    // |Rc|_g^2
    double rc = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k)
          for (int l = 0; l < d; ++l)
            rc += inv.at(pt, i, k) * inv.at(pt, j, l) * ricci.at(pt, i, j) * ricci.at(pt, k, l);
    rc2[pt] = std::abs(rc);
    // stored-convention Riemann in registers: antisym_(i,a) of g_{al} rup^l_{ibj}
    double rlow[3][3][3][3], tmp[3][3][3][3];
    for (int i = 0; i < d; ++i)
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          for (int j = 0; j < d; ++j) {
            double s = 0.0;
            for (int l = 0; l < d; ++l) s += g.at(pt, a, l) * rup[l][i][b][j];
            tmp[i][a][b][j] = s;
          }
    for (int i = 0; i < d; ++i)
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          for (int j = 0; j < d; ++j) rlow[i][a][b][j] = 0.5 * (tmp[i][a][b][j] - tmp[a][i][b][j]);
    // raise all four slots against the lowered tensor
    double gi[3][3];
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) gi[i][j] = inv.at(pt, i, j);
    double t2[3][3][3][3];
    for (int i = 0; i < d; ++i)
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          for (int j = 0; j < d; ++j) {
            double s = 0.0;
            for (int m = 0; m < d; ++m) s += gi[i][m] * rlow[m][a][b][j];
            t2[i][a][b][j] = s;
          }
    for (int i = 0; i < d; ++i)
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          for (int j = 0; j < d; ++j) {
            double s = 0.0;
            for (int m = 0; m < d; ++m) s += gi[a][m] * t2[i][m][b][j];
            tmp[i][a][b][j] = s;
          }
    for (int i = 0; i < d; ++i)
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          for (int j = 0; j < d; ++j) {
            double s = 0.0;
            for (int m = 0; m < d; ++m) s += gi[b][m] * tmp[i][a][m][j];
            t2[i][a][b][j] = s;
          }
    double rm = 0.0;
    for (int i = 0; i < d; ++i)
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          for (int j = 0; j < d; ++j) {
            double s = 0.0;
            for (int m = 0; m < d; ++m) s += gi[j][m] * t2[i][a][b][m];
            rm += s * rlow[i][a][b][j];
          }
    rm2[pt] = std::abs(rm);
    emin[pt] = smallmat::min_eigenvalue(d, g.data() + pt * g.components());
    einv[pt] = smallmat::max_abs_eigenvalue(d, inv.data() + pt * inv.components());
  }

  SymTensorField rhs = scaled(-2.0, ricci);
  if (kind == RhsKind::deturck) {
    VectorField W = kernels::deturck_vector_of(g, inv, gam, *gam_ref);
    SymTensorField lie = kernels::lie_derivative_of(W, g, gam);
    rhs = axpy(conv == LieConvention::standard ? 1.0 : -2.0, lie, rhs);
  } else if (kind == RhsKind::normalized) {
    rhs = axpy(-4.0, g, rhs);
  }
  double rm = 0.0, rc = 0.0, mineig = std::numeric_limits<double>::infinity(), maxinv = 0.0;
  for (std::int64_t pt = 0; pt < npts; ++pt) {
    rm = std::max(rm, rm2[pt]);
    rc = std::max(rc, rc2[pt]);
    mineig = std::min(mineig, emin[pt]);
    maxinv = std::max(maxinv, einv[pt]);
  }
  return RhsEval{std::move(rhs), std::sqrt(rm), std::sqrt(rc), mineig, maxinv};
}

/// Plain RHS without diagnostics (RK stages): ricci-only curvature path.
inline SymTensorField stage_rhs(RhsKind kind, const SymTensorField& g,
                                const ChristoffelField* gam_ref, LieConvention conv) {
  SymTensorField inv = kernels::invert_metric(g);
  ChristoffelField gam = kernels::christoffel_of(g, inv);
  SymTensorField rhs = scaled(-2.0, kernels::ricci_of(g, inv, gam));
  if (kind == RhsKind::deturck) {
    VectorField W = kernels::deturck_vector_of(g, inv, gam, *gam_ref);
    SymTensorField lie = kernels::lie_derivative_of(W, g, gam);
    rhs = axpy(conv == LieConvention::standard ? 1.0 : -2.0, lie, rhs);
  } else if (kind == RhsKind::normalized) {
    rhs = axpy(-4.0, g, rhs);
  }
  return rhs;
}

}  // namespace detail

/// Method-of-lines RK4 with the parabolic step-size policy. Forced snapshot
/// times (if any) are landed on exactly; snapshots are also taken every
/// `snapshot_every` accepted steps.
inline FlowTrajectory evolve(RhsKind kind, const MetricField& g0,
                             const MetricField* g_ref, const StepControl& control,
                             std::vector<double> forced_times = {},
                             LieConvention conv = LieConvention::standard) {
  control.validate();
  if ((kind == RhsKind::deturck) != (g_ref != nullptr))
    throw error("evolve: g_ref required exactly when rhs_kind is deturck");
  if (g_ref && g_ref->grid() != g0.grid()) throw error("evolve: g_ref grid mismatch");

  std::optional<ChristoffelField> gam_ref;
  if (g_ref) {
    SymTensorField inv_ref = kernels::invert_metric(g_ref->tensor());
    gam_ref.emplace(kernels::christoffel_of(g_ref->tensor(), inv_ref));
  }
  const ChristoffelField* gref_ptr = gam_ref ? &*gam_ref : nullptr;

  std::sort(forced_times.begin(), forced_times.end());
  std::size_t next_forced = 0;
  auto skip_forced = [&](double t) {
    while (next_forced < forced_times.size() && forced_times[next_forced] <= t + 1e-14)
      ++next_forced;
  };
  skip_forced(0.0);

  FlowTrajectory traj;
  traj.kind = kind;
  SymTensorField g = g0.tensor();
  double t = 0.0;
  traj.times.push_back(0.0);
  traj.metrics.push_back(g);

  const double hmin2 = g.grid().min_spacing() * g.grid().min_spacing();
  const int dim = g.grid().dim();
  long step = 0;
  int consecutive_ok = 0;

  while (t < control.t_end - 1e-14) {
    detail::RhsEval k1 = detail::eval_rhs(kind, g, gref_ptr, conv);
    const double dtg = detail::coord_sup(k1.value);

    if (k1.rm_sup > control.curvature_cap || k1.min_eig < control.eig_floor) {
      traj.termination = Termination::blowup;
      traj.diag.push_back({t, 0.0, k1.rm_sup, k1.rc_sup, dtg, k1.min_eig});
      traj.t_final = t;
      if (traj.times.back() < t) {
        traj.times.push_back(t);
        traj.metrics.push_back(g);
      }
      return traj;
    }

    double dt = control.safety * hmin2 /
                (control.cfl_c * dim * std::max(1.0, k1.max_inv_eig) * (1.0 + k1.rm_sup));
    dt = std::min(dt, control.dt_init);
    dt = std::min(dt, control.t_end - t);
    if (next_forced < forced_times.size())
      dt = std::min(dt, forced_times[next_forced] - t);

    // take the step, halving dt on a rejected stage
    bool accepted = false;
    SymTensorField gnew = g;
    while (!accepted) {
      if (dt < control.dt_min)
        throw stiff_failure("evolve: dt underflow below dt_min (stiff failure)");
      try {
        SymTensorField k2 = detail::stage_rhs(kind, axpy(0.5 * dt, k1.value, g), gref_ptr, conv);
        SymTensorField k3 = detail::stage_rhs(kind, axpy(0.5 * dt, k2, g), gref_ptr, conv);
        SymTensorField k4 = detail::stage_rhs(kind, axpy(dt, k3, g), gref_ptr, conv);
        SymTensorField acc = axpy(2.0, k2, k1.value);
        acc = axpy(2.0, k3, acc);
        acc = axpy(1.0, k4, acc);
        gnew = axpy(dt / 6.0, acc, g);
        if (!gnew.all_finite()) throw error("non-finite stage");
        accepted = true;
      } catch (const stiff_failure&) {
        throw;
      } catch (const error&) {
        dt *= 0.5;
      }
    }

    g = std::move(gnew);
    t += dt;
    ++step;
    traj.diag.push_back({t, dt, k1.rm_sup, k1.rc_sup, dtg, k1.min_eig});

    bool snapshot = (step % control.snapshot_every == 0) || (t >= control.t_end - 1e-14);
    if (next_forced < forced_times.size() && t >= forced_times[next_forced] - 1e-14) {
      snapshot = true;
      skip_forced(t);
    }
    if (snapshot) {
      traj.times.push_back(t);
      traj.metrics.push_back(g);
      if (dtg < control.conv_tol) {
        if (++consecutive_ok >= control.conv_checks) {
          traj.termination = Termination::converged;
          traj.t_final = t;
          return traj;
        }
      } else {
        consecutive_ok = 0;
      }
    }
  }
  traj.termination = Termination::reached_t_end;
  traj.t_final = t;
  return traj;
}

// ---------------------------------------------------------------------------
// Gauge recovery pipeline.

struct GaugeTrajectory {
  std::vector<double> times;
  std::vector<DiffeoMap> maps;  // aligned with a deturck trajectory's snapshots
};

namespace detail {

inline VectorField deturck_field_at(const SymTensorField& g, const ChristoffelField& gam_ref) {
  SymTensorField inv = kernels::invert_metric(g);
  ChristoffelField gam = kernels::christoffel_of(g, inv);
  return kernels::deturck_vector_of(g, inv, gam, gam_ref);
}

inline void check_orientation(const VectorField& u) {
  const GridSpec& gr = u.grid();
  const int d = gr.dim();
  std::vector<VectorField> du;
  for (int a = 0; a < d; ++a) du.push_back(derivative1(u, a));
  for (std::int64_t p = 0; p < gr.num_points(); ++p) {
    double J[3][3];
    for (int i = 0; i < d; ++i)
      for (int a = 0; a < d; ++a) J[i][a] = (i == a ? 1.0 : 0.0) + du[a].at(p, i);
    double det;
    if (d == 1)
      det = J[0][0];
    else if (d == 2)
      det = J[0][0] * J[1][1] - J[0][1] * J[1][0];
    else
      det = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
            J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
            J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
    if (!(det > 0.0))
      throw gauge_failure("diffeo_flow: orientation lost (non-positive Jacobian)");
  }
}

}  // namespace detail

namespace detail {

/// Shared gauge integrator; field_sign = -1 integrates dF/dt = -W o F (the
/// recovery direction), +1 the reversed field (inverse-flow diagnostics).
GaugeTrajectory integrate_gauge(const FlowTrajectory& traj, const MetricField& g_ref,
                                const StepControl& control, double field_sign);

}  // namespace detail

/// Integrate dF/dt = -W o F through the snapshots of a DeTurck trajectory.
/// W(t) is formed from the time-interpolated metric; W o F uses grid-field
/// interpolation. F(x) = x + u(x) with u periodic.
inline GaugeTrajectory diffeo_flow(const FlowTrajectory& traj, const MetricField& g_ref,
                                   const StepControl& control) {
  return detail::integrate_gauge(traj, g_ref, control, -1.0);
}

namespace detail {

inline GaugeTrajectory integrate_gauge(const FlowTrajectory& traj, const MetricField& g_ref,
                                       const StepControl& control, double field_sign) {
  if (traj.kind != RhsKind::deturck) throw error("diffeo_flow: trajectory is not a deturck run");
  if (traj.metrics.empty()) throw error("diffeo_flow: empty trajectory");
  const GridSpec& gr = traj.metrics.front().grid();
  if (gr != g_ref.grid()) throw error("diffeo_flow: grid mismatch");
  SymTensorField inv_ref = kernels::invert_metric(g_ref.tensor());
  ChristoffelField gam_ref = kernels::christoffel_of(g_ref.tensor(), inv_ref);

  const int d = gr.dim();
  const std::int64_t npts = gr.num_points();
  VectorField u(gr);
  GaugeTrajectory gauge;
  gauge.times.push_back(traj.times.front());
  gauge.maps.push_back(DiffeoMap(u));

  // -W interpolated at displaced points, for all grid points
  auto eval_minus_w = [&](const Interpolator& interp, const VectorField& disp) {
    VectorField out(gr);
#pragma omp parallel for schedule(static) if (npts >= kOmpGrainPoints)
    for (std::int64_t p = 0; p < npts; ++p) {
      auto x = gr.point(p);
      for (int a = 0; a < d; ++a) x[a] += disp.at(p, a);
      double w[3];
      interp.eval(x, w);
      for (int a = 0; a < d; ++a) out.at(p, a) = field_sign * w[a];
    }
    return out;
  };

  for (std::size_t k = 0; k + 1 < traj.metrics.size(); ++k) {
    const double t0 = traj.times[k], t1 = traj.times[k + 1];
    const int nsub = control.gauge_substeps;
    const double dt = (t1 - t0) / nsub;
    for (int s = 0; s < nsub; ++s) {
      const double a0 = static_cast<double>(s) / nsub;
      const double am = (s + 0.5) / nsub;
      const double a1 = static_cast<double>(s + 1) / nsub;
      auto metric_at = [&](double a) {
        SymTensorField gm = scaled(1.0 - a, traj.metrics[k]);
        return axpy(a, traj.metrics[k + 1], gm);
      };
      Interpolator W0(detail::deturck_field_at(metric_at(a0), gam_ref));
      Interpolator Wm(detail::deturck_field_at(metric_at(am), gam_ref));
      Interpolator W1(detail::deturck_field_at(metric_at(a1), gam_ref));
      VectorField k1 = eval_minus_w(W0, u);
      VectorField k2 = eval_minus_w(Wm, axpy(0.5 * dt, k1, u));
      VectorField k3 = eval_minus_w(Wm, axpy(0.5 * dt, k2, u));
      VectorField k4 = eval_minus_w(W1, axpy(dt, k3, u));
      VectorField acc = axpy(2.0, k2, k1);
      acc = axpy(2.0, k3, acc);
      acc = axpy(1.0, k4, acc);
      u = axpy(dt / 6.0, acc, u);
    }
    check_orientation(u);
    gauge.times.push_back(t1);
    gauge.maps.push_back(DiffeoMap(u));
  }
  return gauge;
}

}  // namespace detail

/// Transformation law for covariant symmetric 2-tensors:
/// (F^* s)_ab(x) = s_ij(F(x)) dF^i/dx^a dF^j/dx^b.
inline SymTensorField pullback_sym(const SymTensorField& s, const DiffeoMap& F) {
  const GridSpec& gr = s.grid();
  if (gr != F.grid()) throw error("pullback: grid mismatch");
  const int d = gr.dim();
  const std::int64_t npts = gr.num_points();
  const VectorField& u = F.displacement();
  std::vector<VectorField> du;
  for (int a = 0; a < d; ++a) du.push_back(derivative1(u, a));
  Interpolator interp(s);
  SymTensorField out(gr);
#pragma omp parallel for schedule(static) if (npts >= kOmpGrainPoints)
  for (std::int64_t p = 0; p < npts; ++p) {
    auto x = gr.point(p);
    for (int a = 0; a < d; ++a) x[a] += u.at(p, a);
    double sF[6];
    interp.eval(x, sF);
    double J[3][3];
    for (int i = 0; i < d; ++i)
      for (int a = 0; a < d; ++a) J[i][a] = (i == a ? 1.0 : 0.0) + du[a].at(p, i);
    for (int a = 0; a < d; ++a)
      for (int b = a; b < d; ++b) {
        double acc = 0.0;
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) acc += sF[sym_index(d, i, j)] * J[i][a] * J[j][b];
        out.at(p, a, b) = acc;
      }
  }
  return out;
}

/// Metric pullback; a non-positive-definite result is an error, never a
/// silent clamp.
inline MetricField pullback_metric(const MetricField& g_hat, const DiffeoMap& F) {
  SymTensorField out = pullback_sym(g_hat.tensor(), F);
  if (!out.all_finite() || !(min_metric_eigenvalue(out) > 0.0))
    throw error("pullback_metric: result not positive definite");
  return MetricField(std::move(out));
}

struct RecoveredFlow {
  FlowTrajectory trajectory;            // rhs_kind = ricci, snapshots pulled back
  std::vector<double> residual_times;   // interior snapshot times
  std::vector<double> residuals;        // |dg/dt + 2 Rc(g)|_inf by centered differences
  double max_residual = 0.0;
};

/// Pull back every snapshot; certify with the Ricci-flow residual.
inline RecoveredFlow recover_ricci_flow(const FlowTrajectory& traj, const GaugeTrajectory& gauge) {
  if (traj.times.size() != gauge.times.size())
    throw error("recover_ricci_flow: trajectories not aligned");
  RecoveredFlow out;
  out.trajectory.kind = RhsKind::ricci;
  out.trajectory.termination = traj.termination;
  out.trajectory.t_final = traj.t_final;
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    if (std::abs(traj.times[k] - gauge.times[k]) > 1e-12)
      throw error("recover_ricci_flow: snapshot times differ");
    MetricField ghat{SymTensorField(traj.metrics[k])};
    MetricField g = pullback_metric(ghat, gauge.maps[k]);
    out.trajectory.times.push_back(traj.times[k]);
    out.trajectory.metrics.push_back(g.tensor());
  }
  const std::size_t n = out.trajectory.metrics.size();
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double span = out.trajectory.times[k + 1] - out.trajectory.times[k - 1];
    SymTensorField dtg = difference(out.trajectory.metrics[k + 1], out.trajectory.metrics[k - 1]);
    dtg = scaled(1.0 / span, dtg);
    MetricField gk{SymTensorField(out.trajectory.metrics[k])};
    SymTensorField res = axpy(2.0, riemann(gk).ricci, dtg);
    const double r = sup_norm(res);
    out.residual_times.push_back(out.trajectory.times[k]);
    out.residuals.push_back(r);
    out.max_residual = std::max(out.max_residual, r);
  }
  return out;
}

struct ConvergenceStatus {
  bool converged_to_flat = false;
  double decay_rate = 0.0;
  bool rate_defined = false;
  double t_detect = 0.0;
};

/// Classify a finished trajectory: flat-convergence from the tail of
/// |Rm|_inf, decay rate from a least-squares fit of log|Rm| over its final
/// decade.
inline ConvergenceStatus convergence_status(const FlowTrajectory& traj, double tol) {
  if (traj.diag.size() < 2) throw error("convergence_status: too few steps recorded");
  ConvergenceStatus st;
  const double rm_last = traj.diag.back().rm_sup;
  if (traj.termination == Termination::blowup) {
    st.converged_to_flat = false;
    st.t_detect = traj.t_final;
    return st;
  }
  st.converged_to_flat = rm_last < tol;
  st.t_detect = traj.t_final;
  for (std::size_t i = traj.diag.size(); i-- > 0;) {
    if (traj.diag[i].rm_sup >= tol) break;
    st.t_detect = traj.diag[i].t;
  }
  const double rm_end = std::max(rm_last, 1e-13);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  long m = 0;
  for (const auto& row : traj.diag) {
    if (row.rm_sup > 0 && row.rm_sup >= rm_end && row.rm_sup <= 10.0 * rm_end) {
      const double x = row.t, y = std::log(row.rm_sup);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      ++m;
    }
  }
  if (m >= 5 && rm_last > 1e-13) {
    const double denom = m * sxx - sx * sx;
    if (std::abs(denom) > 1e-300) {
      st.decay_rate = -(m * sxy - sx * sy) / denom;
      st.rate_defined = true;
    }
  }
  return st;
}

/// Diagnostics stream: one CSV row per accepted step.
inline void write_diagnostics_csv(const FlowTrajectory& traj, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot open for writing: " + path);
  os << "t,dt,rm_sup,rc_sup,dtg_sup,min_eig\n";
  os.precision(17);
  for (const auto& r : traj.diag)
    os << r.t << ',' << r.dt << ',' << r.rm_sup << ',' << r.rc_sup << ',' << r.dtg_sup << ','
       << r.min_eig << '\n';
}

}  // namespace rflab
