#pragma once

#include "rflab/flow.hpp"
#include "rflab/spectral.hpp"

#include "json.hpp"

namespace rflab {

struct WaveMode {
  std::array<int, kMaxDim> wave{0, 0, 0};
  double amplitude = 0.0;
  double phase = 0.0;
};

namespace detail {

inline void check_aliasing(const GridSpec& g, const std::array<int, kMaxDim>& wave,
                           int offset_axis = 0) {
  for (int a = 0; a < g.dim() - offset_axis; ++a)
    if (std::abs(wave[a]) > g.extent(a + offset_axis) / 4)
      throw error("generator: wavevector above the anti-aliasing cutoff (resolution/4)");
}

inline ScalarField trig_sum(const GridSpec& g, const std::vector<WaveMode>& modes,
                            int offset_axis = 0) {
  ScalarField f(g);
  const std::int64_t npts = g.num_points();
  for (const auto& m : modes) check_aliasing(g, m.wave, offset_axis);
#pragma omp parallel for schedule(static) if (npts >= kOmpGrainPoints)
  for (std::int64_t p = 0; p < npts; ++p) {
    const auto x = g.point(p);
    double s = 0.0;
    for (const auto& m : modes) {
      double ang = m.phase;
      for (int a = 0; a < g.dim() - offset_axis; ++a)
        ang += 2.0 * 3.14159265358979323846 * m.wave[a] * x[a + offset_axis] /
               g.period(a + offset_axis);
      s += m.amplitude * std::sin(ang);
    }
    f.at(p) = s;
  }
  return f;
}

}  // namespace detail

/// g = e^{2 phi} delta with phi a trigonometric sum; positive definite by
/// construction.
inline MetricField gen_conformal(const GridSpec& grid, const std::vector<WaveMode>& phi_modes) {
  ScalarField phi = detail::trig_sum(grid, phi_modes);
  SymTensorField t(grid);
  const int d = grid.dim();
#pragma omp parallel for schedule(static) if (grid.num_points() >= kOmpGrainPoints)
  for (std::int64_t p = 0; p < grid.num_points(); ++p) {
    const double c = std::exp(2.0 * phi.at(p));
    for (int i = 0; i < d; ++i) t.at(p, i, i) = c;
  }
  return MetricField(std::move(t));
}

inline ScalarField conformal_factor(const GridSpec& grid, const std::vector<WaveMode>& phi_modes) {
  return detail::trig_sum(grid, phi_modes);
}

/// Warped product on T^3: g = e^{2u} dtheta^2 + h, theta the first axis, u a
/// function of the T^2 factor, h a constant SPD 2x2 (packed {h00,h01,h11}).
inline MetricField gen_warped_product(const GridSpec& grid3, const std::vector<WaveMode>& u_modes,
                                      const std::array<double, 3>& h_packed) {
  if (grid3.dim() != 3) throw error("gen_warped_product: grid must be 3-D");
  if (!(h_packed[0] > 0.0 && h_packed[0] * h_packed[2] - h_packed[1] * h_packed[1] > 0.0))
    throw error("gen_warped_product: h is not SPD");
  ScalarField u = detail::trig_sum(grid3, u_modes, /*offset_axis=*/1);
  SymTensorField t(grid3);
#pragma omp parallel for schedule(static) if (grid3.num_points() >= kOmpGrainPoints)
  for (std::int64_t p = 0; p < grid3.num_points(); ++p) {
    t.at(p, 0, 0) = std::exp(2.0 * u.at(p));
    t.at(p, 1, 1) = h_packed[0];
    t.at(p, 1, 2) = h_packed[1];
    t.at(p, 2, 2) = h_packed[2];
  }
  return MetricField(std::move(t));
}

/// The warping function on the T^2 factor grid (for oracle comparisons).
inline ScalarField warped_u_on_factor(const GridSpec& grid2, const std::vector<WaveMode>& u_modes) {
  return detail::trig_sum(grid2, u_modes);
}

/// Random band-limited symmetric tensor with unit h^{k,alpha} norm
/// (deterministic in seed); DC mode excluded.
inline SymTensorField random_direction(const GridSpec& grid, std::uint64_t seed, int mode_cutoff,
                                       const HolderParams& hp, int k = 4) {
  for (int a = 0; a < grid.dim(); ++a)
    if (mode_cutoff > grid.extent(a) / 4)
      throw error("random_direction: mode_cutoff above resolution/4");
  const int d = grid.dim();
  Rng rng(seed);
  struct Coef {
    std::array<int, kMaxDim> k;
    double c, s;
  };
  std::vector<std::vector<Coef>> coefs(sym_size(d));
  const int c0 = mode_cutoff;
  for (int comp = 0; comp < sym_size(d); ++comp)
    for (int kx = -c0; kx <= c0; ++kx)
      for (int ky = (d > 1 ? -c0 : 0); ky <= (d > 1 ? c0 : 0); ++ky)
        for (int kz = (d > 2 ? -c0 : 0); kz <= (d > 2 ? c0 : 0); ++kz) {
          if (kx == 0 && ky == 0 && kz == 0) continue;
          coefs[comp].push_back({{kx, ky, kz}, rng.normal(), rng.normal()});
        }
  SymTensorField f(grid);
  const std::int64_t npts = grid.num_points();
#pragma omp parallel for schedule(static) if (npts >= kOmpGrainPoints)
  for (std::int64_t p = 0; p < npts; ++p) {
    const auto x = grid.point(p);
    for (int comp = 0; comp < sym_size(d); ++comp) {
      double s = 0.0;
      for (const auto& cf : coefs[comp]) {
        double ang = 0.0;
        for (int a = 0; a < d; ++a)
          ang += 2.0 * 3.14159265358979323846 * cf.k[a] * x[a] / grid.period(a);
        s += cf.c * std::cos(ang) + cf.s * std::sin(ang);
      }
      f.comp(p, comp) = s;
    }
  }
  const double n = ck_norm(f, k, &hp);
  return scaled(1.0 / n, f);
}

/// base + amplitude * (unit-h^{4,alpha} random band-limited direction).
inline MetricField gen_perturbation(const MetricField& base, std::uint64_t seed, double amplitude,
                                    int mode_cutoff, const HolderParams& hp, int k = 4) {
  if (amplitude < 0) throw error("gen_perturbation: amplitude must be >= 0");
  if (amplitude == 0.0) return base;
  SymTensorField dir = random_direction(base.grid(), seed, mode_cutoff, hp, k);
  SymTensorField t = axpy(amplitude, dir, base.tensor());
  if (!(min_metric_eigenvalue(t) > 0.0))
    throw error("gen_perturbation: positive-definiteness violated at requested amplitude");
  return MetricField(std::move(t));
}

// ---------------------------------------------------------------------------
// Dependence experiment (continuous dependence on initial data).

struct DependenceParams {
  std::vector<WaveMode> phi_modes;
  std::vector<double> epsilons;
  double tau = 0.5;
  StepControl control;
  HolderParams holder;
  int k = 2;
  std::uint64_t seed = 1;
  int mode_cutoff = 4;
  int n_ratio_times = 20;
  LieConvention convention = LieConvention::standard;
};

struct DependenceReport {
  std::vector<double> epsilons;
  // per-epsilon time series (t, ratio)
  std::vector<std::vector<std::pair<double, double>>> ricci_ratios;
  std::vector<std::vector<std::pair<double, double>>> deturck_ratios;
  std::vector<double> C_per_eps;          // Ricci-level (h^{k,alpha} / h^{k+2,alpha})
  std::vector<double> C_deturck_per_eps;  // DeTurck-level (h^{k+2,alpha} both sides)
  double C_measured = 0.0;
  double stability_of_C = 0.0;
  int blowup_alarms = 0;
};

inline DependenceReport run_dependence(const GridSpec& grid, const DependenceParams& prm) {
  if (prm.epsilons.empty()) throw error("run_dependence: epsilon list must be nonempty");
  for (double e : prm.epsilons)
    if (!(e != 0.0)) throw error("run_dependence: epsilons must be nonzero");

  MetricField g0 = gen_conformal(grid, prm.phi_modes);
  SymTensorField direction =
      random_direction(grid, prm.seed, prm.mode_cutoff, prm.holder, prm.k + 2);

  StepControl control = prm.control;
  control.t_end = prm.tau;
  std::vector<double> forced;
  for (int j = 1; j <= prm.n_ratio_times; ++j) forced.push_back(prm.tau * j / prm.n_ratio_times);

  FlowTrajectory base = evolve(RhsKind::deturck, g0, &g0, control, forced, prm.convention);
  if (base.termination == Termination::blowup)
    throw error("run_dependence: base flow blew up before tau");
  GaugeTrajectory gauge0 = diffeo_flow(base, g0, control);
  RecoveredFlow rec0 = recover_ricci_flow(base, gauge0);

  auto index_of_time = [](const FlowTrajectory& tr, double t) -> std::int64_t {
    for (std::size_t i = 0; i < tr.times.size(); ++i)
      if (std::abs(tr.times[i] - t) <= 1e-10 * std::max(1.0, t)) return static_cast<std::int64_t>(i);
    return -1;
  };

  DependenceReport rep;
  for (double eps0 : prm.epsilons) {
    double eps = eps0;
    FlowTrajectory pert;
    bool ok = false;
    for (int attempt = 0; attempt < 8 && !ok; ++attempt) {
      SymTensorField t1 = axpy(eps, direction, g0.tensor());
      if (!(min_metric_eigenvalue(t1) > 0.0)) {
        ++rep.blowup_alarms;
        eps *= 0.5;
        continue;
      }
      MetricField g1(std::move(t1));
      pert = evolve(RhsKind::deturck, g1, &g0, control, forced, prm.convention);
      if (pert.termination == Termination::blowup) {
        ++rep.blowup_alarms;  // continuous-dependence alarm: bisect the amplitude
        eps *= 0.5;
        continue;
      }
      ok = true;
    }
    if (!ok) throw error("run_dependence: perturbed flow kept blowing up under bisection");

    GaugeTrajectory gauge1 = diffeo_flow(pert, g0, control);
    RecoveredFlow rec1 = recover_ricci_flow(pert, gauge1);

    SymTensorField d0 = difference(rec1.trajectory.metrics.front(), rec0.trajectory.metrics.front());
    const double denom = ck_norm(d0, prm.k + 2, &prm.holder);

    std::vector<std::pair<double, double>> rr, dr;
    double cmax = 0.0, cmax_d = 0.0;
    for (double t : forced) {
      const std::int64_t i0 = index_of_time(rec0.trajectory, t);
      const std::int64_t i1 = index_of_time(rec1.trajectory, t);
      if (i0 < 0 || i1 < 0) continue;
      SymTensorField dt_ric =
          difference(rec1.trajectory.metrics[i1], rec0.trajectory.metrics[i0]);
      const double num = ck_norm(dt_ric, prm.k, &prm.holder);
      rr.emplace_back(t, num / denom);
      cmax = std::max(cmax, num / denom);
      SymTensorField dt_det = difference(pert.metrics[i1], base.metrics[i0]);
      const double numd = ck_norm(dt_det, prm.k + 2, &prm.holder);
      dr.emplace_back(t, numd / denom);
      cmax_d = std::max(cmax_d, numd / denom);
    }
    rep.epsilons.push_back(eps);
    rep.ricci_ratios.push_back(std::move(rr));
    rep.deturck_ratios.push_back(std::move(dr));
    rep.C_per_eps.push_back(cmax);
    rep.C_deturck_per_eps.push_back(cmax_d);
  }
  rep.C_measured = *std::max_element(rep.C_per_eps.begin(), rep.C_per_eps.end());
  const double cmin = *std::min_element(rep.C_per_eps.begin(), rep.C_per_eps.end());
  rep.stability_of_C = cmin > 0 ? rep.C_measured / cmin : std::numeric_limits<double>::infinity();
  return rep;
}

// ---------------------------------------------------------------------------
// Stability experiment (convergence stability at a flat fixed point).

struct StabilityParams {
  std::vector<WaveMode> u_modes;
  std::array<double, 3> h_entries{1.0, 0.0, 1.0};
  int n_samples = 10;
  double amplitude = 1e-3;
  int mode_cutoff = 4;
  std::uint64_t seed = 1;
  StepControl control;
  HolderParams holder;
  double flat_tol = 1e-6;  // classification tolerance on |Rm|_inf
  RhsKind kind = RhsKind::deturck;
  LieConvention convention = LieConvention::standard;
};

struct StabilitySample {
  std::uint64_t seed = 0;
  double amplitude = 0.0;
  bool converged_to_flat = false;
  double decay_rate = 0.0;
  bool rate_defined = false;
  double final_rm_sup = 0.0;
  double t_converged = 0.0;
  Termination termination = Termination::reached_t_end;
};

struct StabilityReport {
  std::vector<StabilitySample> samples;
  double fraction_converged = 0.0;
  double spectral_gap = 0.0;  // |largest negative eigenvalue| cross-reference
};

namespace detail {

inline MetricField average_metric(const MetricField& g) {
  const SymTensorField& t = g.tensor();
  std::vector<double> avg(t.components(), 0.0);
  for (std::int64_t p = 0; p < g.grid().num_points(); ++p)
    for (int c = 0; c < t.components(); ++c) avg[c] += t.comp(p, c);
  for (double& a : avg) a /= static_cast<double>(g.grid().num_points());
  return MetricField::constant(g.grid(), avg);
}

inline StabilitySample classify_run(const FlowTrajectory& traj, double flat_tol,
                                    std::uint64_t seed, double amplitude) {
  StabilitySample s;
  s.seed = seed;
  s.amplitude = amplitude;
  ConvergenceStatus st = convergence_status(traj, flat_tol);
  s.converged_to_flat = st.converged_to_flat;
  s.decay_rate = st.decay_rate;
  s.rate_defined = st.rate_defined;
  s.final_rm_sup = traj.diag.empty() ? 0.0 : traj.diag.back().rm_sup;
  s.t_converged = st.t_detect;
  s.termination = traj.termination;
  return s;
}

}  // namespace detail

/// Spectral-gap cross-reference: |largest negative eigenvalue| of the flat
/// Lichnerowicz operator on a (possibly coarsened) version of the grid.
inline double flat_spectral_gap(const GridSpec& grid, int cap_resolution = 8) {
  std::vector<int> res;
  std::vector<double> per;
  for (int a = 0; a < grid.dim(); ++a) {
    res.push_back(std::min(grid.extent(a), std::max(8, cap_resolution)));
    per.push_back(grid.period(a));
  }
  GridSpec coarse(res, per);
  MetricField flat = MetricField::flat(coarse);
  kernels::ReferenceCache rc = kernels::reference_cache(flat.tensor());
  OperatorMatrix A = assemble(
      [&](const SymTensorField& h) { return kernels::lichnerowicz_of(rc, h); }, coarse,
      "lichnerowicz[flat]");
  const int nzero = sym_size(coarse.dim());
  SpectrumResult sp = top_spectrum(A, nzero + 1);
  return std::abs(sp.re.back());
}

inline StabilityReport run_stability(const GridSpec& grid3, const StabilityParams& prm) {
  MetricField g0 = gen_warped_product(grid3, prm.u_modes, prm.h_entries);
  MetricField gref = detail::average_metric(g0);
  const MetricField* refptr = prm.kind == RhsKind::deturck ? &gref : nullptr;

  FlowTrajectory base = evolve(prm.kind, g0, refptr, prm.control, {}, prm.convention);
  ConvergenceStatus base_st = convergence_status(base, prm.flat_tol);
  if (!base_st.converged_to_flat)
    throw config_error("run_stability: base flow does not converge to flat (config rejected)");

  StabilityReport rep;
  for (int i = 0; i < prm.n_samples; ++i) {
    const std::uint64_t seed_i = prm.seed + 1000003ULL * static_cast<std::uint64_t>(i);
    StabilitySample s;
    try {
      MetricField g1 = gen_perturbation(g0, seed_i, prm.amplitude, prm.mode_cutoff, prm.holder, 4);
      FlowTrajectory traj = evolve(prm.kind, g1, refptr, prm.control, {}, prm.convention);
      s = detail::classify_run(traj, prm.flat_tol, seed_i, prm.amplitude);
    } catch (const stiff_failure&) {
      s.seed = seed_i;
      s.amplitude = prm.amplitude;
      s.converged_to_flat = false;
    }
    rep.samples.push_back(s);
  }
  int conv = 0;
  for (const auto& s : rep.samples) conv += s.converged_to_flat ? 1 : 0;
  rep.fraction_converged = static_cast<double>(conv) / std::max(1, prm.n_samples);
  rep.spectral_gap = flat_spectral_gap(grid3);
  return rep;
}

// ---------------------------------------------------------------------------
// Ball-condition probe around a flat metric.

struct BallParams {
  int n_directions = 5;
  std::uint64_t seed = 1;
  double max_radius = 1.0;
  double elliptic_margin = 0.1;
  int elliptic_samples = 400;
  double fd_eps = 1e-5;
  int mode_cutoff = 4;
  HolderParams holder;
  double bisect_rel_tol = 1e-2;
  LieConvention convention = LieConvention::standard;
  double K = 1.0;
  std::vector<double> rays{0.0, 1.0471975511965976, -1.0471975511965976};  // 0, +-pi/3
  int radii_per_decade = 5;
  int decades = 4;
};

struct BallDirection {
  std::uint64_t seed = 0;
  double r_metric = 0.0, r_elliptic = 0.0, r_perturb = 0.0;
};

struct BallReport {
  std::vector<BallDirection> directions;
  double M_estimate = 0.0;
};

namespace detail {

/// Largest radius in (0, cap] where `pred` holds, by bisection; assumes
/// pred(0+) holds.
template <typename Pred>
double bisect_radius(double cap, double rel_tol, Pred&& pred) {
  if (pred(cap)) return cap;
  double lo = 0.0, hi = cap;
  while (hi - lo > rel_tol * cap) {
    const double mid = 0.5 * (lo + hi);
    if (pred(mid))
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

}  // namespace detail

inline BallReport run_ball_conditions(const GridSpec& grid, const BallParams& prm) {
  MetricField g0 = MetricField::flat(grid);
  kernels::ReferenceCache rc = kernels::reference_cache(g0.tensor());
  OperatorMatrix A0 = assemble(
      [&](const SymTensorField& h) { return kernels::lichnerowicz_of(rc, h); }, grid,
      "lichnerowicz[flat]");

  std::vector<double> radii;
  for (int j = 0; j <= prm.radii_per_decade * prm.decades; ++j)
    radii.push_back(std::pow(10.0, static_cast<double>(j) / prm.radii_per_decade));
  SectorReport scan = sector_scan(A0, prm.K, prm.rays, radii, NormKind::l2, true);
  if (scan.violations > 0) throw error("run_ball_conditions: resolvent solve failed right of K");
  const double M = scan.M_estimate;

  Eigen::VectorXd w(A0.n_rows);
  for (std::int64_t p = 0; p < A0.stack.npoints; ++p)
    for (int c = 0; c < A0.stack.ncomp; ++c)
      w[p * A0.stack.ncomp + c] = A0.stack.comp_weights[c];

  BallReport rep;
  rep.M_estimate = M;
  for (int i = 0; i < prm.n_directions; ++i) {
    const std::uint64_t seed_i = prm.seed + 7919ULL * static_cast<std::uint64_t>(i);
    SymTensorField dir = random_direction(grid, seed_i, prm.mode_cutoff, prm.holder, /*k=*/2);
    BallDirection bd;
    bd.seed = seed_i;

    auto metric_ok = [&](double a) {
      SymTensorField t = axpy(a, dir, g0.tensor());
      return min_metric_eigenvalue(t) > 0.0;
    };
    bd.r_metric = detail::bisect_radius(prm.max_radius, prm.bisect_rel_tol, metric_ok);

    auto elliptic_ok = [&](double a) {
      if (!metric_ok(a)) return false;
      MetricField g(axpy(a, dir, g0.tensor()));
      return strong_ellipticity_check(g0, g, prm.elliptic_samples, prm.seed).min_quotient >
             prm.elliptic_margin;
    };
    bd.r_elliptic = detail::bisect_radius(bd.r_metric, prm.bisect_rel_tol, elliptic_ok);

    auto perturb_ok = [&](double a) {
      if (!elliptic_ok(a)) return false;
      MetricField g(axpy(a, dir, g0.tensor()));
      OperatorMatrix Ag = assemble(
          [&](const SymTensorField& h) {
            return linearized_deturck(g0, g, h, prm.fd_eps, prm.convention);
          },
          grid, "linearized_deturck", /*check_tol=*/1e-6);
      Eigen::SparseMatrix<double> D = Ag.A - A0.A;
      const double nrm = weighted_operator_norm_l2(D, w);
      return nrm < 1.0 / (M + 1.0);
    };
    bd.r_perturb = detail::bisect_radius(bd.r_elliptic, prm.bisect_rel_tol, perturb_ok);

    rep.directions.push_back(bd);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Report serialization (structured text = JSON).

inline nlohmann::json to_json(const SectorReport& rep) {
  nlohmann::json j;
  j["K"] = rep.K;
  j["norm_kind"] = to_string(rep.norm_kind);
  j["restricted_half_plane"] = rep.restricted_half_plane;
  j["M_estimate"] = rep.M_estimate;
  j["violations"] = rep.violations;
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : rep.samples) {
    samples.push_back({{"re", s.lambda.real()},
                       {"im", s.lambda.imag()},
                       {"resolvent_norm", s.resolvent_norm},
                       {"product", s.product},
                       {"product_upper", s.product_upper},
                       {"ok", s.ok}});
  }
  j["samples"] = samples;
  return j;
}

inline nlohmann::json to_json(const DependenceReport& rep) {
  nlohmann::json j;
  j["epsilons"] = rep.epsilons;
  j["C_measured"] = rep.C_measured;
  j["stability_of_C"] = rep.stability_of_C;
  j["C_per_eps"] = rep.C_per_eps;
  j["C_deturck_per_eps"] = rep.C_deturck_per_eps;
  j["blowup_alarms"] = rep.blowup_alarms;
  auto series = [](const std::vector<std::vector<std::pair<double, double>>>& ss) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& s : ss) {
      nlohmann::json one = nlohmann::json::array();
      for (const auto& [t, r] : s) one.push_back({{"t", t}, {"ratio", r}});
      out.push_back(one);
    }
    return out;
  };
  j["ricci_ratios"] = series(rep.ricci_ratios);
  j["deturck_ratios"] = series(rep.deturck_ratios);
  return j;
}

inline nlohmann::json to_json(const StabilityReport& rep) {
  nlohmann::json j;
  j["fraction_converged"] = rep.fraction_converged;
  j["spectral_gap"] = rep.spectral_gap;
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : rep.samples) {
    nlohmann::json one{{"seed", s.seed},
                       {"amplitude", s.amplitude},
                       {"converged_to_flat", s.converged_to_flat},
                       {"final_rm_sup", s.final_rm_sup},
                       {"t_converged", s.t_converged},
                       {"termination", to_string(s.termination)}};
    if (s.rate_defined) one["decay_rate"] = s.decay_rate;
    samples.push_back(one);
  }
  j["samples"] = samples;
  return j;
}

inline nlohmann::json to_json(const BallReport& rep) {
  nlohmann::json j;
  j["M_estimate"] = rep.M_estimate;
  nlohmann::json dirs = nlohmann::json::array();
  for (const auto& d : rep.directions)
    dirs.push_back({{"seed", d.seed},
                    {"r_metric", d.r_metric},
                    {"r_elliptic", d.r_elliptic},
                    {"r_perturb", d.r_perturb}});
  j["directions"] = dirs;
  return j;
}

}  // namespace rflab
