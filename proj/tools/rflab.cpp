// rflab: Ricci flow laboratory on flat tori.
//
// Subcommands: flow, spectrum, resolvent, depend, stability, ball, defaults.
// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 invariant
// violation.

#include <filesystem>
#include <iostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"

#include "rflab/rflab.hpp"

namespace fs = std::filesystem;
using namespace rflab;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
};

ExperimentConfig load(const CommonArgs& args) {
  ExperimentConfig cfg;
  if (!args.config_path.empty()) cfg = load_config(args.config_path);
  if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
  if (args.seed_set) cfg.seed = args.seed;
  if (args.threads > 0) cfg.threads = args.threads;
#ifdef _OPENMP
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
#endif
  fs::create_directories(cfg.output_dir);
  return cfg;
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot open for writing: " + path.string());
  os << j.dump(2) << '\n';
}

int cmd_flow(const CommonArgs& args) {
  ExperimentConfig cfg = load(args);
  GridSpec grid = cfg.grid();
  MetricField g0 = build_generator(grid, cfg.generator, cfg.holder);
  const RhsKind kind = cfg.kind();
  std::optional<MetricField> gref;
  if (kind == RhsKind::deturck) gref.emplace(detail::average_metric(g0));
  FlowTrajectory traj =
      evolve(kind, g0, gref ? &*gref : nullptr, cfg.control, {}, cfg.convention());
  const fs::path out(cfg.output_dir);
  write_diagnostics_csv(traj, (out / "diagnostics.csv").string());
  for (std::size_t i = 0; i < traj.metrics.size(); ++i)
    save_field(traj.metrics[i], (out / ("snap_" + std::to_string(i) + ".rfb")).string());
  nlohmann::json j;
  j["rhs_kind"] = to_string(traj.kind);
  j["termination"] = to_string(traj.termination);
  j["t_final"] = traj.t_final;
  j["snapshots"] = traj.times;
  ConvergenceStatus st = convergence_status(traj, cfg.flat_tol);
  j["converged_to_flat"] = st.converged_to_flat;
  if (st.rate_defined) j["decay_rate"] = st.decay_rate;
  write_json(j, out / "flow_report.json");
  std::cout << "flow: termination=" << to_string(traj.termination) << " t_final=" << traj.t_final
            << " steps=" << traj.diag.size() << "\n";
  return 0;
}

OperatorMatrix assemble_lichnerowicz(const ExperimentConfig& cfg, const GridSpec& grid) {
  MetricField gref = build_generator(grid, cfg.generator, cfg.holder);
  kernels::ReferenceCache rc = kernels::reference_cache(gref.tensor());
  return assemble([&](const SymTensorField& h) { return kernels::lichnerowicz_of(rc, h); }, grid,
                  "lichnerowicz[" + cfg.generator.kind + "]");
}

int cmd_spectrum(const CommonArgs& args) {
  ExperimentConfig cfg = load(args);
  GridSpec grid = cfg.grid();
  OperatorMatrix A = assemble_lichnerowicz(cfg, grid);
  SpectrumResult sp = top_spectrum(A, cfg.spectral.eigenvalue_count);
  const fs::path out(cfg.output_dir);
  write_spectrum_csv(sp, (out / "spectrum.csv").string());
  std::cout << "spectrum: n=" << A.n_rows << " symmetric=" << A.symmetric_flag
            << " top=" << sp.re.front() << " residual=" << sp.max_residual << "\n";
  return 0;
}

int cmd_resolvent(const CommonArgs& args) {
  ExperimentConfig cfg = load(args);
  GridSpec grid = cfg.grid();
  OperatorMatrix A = assemble_lichnerowicz(cfg, grid);
  std::vector<double> radii;
  for (int j = 0; j <= cfg.spectral.radii_per_decade * cfg.spectral.decades; ++j)
    radii.push_back(std::pow(10.0, static_cast<double>(j) / cfg.spectral.radii_per_decade));
  const NormKind kind = cfg.spectral.norm_kind == "sup" ? NormKind::sup : NormKind::l2;
  SectorReport rep = sector_scan(A, cfg.spectral.K, cfg.spectral.rays, radii, kind,
                                 cfg.spectral.restrict_half_plane);
  write_json(to_json(rep), fs::path(cfg.output_dir) / "sector_report.json");
  std::cout << "resolvent: samples=" << rep.samples.size() << " M_estimate=" << rep.M_estimate
            << " violations=" << rep.violations << "\n";
  return rep.violations > 0 ? 4 : 0;
}

int cmd_depend(const CommonArgs& args) {
  ExperimentConfig cfg = load(args);
  GridSpec grid = cfg.grid();
  DependenceParams prm;
  prm.phi_modes = cfg.generator.modes;
  prm.epsilons = cfg.epsilons;
  prm.tau = cfg.tau;
  prm.control = cfg.control;
  prm.holder = cfg.holder;
  prm.k = cfg.norm_k;
  prm.seed = cfg.seed;
  prm.mode_cutoff = cfg.generator.mode_cutoff;
  prm.n_ratio_times = cfg.n_ratio_times;
  prm.convention = cfg.convention();
  DependenceReport rep = run_dependence(grid, prm);
  write_json(to_json(rep), fs::path(cfg.output_dir) / "dependence_report.json");
  std::cout << "depend: C_measured=" << rep.C_measured
            << " stability_of_C=" << rep.stability_of_C << " alarms=" << rep.blowup_alarms
            << "\n";
  return 0;
}

int cmd_stability(const CommonArgs& args) {
  ExperimentConfig cfg = load(args);
  GridSpec grid = cfg.grid();
  StabilityParams prm;
  prm.u_modes = cfg.generator.kind == "perturbed" ? cfg.generator.base_modes : cfg.generator.modes;
  prm.h_entries =
      cfg.generator.kind == "perturbed" ? cfg.generator.base_h_entries : cfg.generator.h_entries;
  prm.n_samples = cfg.n_samples;
  prm.amplitude = cfg.sample_amplitude;
  prm.mode_cutoff = cfg.generator.mode_cutoff;
  prm.seed = cfg.seed;
  prm.control = cfg.control;
  prm.holder = cfg.holder;
  prm.flat_tol = cfg.flat_tol;
  prm.kind = cfg.rhs_kind == "ricci" ? RhsKind::ricci : RhsKind::deturck;
  prm.convention = cfg.convention();
  StabilityReport rep = run_stability(grid, prm);
  write_json(to_json(rep), fs::path(cfg.output_dir) / "stability_report.json");
  std::cout << "stability: fraction_converged=" << rep.fraction_converged
            << " spectral_gap=" << rep.spectral_gap << "\n";
  return 0;
}

int cmd_ball(const CommonArgs& args) {
  ExperimentConfig cfg = load(args);
  GridSpec grid = cfg.grid();
  BallParams prm;
  prm.n_directions = cfg.n_directions;
  prm.seed = cfg.seed;
  prm.max_radius = cfg.max_radius;
  prm.elliptic_margin = cfg.elliptic_margin;
  prm.mode_cutoff = cfg.generator.mode_cutoff;
  prm.holder = cfg.holder;
  prm.convention = cfg.convention();
  prm.K = cfg.spectral.K;
  BallReport rep = run_ball_conditions(grid, prm);
  write_json(to_json(rep), fs::path(cfg.output_dir) / "ball_report.json");
  std::cout << "ball: M_estimate=" << rep.M_estimate;
  for (const auto& d : rep.directions)
    std::cout << "  [" << d.r_metric << ", " << d.r_elliptic << ", " << d.r_perturb << "]";
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rflab: Ricci flow laboratory on flat tori"};
  app.require_subcommand(1);

  CommonArgs args;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config_path, "TOML configuration file");
    sub->add_option("--out", args.out_dir, "output directory");
    sub->add_option("--seed", args.seed, "override the experiment seed")
        ->each([&](const std::string&) { args.seed_set = true; });
    sub->add_option("--threads", args.threads, "worker thread count");
  };

  CLI::App* c_flow = app.add_subcommand("flow", "integrate a flow and stream diagnostics");
  CLI::App* c_spec = app.add_subcommand("spectrum", "assemble the linearized operator and solve for eigenvalues");
  CLI::App* c_res = app.add_subcommand("resolvent", "resolvent sector scan");
  CLI::App* c_dep = app.add_subcommand("depend", "continuous-dependence experiment");
  CLI::App* c_stab = app.add_subcommand("stability", "convergence-stability ensemble");
  CLI::App* c_ball = app.add_subcommand("ball", "perturbation-ball condition probe");
  CLI::App* c_def = app.add_subcommand("defaults", "print the default configuration");
  for (CLI::App* sub : {c_flow, c_spec, c_res, c_dep, c_stab, c_ball}) add_common(sub);

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_def->parsed()) {
      std::cout << default_config_toml();
      return 0;
    }
    if (c_flow->parsed()) return cmd_flow(args);
    if (c_spec->parsed()) return cmd_spectrum(args);
    if (c_res->parsed()) return cmd_resolvent(args);
    if (c_dep->parsed()) return cmd_depend(args);
    if (c_stab->parsed()) return cmd_stability(args);
    if (c_ball->parsed()) return cmd_ball(args);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const stiff_failure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const gauge_failure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const io_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
