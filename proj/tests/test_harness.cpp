#include <catch2/catch_amalgamated.hpp>

#include "rflab/config.hpp"

using namespace rflab;

TEST_CASE("gen_conformal: flat for empty modes, oracle curvature, determinism") {
  GridSpec g({16, 16}, {1.0, 1.0});
  SECTION("empty mode list is the flat metric") {
    MetricField m = gen_conformal(g, {});
    CHECK(sup_norm(difference(m.tensor(), MetricField::flat(g).tensor())) == 0.0);
  }
  SECTION("one mode matches the conformal curvature oracle") {
    std::vector<WaveMode> modes{{{1, 0, 0}, 0.1, 1.5707963267948966}};  // 0.1 cos(2 pi x)
    MetricField m = gen_conformal(g, modes);
    ScalarField phi = conformal_factor(g, modes);
    ScalarField scal = riemann(m).scalar;
    double worst = 0.0;
    for (std::int64_t p = 0; p < g.num_points(); ++p) {
      const double lap = -4 * M_PI * M_PI * phi.at(p);
      worst = std::max(worst, std::abs(scal.at(p) + 2 * std::exp(-2 * phi.at(p)) * lap));
    }
    CHECK(worst < 5e-2);  // O(h^4) at N=16
  }
  SECTION("bit-for-bit determinism") {
    std::vector<WaveMode> modes{{{1, 2, 0}, 0.07, 0.3}};
    MetricField a = gen_conformal(g, modes);
    MetricField b = gen_conformal(g, modes);
    for (std::int64_t i = 0; i < a.tensor().size(); ++i)
      REQUIRE(a.tensor().data()[i] == b.tensor().data()[i]);
  }
  SECTION("anti-aliasing cutoff enforced") {
    CHECK_THROWS_AS(gen_conformal(g, {{{5, 0, 0}, 0.1, 0.0}}), error);
  }
}

TEST_CASE("gen_warped_product") {
  GridSpec g3({8, 8, 8}, {1.0, 1.0, 1.0});
  SECTION("u = 0 with h = delta is flat T^3") {
    MetricField m = gen_warped_product(g3, {}, {1.0, 0.0, 1.0});
    CHECK(sup_norm(riemann(m).riemann) < 1e-12);
  }
  SECTION("non-SPD h is rejected") {
    CHECK_THROWS_AS(gen_warped_product(g3, {}, {1.0, 2.0, 1.0}), error);
  }
  SECTION("scalar curvature grows with the warping amplitude") {
    double prev = 0.0;
    for (double amp : {0.25, 0.5, 1.0}) {
      MetricField m = gen_warped_product(g3, {{{1, 0, 0}, amp, 0.0}}, {1.0, 0.0, 1.0});
      const double s = sup_norm(riemann(m).scalar);
      CHECK(s > prev);
      prev = s;
    }
  }
  SECTION("2-D grid is rejected") {
    GridSpec g2({8, 8}, {1.0, 1.0});
    CHECK_THROWS_AS(gen_warped_product(g2, {}, {1.0, 0.0, 1.0}), error);
  }
}

TEST_CASE("gen_perturbation") {
  GridSpec g({16, 16}, {1.0, 1.0});
  HolderParams hp;
  MetricField base = gen_conformal(g, {{{1, 0, 0}, 0.05, 0.0}});
  SECTION("amplitude zero returns the base exactly") {
    MetricField m = gen_perturbation(base, 3, 0.0, 4, hp);
    CHECK(sup_norm(difference(m.tensor(), base.tensor())) == 0.0);
  }
  SECTION("the h^{4,alpha} distance to base equals the amplitude") {
    const double amp = 1e-3;
    MetricField m = gen_perturbation(base, 3, amp, 4, hp);
    SymTensorField d = difference(m.tensor(), base.tensor());
    CHECK(ck_norm(d, 4, &hp) == Catch::Approx(amp).epsilon(1e-10));
  }
  SECTION("seed determinism and seed sensitivity") {
    MetricField a = gen_perturbation(base, 3, 1e-3, 4, hp);
    MetricField b = gen_perturbation(base, 3, 1e-3, 4, hp);
    MetricField c = gen_perturbation(base, 4, 1e-3, 4, hp);
    CHECK(sup_norm(difference(a.tensor(), b.tensor())) == 0.0);
    CHECK(sup_norm(difference(a.tensor(), c.tensor())) > 0.0);
  }
  SECTION("positive definiteness violations are an error") {
    CHECK_THROWS_AS(gen_perturbation(base, 3, 1e3, 4, hp), error);
  }
  SECTION("mode cutoff above resolution/4 is rejected") {
    CHECK_THROWS_AS(gen_perturbation(base, 3, 1e-3, 8, hp), error);
  }
}

TEST_CASE("dependence experiment at desk scale", "[slow]") {
  GridSpec g({16, 16}, {1.0, 1.0});
  DependenceParams prm;
  prm.phi_modes = {{{1, 0, 0}, 0.05, 0.0}};
  prm.epsilons = {1e-2, 1e-3};
  prm.tau = 0.1;
  prm.n_ratio_times = 8;
  prm.seed = 7;
  DependenceReport rep = run_dependence(g, prm);
  REQUIRE(rep.C_per_eps.size() == 2);
  CHECK(rep.C_measured > 0.0);
  CHECK(std::isfinite(rep.C_measured));
  CHECK(rep.stability_of_C <= 1.2);
  CHECK(rep.blowup_alarms == 0);
  for (const auto& series : rep.ricci_ratios) {
    CHECK(series.size() >= 6);
    for (const auto& [t, r] : series) {
      CHECK(std::isfinite(r));
      CHECK(r >= 0.0);
    }
  }
  // C_measured dominates every recorded ratio (report invariant)
  for (const auto& series : rep.ricci_ratios)
    for (const auto& [t, r] : series) CHECK(r <= rep.C_measured * (1 + 1e-12));

  SECTION("+eps and -eps agree to ~first order") {
    DependenceParams pm = prm;
    pm.epsilons = {1e-3, -1e-3};
    DependenceReport r2 = run_dependence(g, pm);
    CHECK(std::abs(r2.C_per_eps[0] - r2.C_per_eps[1]) / r2.C_per_eps[0] < 0.1);
  }
}

TEST_CASE("dependence rejects empty or zero epsilon lists") {
  GridSpec g({16, 16}, {1.0, 1.0});
  DependenceParams prm;
  prm.phi_modes = {{{1, 0, 0}, 0.05, 0.0}};
  prm.epsilons = {};
  CHECK_THROWS_AS(run_dependence(g, prm), error);
  prm.epsilons = {0.0};
  CHECK_THROWS_AS(run_dependence(g, prm), error);
}

TEST_CASE("stability experiment at desk scale", "[slow]") {
  GridSpec g3({8, 8, 8}, {1.0, 1.0, 1.0});
  StabilityParams prm;
  prm.u_modes = {{{1, 0, 0}, 0.3, 0.0}};
  prm.n_samples = 2;
  prm.amplitude = 1e-3;
  prm.mode_cutoff = 2;
  prm.seed = 5;
  prm.control.t_end = 1.5;
  prm.control.snapshot_every = 25;
  StabilityReport rep = run_stability(g3, prm);
  CHECK(rep.fraction_converged == 1.0);
  CHECK(rep.spectral_gap > 0.0);
  for (const auto& s : rep.samples) {
    CHECK(s.converged_to_flat);
    CHECK(s.final_rm_sup < 1e-6);
    CHECK(s.rate_defined);
    CHECK(s.decay_rate > 0.0);
    // decay rate within a factor 3 of the linearized gap
    CHECK(s.decay_rate > rep.spectral_gap / 3.0);
    CHECK(s.decay_rate < rep.spectral_gap * 3.0);
  }
}

TEST_CASE("ball conditions on a small grid", "[slow]") {
  GridSpec g({12, 12}, {1.0, 1.0});
  BallParams prm;
  prm.n_directions = 2;
  prm.seed = 11;
  prm.mode_cutoff = 3;
  prm.elliptic_samples = 200;
  prm.radii_per_decade = 3;
  prm.decades = 3;
  BallReport rep = run_ball_conditions(g, prm);
  CHECK(rep.M_estimate <= 1.0 + 1e-6);
  REQUIRE(rep.directions.size() == 2);
  for (const auto& d : rep.directions) {
    CHECK(d.r_metric >= d.r_elliptic);
    CHECK(d.r_elliptic >= d.r_perturb);
    CHECK(d.r_perturb > 0.0);
  }
}

TEST_CASE("bisect_radius edge cases") {
  // always-true predicate: the configured cap
  CHECK(rflab::detail::bisect_radius(2.0, 1e-3, [](double) { return true; }) == 2.0);
  // threshold predicate: converges to the threshold
  const double r = rflab::detail::bisect_radius(1.0, 1e-4, [](double a) { return a < 0.37; });
  CHECK(r == Catch::Approx(0.37).margin(2e-4));
}

TEST_CASE("toml subset parser") {
  const std::string text = R"(
# comment
experiment = "depend"
seed = 42
flag = true
[grid]
resolution = [16, 16]
periods = [1.0, 2.5]
[generator]
kind = "conformal"
modes = [{wave = [1, 0], amplitude = 0.1, phase = 0.0},
         {wave = [0, 2], amplitude = 0.05, phase = 1.0}]
[depend]
epsilons = [1e-2, 1e-3]
tau = 0.25
)";
  ExperimentConfig cfg = config_from_toml(text);
  CHECK(cfg.experiment == "depend");
  CHECK(cfg.seed == 42);
  REQUIRE(cfg.resolution == std::vector<int>{16, 16});
  CHECK(cfg.periods[1] == 2.5);
  REQUIRE(cfg.generator.modes.size() == 2);
  CHECK(cfg.generator.modes[1].wave[1] == 2);
  CHECK(cfg.generator.modes[1].amplitude == 0.05);
  CHECK(cfg.epsilons == std::vector<double>{1e-2, 1e-3});
  CHECK(cfg.tau == 0.25);
}

TEST_CASE("default config text parses back to defaults") {
  ExperimentConfig cfg = config_from_toml(default_config_toml());
  ExperimentConfig def;
  CHECK(cfg.experiment == def.experiment);
  CHECK(cfg.resolution == def.resolution);
  CHECK(cfg.control.safety == def.control.safety);
  CHECK(cfg.control.cfl_c == def.control.cfl_c);
  CHECK(cfg.holder.alpha == def.holder.alpha);
  CHECK(cfg.spectral.rays.size() == def.spectral.rays.size());
  CHECK(cfg.epsilons == def.epsilons);
}

TEST_CASE("toml parse errors are config errors") {
  CHECK_THROWS_AS(config_from_toml("experiment = "), config_error);
  CHECK_THROWS_AS(config_from_toml("x = [1, 2"), config_error);
  CHECK_THROWS_AS(config_from_toml("x = oops"), config_error);
}

TEST_CASE("build_generator dispatches kinds") {
  GridSpec g({16, 16}, {1.0, 1.0});
  HolderParams hp;
  GeneratorSpec flat;
  CHECK(sup_norm(riemann(build_generator(g, flat, hp)).riemann) < 1e-12);
  GeneratorSpec pert;
  pert.kind = "perturbed";
  pert.base_kind = "conformal";
  pert.base_modes = {{{1, 0, 0}, 0.05, 0.0}};
  pert.amplitude = 1e-4;
  pert.mode_cutoff = 4;
  MetricField m = build_generator(g, pert, hp);
  MetricField base = gen_conformal(g, pert.base_modes);
  const double dist = sup_norm(difference(m.tensor(), base.tensor()));
  CHECK(dist > 0.0);
  GeneratorSpec bad;
  bad.kind = "nope";
  CHECK_THROWS_AS(build_generator(g, bad, hp), config_error);
}
