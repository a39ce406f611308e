#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <pfkit/pfkit.hpp>

using namespace pfkit;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "pfkit_harness" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig from_ini(const std::string& text) {
  std::istringstream in(text);
  return experiment_config_from(parse_ini(in));
}

}  // namespace

TEST_CASE("empty config produces the documented defaults") {
  std::vector<std::string> defaulted;
  ExperimentConfig cfg = experiment_config_from(ConfigMap{}, &defaulted);
  CHECK(cfg.model.kind == ModelKind::allen_cahn);
  CHECK(cfg.model.epsilon == 0.05);
  CHECK(cfg.model.alpha == 2.0);
  CHECK(cfg.model.space == DiffMethod::spectral);
  CHECK(cfg.scheme.kind == SchemeKind::etd_rk2);
  CHECK(cfg.grid.nx == 256);
  CHECK(cfg.grid.ny == 256);
  CHECK(cfg.grid.Lx == Catch::Approx(two_pi));
  CHECK(cfg.tau == 1e-4);
  CHECK(cfg.T == 0.1);
  CHECK(cfg.ic.kind == InitialCondition::Kind::random);
  CHECK(cfg.ic.amplitude == 0.05);
  CHECK(cfg.seed == 0);
  CHECK(cfg.out_dir == fs::path("out"));
  // every key the caller did not provide is reported as defaulted
  CHECK_FALSE(defaulted.empty());
  CHECK(std::find(defaulted.begin(), defaulted.end(), "model.kind") !=
        defaulted.end());
  CHECK(std::find(defaulted.begin(), defaulted.end(), "time.tau") !=
        defaulted.end());
}

TEST_CASE("bare aliases map onto their qualified keys") {
  ExperimentConfig cfg = from_ini(
      "model = cahn_hilliard\n"
      "scheme = sav\n"
      "epsilon = 0.1\n"
      "alpha = 3\n"
      "tau = 0.001\n"
      "T = 0.01\n"
      "nx = 64\n"
      "seed = 9\n"
      "out = results\n");
  CHECK(cfg.model.kind == ModelKind::cahn_hilliard);
  CHECK(cfg.scheme.kind == SchemeKind::sav);
  CHECK(cfg.model.epsilon == 0.1);
  CHECK(cfg.model.alpha == 3.0);
  CHECK(cfg.tau == 0.001);
  CHECK(cfg.T == 0.01);
  CHECK(cfg.grid.nx == 64);
  CHECK(cfg.grid.ny == 64);  // ny defaults to nx
  CHECK(cfg.seed == 9);
  CHECK(cfg.out_dir == fs::path("results"));
}

TEST_CASE("config validation failures carry the offending key") {
  CHECK_THROWS_AS(from_ini("epsilon = -1\n"), ValidationError);
  CHECK_THROWS_AS(from_ini("epsilon = nonsense\n"), ValidationError);
  CHECK_THROWS_AS(from_ini("nx = 7\n"), ValidationError);
  CHECK_THROWS_AS(from_ini("tau = 0\n"), ValidationError);
  CHECK_THROWS_AS(from_ini("[time]\nT = -0.5\n"), ValidationError);
  CHECK_THROWS_AS(from_ini("model = nope\n"), ValidationError);
  CHECK_THROWS_AS(from_ini("scheme = nope\n"), ValidationError);
  CHECK_THROWS_AS(from_ini("[ic]\nkind = nope\n"), ValidationError);
  CHECK_THROWS_AS(from_ini("[ic]\nkind = tanh\nshape = blob\n"), ValidationError);
  CHECK_THROWS_AS(from_ini("[ic]\nkind = tanh\nshape = union\n"),
                  ValidationError);  // union needs cx2/cy2/radius2
  CHECK_THROWS_AS(from_ini("[ic]\nkind = tanh\nshape = stripe\nstripe_axis = z\n"),
                  ValidationError);
  // convective model needs a velocity preset; plain models may not carry one
  CHECK_THROWS_AS(from_ini("model = allen_cahn\n[model]\nadvection = vortex\n"),
                  ValidationError);
  CHECK_NOTHROW(from_ini("model = convective_allen_cahn\nscheme = stabilized_imex\n"));
}

TEST_CASE("unknown keys are rejected, not ignored") {
  CHECK_THROWS_AS(from_ini("model.bogus = 3\n"), UnknownKey);
  CHECK_THROWS_AS(from_ini("bogus = 3\n"), UnknownKey);
  try {
    from_ini("[grid]\nnnx = 64\n");
    FAIL("expected UnknownKey");
  } catch (const UnknownKey& e) {
    CHECK(std::string(e.what()).find("grid.nnx") != std::string::npos);
  }
}

TEST_CASE("ini parser reports the failing line") {
  std::istringstream in("[model]\nkind = allen_cahn\nthis line has no equals\n");
  try {
    parse_ini(in);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 3);
  }
}

TEST_CASE("missing config file raises FileNotFound") {
  CHECK_THROWS_AS(load_config_file("/nonexistent/path/run.ini"), FileNotFound);
}

TEST_CASE("overrides replace file values") {
  std::istringstream in("epsilon = 0.1\n");
  ConfigMap m = parse_ini(in);
  apply_override(m, "model.epsilon=0.25");
  apply_override(m, "grid.nx=32");
  ExperimentConfig cfg = experiment_config_from(m);
  CHECK(cfg.model.epsilon == 0.25);
  CHECK(cfg.grid.nx == 32);
  CHECK_THROWS_AS(apply_override(m, "no_equals_sign"), ConfigError);
}

TEST_CASE("config echo round-trips exactly") {
  ExperimentConfig cfg = from_ini(
      "model = cahn_hilliard\nscheme = ieq\nepsilon = 0.07\nnx = 32\n"
      "tau = 0.0005\nT = 0.005\n[ic]\nkind = tanh\nshape = annulus\n"
      "radius = 1.3\ninner_radius = 0.6\n[diagnostics]\nradius = true\n");
  const ConfigMap echo1 = to_config_map(cfg);
  ExperimentConfig cfg2 = experiment_config_from(echo1);
  const ConfigMap echo2 = to_config_map(cfg2);
  REQUIRE(echo1.to_ini() == echo2.to_ini());
}

TEST_CASE("resolve_step_count accepts only integer multiples") {
  CHECK(detail::resolve_step_count(0.1, 1e-4) == 1000);
  CHECK(detail::resolve_step_count(0.0, 1e-4) == 0);
  CHECK_THROWS_AS(detail::resolve_step_count(0.1, 3e-4), ValidationError);
}

TEST_CASE("T = 0 run performs no steps but records the initial state") {
  ExperimentConfig cfg = from_ini(
      "nx = 16\ntau = 0.001\nT = 0\n[ic]\nkind = constant\nvalue = 0.5\n");
  const fs::path dir = fresh_dir("t0");
  RunResult r = run_simulation(cfg, dir);
  CHECK(r.steps == 0);
  CHECK(r.final_time == 0.0);
  REQUIRE(r.series.size() == 1);
  CHECK(r.series[0].step == 0);
  CHECK(r.snapshots.size() == 1);
  CHECK(fs::exists(dir / "series.csv"));
  CHECK(fs::exists(dir / "meta.json"));
  CHECK(fs::exists(dir / "step_0.f64"));
}

TEST_CASE("constant well initial data is a fixed point of the full run loop") {
  ExperimentConfig cfg = from_ini(
      "nx = 16\ntau = 0.01\nT = 0.05\n[ic]\nkind = constant\nvalue = 1\n");
  const fs::path dir = fresh_dir("fixed");
  RunResult r = run_simulation(cfg, dir);
  CHECK(r.steps == 5);
  for (double v : r.state.u.a) CHECK(v == Catch::Approx(1.0).margin(1e-12));
  // energy column is flat at zero
  for (const SeriesRecord& rec : r.series)
    CHECK(rec.energy_J == Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("snapshot cadence") {
  ExperimentConfig cfg = from_ini(
      "nx = 16\ntau = 0.001\nT = 0.01\n[output]\nsnapshot_every = 3\n"
      "[ic]\nkind = constant\nvalue = 0\n");
  const fs::path dir = fresh_dir("cadence");
  RunResult r = run_simulation(cfg, dir);
  // steps 0 (initial), 3, 6, 9, and the forced final 10
  CHECK(r.snapshots.size() == 5);
  CHECK(fs::exists(dir / "step_10.f64"));
}

TEST_CASE("seeded runs are byte-identical; different seeds differ") {
  const std::string base =
      "nx = 16\ntau = 0.001\nT = 0.002\nseed = 5\n[ic]\nkind = random\n";
  ExperimentConfig cfg = from_ini(base);
  const fs::path d1 = fresh_dir("seed_a");
  const fs::path d2 = fresh_dir("seed_b");
  run_simulation(cfg, d1);
  run_simulation(cfg, d2);
  CHECK(slurp(d1 / "series.csv") == slurp(d2 / "series.csv"));
  CHECK(slurp(d1 / "step_2.f64") == slurp(d2 / "step_2.f64"));
  ExperimentConfig other = cfg;
  other.seed = 6;
  const fs::path d3 = fresh_dir("seed_c");
  run_simulation(other, d3);
  CHECK(slurp(d1 / "series.csv") != slurp(d3 / "series.csv"));
}

TEST_CASE("diverging runs flush partial outputs before rethrowing") {
  ExperimentConfig cfg = from_ini(
      "nx = 32\nscheme = forward_euler\nepsilon = 0.05\ntau = 10\nT = 100\n"
      "[ic]\nkind = random\n");
  const fs::path dir = fresh_dir("diverge");
  CHECK_THROWS_AS(run_simulation(cfg, dir), Diverged);
  CHECK(fs::exists(dir / "series.csv"));
  const std::string meta = slurp(dir / "meta.json");
  CHECK(meta.find("\"status\": \"diverged\"") != std::string::npos);
}

TEST_CASE("vortex preset drives a convective run") {
  ExperimentConfig cfg = from_ini(
      "model = convective_allen_cahn\nscheme = stabilized_imex\n"
      "epsilon = 0.3\nnx = 32\ntau = 0.001\nT = 0.01\n"
      "[ic]\nkind = tanh\nradius = 1.5\n");
  CHECK(cfg.advection_preset == "vortex");  // convective default
  const fs::path dir = fresh_dir("vortex");
  RunResult r = run_simulation(cfg, dir);
  CHECK(all_finite(r.state.u));
  ModelSpec m = materialize_model(cfg);
  REQUIRE(m.advection.has_value());
  // the preset velocity is divergence-free
  auto [vxx, vxy] = gradient(m.advection->vx);
  auto [vyx, vyy] = gradient(m.advection->vy);
  ScalarField div = vxx;
  axpy(div, 1.0, vyy);
  CHECK(linf_norm(div) < 1e-10);
  (void)vxy;
  (void)vyx;
}

TEST_CASE("temporal convergence rejects bad tau lists") {
  ExperimentConfig base = from_ini("nx = 16\nT = 0.001\n");
  CHECK_THROWS_AS(temporal_convergence(base, {1e-4, 5e-5, 2.5e-5}), ConfigError);
  CHECK_THROWS_AS(temporal_convergence(base, {1e-4, 5e-5, 3e-5, 1.5e-5}),
                  ConfigError);
  CHECK_THROWS_AS(
      temporal_convergence(base, {1e-4, 5e-5, 2.5e-5, -1.25e-5, 6.25e-6}),
      ConfigError);
}

TEST_CASE("forward euler self-converges at first order") {
  ExperimentConfig base = from_ini(
      "nx = 32\nscheme = forward_euler\nepsilon = 0.4\nT = 0.004\nseed = 3\n"
      "[ic]\nkind = random\namplitude = 0.4\n");
  ConvergenceTable t =
      temporal_convergence(base, {4e-5, 2e-5, 1e-5, 5e-6, 2.5e-6});
  REQUIRE(t.rows.size() == 5);
  CHECK(t.rows.back().note == "reference");
  CHECK_FALSE(t.rows.back().error.has_value());
  for (std::size_t i = 0; i + 1 < t.rows.size(); ++i) {
    REQUIRE(t.rows[i].error.has_value());
    CHECK(*t.rows[i].error > 0.0);
  }
  REQUIRE(t.fitted_order.has_value());
  CHECK(*t.fitted_order == Catch::Approx(1.0).margin(0.3));
}

TEST_CASE("etd schemes are exact on the linear surrogate") {
  ExperimentConfig base = from_ini(
      "nx = 16\nscheme = etd_rk2\nepsilon = 0.4\nT = 0.004\nseed = 3\n"
      "[model]\nlinear_only = true\n[ic]\nkind = random\namplitude = 0.4\n");
  ConvergenceTable t = temporal_convergence(base, {4e-5, 2e-5, 1e-5, 5e-6});
  // every non-reference error sits at the rounding floor
  for (std::size_t i = 0; i + 1 < t.rows.size(); ++i) {
    REQUIRE(t.rows[i].error.has_value());
    CHECK(t.rows[i].note == "noise-floor");
  }
  CHECK_FALSE(t.fitted_order.has_value());
}

TEST_CASE("temporal convergence is independent of the job count") {
  ExperimentConfig base = from_ini(
      "nx = 16\nscheme = etd_rk1\nepsilon = 0.4\nT = 0.004\nseed = 1\n"
      "[ic]\nkind = random\namplitude = 0.3\n");
  ConvergenceTable a = temporal_convergence(base, {4e-5, 2e-5, 1e-5, 5e-6}, 1);
  ConvergenceTable b = temporal_convergence(base, {4e-5, 2e-5, 1e-5, 5e-6}, 2);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].error.has_value() == b.rows[i].error.has_value());
    if (a.rows[i].error) CHECK(*a.rows[i].error == *b.rows[i].error);
  }
}

TEST_CASE("epsilon sweep validates its list and produces contours") {
  ExperimentConfig base = from_ini("T = 0.02\n");
  CHECK_THROWS_AS(
      epsilon_sweep(base, {0.1, 0.2}, fresh_dir("sweep_bad")), ConfigError);

  const fs::path dir = fresh_dir("sweep");
  ConvergenceTable t = epsilon_sweep(base, {0.1}, dir);
  REQUIRE(t.rows.size() == 1);
  REQUIRE(t.rows[0].error.has_value());
  CHECK(*t.rows[0].error > 0.0);
  CHECK(*t.rows[0].error < 0.05);  // a resolved run tracks the circle closely
  CHECK_FALSE(t.fitted_order.has_value());
  CHECK(fs::exists(dir / "cell-0" / "contour.csv"));
  CHECK(fs::exists(dir / "cell-0" / "meta.json"));

  ExperimentConfig far = base;
  far.bench_R0 = 3.0;  // nearly touches its periodic image
  CHECK_THROWS_AS(epsilon_sweep(far, {0.2}, fresh_dir("sweep_clear")),
                  ClearanceViolation);
}

TEST_CASE("spatial study separates spectral and fd2 behaviour") {
  ExperimentConfig base = from_ini(
      "epsilon = 0.4\ntau = 0.001\nT = 0.01\n"
      "[ic]\nkind = tanh\nradius = 1.5\n[space]\nreference_n = 64\n");
  CHECK_THROWS_AS(spectral_vs_fd_study(base, {16, 48}), ConfigError);
  CHECK_THROWS_AS(spectral_vs_fd_study(base, {16}), ConfigError);

  SpaceStudyResult r = spectral_vs_fd_study(base, {16, 32});
  REQUIRE(r.spectral.rows.size() == 2);
  REQUIRE(r.fd2.rows.size() == 2);
  // eps = 0.4: both grids are resolved (N >= 2/eps = 5)
  CHECK(r.spectral.rows[0].note.empty());
  REQUIRE(r.spectral.rows[1].observed_order.has_value());
  CHECK(*r.spectral.rows[1].observed_order > 0.0);
  CHECK_FALSE(r.spectral.fitted_order.has_value());
  REQUIRE(r.fd2.fitted_order.has_value());
  CHECK(*r.fd2.fitted_order == Catch::Approx(2.0).margin(0.5));

  // With a sharper interface the spectral rows collapse much faster than any
  // fixed algebraic order once both grids resolve the transition layer
  // (2/eps = 10 here): the error drops by well over a factor 10 per doubling,
  // while fd2 can at best manage 2^2.
  ExperimentConfig sharp = base;
  sharp.model.epsilon = 0.2;
  SpaceStudyResult r2 = spectral_vs_fd_study(sharp, {16, 32});
  CHECK(r2.spectral.rows[0].note.empty());
  REQUIRE(r2.spectral.rows[1].observed_order.has_value());
  CHECK(*r2.spectral.rows[1].observed_order > std::log2(10.0));
}

TEST_CASE("spatial study flags under-resolved rows and excludes them from fits") {
  ExperimentConfig base = from_ini(
      "epsilon = 0.1\ntau = 0.001\nT = 0.002\n"
      "[ic]\nkind = tanh\nradius = 1.5\n[space]\nreference_n = 64\n");
  SpaceStudyResult r = spectral_vs_fd_study(base, {16, 32});
  // 2/eps = 20: N = 16 is under-resolved, N = 32 is fine
  CHECK(r.fd2.rows[0].note == "under-resolved");
  CHECK(r.fd2.rows[1].note.empty());
  // the only order pair touches an under-resolved row -> no fit
  CHECK_FALSE(r.fd2.fitted_order.has_value());
}

TEST_CASE("mcf benchmark enforces its preconditions") {
  // resolution: eps must cover at least two cells
  ExperimentConfig coarse = from_ini("nx = 64\nepsilon = 0.05\ntau = 0.0001\nT = 0.001\n");
  CHECK_THROWS_AS(benchmark_mcf_circle(coarse, fresh_dir("bench_res")),
                  ValidationError);
  // clearance: the initial circle must stay away from its images
  ExperimentConfig tight = from_ini("nx = 256\nepsilon = 0.1\ntau = 0.0001\nT = 0.001\n");
  tight.bench_R0 = 2.9;
  CHECK_THROWS_AS(benchmark_mcf_circle(tight, fresh_dir("bench_clear")),
                  ClearanceViolation);
  // wrong model kind
  ExperimentConfig ch = from_ini(
      "model = cahn_hilliard\nnx = 256\nepsilon = 0.1\ntau = 0.0001\nT = 0.001\n");
  CHECK_THROWS_AS(benchmark_mcf_circle(ch, fresh_dir("bench_kind")),
                  ValidationError);
}

TEST_CASE("mcf benchmark with T below tau just measures the initial radius") {
  ExperimentConfig cfg = from_ini(
      "nx = 128\nepsilon = 0.1\ntau = 0.001\nT = 0.0001\n");
  const fs::path dir = fresh_dir("bench_t0");
  McfBenchmarkResult r = benchmark_mcf_circle(cfg, dir);
  REQUIRE(r.radius_series.size() == 1);
  CHECK(r.max_radius_error <= cfg.grid.hx());
  CHECK(fs::exists(dir / "radius.csv"));
}

TEST_CASE("summary json aggregates rule outcomes") {
  const fs::path dir = fresh_dir("summary");
  std::vector<RuleResult> rules = {{"first", true, "ok"},
                                   {"second", false, "0.3 > 0.2"}};
  write_summary_json(dir / "summary.json", "bench", {{"epsilon", "0.1"}}, rules,
                     {});
  const std::string body = slurp(dir / "summary.json");
  CHECK(body.find("\"experiment\": \"bench\"") != std::string::npos);
  CHECK(body.find("\"pass\": false") != std::string::npos);
  CHECK(body.find("\"second\"") != std::string::npos);
}

TEST_CASE("run_indexed_cells propagates the lowest failing index") {
  std::vector<int> visited(4, 0);
  try {
    run_indexed_cells(4, 2, [&](int i) {
      visited[static_cast<std::size_t>(i)] = 1;
      if (i == 1) throw ValidationError("cell", "boom at 1");
      if (i == 2) throw ValidationError("cell", "boom at 2");
    });
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("boom at 1") != std::string::npos);
  }
  CHECK(visited[0] == 1);
  CHECK(visited[3] == 1);
}
