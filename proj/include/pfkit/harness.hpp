#pragma once

// Experiment harness: typed configuration, simulation runs with series and
// snapshot outputs, and the four study drivers (mean-curvature-flow circle
// benchmark, temporal self-convergence, epsilon sweep, spectral-vs-fd2
// spatial study).
//
// Conventions shared by all drivers:
//   * Reference protocol: time studies self-converge against the finest-tau
//     run in the list; space studies compare against a high-resolution
//     spectral reference restricted to the coarse grid.
//   * Observed orders are log2(e_i / e_{i+1}) for halved parameters and are
//     attached to the finer row of each pair.  For self-convergence fits the
//     pair adjacent to the reference is excluded: with errors
//     e_i = C (tau_i^p - tau_ref^p) that pair's ratio is (2^{2p}-1)/(2^p-1)
//     (log2 = 1.58 for p = 1), a pure artifact of the shared reference.
//   * Cells of a sweep may run on separate threads (--jobs); results and
//     errors are merged by cell index, never by completion order.
//   * Directory layout: <out>/<experiment>/<cell-id>/{series.csv, step_*.f64,
//     meta.json}; one CSV per convergence table plus summary.json on top.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pfkit/config.hpp"
#include "pfkit/diagnostics.hpp"
#include "pfkit/errors.hpp"
#include "pfkit/geometry.hpp"
#include "pfkit/grid.hpp"
#include "pfkit/integrators.hpp"
#include "pfkit/io.hpp"
#include "pfkit/model.hpp"
#include "pfkit/operators.hpp"

namespace pfkit {

// --- initial conditions -----------------------------------------------------------

struct InitialCondition {
  enum class Kind { tanh_shape, random, constant };
  Kind kind = Kind::random;
  SignedDistanceSpec shape =
      SignedDistanceSpec::make_circle(std::numbers::pi, std::numbers::pi, 1.0);
  double amplitude = 0.05;  // random: u0 = amplitude * uniform[-1, 1]
  double value = 0.0;       // constant: u0 == value
};

inline ScalarField build_initial_condition(const GridSpec& g,
                                           const InitialCondition& ic,
                                           double eps, std::uint64_t seed,
                                           ClearanceReport* report = nullptr) {
  switch (ic.kind) {
    case InitialCondition::Kind::tanh_shape:
      return tanh_profile(g, ic.shape, eps, report);
    case InitialCondition::Kind::random:
      if (!(ic.amplitude >= 0.0))
        throw ValidationError("ic.amplitude", "must be non-negative");
      return deterministic_random_field(g, seed, ic.amplitude);
    case InitialCondition::Kind::constant: {
      ScalarField u;
      u.grid = g;
      u.a.assign(g.size(), ic.value);
      return u;
    }
  }
  throw ValidationError("ic.kind", "unknown initial-condition kind");
}

// --- experiment configuration -----------------------------------------------------

struct ExperimentConfig {
  ModelSpec model;   // kind, epsilon, alpha, space, linear_only
  SchemeSpec scheme;
  GridSpec grid;
  double tau = 1e-4;
  double T = 0.1;
  InitialCondition ic;
  std::string advection_preset = "none";  // none | vortex
  double advection_amplitude = 1.0;
  long long snapshot_every = 0;  // 0: automatic (initial + final only)
  bool record_radius = false;
  std::array<double, 2> radius_center{std::numbers::pi, std::numbers::pi};
  bool record_lambda = false;
  long long lambda_every = 1;
  double lambda_tol = 1e-8;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
  // Study parameters.
  double bench_R0 = 1.0;
  std::vector<double> tau_list;
  std::vector<double> epsilon_list;
  std::vector<long long> grid_list;
  long long reference_n = 512;

  void validate() const {
    grid.validate();
    model.validate(grid);
    scheme.validate(model);
    if (!(tau > 0.0)) throw ValidationError("tau", "must be positive");
    if (!(T >= 0.0)) throw ValidationError("T", "must be non-negative");
    if (snapshot_every < 0)
      throw ValidationError("snapshot_every", "must be >= 1 (or omitted)");
    if (ic.kind == InitialCondition::Kind::tanh_shape) ic.shape.validate();
    if (ic.kind == InitialCondition::Kind::random && !(ic.amplitude >= 0.0))
      throw ValidationError("ic.amplitude", "must be non-negative");
    if (lambda_every < 1)
      throw ValidationError("lambda_every", "must be >= 1");
    if (!(lambda_tol > 0.0))
      throw ValidationError("lambda_tol", "must be positive");
    if (advection_preset != "none" && advection_preset != "vortex")
      throw ValidationError("model.advection", "unknown preset '" +
                            advection_preset + "' (none | vortex)");
    if (model.kind == ModelKind::convective_allen_cahn &&
        advection_preset == "none")
      throw ValidationError("model.advection",
                            "convective model needs a velocity preset");
    if (model.kind != ModelKind::convective_allen_cahn &&
        advection_preset != "none")
      throw ValidationError("model.advection",
                            "only convective_allen_cahn carries advection");
    if (!(bench_R0 > 0.0)) throw ValidationError("bench.R0", "must be positive");
    if (reference_n < 2)
      throw ValidationError("space.reference_n", "must be >= 2");
  }
};

// --- enum parsing -----------------------------------------------------------------

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "allen_cahn") return ModelKind::allen_cahn;
  if (s == "cahn_hilliard") return ModelKind::cahn_hilliard;
  if (s == "convective_allen_cahn") return ModelKind::convective_allen_cahn;
  throw ValidationError("model.kind", "unknown model '" + s + "'");
}

inline SchemeKind scheme_kind_from_string(const std::string& s) {
  if (s == "forward_euler") return SchemeKind::forward_euler;
  if (s == "backward_euler") return SchemeKind::backward_euler;
  if (s == "crank_nicolson_mid") return SchemeKind::crank_nicolson_mid;
  if (s == "cn_discrete_variation") return SchemeKind::cn_discrete_variation;
  if (s == "convex_splitting") return SchemeKind::convex_splitting;
  if (s == "stabilized_imex") return SchemeKind::stabilized_imex;
  if (s == "etd_rk1") return SchemeKind::etd_rk1;
  if (s == "etd_rk2") return SchemeKind::etd_rk2;
  if (s == "ieq") return SchemeKind::ieq;
  if (s == "sav") return SchemeKind::sav;
  throw ValidationError("scheme.kind", "unknown scheme '" + s + "'");
}

inline DiffMethod diff_method_from_string(const std::string& s) {
  if (s == "spectral") return DiffMethod::spectral;
  if (s == "fd2") return DiffMethod::fd2;
  throw ValidationError("model.space", "unknown discretization '" + s + "'");
}

namespace detail {

// Bare top-level keys accepted as shorthand for their qualified form.
inline const std::vector<std::pair<const char*, const char*>>& config_aliases() {
  static const std::vector<std::pair<const char*, const char*>> a = {
      {"model", "model.kind"},   {"scheme", "scheme.kind"},
      {"epsilon", "model.epsilon"}, {"alpha", "model.alpha"},
      {"tau", "time.tau"},       {"T", "time.T"},
      {"nx", "grid.nx"},         {"ny", "grid.ny"},
      {"seed", "run.seed"},      {"out", "output.dir"},
  };
  return a;
}

inline ConfigMap normalize_config(const ConfigMap& raw) {
  ConfigMap out;
  for (const std::string& k : raw.keys()) {
    std::string target = k;
    if (k.find('.') == std::string::npos)
      for (const auto& [bare, qual] : config_aliases())
        if (k == bare) {
          target = qual;
          break;
        }
    out.set(target, *raw.get(k));
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig experiment_config_from(
    const ConfigMap& raw, std::vector<std::string>* defaulted_out = nullptr) {
  const ConfigMap cfg_map = detail::normalize_config(raw);
  ConfigReader r(cfg_map);
  ExperimentConfig cfg;

  cfg.model.kind = model_kind_from_string(r.get_string("model.kind", "allen_cahn"));
  cfg.model.epsilon = r.get_double("model.epsilon", 0.05);
  cfg.model.alpha = r.get_double("model.alpha", 2.0);
  cfg.model.space = diff_method_from_string(r.get_string("model.space", "spectral"));
  cfg.model.linear_only = r.get_bool("model.linear_only", false);
  cfg.advection_preset = r.get_string(
      "model.advection",
      cfg.model.kind == ModelKind::convective_allen_cahn ? "vortex" : "none");
  cfg.advection_amplitude = r.get_double("model.advection_amplitude", 1.0);

  cfg.scheme.kind = scheme_kind_from_string(r.get_string("scheme.kind", "etd_rk2"));
  cfg.scheme.newton_tol = r.get_double("scheme.newton_tol", 1e-10);
  cfg.scheme.newton_max_iter =
      static_cast<int>(r.get_int("scheme.newton_max_iter", 50));
  if (r.has("scheme.stabilization"))
    cfg.scheme.S = r.require_double("scheme.stabilization");
  cfg.scheme.dealias = r.get_bool("scheme.dealias", false);

  cfg.grid.nx = static_cast<int>(r.get_int("grid.nx", 256));
  cfg.grid.ny = static_cast<int>(r.get_int("grid.ny", cfg.grid.nx));
  cfg.grid.Lx = r.get_double("grid.Lx", 2.0 * std::numbers::pi);
  cfg.grid.Ly = r.get_double("grid.Ly", cfg.grid.Lx);

  cfg.tau = r.get_double("time.tau", 1e-4);
  cfg.T = r.get_double("time.T", 0.1);

  const std::string ic_kind = r.get_string("ic.kind", "random");
  const double cx = r.get_double("ic.cx", 0.5 * cfg.grid.Lx);
  const double cy = r.get_double("ic.cy", 0.5 * cfg.grid.Ly);
  if (ic_kind == "random") {
    cfg.ic.kind = InitialCondition::Kind::random;
    cfg.ic.amplitude = r.get_double("ic.amplitude", 0.05);
  } else if (ic_kind == "constant") {
    cfg.ic.kind = InitialCondition::Kind::constant;
    cfg.ic.value = r.get_double("ic.value", 0.0);
  } else if (ic_kind == "tanh") {
    cfg.ic.kind = InitialCondition::Kind::tanh_shape;
    const std::string shape = r.get_string("ic.shape", "circle");
    const double radius = r.get_double("ic.radius", 1.0);
    if (shape == "circle") {
      cfg.ic.shape = SignedDistanceSpec::make_circle(cx, cy, radius);
    } else if (shape == "union") {
      cfg.ic.shape = SignedDistanceSpec::make_union(
          {Circle{cx, cy, radius},
           Circle{r.require_double("ic.cx2"), r.require_double("ic.cy2"),
                  r.require_double("ic.radius2")}});
    } else if (shape == "annulus") {
      cfg.ic.shape = SignedDistanceSpec::make_annulus(
          cx, cy, radius, r.get_double("ic.inner_radius", 0.5 * radius));
    } else if (shape == "stripe") {
      const std::string axis = r.get_string("ic.stripe_axis", "x");
      if (axis != "x" && axis != "y")
        throw ValidationError("ic.stripe_axis", "must be x or y");
      cfg.ic.shape = SignedDistanceSpec::make_stripe(
          axis == "x" ? 0 : 1, r.get_double("ic.stripe_offset", 0.0));
    } else {
      throw ValidationError("ic.shape", "unknown shape '" + shape + "'");
    }
  } else {
    throw ValidationError("ic.kind",
                          "must be tanh, random, or constant (got '" +
                              ic_kind + "')");
  }

  cfg.out_dir = r.get_string("output.dir", "out");
  cfg.snapshot_every = r.get_int("output.snapshot_every", 0);

  cfg.record_radius = r.get_bool("diagnostics.radius", false);
  cfg.radius_center[0] = r.get_double("diagnostics.radius_cx", cx);
  cfg.radius_center[1] = r.get_double("diagnostics.radius_cy", cy);
  cfg.record_lambda = r.get_bool("diagnostics.lambda", false);
  cfg.lambda_every = r.get_int("diagnostics.lambda_every", 1);
  cfg.lambda_tol = r.get_double("diagnostics.lambda_tol", 1e-8);

  cfg.seed = static_cast<std::uint64_t>(r.get_int("run.seed", 0));

  cfg.bench_R0 = r.get_double("bench.R0", 1.0);
  cfg.tau_list = r.get_double_list("converge.tau_list");
  cfg.epsilon_list = r.get_double_list("sweep.epsilon_list");
  for (double n : r.get_double_list("space.grid_list"))
    cfg.grid_list.push_back(static_cast<long long>(n));
  cfg.reference_n = r.get_int("space.reference_n", 512);

  r.finish();
  if (defaulted_out) *defaulted_out = r.defaulted_keys();
  cfg.validate();
  return cfg;
}

// Full echo of a config; re-parsing the result reproduces the config exactly
// (the `report --show-config` round-trip).
inline ConfigMap to_config_map(const ExperimentConfig& cfg) {
  ConfigMap m;
  auto setd = [&](const char* k, double v) { m.set(k, detail::format_double(v)); };
  auto seti = [&](const char* k, long long v) { m.set(k, std::to_string(v)); };
  auto setb = [&](const char* k, bool v) { m.set(k, v ? "true" : "false"); };

  m.set("model.kind", to_string(cfg.model.kind));
  setd("model.epsilon", cfg.model.epsilon);
  setd("model.alpha", cfg.model.alpha);
  m.set("model.space",
        cfg.model.space == DiffMethod::spectral ? "spectral" : "fd2");
  setb("model.linear_only", cfg.model.linear_only);
  m.set("model.advection", cfg.advection_preset);
  setd("model.advection_amplitude", cfg.advection_amplitude);

  m.set("scheme.kind", to_string(cfg.scheme.kind));
  setd("scheme.newton_tol", cfg.scheme.newton_tol);
  seti("scheme.newton_max_iter", cfg.scheme.newton_max_iter);
  if (cfg.scheme.S) setd("scheme.stabilization", *cfg.scheme.S);
  setb("scheme.dealias", cfg.scheme.dealias);

  seti("grid.nx", cfg.grid.nx);
  seti("grid.ny", cfg.grid.ny);
  setd("grid.Lx", cfg.grid.Lx);
  setd("grid.Ly", cfg.grid.Ly);

  setd("time.tau", cfg.tau);
  setd("time.T", cfg.T);

  switch (cfg.ic.kind) {
    case InitialCondition::Kind::random:
      m.set("ic.kind", "random");
      setd("ic.amplitude", cfg.ic.amplitude);
      break;
    case InitialCondition::Kind::constant:
      m.set("ic.kind", "constant");
      setd("ic.value", cfg.ic.value);
      break;
    case InitialCondition::Kind::tanh_shape: {
      m.set("ic.kind", "tanh");
      const SignedDistanceSpec& sd = cfg.ic.shape;
      switch (sd.shape) {
        case SignedDistanceSpec::Shape::circle:
          m.set("ic.shape", "circle");
          setd("ic.cx", sd.circles[0].cx);
          setd("ic.cy", sd.circles[0].cy);
          setd("ic.radius", sd.circles[0].R);
          break;
        case SignedDistanceSpec::Shape::circle_union:
          m.set("ic.shape", "union");
          setd("ic.cx", sd.circles[0].cx);
          setd("ic.cy", sd.circles[0].cy);
          setd("ic.radius", sd.circles[0].R);
          setd("ic.cx2", sd.circles[1].cx);
          setd("ic.cy2", sd.circles[1].cy);
          setd("ic.radius2", sd.circles[1].R);
          break;
        case SignedDistanceSpec::Shape::annulus:
          m.set("ic.shape", "annulus");
          setd("ic.cx", sd.circles[0].cx);
          setd("ic.cy", sd.circles[0].cy);
          setd("ic.radius", sd.circles[0].R);
          setd("ic.inner_radius", sd.inner_radius);
          break;
        case SignedDistanceSpec::Shape::stripe:
          m.set("ic.shape", "stripe");
          m.set("ic.stripe_axis", sd.stripe_axis == 0 ? "x" : "y");
          setd("ic.stripe_offset", sd.stripe_offset);
          break;
      }
      break;
    }
  }

  m.set("output.dir", cfg.out_dir.string());
  seti("output.snapshot_every", cfg.snapshot_every);

  setb("diagnostics.radius", cfg.record_radius);
  setd("diagnostics.radius_cx", cfg.radius_center[0]);
  setd("diagnostics.radius_cy", cfg.radius_center[1]);
  setb("diagnostics.lambda", cfg.record_lambda);
  seti("diagnostics.lambda_every", cfg.lambda_every);
  setd("diagnostics.lambda_tol", cfg.lambda_tol);

  seti("run.seed", static_cast<long long>(cfg.seed));
  setd("bench.R0", cfg.bench_R0);

  auto set_list = [&](const char* k, const std::vector<double>& v) {
    if (v.empty()) return;
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ' ';
      s += detail::format_double(v[i]);
    }
    m.set(k, s);
  };
  set_list("converge.tau_list", cfg.tau_list);
  set_list("sweep.epsilon_list", cfg.epsilon_list);
  if (!cfg.grid_list.empty()) {
    std::string s;
    for (std::size_t i = 0; i < cfg.grid_list.size(); ++i) {
      if (i) s += ' ';
      s += std::to_string(cfg.grid_list[i]);
    }
    m.set("space.grid_list", s);
  }
  seti("space.reference_n", cfg.reference_n);
  return m;
}

// Builds the runnable model (materializes the advection preset on the grid).
inline ModelSpec materialize_model(const ExperimentConfig& cfg) {
  ModelSpec m = cfg.model;
  if (cfg.advection_preset == "vortex") {
    const GridSpec& g = cfg.grid;
    AdvectionField v;
    v.vx.grid = g;
    v.vy.grid = g;
    v.vx.a.resize(g.size());
    v.vy.a.resize(g.size());
    // Stream function psi = A sin(2 pi x / Lx) sin(2 pi y / Ly):
    // v = (psi_y, -psi_x), divergence-free for any Lx, Ly.
    const double kx = 2.0 * std::numbers::pi / g.Lx;
    const double ky = 2.0 * std::numbers::pi / g.Ly;
    const double A = cfg.advection_amplitude;
    for (int iy = 0; iy < g.ny; ++iy)
      for (int ix = 0; ix < g.nx; ++ix) {
        const double qx = kx * g.x(ix), qy = ky * g.y(iy);
        v.vx.a[g.index(ix, iy)] = A * ky * std::sin(qx) * std::cos(qy);
        v.vy.a[g.index(ix, iy)] = -A * kx * std::cos(qx) * std::sin(qy);
      }
    m.advection = std::move(v);
  }
  return m;
}

// --- run --------------------------------------------------------------------------

struct RunResult {
  SimState state;
  std::vector<SeriesRecord> series;
  std::vector<std::filesystem::path> snapshots;
  long long steps = 0;
  double final_time = 0.0;
};

namespace detail {

inline long long resolve_step_count(double T, double tau) {
  if (T == 0.0) return 0;
  const long long n = std::llround(T / tau);
  if (n < 1 || std::abs(static_cast<double>(n) * tau - T) >
                   1e-6 * std::max(T, tau))
    throw ValidationError("T", "must be a non-negative integer multiple of tau");
  return n;
}

inline nlohmann::json config_json(const ExperimentConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  const ConfigMap m = to_config_map(cfg);
  for (const std::string& k : m.keys()) j[k] = *m.get(k);
  return j;
}

inline void write_meta(const std::filesystem::path& dir,
                       const ExperimentConfig& cfg,
                       const std::vector<std::string>& defaulted,
                       const nlohmann::json& extra) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["config"] = config_json(cfg);
  j["defaulted_keys"] = defaulted;
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  std::ofstream out(dir / "meta.json", std::ios::trunc);
  if (!out)
    throw FileNotFound("cannot open for writing: " + (dir / "meta.json").string());
  out << j.dump(2) << '\n';
}

}  // namespace detail

// Runs cfg to T, writing series.csv, snapshots, and meta.json into cell_dir.
// On divergence the partial series and meta are flushed before the error is
// re-thrown, so outputs up to the failing step survive.
inline RunResult run_simulation(
    const ExperimentConfig& cfg, const std::filesystem::path& cell_dir,
    const std::vector<std::string>& defaulted = {}) {
  cfg.validate();
  std::filesystem::create_directories(cell_dir);
  const ModelSpec model = materialize_model(cfg);
  const long long nsteps = detail::resolve_step_count(cfg.T, cfg.tau);
  const long long every =
      cfg.snapshot_every > 0 ? cfg.snapshot_every : std::max<long long>(nsteps, 1);

  RunResult res;
  SimState s = init_aux(cfg.scheme, build_initial_condition(cfg.grid, cfg.ic,
                                                            cfg.model.epsilon,
                                                            cfg.seed),
                        cfg.model.epsilon);

  RecordOptions ropts;
  ropts.with_radius = cfg.record_radius;
  ropts.radius_center = cfg.radius_center;
  ropts.lambda_tol = cfg.lambda_tol;
  if (cfg.record_lambda && cfg.ic.kind == InitialCondition::Kind::tanh_shape &&
      cfg.ic.shape.shape == SignedDistanceSpec::Shape::circle)
    ropts.lambda_seed = radial_bump_seed(cfg.grid, cfg.ic.shape.circles[0].cx,
                                         cfg.ic.shape.circles[0].cy);

  auto record = [&](const StepReport* rep) {
    RecordOptions o = ropts;
    o.with_lambda = cfg.record_lambda &&
                    (s.n % cfg.lambda_every == 0 || s.n == nsteps);
    res.series.push_back(record_step(s, model, cfg.scheme, o, rep));
  };

  record(nullptr);
  res.snapshots.push_back(write_snapshot(cell_dir, s, model, cfg.scheme));

  auto flush = [&](const nlohmann::json& extra) {
    write_series_csv(cell_dir / "series.csv", res.series);
    detail::write_meta(cell_dir, cfg, defaulted, extra);
  };

  try {
    for (long long n = 1; n <= nsteps; ++n) {
      StepResult r = step(model, cfg.scheme, s, cfg.tau);
      s = std::move(r.state);
      record(&r.report);
      if (n % every == 0 || n == nsteps)
        res.snapshots.push_back(write_snapshot(cell_dir, s, model, cfg.scheme));
    }
  } catch (const Error&) {
    nlohmann::json extra;
    extra["status"] = "diverged";
    extra["steps_completed"] = s.n;
    extra["final_time"] = s.t;
    flush(extra);
    throw;
  }

  res.steps = nsteps;
  res.final_time = s.t;
  nlohmann::json extra;
  extra["status"] = "ok";
  extra["steps_completed"] = nsteps;
  extra["final_time"] = s.t;
  flush(extra);
  res.state = std::move(s);
  return res;
}

// --- convergence tables -----------------------------------------------------------

struct ConvergenceRow {
  double parameter = 0.0;
  std::optional<double> error;
  std::optional<double> observed_order;
  std::string note;  // "", "reference", "diverged", "noise-floor", "under-resolved"
};

struct ConvergenceTable {
  std::string parameter_name;
  std::string metric;
  std::vector<ConvergenceRow> rows;
  std::optional<double> fitted_order;
};

inline void write_convergence_csv(const std::filesystem::path& path,
                                  const ConvergenceTable& t) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FileNotFound("cannot open for writing: " + path.string());
  out << t.parameter_name << ",error,observed_order,note\n";
  for (const ConvergenceRow& r : t.rows) {
    out << detail::format_double(r.parameter) << ',';
    if (r.error) out << detail::format_double(*r.error);
    out << ',';
    if (r.observed_order) out << detail::format_double(*r.observed_order);
    out << ',' << r.note << '\n';
  }
}

inline nlohmann::json convergence_table_json(const ConvergenceTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const ConvergenceRow& r : t.rows) {
    nlohmann::json row;
    row[t.parameter_name] = r.parameter;
    if (r.error) row["error"] = *r.error;
    if (r.observed_order) row["observed_order"] = *r.observed_order;
    if (!r.note.empty()) row["note"] = r.note;
    rows.push_back(std::move(row));
  }
  nlohmann::json j;
  j["parameter"] = t.parameter_name;
  j["metric"] = t.metric;
  j["rows"] = std::move(rows);
  if (t.fitted_order)
    j["fitted_order"] = *t.fitted_order;
  else
    j["fitted_order"] = nullptr;
  return j;
}

struct RuleResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

inline void write_summary_json(const std::filesystem::path& path,
                               const std::string& experiment,
                               const nlohmann::json& parameters,
                               const std::vector<RuleResult>& rules,
                               const nlohmann::json& extra = {}) {
  nlohmann::json j;
  j["experiment"] = experiment;
  j["parameters"] = parameters;
  nlohmann::json jr = nlohmann::json::array();
  bool all = true;
  for (const RuleResult& r : rules) {
    jr.push_back({{"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
    all = all && r.pass;
  }
  j["rules"] = std::move(jr);
  j["pass"] = all;
  if (!extra.is_null())
    for (auto it = extra.begin(); it != extra.end(); ++it)
      j[it.key()] = it.value();
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FileNotFound("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
}

// --- indexed concurrent cells -----------------------------------------------------

// Runs fn(0..ncells-1), at most `jobs` at a time.  Exceptions are captured
// per cell and the lowest-index failure is re-thrown after all cells finish,
// so error reporting does not depend on completion order.
template <typename Fn>
inline void run_indexed_cells(int ncells, int jobs, Fn&& fn) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || ncells <= 1) {
    for (int i = 0; i < ncells; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(ncells));
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= ncells) return;
      try {
        fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const int nthreads = std::min(jobs, ncells);
  pool.reserve(static_cast<std::size_t>(nthreads));
  for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

// --- mean-curvature-flow circle benchmark -----------------------------------------

struct McfBenchmarkResult {
  std::vector<std::array<double, 3>> radius_series;  // t, R_num, R_exact
  double max_radius_error = 0.0;
  double final_time = 0.0;
  ClearanceReport clearance;
};

// Shrinking-circle benchmark against R(t) = sqrt(R0^2 - 2 t) (the fast-time
// curvature-flow law).  Hard preconditions: eps >= 2h and interface
// clearance; the run stops at 0.8 * R0^2/2, before the law and the layer
// break down near extinction.
inline McfBenchmarkResult benchmark_mcf_circle(
    const ExperimentConfig& cfg, const std::filesystem::path& cell_dir,
    const std::vector<std::string>& defaulted = {}) {
  cfg.validate();
  if (cfg.model.kind != ModelKind::allen_cahn)
    throw ValidationError("model.kind", "mcf circle benchmark requires allen_cahn");
  const GridSpec& g = cfg.grid;
  const double eps = cfg.model.epsilon;
  const double h = std::max(g.hx(), g.hy());
  if (!(eps >= 2.0 * h))
    throw ValidationError(
        "epsilon", "benchmark requires eps >= 2h (h = " +
                       std::to_string(h) + "); refine the grid or enlarge eps");
  const double R0 = cfg.bench_R0;
  const std::array<double, 2> center{0.5 * g.Lx, 0.5 * g.Ly};
  const SignedDistanceSpec sd =
      SignedDistanceSpec::make_circle(center[0], center[1], R0);
  const ClearanceReport clearance = check_clearance(g, sd, eps);
  if (!clearance.ok)
    throw ClearanceViolation(
        "benchmark circle too close to its periodic images (clearance " +
            std::to_string(clearance.min_clearance) + " < " +
            std::to_string(clearance_factor * eps) + ")",
        clearance.min_clearance);

  const double t_guard = 0.8 * 0.5 * R0 * R0;
  const double T_run = std::min(cfg.T, t_guard);
  const long long nsteps = std::max<long long>(
      0, static_cast<long long>(std::floor(T_run / cfg.tau + 1e-9)));

  std::filesystem::create_directories(cell_dir);
  const ModelSpec model = materialize_model(cfg);
  SimState s = init_aux(cfg.scheme, tanh_profile(g, sd, eps), eps);

  McfBenchmarkResult res;
  res.clearance = clearance;
  std::vector<SeriesRecord> series;
  RecordOptions ropts;
  ropts.with_radius = true;
  ropts.radius_center = center;

  auto observe = [&](const StepReport* rep) {
    SeriesRecord rec = record_step(s, model, cfg.scheme, ropts, rep);
    series.push_back(rec);
    if (!rec.radius)
      throw EmptyContour("benchmark interface vanished at t = " +
                         std::to_string(s.t));
    const double r_exact = std::sqrt(std::max(0.0, R0 * R0 - 2.0 * s.t));
    res.radius_series.push_back({s.t, *rec.radius, r_exact});
    res.max_radius_error =
        std::max(res.max_radius_error, std::abs(*rec.radius - r_exact));
  };

  const long long every =
      cfg.snapshot_every > 0 ? cfg.snapshot_every : std::max<long long>(nsteps, 1);
  observe(nullptr);
  write_snapshot(cell_dir, s, model, cfg.scheme);
  auto flush = [&](const char* status) {
    write_series_csv(cell_dir / "series.csv", series);
    std::ofstream rout(cell_dir / "radius.csv", std::ios::trunc);
    rout << "t,R_num,R_exact\n";
    for (const auto& row : res.radius_series)
      rout << detail::format_double(row[0]) << ','
           << detail::format_double(row[1]) << ','
           << detail::format_double(row[2]) << '\n';
    nlohmann::json extra;
    extra["status"] = status;
    extra["final_time"] = s.t;
    extra["max_radius_error"] = res.max_radius_error;
    extra["min_clearance"] = clearance.min_clearance;
    detail::write_meta(cell_dir, cfg, defaulted, extra);
  };
  try {
    for (long long n = 1; n <= nsteps; ++n) {
      StepResult r = step(model, cfg.scheme, s, cfg.tau);
      s = std::move(r.state);
      observe(&r.report);
      if (n % every == 0 || n == nsteps)
        write_snapshot(cell_dir, s, model, cfg.scheme);
    }
  } catch (const Error&) {
    flush("diverged");
    throw;
  }
  res.final_time = s.t;
  flush("ok");
  return res;
}

// --- temporal self-convergence ----------------------------------------------------

namespace detail {

inline double l2_norm_field(const ScalarField& f) {
  return std::sqrt(inner_product_l2(f, f));
}

inline double l2_diff(const ScalarField& a, const ScalarField& b) {
  require_conformable(a.grid, b.grid);
  ScalarField d = a;
  for (std::size_t i = 0; i < d.a.size(); ++i) d.a[i] -= b.a[i];
  return l2_norm_field(d);
}

inline void require_halving(const std::vector<double>& v, const char* what) {
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    if (!(v[i] > 0.0) || !(v[i + 1] > 0.0))
      throw ConfigError(std::string(what) + " values must be positive");
    if (std::abs(v[i + 1] - 0.5 * v[i]) > 1e-9 * v[i])
      throw ConfigError(std::string(what) +
                        " list must halve between consecutive entries");
  }
}

}  // namespace detail

// Self-convergence study: all runs share the initial data and end time; the
// finest-tau run is the reference, the others report L2 errors against it.
// Diverged cells are marked and excluded; errors below the reference noise
// floor are marked "noise-floor" and give no usable order.  The fitted order
// averages the observed orders excluding the pair adjacent to the reference
// (see the header comment).
inline ConvergenceTable temporal_convergence(const ExperimentConfig& base,
                                             std::vector<double> taus,
                                             int jobs = 1) {
  if (taus.size() < 4)
    throw ConfigError("temporal convergence needs at least 4 tau values");
  std::sort(taus.begin(), taus.end(), std::greater<double>());
  detail::require_halving(taus, "tau");
  for (double tau : taus) detail::resolve_step_count(base.T, tau);

  const int ncells = static_cast<int>(taus.size());
  std::vector<std::optional<ScalarField>> finals(taus.size());
  std::vector<std::string> failure(taus.size());
  std::vector<std::exception_ptr> failure_exc(taus.size());

  const ModelSpec model = materialize_model(base);
  const ScalarField u0 =
      build_initial_condition(base.grid, base.ic, base.model.epsilon, base.seed);

  run_indexed_cells(ncells, jobs, [&](int i) {
    const double tau = taus[static_cast<std::size_t>(i)];
    const long long nsteps = detail::resolve_step_count(base.T, tau);
    SimState s = init_aux(base.scheme, u0, base.model.epsilon);
    try {
      for (long long n = 1; n <= nsteps; ++n)
        s = step(model, base.scheme, s, tau).state;
      finals[static_cast<std::size_t>(i)] = std::move(s.u);
    } catch (const Error&) {
      failure[static_cast<std::size_t>(i)] = "diverged";
      failure_exc[static_cast<std::size_t>(i)] = std::current_exception();
    }
  });

  const std::size_t ref = taus.size() - 1;
  if (!finals[ref]) std::rethrow_exception(failure_exc[ref]);
  const double floor = 1e-12 * std::max(1.0, detail::l2_norm_field(*finals[ref]));

  ConvergenceTable t;
  t.parameter_name = "tau";
  t.metric = "L2(u(T) - u_ref(T))";
  std::vector<std::optional<double>> err(taus.size());
  for (std::size_t i = 0; i < ref; ++i)
    if (finals[i]) err[i] = detail::l2_diff(*finals[i], *finals[ref]);

  for (std::size_t i = 0; i < taus.size(); ++i) {
    ConvergenceRow row;
    row.parameter = taus[i];
    if (i == ref) {
      row.note = "reference";
    } else if (!finals[i]) {
      row.note = "diverged";
    } else {
      row.error = err[i];
      if (*err[i] < floor) row.note = "noise-floor";
      if (i > 0 && err[i - 1] && finals[i] && *err[i] > 0.0 && *err[i - 1] > 0.0)
        row.observed_order = std::log2(*err[i - 1] / *err[i]);
    }
    t.rows.push_back(std::move(row));
  }

  // Fit: average usable orders, dropping the reference-adjacent pair
  // (i == ref - 1) and anything touching the noise floor.
  std::vector<double> usable;
  for (std::size_t i = 1; i < ref; ++i) {
    if (i == ref - 1) continue;
    if (!err[i] || !err[i - 1]) continue;
    if (*err[i] < floor || *err[i - 1] < floor) continue;
    if (!(*err[i] > 0.0) || !(*err[i - 1] > 0.0)) continue;
    usable.push_back(std::log2(*err[i - 1] / *err[i]));
  }
  if (!usable.empty()) {
    double sum = 0.0;
    for (double o : usable) sum += o;
    t.fitted_order = sum / static_cast<double>(usable.size());
  }
  return t;
}

// --- epsilon sweep ----------------------------------------------------------------

namespace detail {

inline int next_pow2_at_least(double x) {
  int n = 2;
  while (static_cast<double>(n) < x && n < (1 << 24)) n *= 2;
  return n;
}

// Densely sampled analytic circle as a Contour (for Hausdorff comparisons).
inline Contour analytic_circle_contour(std::array<double, 2> center, double R,
                                       double Lx, double Ly, int n = 2048) {
  Contour c;
  c.Lx = Lx;
  c.Ly = Ly;
  Contour::Polyline pl;
  pl.closed = true;
  pl.pts.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i) /
                     static_cast<double>(n);
    double x = std::fmod(center[0] + R * std::cos(a), Lx);
    double y = std::fmod(center[1] + R * std::sin(a), Ly);
    if (x < 0.0) x += Lx;
    if (y < 0.0) y += Ly;
    pl.pts.push_back({x, y});
  }
  c.polylines.push_back(std::move(pl));
  return c;
}

}  // namespace detail

// Sharp-interface-limit sweep: for each eps (halving list) run the shrinking
// circle with the balanced resolution rule h <= eps/4, tau = eps^2/8, and
// measure the Hausdorff distance between the numeric zero contour at the
// final time and the analytic circle.  The fitted order is the least-squares
// slope of log(dist) against log(eps).
inline ConvergenceTable epsilon_sweep(const ExperimentConfig& base,
                                      const std::vector<double>& eps_list,
                                      const std::filesystem::path& out_dir,
                                      int jobs = 1,
                                      const std::vector<std::string>& defaulted = {}) {
  if (eps_list.empty()) throw ConfigError("epsilon sweep needs at least one eps");
  detail::require_halving(eps_list, "epsilon");

  const int ncells = static_cast<int>(eps_list.size());
  std::vector<double> dist(eps_list.size(), 0.0);

  run_indexed_cells(ncells, jobs, [&](int i) {
    const double eps = eps_list[static_cast<std::size_t>(i)];
    ExperimentConfig cfg = base;
    cfg.model.epsilon = eps;
    cfg.model.kind = ModelKind::allen_cahn;
    cfg.advection_preset = "none";
    cfg.grid.nx = detail::next_pow2_at_least(4.0 * base.grid.Lx / eps);
    cfg.grid.ny = detail::next_pow2_at_least(4.0 * base.grid.Ly / eps);
    cfg.tau = eps * eps / 8.0;
    const std::array<double, 2> center{0.5 * cfg.grid.Lx, 0.5 * cfg.grid.Ly};
    const double R0 = cfg.bench_R0;
    // Hard resolution guard for benchmark experiments.
    const double h = std::max(cfg.grid.hx(), cfg.grid.hy());
    if (!(h <= 0.5 * eps))
      throw ValidationError("grid", "benchmark resolution rule h <= eps/2 violated");
    const SignedDistanceSpec sd =
        SignedDistanceSpec::make_circle(center[0], center[1], R0);
    const ClearanceReport clearance = check_clearance(cfg.grid, sd, eps);
    if (!clearance.ok)
      throw ClearanceViolation("sweep circle too close to periodic images",
                               clearance.min_clearance);

    const long long nsteps = std::llround(cfg.T / cfg.tau);
    const ModelSpec model = materialize_model(cfg);
    SimState s = init_aux(cfg.scheme, tanh_profile(cfg.grid, sd, eps), eps);
    for (long long n = 1; n <= nsteps; ++n)
      s = step(model, cfg.scheme, s, cfg.tau).state;

    const Contour numeric = extract_zero_contour(s.u);
    const double r_exact =
        std::sqrt(std::max(0.0, R0 * R0 - 2.0 * s.t));
    const Contour analytic = detail::analytic_circle_contour(
        center, r_exact, cfg.grid.Lx, cfg.grid.Ly);
    dist[static_cast<std::size_t>(i)] = hausdorff_distance(numeric, analytic);

    const std::filesystem::path cell =
        out_dir / ("cell-" + std::to_string(i));
    std::filesystem::create_directories(cell);
    write_snapshot(cell, s, model, cfg.scheme);
    write_contour_csv(cell / "contour.csv", numeric);
    nlohmann::json extra;
    extra["status"] = "ok";
    extra["epsilon"] = eps;
    extra["hausdorff"] = dist[static_cast<std::size_t>(i)];
    extra["final_time"] = s.t;
    detail::write_meta(cell, cfg, defaulted, extra);
  });

  ConvergenceTable t;
  t.parameter_name = "epsilon";
  t.metric = "hausdorff(numeric contour, analytic circle)";
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    ConvergenceRow row;
    row.parameter = eps_list[i];
    row.error = dist[i];
    if (i > 0 && dist[i] > 0.0 && dist[i - 1] > 0.0)
      row.observed_order = std::log2(dist[i - 1] / dist[i]);
    t.rows.push_back(std::move(row));
  }
  if (eps_list.size() >= 2) {
    // Least-squares slope of log(dist) vs log(eps).
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(eps_list.size());
    for (std::size_t i = 0; i < eps_list.size(); ++i) {
      const double x = std::log(eps_list[i]);
      const double y = std::log(std::max(dist[i], 1e-300));
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    t.fitted_order = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  }
  return t;
}

// --- spectral vs fd2 spatial study ------------------------------------------------

struct SpaceStudyResult {
  ConvergenceTable spectral;
  ConvergenceTable fd2;
};

namespace detail {

// Restriction of a fine-grid field to a coarse power-of-two subgrid
// (collocation points coincide when the ratio is integral).
inline ScalarField restrict_to(const ScalarField& fine, const GridSpec& coarse) {
  if (fine.grid.nx % coarse.nx != 0 || fine.grid.ny % coarse.ny != 0)
    throw ValidationError("space.grid_list",
                          "reference grid must be a multiple of every ladder grid");
  const int rx = fine.grid.nx / coarse.nx;
  const int ry = fine.grid.ny / coarse.ny;
  ScalarField out;
  out.grid = coarse;
  out.a.resize(coarse.size());
  for (int iy = 0; iy < coarse.ny; ++iy)
    for (int ix = 0; ix < coarse.nx; ++ix)
      out.a[coarse.index(ix, iy)] = fine.a[fine.grid.index(ix * rx, iy * ry)];
  return out;
}

}  // namespace detail

// Spatial accuracy ladder at fixed tau and T against a high-resolution
// spectral reference.  Rows with N < 2/eps are flagged "under-resolved" and
// excluded from fits.  The spectral table reports raw error ratios through
// observed_order (super-algebraic: ratios >= 10 per doubling once resolved);
// the fd2 table carries a fitted order (expected about 2).
inline SpaceStudyResult spectral_vs_fd_study(const ExperimentConfig& base,
                                             const std::vector<long long>& Ns,
                                             int jobs = 1) {
  if (Ns.size() < 2)
    throw ConfigError("spatial study needs at least two grid sizes");
  for (std::size_t i = 0; i + 1 < Ns.size(); ++i)
    if (Ns[i + 1] != 2 * Ns[i])
      throw ConfigError("grid list must double between consecutive entries");

  // Reference run: spectral at reference_n.
  ExperimentConfig ref_cfg = base;
  ref_cfg.grid.nx = ref_cfg.grid.ny = static_cast<int>(base.reference_n);
  ref_cfg.model.space = DiffMethod::spectral;
  const ModelSpec ref_model = materialize_model(ref_cfg);
  const long long ref_steps = detail::resolve_step_count(base.T, base.tau);
  SimState ref_state =
      init_aux(ref_cfg.scheme,
               build_initial_condition(ref_cfg.grid, ref_cfg.ic,
                                       ref_cfg.model.epsilon, ref_cfg.seed),
               ref_cfg.model.epsilon);
  for (long long n = 1; n <= ref_steps; ++n)
    ref_state = step(ref_model, ref_cfg.scheme, ref_state, base.tau).state;

  const double n_resolved = 2.0 / base.model.epsilon;
  std::vector<double> err_spectral(Ns.size()), err_fd2(Ns.size());

  run_indexed_cells(static_cast<int>(Ns.size()) * 2, jobs, [&](int cell) {
    const std::size_t i = static_cast<std::size_t>(cell / 2);
    const DiffMethod space = cell % 2 == 0 ? DiffMethod::spectral : DiffMethod::fd2;
    ExperimentConfig cfg = base;
    cfg.grid.nx = cfg.grid.ny = static_cast<int>(Ns[i]);
    cfg.model.space = space;
    const ModelSpec model = materialize_model(cfg);
    SimState s = init_aux(cfg.scheme,
                          build_initial_condition(cfg.grid, cfg.ic,
                                                  cfg.model.epsilon, cfg.seed),
                          cfg.model.epsilon);
    const long long nsteps = detail::resolve_step_count(base.T, base.tau);
    for (long long n = 1; n <= nsteps; ++n)
      s = step(model, cfg.scheme, s, base.tau).state;
    const double e =
        detail::l2_diff(s.u, detail::restrict_to(ref_state.u, cfg.grid));
    (space == DiffMethod::spectral ? err_spectral : err_fd2)[i] = e;
  });

  auto build = [&](const std::vector<double>& err, const char* metric,
                   bool fit) {
    ConvergenceTable t;
    t.parameter_name = "N";
    t.metric = metric;
    std::vector<double> orders;
    for (std::size_t i = 0; i < Ns.size(); ++i) {
      ConvergenceRow row;
      row.parameter = static_cast<double>(Ns[i]);
      row.error = err[i];
      const bool resolved = static_cast<double>(Ns[i]) >= n_resolved;
      if (!resolved) row.note = "under-resolved";
      if (i > 0 && err[i] > 0.0 && err[i - 1] > 0.0) {
        row.observed_order = std::log2(err[i - 1] / err[i]);
        const bool prev_resolved =
            static_cast<double>(Ns[i - 1]) >= n_resolved;
        if (resolved && prev_resolved) orders.push_back(*row.observed_order);
      }
      t.rows.push_back(std::move(row));
    }
    if (fit && !orders.empty()) {
      double sum = 0.0;
      for (double o : orders) sum += o;
      t.fitted_order = sum / static_cast<double>(orders.size());
    }
    return t;
  };
  SpaceStudyResult res;
  res.spectral = build(err_spectral, "L2 vs spectral reference (spectral rows)",
                       false);
  res.fd2 = build(err_fd2, "L2 vs spectral reference (fd2 rows)", true);
  return res;
}

}  // namespace pfkit
