// pfkit command-line driver.
//
// Subcommands: run | bench | sweep | converge | eig | report.
// Exit codes (the only machine contract; stdout text is not stable API):
//   0  success
//   2  configuration error (bad file, bad key, bad value, precondition)
//   3  numerical divergence or iteration failure (partial outputs preserved)
//   4  acceptance-rule failure in bench/sweep/converge (see summary.json)

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include <pfkit/pfkit.hpp>

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_override;
  std::vector<std::string> overrides;
  int jobs = 1;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool quiet = false;
};

void add_common(CLI::App* sub, CommonArgs& c) {
  sub->add_option("--config", c.config_path, "Configuration file (INI-style)");
  sub->add_option("--out", c.out_override,
                  "Output directory (overrides output.dir)");
  sub->add_option("--set", c.overrides,
                  "Override section.key=value (repeatable)");
  sub->add_option("--jobs", c.jobs, "Maximum concurrent sweep cells")
      ->check(CLI::PositiveNumber);
  sub->add_option("--seed", c.seed, "Random seed (overrides run.seed)")
      ->each([&c](const std::string&) { c.seed_given = true; });
  sub->add_flag("--quiet", c.quiet, "Suppress progress text");
}

std::pair<pfkit::ExperimentConfig, std::vector<std::string>> load_config(
    const CommonArgs& c) {
  pfkit::ConfigMap map;
  if (!c.config_path.empty()) map = pfkit::load_config_file(c.config_path);
  for (const std::string& s : c.overrides) pfkit::apply_override(map, s);
  std::vector<std::string> defaulted;
  pfkit::ExperimentConfig cfg = pfkit::experiment_config_from(map, &defaulted);
  if (!c.out_override.empty()) cfg.out_dir = c.out_override;
  if (c.seed_given) cfg.seed = c.seed;
  return {std::move(cfg), std::move(defaulted)};
}

int cmd_run(const pfkit::ExperimentConfig& cfg,
            const std::vector<std::string>& defaulted, bool quiet) {
  const std::filesystem::path dir = cfg.out_dir / "run";
  const std::filesystem::path cell = dir / "cell-0";
  try {
    pfkit::RunResult r = pfkit::run_simulation(cfg, cell, defaulted);
    nlohmann::json extra;
    extra["status"] = "ok";
    extra["steps"] = r.steps;
    extra["final_time"] = r.final_time;
    extra["cell"] = cell.string();
    pfkit::write_summary_json(dir / "summary.json", "run",
                              pfkit::detail::config_json(cfg), {}, extra);
    if (!quiet)
      std::cout << "run: " << r.steps << " steps to t = " << r.final_time
                << ", outputs in " << cell.string() << "\n";
    return 0;
  } catch (const pfkit::Diverged& e) {
    nlohmann::json extra;
    extra["status"] = "diverged";
    extra["diverged_step"] = e.step;
    extra["message"] = e.what();
    pfkit::write_summary_json(dir / "summary.json", "run",
                              pfkit::detail::config_json(cfg), {}, extra);
    throw;
  } catch (const pfkit::NewtonDiverged& e) {
    nlohmann::json extra;
    extra["status"] = "diverged";
    extra["newton_residual"] = e.residual;
    extra["newton_iters"] = e.iters;
    extra["message"] = e.what();
    pfkit::write_summary_json(dir / "summary.json", "run",
                              pfkit::detail::config_json(cfg), {}, extra);
    throw;
  }
}

int cmd_bench(const pfkit::ExperimentConfig& cfg,
              const std::vector<std::string>& defaulted, bool quiet) {
  const std::filesystem::path dir = cfg.out_dir / "bench_mcf_circle";
  pfkit::McfBenchmarkResult b =
      pfkit::benchmark_mcf_circle(cfg, dir / "cell-0", defaulted);
  const double tol = 2.0 * cfg.model.epsilon;
  std::vector<pfkit::RuleResult> rules;
  rules.push_back({"max_radius_error_le_2eps", b.max_radius_error <= tol,
                   "max |R_num - R_exact| = " +
                       std::to_string(b.max_radius_error) + " vs 2 eps = " +
                       std::to_string(tol)});
  nlohmann::json extra;
  extra["max_radius_error"] = b.max_radius_error;
  extra["final_time"] = b.final_time;
  extra["min_clearance"] = b.clearance.min_clearance;
  pfkit::write_summary_json(dir / "summary.json", "bench_mcf_circle",
                            pfkit::detail::config_json(cfg), rules, extra);
  bool pass = true;
  for (const auto& r : rules) pass = pass && r.pass;
  if (!quiet)
    std::cout << "bench mcf-circle: max radius error " << b.max_radius_error
              << (pass ? " (pass)" : " (FAIL)") << "\n";
  return pass ? 0 : 4;
}

int cmd_sweep(const pfkit::ExperimentConfig& cfg,
              const std::vector<std::string>& defaulted, int jobs, bool quiet) {
  std::vector<double> eps_list = cfg.epsilon_list;
  if (eps_list.empty()) eps_list = {0.1, 0.05, 0.025};
  const std::filesystem::path dir = cfg.out_dir / "epsilon_sweep";
  pfkit::ConvergenceTable t =
      pfkit::epsilon_sweep(cfg, eps_list, dir, jobs, defaulted);
  pfkit::write_convergence_csv(dir / "hausdorff.csv", t);

  std::vector<pfkit::RuleResult> rules;
  if (t.rows.size() >= 2) {
    bool decreasing = true;
    for (std::size_t i = 0; i + 1 < t.rows.size(); ++i)
      decreasing = decreasing && *t.rows[i].error > *t.rows[i + 1].error;
    rules.push_back({"hausdorff_strictly_decreasing", decreasing, ""});
    const bool in_window =
        t.fitted_order && *t.fitted_order >= 0.7 && *t.fitted_order <= 1.5;
    rules.push_back({"epsilon_order_in_[0.7,1.5]", in_window,
                     t.fitted_order ? "fitted order " +
                                          std::to_string(*t.fitted_order)
                                    : "no fitted order"});
  }
  nlohmann::json extra;
  extra["table"] = pfkit::convergence_table_json(t);
  pfkit::write_summary_json(dir / "summary.json", "epsilon_sweep",
                            pfkit::detail::config_json(cfg), rules, extra);
  bool pass = true;
  for (const auto& r : rules) pass = pass && r.pass;
  if (!quiet)
    std::cout << "epsilon sweep: fitted order "
              << (t.fitted_order ? std::to_string(*t.fitted_order) : "n/a")
              << (pass ? " (pass)" : " (FAIL)") << "\n";
  return pass ? 0 : 4;
}

int cmd_converge(const pfkit::ExperimentConfig& cfg,
                 const std::vector<std::string>& defaulted, int jobs,
                 bool quiet) {
  if (cfg.tau_list.empty())
    throw pfkit::ConfigError("converge.tau_list is required (>= 4 halving taus)");
  const std::filesystem::path dir = cfg.out_dir / "temporal_convergence";
  pfkit::ConvergenceTable t =
      pfkit::temporal_convergence(cfg, cfg.tau_list, jobs);
  std::filesystem::create_directories(dir);
  pfkit::write_convergence_csv(dir / "orders.csv", t);

  std::vector<pfkit::RuleResult> rules;
  const bool etd_linear = cfg.model.linear_only &&
                          (cfg.scheme.kind == pfkit::SchemeKind::etd_rk1 ||
                           cfg.scheme.kind == pfkit::SchemeKind::etd_rk2);
  if (etd_linear) {
    bool all_floor = true;
    for (const auto& row : t.rows)
      if (row.error && row.note != "noise-floor") all_floor = false;
    rules.push_back({"exact_on_linear_surrogate", all_floor,
                     "all errors at reference-noise floor"});
  } else {
    const double target = pfkit::is_second_order(cfg.scheme.kind) ? 2.0 : 1.0;
    const bool in_window = t.fitted_order &&
                           std::abs(*t.fitted_order - target) <= 0.3;
    rules.push_back(
        {"temporal_order_within_0.3", in_window,
         t.fitted_order
             ? "fitted " + std::to_string(*t.fitted_order) + " vs target " +
                   std::to_string(target)
             : "no fitted order"});
  }
  nlohmann::json extra;
  extra["table"] = pfkit::convergence_table_json(t);
  pfkit::write_summary_json(dir / "summary.json", "temporal_convergence",
                            pfkit::detail::config_json(cfg), rules, extra);
  bool pass = true;
  for (const auto& r : rules) pass = pass && r.pass;
  if (!quiet)
    std::cout << "temporal convergence: fitted order "
              << (t.fitted_order ? std::to_string(*t.fitted_order) : "n/a")
              << (pass ? " (pass)" : " (FAIL)") << "\n";
  return pass ? 0 : 4;
}

int cmd_eig(const pfkit::ExperimentConfig& cfg,
            const std::vector<std::string>& defaulted, bool quiet) {
  pfkit::ScalarField u0 = pfkit::build_initial_condition(
      cfg.grid, cfg.ic, cfg.model.epsilon, cfg.seed);
  std::optional<pfkit::ScalarField> seed;
  if (cfg.ic.kind == pfkit::InitialCondition::Kind::tanh_shape &&
      cfg.ic.shape.shape == pfkit::SignedDistanceSpec::Shape::circle)
    seed = pfkit::radial_bump_seed(cfg.grid, cfg.ic.shape.circles[0].cx,
                                   cfg.ic.shape.circles[0].cy);
  else if (cfg.ic.kind == pfkit::InitialCondition::Kind::constant) {
    // The constant function is the exact principal eigenfunction here.
    pfkit::InitialCondition cs;
    cs.kind = pfkit::InitialCondition::Kind::constant;
    cs.value = 1.0;
    seed = pfkit::build_initial_condition(cfg.grid, cs, cfg.model.epsilon,
                                          cfg.seed);
  }
  const double lambda = pfkit::principal_eigenvalue(
      u0, cfg.model.epsilon, cfg.lambda_tol, std::move(seed));
  const std::filesystem::path dir = cfg.out_dir / "eig";
  nlohmann::json extra;
  extra["lambda_min"] = lambda;
  extra["epsilon"] = cfg.model.epsilon;
  pfkit::write_summary_json(dir / "summary.json", "eig",
                            pfkit::detail::config_json(cfg), {}, extra);
  (void)defaulted;
  if (!quiet) std::cout << "lambda_min = ";
  std::cout << lambda << "\n";
  return 0;
}

int cmd_report(const pfkit::ExperimentConfig& cfg,
               const std::vector<std::string>& defaulted, bool quiet) {
  std::cout << pfkit::to_config_map(cfg).to_ini();
  if (!quiet && !defaulted.empty()) {
    std::cerr << "# defaulted keys:";
    for (const std::string& k : defaulted) std::cerr << ' ' << k;
    std::cerr << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pfkit: phase-field gradient-flow simulation toolkit"};
  app.require_subcommand(1);

  CommonArgs c;
  bool show_config = false;
  CLI::App* sub_run = app.add_subcommand("run", "Integrate a configuration to T");
  CLI::App* sub_bench =
      app.add_subcommand("bench", "Shrinking-circle curvature-flow benchmark");
  CLI::App* sub_sweep =
      app.add_subcommand("sweep", "Epsilon sweep (sharp-interface order)");
  CLI::App* sub_converge =
      app.add_subcommand("converge", "Temporal self-convergence study");
  CLI::App* sub_eig =
      app.add_subcommand("eig", "Principal eigenvalue of the linearized operator");
  CLI::App* sub_report =
      app.add_subcommand("report", "Echo the effective configuration");
  for (CLI::App* s :
       {sub_run, sub_bench, sub_sweep, sub_converge, sub_eig, sub_report})
    add_common(s, c);
  sub_report->add_flag("--show-config", show_config,
                       "Print the fully-defaulted configuration (default)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    auto [cfg, defaulted] = load_config(c);
    if (sub_run->parsed()) return cmd_run(cfg, defaulted, c.quiet);
    if (sub_bench->parsed()) return cmd_bench(cfg, defaulted, c.quiet);
    if (sub_sweep->parsed()) return cmd_sweep(cfg, defaulted, c.jobs, c.quiet);
    if (sub_converge->parsed())
      return cmd_converge(cfg, defaulted, c.jobs, c.quiet);
    if (sub_eig->parsed()) return cmd_eig(cfg, defaulted, c.quiet);
    if (sub_report->parsed()) return cmd_report(cfg, defaulted, c.quiet);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const pfkit::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const pfkit::ClearanceViolation& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const pfkit::WrongKind& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const pfkit::MissingAdvection& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const pfkit::Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
