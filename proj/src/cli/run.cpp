#include "mfrbsde/cli.hpp"

#include "mfrbsde/analysis.hpp"
#include "mfrbsde/snell.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/os.h>
#include <omp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>

namespace mfrbsde::cli {

using nlohmann::json;

namespace {

void setup_logging() {
  static bool done = false;
  if (done) return;
  done = true;
  auto logger = spdlog::stderr_color_mt("mfrbsde");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* lvl = std::getenv("MFRBSDE_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));
}

std::shared_ptr<const Engine> make_engine(const Config& cfg, const ProblemSpec& problem) {
  if (cfg.engine == "lattice") return std::make_shared<LatticeEngine>(problem.forward, problem.grid);
  if (cfg.paths < static_cast<Index>(cfg.degree) + 1)
    throw ConfigError("engine.paths", "too few paths for the regression basis");
  return std::make_shared<MonteCarloEngine>(
      simulate_paths(problem.forward, problem.grid, cfg.paths, cfg.seed), problem.grid,
      RegressionEngine{cfg.degree, cfg.ridge});
}

json feasibility_json(const FeasibilityReport& r) {
  return {{"p", r.p},
          {"gamma1", r.gamma1},
          {"gamma2", r.gamma2},
          {"c_f", r.c_f},
          {"value", r.gamma_condition_value},
          {"feasible", r.feasible},
          {"lambda_at_zero", r.lambda_at_zero},
          {"delta_max", r.feasible && std::isfinite(r.delta_max) ? json(r.delta_max) : json(nullptr)}};
}

}  // namespace

int run(const std::filesystem::path& config_path, const Overrides& ov, bool validate_only) {
  setup_logging();
  Config cfg;
  try {
    cfg = load_config_file(config_path);
    if (ov.scheme) cfg.scheme = *ov.scheme;
    if (ov.engine) cfg.engine = *ov.engine;
    if (ov.paths) cfg.paths = *ov.paths;
    if (ov.seed) cfg.seed = *ov.seed;
    if (ov.out) cfg.out_dir = *ov.out;
    if (cfg.scheme != "snell" && cfg.scheme != "penalty" && cfg.scheme != "both")
      throw ConfigError("scheme", "expected snell, penalty or both");
    if (cfg.engine != "mc" && cfg.engine != "lattice")
      throw ConfigError("engine", "expected mc or lattice");
    if (cfg.paths < 1) throw ConfigError("engine.paths", "must be >= 1");
    if (!(cfg.picard_tol > 0.0)) throw ConfigError("tolerances.picard", "must be > 0");
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kConfig;
  }
  if (cfg.root_tol != 1e-12)
    spdlog::warn("reflection root tolerance is fixed at 1e-12; tolerances.root ignored");
  if (ov.threads) omp_set_num_threads(std::max(1, *ov.threads));

  const ProblemSpec& problem = *cfg.problem;
  const ValidationReport vr = validate(problem, 5000);
  spdlog::info("validation:\n{}", vr.summary());
  if (validate_only) {
    fmt::print("{}", vr.summary());
    return vr.ok() ? kOk : kValidation;
  }
  if (!vr.ok()) {
    for (const auto& c : vr.checks)
      if (!c.passed && !c.informational) {
        std::string msg = fmt::format("validation failed: {} (worst {:.6g})", c.name, c.worst);
        if (c.name == "contraction_feasible")
          msg = fmt::format(
              "validation failed: contraction condition value {:.6g} >= 1 for p = {}, "
              "gamma1 = {}, gamma2 = {}",
              c.worst, problem.p_exponent, problem.obstacle.gamma1(), problem.obstacle.gamma2());
        else if (!c.witness.empty())
          msg += " at " + c.witness;
        fmt::print(stderr, "{}{}\n", msg, ov.force ? " (continuing: --force)" : "");
      }
    if (!ov.force) return kValidation;
  }

  int rc = kOk;
  try {
    const auto engine = make_engine(cfg, problem);
    PicardOptions po;
    po.tol = cfg.picard_tol;
    po.max_outer = cfg.max_outer;
    po.windowing = cfg.windowing;
    po.force = ov.force;
    po.metric = problem.needs_law_sample() ? CurveMetric::wasserstein : CurveMetric::mean_only;
    po.stepping = cfg.stepping;

    const json extra = {{"problem", cfg.problem_name},
                        {"engine", cfg.engine},
                        {"paths", cfg.engine == "mc" ? json(cfg.paths) : json(nullptr)},
                        {"seed", cfg.seed},
                        {"steps", problem.grid.steps()},
                        {"horizon", problem.grid.horizon()},
                        {"feasibility", feasibility_json(feasibility(problem))}};
    const std::filesystem::path out(cfg.out_dir);
    std::optional<SolutionBundle> snell, penalty;

    if (cfg.scheme == "snell" || cfg.scheme == "both") {
      snell = picard_solve(problem, engine, po);
      json x = extra;
      x["scheme"] = "snell";
      write_report(*snell, problem, out / "snell", cfg.plotdata, x);
      fmt::print("snell: E[Y_0] = {:.10g}, picard iterations {}, skorohod residual {:.3g}\n",
                 snell->mean_y()[0], snell->diagnostics.picard_iters,
                 snell->diagnostics.skorohod_residual);
    }
    if (cfg.scheme == "penalty" || cfg.scheme == "both") {
      PenaltyOptions opt;
      opt.schedule = cfg.penalty_schedule;
      opt.tol = cfg.penalty_tol;
      opt.auto_theta = cfg.auto_theta;
      opt.auto_kappa = cfg.auto_kappa;
      opt.picard = po;
      penalty = penalty_solve(problem, engine, opt);
      json x = extra;
      x["scheme"] = "penalty";
      x["penalty"]["schedule"] = cfg.penalty_schedule;
      write_report(*penalty, problem, out / "penalty", cfg.plotdata, x);
      fmt::print("penalty: E[Y_0] = {:.10g}, final level {}, skorohod residual {:.3g}\n",
                 penalty->mean_y()[0], penalty->diagnostics.penalty_level,
                 penalty->diagnostics.skorohod_residual);
      if (!penalty->diagnostics.converged) {
        fmt::print(stderr, "penalty scheme did not settle below tol {} within the schedule\n",
                   cfg.penalty_tol);
        rc = kNonConvergence;
      }
    }
    if (snell && penalty) {
      const double diff = (snell->mean_y() - penalty->mean_y()).cwiseAbs().maxCoeff();
      const json cross = {{"schema_version", 1},
                          {"sup_mean_difference", diff},
                          {"tol", cfg.cross_tol},
                          {"within_tol", diff <= cfg.cross_tol}};
      auto f = fmt::output_file((out / "cross_scheme.json").string());
      f.print("{}\n", cross.dump(2));
      fmt::print("cross-scheme sup |E[Y]_snell - E[Y]_penalty| = {:.3g}\n", diff);
      if (diff > cfg.cross_tol) spdlog::warn("cross-scheme difference {:.3g} exceeds tol", diff);
    }
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kConfig;
  } catch (const FeasibilityError& e) {
    fmt::print(stderr, "infeasible: {}\n", e.what());
    return kValidation;
  } catch (const ConvergenceError& e) {
    fmt::print(stderr, "not converged: {} (last distance {:.3g})\n", e.what(), e.last_distance());
    return kNonConvergence;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kFailure;
  }
  return rc;
}

int main(int argc, char** argv) {
  CLI::App app{"Mean-field reflected BSDE solver"};
  app.require_subcommand(1);

  std::string config;
  Overrides ov;
  std::string scheme, engine, out;
  Index paths = 0;
  std::uint64_t seed = 0;
  int threads = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON configuration file")->required();
    cmd->add_option("--scheme", scheme, "snell | penalty | both")
        ->check(CLI::IsMember({"snell", "penalty", "both"}));
    cmd->add_option("--engine", engine, "mc | lattice")->check(CLI::IsMember({"mc", "lattice"}));
    cmd->add_option("--paths", paths, "Monte-Carlo paths")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--out", out, "output directory");
    cmd->add_flag("--force", ov.force, "continue when the contraction condition fails");
  };
  CLI::App* solve = app.add_subcommand("solve", "solve the configured problem");
  CLI::App* check = app.add_subcommand("validate", "check the standing assumptions only");
  add_common(solve);
  add_common(check);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  const CLI::App* cmd = solve->parsed() ? solve : check;
  if (cmd->count("--scheme")) ov.scheme = scheme;
  if (cmd->count("--engine")) ov.engine = engine;
  if (cmd->count("--paths")) ov.paths = paths;
  if (cmd->count("--seed")) ov.seed = seed;
  if (cmd->count("--threads")) ov.threads = threads;
  if (cmd->count("--out")) ov.out = out;
  return run(config, ov, cmd == check);
}

}  // namespace mfrbsde::cli
