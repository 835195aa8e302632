#include "mfrbsde/cli.hpp"

#include "mfrbsde/snell.hpp"

#include <fmt/format.h>
#include <fmt/os.h>

#include <cmath>
#include <limits>

namespace mfrbsde::cli {

using nlohmann::json;

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string num(double v) { return fmt::format("{:.17g}", v); }

}  // namespace

void write_report(const SolutionBundle& bundle, const ProblemSpec& problem,
                  const std::filesystem::path& dir, bool plotdata, const json& extra) {
  if (!bundle.engine || bundle.y.empty() || bundle.y.back().size() == 0)
    throw NumericalError("write_report: bundle holds no paths");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(fmt::format("cannot create output directory {}: {}", dir.string(), ec.message()));

  const Engine& e = *bundle.engine;
  const TimeGrid& grid = e.grid();
  const Index n = bundle.steps();
  const LawCurve law = bundle.law.size() == n + 1 ? bundle.law : law_curve_of(e, bundle.y);

  {
    auto out = fmt::output_file((dir / "timeseries.csv").string());
    out.print("t,mean_Y,std_Y,mean_K,mean_Z,constraint_violation\n");
    double k = 0.0;
    for (Index i = 0; i <= n; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      const VectorXd& y = bundle.y[iu];
      const double m = e.mean(i, y);
      const double var = std::max(0.0, e.mean(i, (y.array() - m).square().matrix()));
      const double mz = i < n ? e.mean(i, bundle.z[iu]) : std::numeric_limits<double>::quiet_NaN();
      double viol = 0.0;
      const auto x = e.states(i);
      for (Index j = 0; j < y.size(); ++j)
        viol = std::max(viol, problem.obstacle(grid.time(i), x[j], y[j], law[i]) - y[j]);
      out.print("{},{},{},{},{},{}\n", num(grid.time(i)), num(m), num(std::sqrt(var)), num(k),
                i < n ? num(mz) : std::string("nan"), num(viol));
      if (i < n) k += e.mean(i, bundle.dk[iu]);
    }
  }

  if (plotdata) {
    auto out = fmt::output_file((dir / "plotdata.csv").string());
    out.print("t,q05,q50,q95\n");
    for (Index i = 0; i <= n; ++i) {
      const LawView full = law[i].size() == bundle.y[static_cast<std::size_t>(i)].size()
                               ? law[i]
                               : law_curve_of(e, {bundle.y[static_cast<std::size_t>(i)]})[0];
      out.print("{},{},{},{}\n", num(grid.time(i)), num(full.quantile(0.05)),
                num(full.quantile(0.5)), num(full.quantile(0.95)));
    }
  }

  const Diagnostics& d = bundle.diagnostics;
  json doc = {
      {"schema_version", 1},
      {"gamma_condition", {{"value", d.gamma_condition}, {"p", problem.p_exponent}}},
      {"delta_used", finite_or_null(d.delta_used)},
      {"picard",
       {{"iterations", d.picard_iters},
        {"window_iterations", d.window_iters},
        {"window_lambda", json::array()},
        {"final_distance", d.final_distance}}},
      {"skorohod_residual", d.skorohod_residual},
      {"constraint_violation", d.constraint_violation},
      {"max_mean_jump", d.max_mean_jump},
      {"converged", d.converged},
      {"theta", d.theta},
      {"kappa", d.kappa},
      {"mean_Y0", e.mean(0, bundle.y[0])},
  };
  for (double l : d.window_lambda) doc["picard"]["window_lambda"].push_back(finite_or_null(l));
  json levels = json::array();
  for (const auto& r : d.penalty_levels)
    levels.push_back({{"n", r.level},
                      {"monotonicity_defect", r.monotonicity_defect},
                      {"constraint_defect", r.constraint_defect},
                      {"skorohod_residual", r.skorohod_residual},
                      {"constraint_violation", r.constraint_violation},
                      {"sup_change", r.sup_change}});
  doc["penalty"] = {{"final_level", d.penalty_level}, {"levels", levels}};
  if (extra.is_object()) doc.update(extra, true);

  auto out = fmt::output_file((dir / "diagnostics.json").string());
  out.print("{}\n", doc.dump(2));
}

}  // namespace mfrbsde::cli
