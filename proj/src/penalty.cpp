#include "mfrbsde/penalty.hpp"

#include "mfrbsde/analysis.hpp"
#include "mfrbsde/errors.hpp"
#include "sweep.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <random>

namespace mfrbsde {

std::vector<double> PenaltyOptions::default_schedule() {
  std::vector<double> s;
  for (int k = 0; k <= 10; ++k) s.push_back(std::ldexp(1.0, k));
  return s;
}

SolutionBundle base_solve(const ProblemSpec& problem, std::shared_ptr<const Engine> engine,
                          const PicardOptions& options) {
  return detail::picard_iterate(problem, std::move(engine), options, detail::StepMode::free);
}

SolutionBundle penalized_pass(const ProblemSpec& problem, const SolutionBundle& prev,
                              double level, TimeStepping stepping) {
  if (!(level >= 0.0)) throw ModelError("penalty level must be >= 0");
  const Index n = problem.grid.steps();
  if (prev.steps() != n || prev.law.size() != n + 1)
    throw ModelError("penalized_pass: previous level does not match the grid");
  const Engine& e = *prev.engine;

  std::vector<VectorXd> levels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    const auto x = e.states(i);
    const VectorXd& y = prev.y[iu];
    const double t = problem.grid.time(i);
    VectorXd l(y.size());
#pragma omp parallel for schedule(static)
    for (Index k = 0; k < y.size(); ++k) l[k] = problem.obstacle(t, x[k], y[k], prev.law[i]);
    levels[iu] = std::move(l);
  }

  SolutionBundle b;
  detail::init_bundle(problem, prev.engine, b);
  detail::SweepSpec spec;
  spec.problem = &problem;
  spec.engine = &e;
  spec.law = &prev.law;
  spec.stepping = stepping;
  spec.mode = detail::StepMode::penalize;
  spec.penalty = level;
  spec.levels = &levels;
  detail::sweep(spec, 0, n, b);
  b.law = law_curve_of(e, b.y);
  b.driving_law = prev.law;
  b.diagnostics.penalty_level = level;
  return b;
}

ProblemSpec apply_transforms(const ProblemSpec& problem, double theta, double kappa) {
  ProblemSpec work = problem;
  if (kappa > 0.0) work.obstacle = kappa_transform(problem.obstacle, kappa, problem.p_exponent).first;
  if (theta != 0.0) work = theta_transform(work, theta);
  return work;
}

PenaltyFormulation penalty_formulation(const ProblemSpec& problem, const PenaltyOptions& options) {
  double kappa = 0.0;
  if (options.auto_kappa && !problem.obstacle.monotone_in_y() && problem.obstacle.gamma1() > 0.0)
    kappa = 1.0;
  double theta = 0.0;
  if (options.auto_theta && !problem.driver.monotone_in_y) theta = -(problem.driver.c_f() + 1.0);
  return {apply_transforms(problem, theta, kappa), theta, kappa};
}

SolutionBundle reflected_reference(const ProblemSpec& problem, std::shared_ptr<const Engine> engine,
                                   const PenaltyOptions& options) {
  const PenaltyFormulation form = penalty_formulation(problem, options);
  return untransform(picard_solve(form.problem, std::move(engine), options.picard), form.theta);
}

SolutionBundle penalty_solve(const ProblemSpec& problem, std::shared_ptr<const Engine> engine,
                             const PenaltyOptions& options, const LevelObserver& observer) {
  if (options.schedule.empty()) throw ModelError("penalty schedule is empty");
  for (std::size_t k = 1; k < options.schedule.size(); ++k)
    if (!(options.schedule[k] > options.schedule[k - 1]))
      throw ModelError("penalty schedule must be strictly increasing");

  const PenaltyFormulation form = penalty_formulation(problem, options);
  const ProblemSpec& work = form.problem;
  const double theta = form.theta;
  const double kappa = form.kappa;
  spdlog::debug("penalty scheme: theta = {}, kappa = {}", theta, kappa);

  SolutionBundle prev = base_solve(work, engine, options.picard);
  SolutionBundle prev_orig = untransform(prev, theta);
  if (observer) observer(0.0, prev_orig);
  const Diagnostics base_diag = prev.diagnostics;

  std::vector<PenaltyLevelReport> reports;
  bool converged = options.tol <= 0.0;
  const Index n = problem.grid.steps();
  for (double level : options.schedule) {
    SolutionBundle cur = penalized_pass(work, prev, level, options.picard.stepping);
    SolutionBundle cur_orig = untransform(cur, theta);

    PenaltyLevelReport r;
    r.level = level;
    double defect = 0.0;
    for (Index i = 0; i <= n; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      const VectorXd diff = prev_orig.y[iu] - cur_orig.y[iu];
      r.monotonicity_defect = std::max(r.monotonicity_defect, diff.maxCoeff());
      r.sup_change = std::max(r.sup_change, diff.cwiseAbs().maxCoeff());
      if (i < n && level > 0.0) defect += engine->mean(i, cur_orig.dk[iu]) / level;
    }
    r.monotonicity_defect = std::max(0.0, r.monotonicity_defect);
    r.constraint_defect = defect;
    r.skorohod_residual = skorohod_residual(cur_orig, problem);
    r.constraint_violation = constraint_violation(cur_orig, problem);
    spdlog::debug("penalty level {}: sup change {:.3e}, violation {:.3e}", level, r.sup_change,
                  r.constraint_violation);
    reports.push_back(r);
    if (observer) observer(level, cur_orig);

    prev = std::move(cur);
    prev_orig = std::move(cur_orig);
    if (options.tol > 0.0 && r.sup_change < options.tol) {
      converged = true;
      break;
    }
  }

  SolutionBundle out = std::move(prev_orig);
  Diagnostics& d = out.diagnostics;
  d = Diagnostics{};
  d.picard_iters = base_diag.picard_iters;
  d.window_iters = base_diag.window_iters;
  d.window_lambda = base_diag.window_lambda;
  d.final_distance = base_diag.final_distance;
  d.delta_used = base_diag.delta_used;
  d.gamma_condition = base_diag.gamma_condition;
  d.penalty_level = reports.back().level;
  d.skorohod_residual = reports.back().skorohod_residual;
  d.constraint_violation = reports.back().constraint_violation;
  d.converged = converged;
  d.theta = theta;
  d.kappa = kappa;
  d.penalty_levels = std::move(reports);
  const VectorXd m = out.law.means();
  for (Index i = 0; i + 1 < m.size(); ++i)
    d.max_mean_jump = std::max(d.max_mean_jump, std::abs(m[i + 1] - m[i]));
  return out;
}

DominationReport domination_check(const ProblemSpec& problem, std::shared_ptr<const Engine> engine,
                                  const PenaltyOptions& options, Index samples, double tol) {
  const DriverSpec& f = problem.driver;
  if (!f.domination)
    throw ModelError(f.depends_on_z() ? "domination required for z-dependent driver"
                                      : "domination_check: driver declares no domination");
  const Domination& dom = *f.domination;

  DominationReport report;
  report.probe_excess = -std::numeric_limits<double>::infinity();
  {
    const Index n = problem.grid.steps();
    double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
    for (Index i = 0; i <= n; ++i) {
      const auto x = engine->states(i);
      x_lo = std::min(x_lo, x.minCoeff());
      x_hi = std::max(x_hi, x.maxCoeff());
    }
    std::mt19937_64 rng(20240611);
    std::uniform_real_distribution<double> ut(0.0, problem.grid.horizon()), ux(x_lo, x_hi),
        uv(-5.0, 5.0);
    for (Index s = 0; s < samples; ++s) {
      const double t = ut(rng), x = ux(rng), y = uv(rng), z = uv(rng), m = uv(rng);
      const LawView law = LawView::point(m);
      const double excess = f(t, x, y, z, law) - dom.eval(t, x, y, law);
      if (excess > report.probe_excess) report.probe_excess = excess;
      if (excess > tol)
        throw FeasibilityError(fmt::format(
            "driver exceeds its domination by {:.3g} at t={:.6g}, x={:.6g}, y={:.6g}, z={:.6g}, "
            "m={:.6g}",
            excess, t, x, y, z, m));
    }
  }

  DriverSpec phi;
  phi.eval = [g = dom.eval](double t, double x, double y, std::span<const double>,
                            const LawView& law) { return g(t, x, y, law); };
  phi.lip_y = dom.lip_y;
  phi.lip_m = dom.lip_m;
  // Phi is constant in z, so f's z-constant is a valid bound; keeping it gives
  // both problems the same step leaving T and the discrete order stays exact.
  phi.lip_z = f.lip_z;
  phi.monotone_in_y = f.monotone_in_y;
  phi.uses_law_sample = f.uses_law_sample;
  ProblemSpec upper(problem.grid, problem.forward, std::move(phi), problem.obstacle,
                    problem.terminal, problem.p_exponent);
  // Solved in the variables the penalization uses, for the same reason.
  const PenaltyFormulation form = penalty_formulation(problem, options);
  report.dominating = untransform(
      picard_solve(apply_transforms(upper, form.theta, form.kappa), engine, options.picard),
      form.theta);

  const SolutionBundle& bar = report.dominating;
  penalty_solve(problem, engine, options, [&](double level, const SolutionBundle& b) {
    for (std::size_t i = 0; i < b.y.size(); ++i) {
      Index k = 0;
      const double excess = (b.y[i] - bar.y[i]).maxCoeff(&k);
      report.sandwich_excess = std::max(report.sandwich_excess, excess);
      if (excess > tol)
        throw FeasibilityError(fmt::format(
            "penalized solution at level {} exceeds the dominating solution by {:.3g} "
            "(step {}, node {})",
            level, excess, i, k));
    }
  });
  return report;
}

}  // namespace mfrbsde
