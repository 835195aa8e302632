#include "mfrbsde/snell.hpp"

#include "mfrbsde/analysis.hpp"
#include "mfrbsde/errors.hpp"
#include "sweep.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>

namespace mfrbsde {

double reflect_threshold(const ObstacleSpec& obstacle, const LawView& law, double t, double x) {
  // g(y) = y - h(y) is strictly increasing with slope >= 1 - gamma1.
  auto g = [&](double y) { return y - obstacle(t, x, y, law); };
  const double y0 = obstacle(t, x, 0.0, law);
  const double g0 = g(y0);
  if (!std::isfinite(y0) || !std::isfinite(g0))
    throw NumericalError("obstacle is not finite at the threshold search start");
  if (g0 == 0.0) return y0;

  double radius = std::abs(g0) / (1.0 - obstacle.gamma1());
  radius = radius * (1.0 + 1e-9) + 1e-300;
  double lo = y0 - radius, hi = y0 + radius;
  double glo = g(lo), ghi = g(hi);
  for (int expand = 0; !(glo <= 0.0 && ghi >= 0.0); ++expand) {
    if (expand >= 1000) throw NumericalError("reflect_threshold: could not bracket the root");
    radius *= 2.0;
    lo = y0 - radius;
    hi = y0 + radius;
    glo = g(lo);
    ghi = g(hi);
  }
  if (glo == 0.0) return lo;
  if (ghi == 0.0) return hi;

  // Illinois false position.
  int side = 0;
  double y = lo;
  for (int it = 0; it < 300; ++it) {
    y = (lo * ghi - hi * glo) / (ghi - glo);
    if (!(y > lo && y < hi)) y = 0.5 * (lo + hi);
    const double gy = g(y);
    if (gy == 0.0) return y;
    if (gy < 0.0) {
      lo = y;
      glo = gy;
      if (side == -1) ghi *= 0.5;
      side = -1;
    } else {
      hi = y;
      ghi = gy;
      if (side == 1) glo *= 0.5;
      side = 1;
    }
    if (hi - lo <= 1e-12 * std::max(1.0, std::abs(y))) break;
  }
  // Secant polish on the final bracket.
  const double a = g(lo), b = g(hi);
  if (b != a) {
    const double s = lo - a * (hi - lo) / (b - a);
    if (s >= lo && s <= hi && std::abs(g(s)) <= std::abs(g(y))) y = s;
  }
  return y;
}

namespace {

SolutionBundle single_pass(const ProblemSpec& problem, const LawCurve& law,
                           std::shared_ptr<const Engine> engine, TimeStepping stepping,
                           detail::StepMode mode) {
  SolutionBundle b;
  detail::init_bundle(problem, std::move(engine), b);
  detail::SweepSpec spec;
  spec.problem = &problem;
  spec.engine = b.engine.get();
  spec.law = &law;
  spec.stepping = stepping;
  spec.mode = mode;
  detail::sweep(spec, 0, problem.grid.steps(), b);
  b.law = law_curve_of(*b.engine, b.y);
  b.driving_law = law;
  return b;
}

double law_distance(const LawView& a, const LawView& b, double p, CurveMetric metric) {
  if (metric == CurveMetric::mean_only) return std::abs(a.mean() - b.mean());
  return wasserstein_p(a, b, std::max(1.0, p));
}

/// Damped update used when the contraction condition fails; full laws are
/// replaced outright because mixing measures is not needed there.
LawView relax(const LawView& old_law, const LawView& new_law, double damping) {
  if (damping >= 1.0 || new_law.size() > 1 || old_law.size() > 1) return new_law;
  return LawView::point((1.0 - damping) * old_law.mean() + damping * new_law.mean());
}

}  // namespace

SolutionBundle backward_pass(const ProblemSpec& problem, const LawCurve& law,
                             std::shared_ptr<const Engine> engine, TimeStepping stepping) {
  return single_pass(problem, law, std::move(engine), stepping, detail::StepMode::reflect);
}

SolutionBundle unreflected_pass(const ProblemSpec& problem, const LawCurve& law,
                                std::shared_ptr<const Engine> engine, TimeStepping stepping) {
  return single_pass(problem, law, std::move(engine), stepping, detail::StepMode::free);
}

namespace detail {

/// Windowed Picard iteration shared by the reflected and the unreflected solver.
SolutionBundle picard_iterate(const ProblemSpec& problem, std::shared_ptr<const Engine> engine,
                              const PicardOptions& options, StepMode mode) {
  if (!(options.tol > 0.0)) throw ModelError("Picard tolerance must be > 0");
  if (options.max_outer < 1) throw ModelError("max_outer must be >= 1");
  const FeasibilityReport feas = feasibility(problem, options.safety);
  if (!feas.feasible && !options.force)
    throw FeasibilityError(fmt::format(
        "contraction condition fails (value {:.6g} >= 1); no contraction window exists",
        feas.gamma_condition_value));

  SolutionBundle b;
  init_bundle(problem, std::move(engine), b);
  const Engine& e = *b.engine;
  const Index n = problem.grid.steps();
  const double dt = problem.grid.dt();
  const bool full = problem.needs_law_sample() || options.metric == CurveMetric::wasserstein;
  const double damping = feas.feasible ? 1.0 : 0.5;
  const double delta = feas.feasible ? feas.delta_used : std::numeric_limits<double>::infinity();

  Index width = n;
  if (options.windowing && std::isfinite(delta))
    width = std::clamp<Index>(static_cast<Index>(std::floor(delta / dt + 1e-9)), 1, n);

  LawCurve driving(n + 1, LawView());
  driving[n] = summarize(e, n, b.y[static_cast<std::size_t>(n)], full);

  SweepSpec spec;
  spec.problem = &problem;
  spec.engine = &e;
  spec.law = &driving;
  spec.stepping = options.stepping;
  spec.mode = mode;

  Diagnostics& d = b.diagnostics;
  d.delta_used = delta;
  d.gamma_condition = feas.gamma_condition_value;
  d.final_distance = 0.0;

  std::vector<LawView> candidate(static_cast<std::size_t>(n + 1));
  for (Index last = n; last > 0;) {
    const Index first = std::max<Index>(0, last - width);
    for (Index i = first; i < last; ++i) driving[i] = driving[last];
    int passes = 0;
    double dist = std::numeric_limits<double>::infinity();
    for (;;) {
      sweep(spec, first, last, b);
      ++passes;
      dist = 0.0;
      for (Index i = first; i < last; ++i) {
        candidate[static_cast<std::size_t>(i)] =
            summarize(e, i, b.y[static_cast<std::size_t>(i)], full);
        dist = std::max(dist, law_distance(candidate[static_cast<std::size_t>(i)], driving[i],
                                           problem.p_exponent, options.metric));
      }
      spdlog::debug("picard window [{}, {}) pass {} distance {:.3e}", first, last, passes, dist);
      if (dist < options.tol) break;
      if (passes > options.max_outer)
        throw ConvergenceError(
            fmt::format("Picard iteration did not reach tol {:.3g} within {} iterations",
                        options.tol, options.max_outer),
            dist);
      for (Index i = first; i < last; ++i)
        driving[i] = relax(driving[i], candidate[static_cast<std::size_t>(i)], damping);
    }
    const double length = static_cast<double>(last - first) * dt;
    double lambda = std::numeric_limits<double>::quiet_NaN();
    if (problem.p_exponent > 1.0)
      lambda = contraction_lambda(length, problem.p_exponent, problem.driver.c_f(),
                                  problem.obstacle.gamma1(), problem.obstacle.gamma2());
    else if (problem.p_exponent == 1.0)
      lambda = 2.0 * length * problem.driver.c_f() + problem.obstacle.gamma1() +
               problem.obstacle.gamma2();
    d.window_iters.push_back(passes - 1);
    d.window_lambda.push_back(lambda);
    d.picard_iters = std::max(d.picard_iters, passes - 1);
    d.final_distance = std::max(d.final_distance, dist);
    last = first;
  }

  b.law = law_curve_of(e, b.y);
  b.driving_law = driving;
  d.converged = true;
  if (mode == StepMode::reflect) {
    d.skorohod_residual = skorohod_residual(b, problem);
    d.constraint_violation = constraint_violation(b, problem);
  }
  const VectorXd m = b.law.means();
  for (Index i = 0; i + 1 < m.size(); ++i)
    d.max_mean_jump = std::max(d.max_mean_jump, std::abs(m[i + 1] - m[i]));
  return b;
}

}  // namespace detail

SolutionBundle picard_solve(const ProblemSpec& problem, std::shared_ptr<const Engine> engine,
                            const PicardOptions& options) {
  return detail::picard_iterate(problem, std::move(engine), options, detail::StepMode::reflect);
}

double skorohod_residual(const SolutionBundle& bundle, const ProblemSpec& problem) {
  const Engine& e = *bundle.engine;
  const TimeGrid& grid = e.grid();
  double total = 0.0;
  for (Index i = 0; i < bundle.steps(); ++i) {
    const auto iu = static_cast<std::size_t>(i);
    const auto x = e.states(i);
    const VectorXd& y = bundle.y[iu];
    const VectorXd& dk = bundle.dk[iu];
    VectorXd gap(y.size());
    for (Index k = 0; k < y.size(); ++k)
      gap[k] = dk[k] == 0.0
                   ? 0.0
                   : std::abs(y[k] - problem.obstacle(grid.time(i), x[k], y[k],
                                                      bundle.driving_law[i])) *
                         dk[k];
    total += e.mean(i, gap);
  }
  return total;
}

double constraint_violation(const SolutionBundle& bundle, const ProblemSpec& problem) {
  const Engine& e = *bundle.engine;
  const TimeGrid& grid = e.grid();
  double worst = 0.0;
  for (Index i = 0; i <= bundle.steps(); ++i) {
    const auto x = e.states(i);
    const VectorXd& y = bundle.y[static_cast<std::size_t>(i)];
    for (Index k = 0; k < y.size(); ++k)
      worst = std::max(worst,
                       problem.obstacle(grid.time(i), x[k], y[k], bundle.law[i]) - y[k]);
  }
  return worst;
}

double constraint_margin(const SolutionBundle& bundle, const ProblemSpec& problem) {
  const Engine& e = *bundle.engine;
  const TimeGrid& grid = e.grid();
  double margin = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < bundle.steps(); ++i) {
    const auto x = e.states(i);
    const VectorXd& y = bundle.y[static_cast<std::size_t>(i)];
    for (Index k = 0; k < y.size(); ++k)
      margin = std::min(margin, y[k] - problem.obstacle(grid.time(i), x[k], y[k],
                                                        bundle.driving_law[i]));
  }
  return margin;
}

}  // namespace mfrbsde
