#include "sweep.hpp"

#include "mfrbsde/errors.hpp"

#include <fmt/format.h>

#include <cmath>
#include <exception>

namespace mfrbsde::detail {

namespace {

constexpr int kMaxInner = 200;

/// Solves y = c + a * g(y) by fixed-point iteration; a * lip(g) < 1 is
/// guaranteed by the dt check in sweep().
template <class G>
double implicit_solve(double c, double a, const G& g) {
  if (a == 0.0) return c;
  double y = c + a * g(c);
  for (int it = 0; it < kMaxInner; ++it) {
    const double next = c + a * g(y);
    const double change = std::abs(next - y);
    y = next;
    if (change <= 1e-15 * std::max(1.0, std::abs(y))) return y;
  }
  const double residual = std::abs(c + a * g(y) - y);
  if (residual > 1e-11 * std::max(1.0, std::abs(y)))
    throw NumericalError(fmt::format("implicit step did not converge (residual {:.3g})", residual));
  return y;
}

/// Runs fn(k) for every node in parallel and rethrows the first failure.
template <class Fn>
void for_nodes(Index n, const Fn& fn) {
  std::exception_ptr error;
#pragma omp parallel for schedule(static)
  for (Index k = 0; k < n; ++k) {
    try {
      fn(k);
    } catch (...) {
#pragma omp critical(mfrbsde_sweep_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

/// Least-squares continuation values are refitted on the paths where the
/// obstacle sits above its floor (the "in the money" paths): those are the
/// only paths where the stopping decision can change, and a global fit is
/// dominated by the far-away ones.
void refit_where_binding(const Engine& engine, Index step, const VectorXd& target,
                         const VectorXd& thresholds, VectorXd& c) {
  const double floor = thresholds.minCoeff();
  std::vector<Index> rows;
  for (Index k = 0; k < thresholds.size(); ++k)
    if (thresholds[k] > floor) rows.push_back(k);
  constexpr Index kMinRows = 100;
  if (static_cast<Index>(rows.size()) < kMinRows || static_cast<Index>(rows.size()) == c.size())
    return;
  const VectorXd local = engine.expect_subset(step, target, rows);
  for (std::size_t r = 0; r < rows.size(); ++r) c[rows[r]] = local[static_cast<Index>(r)];
}

}  // namespace

void init_bundle(const ProblemSpec& problem, std::shared_ptr<const Engine> engine,
                 SolutionBundle& bundle) {
  const Index n = problem.grid.steps();
  if (!(engine->grid() == problem.grid))
    throw ModelError("engine grid does not match the problem grid");
  bundle.engine = std::move(engine);
  bundle.y.assign(static_cast<std::size_t>(n + 1), VectorXd());
  bundle.z.assign(static_cast<std::size_t>(n), VectorXd());
  bundle.dk.assign(static_cast<std::size_t>(n), VectorXd());
  const Engine& e = *bundle.engine;
  const auto x = e.states(n);
  VectorXd xi(x.size());
  for (Index k = 0; k < x.size(); ++k) xi[k] = problem.terminal(x[k]);
  if (!xi.allFinite()) throw NumericalError("terminal condition is not finite");
  bundle.realized.clear();
  if (e.pathwise()) {
    bundle.realized.assign(static_cast<std::size_t>(n + 1), VectorXd());
    bundle.realized[static_cast<std::size_t>(n)] = xi;
  }
  bundle.y[static_cast<std::size_t>(n)] = std::move(xi);
}

void sweep(const SweepSpec& spec, Index first, Index last, SolutionBundle& bundle) {
  const ProblemSpec& problem = *spec.problem;
  const Engine& engine = *spec.engine;
  const LawCurve& law = *spec.law;
  const DriverSpec& f = problem.driver;
  const ObstacleSpec& h = problem.obstacle;
  const TimeGrid& grid = problem.grid;
  const Index n = grid.steps();
  const double dt = grid.dt();
  if (law.size() != n + 1) throw ModelError("law curve must have N+1 points");
  if (f.c_f() * dt >= 1.0)
    throw NumericalError(
        fmt::format("C_f * dt = {:.3g} >= 1; refine the time grid", f.c_f() * dt));
  if (spec.mode == StepMode::penalize && spec.levels == nullptr)
    throw ModelError("penalized sweep needs frozen obstacle levels");

  for (Index i = last - 1; i >= first; --i) {
    const auto iu = static_cast<std::size_t>(i);
    const double t = grid.time(i);
    const auto x = engine.states(i);
    const LawView& li = law[i];
    const VectorXd& next = bundle.y[iu + 1];
    // Path engines regress realised cash flows rather than fitted values, so
    // the max() in the reflection does not compound regression noise.
    const bool pathwise = !bundle.realized.empty();
    const VectorXd& carried = pathwise ? bundle.realized[iu + 1] : next;

    // Z_N does not exist, so the step leaving T is implicit Euler unless f ignores z.
    const bool at_end = i + 1 == n;
    const bool trap =
        spec.stepping == TimeStepping::trapezoidal && (!at_end || !f.depends_on_z());
    VectorXd target = carried;
    if (trap) {
      const double t1 = grid.time(i + 1);
      const auto x1 = engine.states(i + 1);
      const LawView& l1 = law[i + 1];
      for_nodes(next.size(), [&](Index k) {
        const double z1 = at_end ? 0.0 : bundle.z[iu + 1][k];
        target[k] += 0.5 * dt * f(t1, x1[k], next[k], z1, l1);
      });
    }
    VectorXd c = engine.expect(i, target);
    VectorXd z = engine.z(i, carried);
    const double a = (trap ? 0.5 : 1.0) * dt;

    double ystar = 0.0;
    VectorXd thresholds;
    if (spec.mode == StepMode::reflect) {
      if (!h.state_dependent()) {
        ystar = reflect_threshold(h, li, t, x.size() > 0 ? x[0] : 0.0);
      } else {
        thresholds.resize(c.size());
        for_nodes(c.size(), [&](Index k) { thresholds[k] = reflect_threshold(h, li, t, x[k]); });
        if (pathwise) refit_where_binding(engine, i, target, thresholds, c);
      }
    }

    VectorXd y(c.size());
    VectorXd dk = VectorXd::Zero(c.size());
    const VectorXd* levels = spec.levels ? &(*spec.levels)[iu] : nullptr;
    const double np = spec.penalty * dt;

    for_nodes(c.size(), [&](Index k) {
      auto g = [&](double v) { return f(t, x[k], v, z[k], li); };
      const double free = implicit_solve(c[k], a, g);
      switch (spec.mode) {
        case StepMode::free:
          y[k] = free;
          break;
        case StepMode::reflect: {
          const double thr = h.state_dependent() ? thresholds[k] : ystar;
          y[k] = std::max(free, thr);
          dk[k] = y[k] - free;
          break;
        }
        case StepMode::penalize: {
          const double level = (*levels)[k];
          if (free >= level || np == 0.0) {
            y[k] = free;
          } else {
            // Below the level the penalty is active: y = c + a f(y) + np (L - y).
            const double v = implicit_solve((c[k] + np * level) / (1.0 + np), a / (1.0 + np), g);
            y[k] = std::min(v, level);
            dk[k] = np * (level - y[k]);
          }
          break;
        }
      }
    });
    if (!y.allFinite()) throw NumericalError(fmt::format("non-finite Y at step {}", i));
    if (pathwise) {
      VectorXd r = y + (target - c);
      for (Index k = 0; k < r.size(); ++k)
        if (dk[k] > 0.0) r[k] = y[k];
      bundle.realized[iu] = std::move(r);
    }
    bundle.y[iu] = std::move(y);
    bundle.z[iu] = std::move(z);
    bundle.dk[iu] = std::move(dk);
  }
}

LawView summarize(const Engine& engine, Index step, const VectorXd& values, bool full) {
  if (!full) return LawView::point(engine.mean(step, values));
  const VectorXd& w = engine.weights(step);
  return w.size() == 0 ? law_of(values) : law_of(values, w);
}

}  // namespace mfrbsde::detail
