#pragma once

#include "mfrbsde/condexp.hpp"
#include "mfrbsde/law.hpp"
#include "mfrbsde/model.hpp"
#include "mfrbsde/solution.hpp"

#include <memory>

namespace mfrbsde {

/// Time discretisation of the driver integral over [t_i, t_{i+1}].
enum class TimeStepping {
  /// y_i = E_i[Y_{i+1}] + f(t_i, y_i) dt
  implicit_euler,
  /// y_i = E_i[Y_{i+1} + dt/2 f(t_{i+1}, Y_{i+1})] + dt/2 f(t_i, y_i); the step
  /// leaving T is implicit Euler when f reads z, because Z_N does not exist.
  trapezoidal,
};

/// Unique root y* of y = h(t, x, y, law); the admissible set is [y*, inf).
/// Bracket from the contraction bound |y* - y0| <= |y0 - h(y0)| / (1 - g1),
/// expanded by doubling if needed, then Illinois false position to 1e-12 and a
/// final secant (Newton) polish.
double reflect_threshold(const ObstacleSpec& obstacle, const LawView& law, double t = 0.0,
                         double x = 0.0);

struct PicardOptions {
  double tol = 1e-4;
  int max_outer = 200;
  /// Paste solutions over contraction windows (true) or iterate on all of [0, T].
  bool windowing = true;
  double safety = 0.9;
  /// Proceed although the contraction condition fails (global mode, damping 0.5).
  bool force = false;
  CurveMetric metric = CurveMetric::mean_only;
  TimeStepping stepping = TimeStepping::trapezoidal;
};

/// One application of the fixed-point map: dynamic programming for the
/// reflected equation with the law curve frozen.
SolutionBundle backward_pass(const ProblemSpec& problem, const LawCurve& law,
                             std::shared_ptr<const Engine> engine,
                             TimeStepping stepping = TimeStepping::trapezoidal);

/// Same pass with the obstacle switched off (dK = 0).
SolutionBundle unreflected_pass(const ProblemSpec& problem, const LawCurve& law,
                                std::shared_ptr<const Engine> engine,
                                TimeStepping stepping = TimeStepping::trapezoidal);

/// Fixed point of the law-curve map, windowed backward from T over windows of
/// length <= admissible_delta, or globally. Throws ConvergenceError when
/// max_outer is exceeded, FeasibilityError when no contraction window exists
/// and force is off.
SolutionBundle picard_solve(const ProblemSpec& problem, std::shared_ptr<const Engine> engine,
                            const PicardOptions& options = {});

/// E sum_i |Y_i - h(Y_i, m_i)| dK_i with m the driving law of the bundle.
/// Equals the Skorohod integral whenever the constraint holds.
double skorohod_residual(const SolutionBundle& bundle, const ProblemSpec& problem);

/// max over nodes of (h(Y_i, m_i) - Y_i)^+ with m the empirical law of Y.
double constraint_violation(const SolutionBundle& bundle, const ProblemSpec& problem);

/// min over nodes of Y_i - h(Y_i, m_i) with m the driving law.
double constraint_margin(const SolutionBundle& bundle, const ProblemSpec& problem);

}  // namespace mfrbsde
