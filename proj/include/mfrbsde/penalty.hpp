#pragma once

#include "mfrbsde/snell.hpp"

#include <functional>
#include <vector>

namespace mfrbsde {

struct PenaltyOptions {
  /// Increasing penalty levels n_1 < n_2 < ...; default 2^0 .. 2^10.
  std::vector<double> schedule = default_schedule();
  /// Stop early once sup |Y^n - Y^{n-1}| < tol; 0 runs the whole schedule.
  double tol = 1e-3;
  /// Solve in the exponentially transformed variables when f is not
  /// nondecreasing in y, theta = -(C_f + 1).
  bool auto_theta = true;
  /// Replace h by Psi_1 when h is not nondecreasing in y.
  bool auto_kappa = true;
  /// Options of the unreflected base solve (its tol drives Y^0 accuracy).
  PicardOptions picard = {};

  static std::vector<double> default_schedule();
};

/// The problem the penalization actually iterates on: Psi_kappa applied to the
/// obstacle, then the theta transform. theta = kappa = 0 means untouched.
struct PenaltyFormulation {
  ProblemSpec problem;
  double theta = 0.0;
  double kappa = 0.0;
};

PenaltyFormulation penalty_formulation(const ProblemSpec& problem, const PenaltyOptions& options = {});

/// Same transforms with theta and kappa given.
ProblemSpec apply_transforms(const ProblemSpec& problem, double theta, double kappa);

/// Reflected solution computed in the penalization's variables, returned in the
/// original ones. The discrete schemes are not exactly theta-equivariant (the gap
/// is O(dt^2)), so this is the reference the penalized levels are ordered against.
SolutionBundle reflected_reference(const ProblemSpec& problem, std::shared_ptr<const Engine> engine,
                                   const PenaltyOptions& options = {});

/// Unreflected equation Y^0: same windowed Picard iteration with dK = 0.
SolutionBundle base_solve(const ProblemSpec& problem, std::shared_ptr<const Engine> engine,
                          const PicardOptions& options = {});

/// One penalization level: driver and obstacle frozen at the law and values of
/// `prev`, dK^n = n (Y^n - h(Y^{n-1}, E[Y^{n-1}]))^- dt, implicit in Y^n.
SolutionBundle penalized_pass(const ProblemSpec& problem, const SolutionBundle& prev,
                              double level, TimeStepping stepping = TimeStepping::trapezoidal);

/// Called with (level, bundle) for the base solve (level 0) and every
/// penalization level, in the original variables.
using LevelObserver = std::function<void(double, const SolutionBundle&)>;

/// Full penalization scheme; returns the last level computed, in the original
/// variables, with one PenaltyLevelReport per level in its diagnostics.
SolutionBundle penalty_solve(const ProblemSpec& problem, std::shared_ptr<const Engine> engine,
                             const PenaltyOptions& options = {},
                             const LevelObserver& observer = {});

struct DominationReport {
  /// max of f(t, x, y, z, m) - Phi(t, x, y, m) over the probes (<= 0 when dominated).
  double probe_excess = 0.0;
  /// max over levels and nodes of (Y^n - Ybar)^+.
  double sandwich_excess = 0.0;
  SolutionBundle dominating;
};

/// Checks f <= Phi on random probes, solves the reflected equation with driver
/// Phi and verifies Y^n <= Ybar at every penalization level. Throws ModelError
/// when no domination is declared and FeasibilityError on a violation larger
/// than `tol`, with the witness in the message.
DominationReport domination_check(const ProblemSpec& problem, std::shared_ptr<const Engine> engine,
                                  const PenaltyOptions& options = {}, Index samples = 10000,
                                  double tol = 1e-8);

}  // namespace mfrbsde
