#pragma once

// Reference implementations kept apart from the solver: they share the
// problem types only, never the engines or the backward sweep.

#include "mfrbsde/model.hpp"

#include <string>
#include <vector>

namespace mfrbsde::oracle {

/// m_t = E[Y_t] for f = a y + b E[Y] + c with E[xi] = xi_mean:
/// m' = -(a + b) m - c, m_T = xi_mean, in closed form.
VectorXd ode_linear_solve(double a, double b, double c, double xi_mean, const TimeGrid& grid);

/// Same ODE integrated backward with classical RK4 (substeps per grid step).
VectorXd ode_linear_rk4(double a, double b, double c, double xi_mean, const TimeGrid& grid,
                        int substeps = 64);

/// Recombining-tree American put with up/down factors exp((r - vol^2/2) dt +- vol sqrt(dt)),
/// probability 1/2 and discount exp(-r dt).
double american_binomial(double strike, double vol, double rate, double horizon, int steps,
                         double spot = 1.0);

enum class Stepping { euler, trapezoid };

struct TreeSolution {
  /// y[i][j]: node j = 0..i at step i.
  std::vector<std::vector<double>> y;
  std::vector<double> mean;
  int iterations = 0;
};

struct TreeOptions {
  bool reflected = true;
  Stepping stepping = Stepping::trapezoid;
  double tol = 1e-13;
  int max_iter = 2000;
};

/// Global Picard iteration on the law curve with dynamic programming on a
/// binomial tree (probability 1/2, increments +-sqrt(dt)) built on the problem grid.
TreeSolution tree_solve(const ProblemSpec& problem, const TreeOptions& options = {});

struct ComparisonVerdict {
  enum class Status { pass, fail, skipped };
  Status status = Status::skipped;
  /// Probe findings for hypotheses (a)-(c), empty when all hold.
  std::string report;
  /// max over nodes of Y - Y' (<= 1e-10 for a pass).
  double max_violation = 0.0;
};

std::string to_string(ComparisonVerdict::Status status);

/// Comparison harness for the unreflected equations: probes
/// (a) xi <= xi', (b) f <= f', (c) f nondecreasing in the law argument,
/// then solves both problems on the tree and checks Y <= Y' nodewise.
ComparisonVerdict comparison_check(const ProblemSpec& lower, const ProblemSpec& upper,
                                   Index probes = 2000, std::uint64_t seed = 7);

}  // namespace mfrbsde::oracle
