#pragma once

#include "mfrbsde/model.hpp"
#include "mfrbsde/solution.hpp"

#include <utility>

namespace mfrbsde {

struct GammaCondition {
  double value = 0.0;
  bool feasible = false;
};

/// (g1 + g2)^{(p-1)/p} * ((p/(p-1))^p g1 + g2)^{1/p}; feasible when < 1.
/// Requires p > 1 (the p = 1 window is handled by admissible_delta).
GammaCondition gamma_condition(double p, double gamma1, double gamma2);

/// Contraction constant of the fixed-point map on a window of length delta:
/// (2 delta C_f + g1 + g2)^{(p-1)/p} ((p/(p-1))^p (delta C_f + g1) + delta C_f + g2)^{1/p}.
double contraction_lambda(double delta, double p, double c_f, double gamma1, double gamma2);

/// Window length on which the fixed-point map contracts, times `safety`.
///   p = 1: safety * (1 - g1 - g2) / (2 C_f)
///   p > 1: safety * root of contraction_lambda(delta) = 1 (bracketing bisection)
/// Returns +infinity when C_f = 0. Throws FeasibilityError when no window exists.
double admissible_delta(double p, double c_f, double gamma1, double gamma2, double safety = 0.9);

struct FeasibilityReport {
  double p = 2.0;
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  double c_f = 0.0;
  double gamma_condition_value = 0.0;
  bool feasible = false;
  double lambda_at_zero = 0.0;
  double delta_max = 0.0;
  double delta_used = 0.0;
};

FeasibilityReport feasibility(double p, double c_f, double gamma1, double gamma2,
                              double safety = 0.9);
FeasibilityReport feasibility(const ProblemSpec& problem, double safety = 0.9);

/// Exponential change of variables Y -> e^{theta t} Y:
///   terminal e^{theta T} xi,
///   F(t, x, y, z, m) = e^{theta t} f(t, x, e^{-theta t} y, e^{-theta t} z, e^{-theta t} m) - theta y,
///   obstacle (t, x, y, m) -> e^{theta t} h(t, x, e^{-theta t} y, e^{-theta t} m).
/// F is nondecreasing in y as soon as theta <= -lip_y.
ProblemSpec theta_transform(const ProblemSpec& problem, double theta);

/// Maps a solution of the transformed problem back: Y, Z, dK scaled by e^{-theta t_i}.
SolutionBundle untransform(const SolutionBundle& bundle, double theta);

/// Psi_kappa(y, m) = (h(y, m) + kappa g1 y) / (1 + kappa g1). Same admissible set
/// {y >= h} = {y >= Psi}; nondecreasing in y for kappa >= 1.
std::pair<ObstacleSpec, FeasibilityReport> kappa_transform(const ObstacleSpec& obstacle,
                                                           double kappa, double p = 2.0,
                                                           double c_f = 0.0);

struct LinearizationReport {
  double max_a_f = 0.0;
  double max_b_f = 0.0;
  double max_a_h = 0.0;
  double max_b_h = 0.0;
};

/// Empirical slopes a_f, b_f, a_h, b_h of the linearisation of f and h around
/// (0, 0) along a computed solution (zero where Y or E[Y] vanishes). Throws
/// FeasibilityError naming the coefficient that exceeds its declared bound.
LinearizationReport linearization_diagnostic(const SolutionBundle& bundle,
                                             const ProblemSpec& problem);

}  // namespace mfrbsde
