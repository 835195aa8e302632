#pragma once

#include "mfrbsde/condexp.hpp"
#include "mfrbsde/law.hpp"

#include <limits>
#include <memory>
#include <vector>

namespace mfrbsde {

/// Per-level record of the penalization scheme.
struct PenaltyLevelReport {
  double level = 0.0;
  /// max over nodes of (Y^{prev} - Y^{this})^+, zero for a monotone sequence.
  double monotonicity_defect = 0.0;
  /// E sum_i (Y_i - L_i)^- dt with L the frozen obstacle level.
  double constraint_defect = 0.0;
  double skorohod_residual = 0.0;
  double constraint_violation = 0.0;
  /// sup over nodes of |Y^{this} - Y^{prev}|.
  double sup_change = 0.0;
};

struct Diagnostics {
  int picard_iters = 0;
  std::vector<int> window_iters;
  std::vector<double> window_lambda;
  double final_distance = 0.0;
  double delta_used = std::numeric_limits<double>::infinity();
  double gamma_condition = 0.0;
  double skorohod_residual = 0.0;
  double constraint_violation = 0.0;
  double penalty_level = 0.0;
  bool converged = true;
  /// max_i |m_{i+1} - m_i|, monitors jumps of t -> E[Y_t].
  double max_mean_jump = 0.0;
  double theta = 0.0;
  double kappa = 0.0;
  std::vector<PenaltyLevelReport> penalty_levels;
};

/// Discrete solution (Y, Z, dK) on an engine's state space.
///
/// y[i] holds Y at step i for every node (i = 0..N), z[i] and dk[i] the
/// martingale integrand and reflection increment over [t_i, t_{i+1}]
/// (i = 0..N-1). law is the empirical law of Y; driving_law is the law curve
/// the last pass was computed with (they differ by the reported Picard distance).
struct SolutionBundle {
  std::shared_ptr<const Engine> engine;
  std::vector<VectorXd> y;
  std::vector<VectorXd> z;
  std::vector<VectorXd> dk;
  /// Path engines only: realised value along each path of following the
  /// computed stopping rule (regression targets of the previous step).
  std::vector<VectorXd> realized;
  LawCurve law;
  LawCurve driving_law;
  Diagnostics diagnostics;

  Index steps() const noexcept { return static_cast<Index>(y.size()) - 1; }
  VectorXd mean_y() const;
  /// Largest |y - other.y| over all nodes.
  double sup_distance(const SolutionBundle& other) const;
};

/// Empirical laws of every column of y.
LawCurve law_curve_of(const Engine& engine, const std::vector<VectorXd>& y, bool full_sample = true);

}  // namespace mfrbsde
