#pragma once

#include "mfrbsde/snell.hpp"

#include <vector>

namespace mfrbsde::detail {

enum class StepMode {
  free,      ///< no obstacle
  reflect,   ///< Y_i = max(yhat_i, y*_i)
  penalize,  ///< implicit penalty n (y - L_i)^- dt against frozen levels L
};

struct SweepSpec {
  const ProblemSpec* problem = nullptr;
  const Engine* engine = nullptr;
  /// Law curve fed to driver and obstacle at every step (size N+1).
  const LawCurve* law = nullptr;
  TimeStepping stepping = TimeStepping::trapezoidal;
  StepMode mode = StepMode::reflect;
  double penalty = 0.0;
  /// Frozen obstacle levels per step, penalize mode only.
  const std::vector<VectorXd>* levels = nullptr;
};

/// Allocates y/z/dk and sets Y_N = xi(x_N).
void init_bundle(const ProblemSpec& problem, std::shared_ptr<const Engine> engine,
                 SolutionBundle& bundle);

/// Fills steps [first, last) backward; y[last] (and z[last] when last < N)
/// must already hold the data the window is pasted onto.
void sweep(const SweepSpec& spec, Index first, Index last, SolutionBundle& bundle);

/// Law summary used while iterating: the full empirical law when the problem
/// reads it, otherwise a point mass at the mean.
LawView summarize(const Engine& engine, Index step, const VectorXd& values, bool full);

}  // namespace mfrbsde::detail

namespace mfrbsde::detail {

/// Windowed Picard iteration on the law curve with the given step mode
/// (reflect for the Snell scheme, free for the unreflected base solve).
SolutionBundle picard_iterate(const ProblemSpec& problem, std::shared_ptr<const Engine> engine,
                              const PicardOptions& options, StepMode mode);

}  // namespace mfrbsde::detail
