#pragma once

#include "mfrbsde/model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <memory>
#include <vector>

namespace mfrbsde {

// ---------------------------------------------------------------------------
// Least-squares regression on a polynomial basis of the forward state.

struct RegressionEngine {
  int degree = 3;
  double ridge = 1e-8;
};

/// Projection of step-(i+1) targets onto span{1, x, ..., x^d} of the step-i
/// states. The state is standardised, then every non-constant monomial column
/// is centred and scaled to unit variance; the intercept is not penalised, so
/// fitted values always average to the target mean.
class RegressionProjector {
 public:
  RegressionProjector(const RegressionEngine& engine, const Eigen::Ref<const VectorXd>& states);

  /// Fitted values at `states` (the construction states).
  VectorXd fit(const Eigen::Ref<const VectorXd>& states,
               const Eigen::Ref<const VectorXd>& targets) const;
  /// Regression coefficients in the standardised basis (intercept first).
  VectorXd coefficients(const Eigen::Ref<const VectorXd>& states,
                        const Eigen::Ref<const VectorXd>& targets) const;
  /// Standardised design row for one state.
  void basis(double x, double* row) const;

  int columns() const noexcept { return cols_; }

 private:
  int cols_ = 1;
  double x_mean_ = 0.0;
  double x_scale_ = 1.0;
  VectorXd col_mean_;
  VectorXd col_scale_;
  Eigen::LDLT<Eigen::MatrixXd> gram_;
};

/// E[targets | states] by regression, evaluated back at states.
VectorXd fit_condexp(const RegressionEngine& engine, const VectorXd& states,
                     const VectorXd& targets);

/// Z_i ~ E[Y_{i+1} dB_i | F_i] / dt by regression of (targets - mean) * dB / dt.
VectorXd estimate_z(const RegressionEngine& engine, const VectorXd& states,
                    const VectorXd& targets, const VectorXd& dB, double dt);

// ---------------------------------------------------------------------------
// Solver-facing state space.

/// Discrete state space with a one-step conditional expectation operator.
/// Step i carries size(i) nodes (paths or lattice nodes) with probability
/// weights; expect() maps a vector over step i+1 nodes to step i nodes.
class Engine {
 public:
  virtual ~Engine() = default;

  virtual const TimeGrid& grid() const = 0;
  virtual Index size(Index step) const = 0;
  virtual Eigen::Ref<const VectorXd> states(Index step) const = 0;
  /// Probability weights at a step; empty vector means equal weights.
  virtual const VectorXd& weights(Index step) const = 0;
  virtual VectorXd expect(Index step, const VectorXd& next) const = 0;
  virtual VectorXd z(Index step, const VectorXd& next) const = 0;
  /// True when expect() is exact (no sampling error).
  virtual bool exact() const = 0;
  /// True when node k at every step is the same simulated path, so realised
  /// cash flows can be carried backward along it.
  virtual bool pathwise() const { return false; }
  /// Conditional expectation fitted on the listed nodes only, returned for
  /// those nodes. Exact engines gather from expect().
  virtual VectorXd expect_subset(Index step, const VectorXd& next,
                                 const std::vector<Index>& rows) const;

  double mean(Index step, const VectorXd& v) const;
};

/// Monte-Carlo paths with regression-based conditional expectations.
/// Per-step factorisations are built once and reused across solver passes.
class MonteCarloEngine final : public Engine {
 public:
  MonteCarloEngine(PathEnsemble paths, const TimeGrid& grid, RegressionEngine regression = {});

  const TimeGrid& grid() const override { return grid_; }
  Index size(Index) const override { return paths_.paths(); }
  Eigen::Ref<const VectorXd> states(Index step) const override { return paths_.x.col(step); }
  const VectorXd& weights(Index) const override { return empty_; }
  VectorXd expect(Index step, const VectorXd& next) const override;
  VectorXd z(Index step, const VectorXd& next) const override;
  bool exact() const override { return false; }
  bool pathwise() const override { return true; }
  VectorXd expect_subset(Index step, const VectorXd& next,
                         const std::vector<Index>& rows) const override;

  const PathEnsemble& paths() const noexcept { return paths_; }

 private:
  PathEnsemble paths_;
  TimeGrid grid_;
  RegressionEngine regression_;
  std::vector<RegressionProjector> projectors_;
  VectorXd empty_;
};

/// Recombining binomial tree with transition probability 1/2 and Brownian
/// increments +-sqrt(dt). Node j at step i sits at B = (2j - i) sqrt(dt);
/// its children are j (down) and j+1 (up).
class LatticeEngine final : public Engine {
 public:
  LatticeEngine(const ForwardModel& forward, const TimeGrid& grid);

  const TimeGrid& grid() const override { return grid_; }
  Index size(Index step) const override { return step + 1; }
  Eigen::Ref<const VectorXd> states(Index step) const override { return nodes_[step]; }
  const VectorXd& weights(Index step) const override { return weights_[step]; }
  VectorXd expect(Index step, const VectorXd& next) const override;
  VectorXd z(Index step, const VectorXd& next) const override;
  bool exact() const override { return true; }

 private:
  TimeGrid grid_;
  std::vector<VectorXd> nodes_;
  std::vector<VectorXd> weights_;
};

/// Exact one-step expectation on the lattice: 1/2 (up + down) per parent.
VectorXd fit_condexp(const LatticeEngine& engine, Index step, const VectorXd& targets);
/// (up - down) / (2 sqrt(dt)) per parent.
VectorXd estimate_z(const LatticeEngine& engine, Index step, const VectorXd& targets);

}  // namespace mfrbsde
