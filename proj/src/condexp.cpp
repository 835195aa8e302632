#include "mfrbsde/condexp.hpp"

#include "mfrbsde/errors.hpp"

#include <fmt/format.h>

#include <cmath>

namespace mfrbsde {

namespace {

constexpr int kMaxDegree = 12;


}  // namespace

RegressionProjector::RegressionProjector(const RegressionEngine& engine,
                                         const Eigen::Ref<const VectorXd>& states) {
  if (engine.degree < 0 || engine.degree > kMaxDegree)
    throw ModelError(fmt::format("regression degree must lie in [0, {}]", kMaxDegree));
  if (engine.ridge < 0.0) throw ModelError("regression ridge must be >= 0");
  const Index n = states.size();
  if (n < engine.degree + 1)
    throw NumericalError(fmt::format("regression needs at least {} paths, got {}",
                                     engine.degree + 1, n));

  x_mean_ = states.mean();
  const double var = (states.array() - x_mean_).square().mean();
  const double sd = std::sqrt(var);
  // A degenerate state (e.g. t = 0) leaves only the intercept.
  if (engine.degree == 0 || !(sd > 1e-12 * (1.0 + std::abs(x_mean_)))) {
    cols_ = 1;
    return;
  }
  x_scale_ = sd;
  const int d = engine.degree;
  cols_ = d + 1;

  // Raw standardised monomials s^k, k = 1..d: moments for centring/scaling.
  col_mean_ = VectorXd::Zero(d);
  col_scale_ = VectorXd::Ones(d);
  Eigen::MatrixXd raw_cross = Eigen::MatrixXd::Zero(d, d);
  double pw[kMaxDegree + 1];
  for (Index k = 0; k < n; ++k) {
    const double s = (states[k] - x_mean_) / x_scale_;
    pw[0] = 1.0;
    for (int j = 1; j <= d; ++j) pw[j] = pw[j - 1] * s;
    for (int a = 0; a < d; ++a) {
      col_mean_[a] += pw[a + 1];
      for (int b = 0; b <= a; ++b) raw_cross(a, b) += pw[a + 1] * pw[b + 1];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  col_mean_ *= inv_n;
  raw_cross *= inv_n;
  Eigen::MatrixXd cov(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b <= a; ++b) cov(a, b) = cov(b, a) = raw_cross(a, b) - col_mean_[a] * col_mean_[b];
  for (int a = 0; a < d; ++a) col_scale_[a] = cov(a, a) > 0.0 ? std::sqrt(cov(a, a)) : 1.0;

  Eigen::MatrixXd gram(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) gram(a, b) = cov(a, b) / (col_scale_[a] * col_scale_[b]);
  gram.diagonal().array() += engine.ridge;
  gram_.compute(gram);

  const VectorXd piv = gram_.vectorD().cwiseAbs();
  if (gram_.info() != Eigen::Success || piv.minCoeff() <= 1e-12 * std::max(1.0, piv.maxCoeff())) {
    if (engine.ridge == 0.0)
      throw NumericalError("rank-deficient regression design; use ridge > 0");
    throw NumericalError("regression Gram matrix is not positive definite");
  }
}

void RegressionProjector::basis(double x, double* row) const {
  row[0] = 1.0;
  if (cols_ == 1) return;
  const double s = (x - x_mean_) / x_scale_;
  double p = 1.0;
  for (int a = 0; a + 1 < cols_; ++a) {
    p *= s;
    row[a + 1] = (p - col_mean_[a]) / col_scale_[a];
  }
}

VectorXd RegressionProjector::coefficients(const Eigen::Ref<const VectorXd>& states,
                                           const Eigen::Ref<const VectorXd>& targets) const {
  VectorXd beta = VectorXd::Zero(cols_);
  const Index n = targets.size();
  beta[0] = targets.mean();
  if (cols_ == 1) return beta;
  // Serial accumulation keeps the result independent of the thread count.
  VectorXd rhs = VectorXd::Zero(cols_ - 1);
  double row[kMaxDegree + 1];
  for (Index k = 0; k < n; ++k) {
    basis(states[k], row);
    const double r = targets[k] - beta[0];
    for (int a = 1; a < cols_; ++a) rhs[a - 1] += row[a] * r;
  }
  rhs /= static_cast<double>(n);
  beta.tail(cols_ - 1) = gram_.solve(rhs);
  return beta;
}

VectorXd RegressionProjector::fit(const Eigen::Ref<const VectorXd>& states,
                                  const Eigen::Ref<const VectorXd>& targets) const {
  const VectorXd beta = coefficients(states, targets);
  const Index n = states.size();
  VectorXd out(n);
#pragma omp parallel for schedule(static)
  for (Index k = 0; k < n; ++k) {
    double row[kMaxDegree + 1];
    basis(states[k], row);
    double v = 0.0;
    for (int a = 0; a < cols_; ++a) v += beta[a] * row[a];
    out[k] = v;
  }
  return out;
}

VectorXd fit_condexp(const RegressionEngine& engine, const VectorXd& states,
                     const VectorXd& targets) {
  if (states.size() != targets.size()) throw ModelError("fit_condexp: size mismatch");
  return RegressionProjector(engine, states).fit(states, targets);
}

VectorXd estimate_z(const RegressionEngine& engine, const VectorXd& states,
                    const VectorXd& targets, const VectorXd& dB, double dt) {
  if (states.size() != targets.size() || dB.size() != targets.size())
    throw ModelError("estimate_z: size mismatch");
  const double m = targets.mean();
  const VectorXd w = ((targets.array() - m) * dB.array() / dt).matrix();
  return RegressionProjector(engine, states).fit(states, w);
}

// ---------------------------------------------------------------------------

double Engine::mean(Index step, const VectorXd& v) const {
  const VectorXd& w = weights(step);
  if (w.size() == 0) return v.mean();
  return v.dot(w);
}

VectorXd Engine::expect_subset(Index step, const VectorXd& next,
                               const std::vector<Index>& rows) const {
  const VectorXd all = expect(step, next);
  VectorXd out(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out[static_cast<Index>(r)] = all[rows[r]];
  return out;
}

MonteCarloEngine::MonteCarloEngine(PathEnsemble paths, const TimeGrid& grid,
                                   RegressionEngine regression)
    : paths_(std::move(paths)), grid_(grid), regression_(regression) {
  if (paths_.x.cols() != grid.steps() + 1 || paths_.dB.cols() != grid.steps())
    throw ModelError("MonteCarloEngine: path ensemble does not match the grid");
  projectors_.reserve(static_cast<std::size_t>(grid.steps()));
  for (Index i = 0; i < grid.steps(); ++i) projectors_.emplace_back(regression_, paths_.x.col(i));
}

VectorXd MonteCarloEngine::expect(Index step, const VectorXd& next) const {
  return projectors_[static_cast<std::size_t>(step)].fit(paths_.x.col(step), next);
}

VectorXd MonteCarloEngine::z(Index step, const VectorXd& next) const {
  const double m = next.mean();
  const VectorXd w = ((next.array() - m) * paths_.dB.col(step).array() / grid_.dt()).matrix();
  return projectors_[static_cast<std::size_t>(step)].fit(paths_.x.col(step), w);
}

VectorXd MonteCarloEngine::expect_subset(Index step, const VectorXd& next,
                                         const std::vector<Index>& rows) const {
  const auto n = static_cast<Index>(rows.size());
  VectorXd x(n), v(n);
  for (Index r = 0; r < n; ++r) {
    x[r] = paths_.x(rows[static_cast<std::size_t>(r)], step);
    v[r] = next[rows[static_cast<std::size_t>(r)]];
  }
  return RegressionProjector(regression_, x).fit(x, v);
}

LatticeEngine::LatticeEngine(const ForwardModel& forward, const TimeGrid& grid) : grid_(grid) {
  forward.check();
  const Index n = grid.steps();
  const double sdt = std::sqrt(grid.dt());
  nodes_.resize(static_cast<std::size_t>(n + 1));
  weights_.resize(static_cast<std::size_t>(n + 1));
  for (Index i = 0; i <= n; ++i) {
    VectorXd x(i + 1);
    const double t = grid.time(i);
    for (Index j = 0; j <= i; ++j) {
      const double b = static_cast<double>(2 * j - i) * sdt;
      switch (forward.kind) {
        case ForwardModel::Kind::brownian:
          x[j] = forward.x0 + b;
          break;
        case ForwardModel::Kind::arithmetic_bm:
          x[j] = forward.x0 + forward.drift * t + forward.vol * b;
          break;
        case ForwardModel::Kind::geometric_bm:
          x[j] = forward.x0 *
                 std::exp((forward.drift - 0.5 * forward.vol * forward.vol) * t + forward.vol * b);
          break;
      }
    }
    nodes_[static_cast<std::size_t>(i)] = std::move(x);
  }
  weights_[0] = VectorXd::Ones(1);
  for (Index i = 1; i <= n; ++i) {
    const VectorXd& prev = weights_[static_cast<std::size_t>(i - 1)];
    VectorXd w = VectorXd::Zero(i + 1);
    for (Index j = 0; j < i; ++j) {
      w[j] += 0.5 * prev[j];
      w[j + 1] += 0.5 * prev[j];
    }
    weights_[static_cast<std::size_t>(i)] = std::move(w);
  }
}

VectorXd LatticeEngine::expect(Index step, const VectorXd& next) const {
  if (next.size() != step + 2) throw ModelError("lattice expect: targets must be step+1 nodes");
  return 0.5 * (next.head(step + 1) + next.tail(step + 1));
}

VectorXd LatticeEngine::z(Index step, const VectorXd& next) const {
  if (next.size() != step + 2) throw ModelError("lattice z: targets must be step+1 nodes");
  return (next.tail(step + 1) - next.head(step + 1)) / (2.0 * std::sqrt(grid_.dt()));
}

VectorXd fit_condexp(const LatticeEngine& engine, Index step, const VectorXd& targets) {
  return engine.expect(step, targets);
}

VectorXd estimate_z(const LatticeEngine& engine, Index step, const VectorXd& targets) {
  return engine.z(step, targets);
}

}  // namespace mfrbsde
