#pragma once

#include "mfrbsde/law.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mfrbsde {

using Eigen::MatrixXd;

/// Uniform grid t_i = i*T/N on [0, T].
class TimeGrid {
 public:
  TimeGrid(double horizon, Index steps);

  double horizon() const noexcept { return horizon_; }
  Index steps() const noexcept { return steps_; }
  double dt() const noexcept { return dt_; }
  double time(Index i) const noexcept {
    return i == steps_ ? horizon_ : static_cast<double>(i) * dt_;
  }
  VectorXd times() const;

  bool operator==(const TimeGrid&) const = default;

 private:
  double horizon_;
  Index steps_;
  double dt_;
};

/// One-dimensional Markov state X driven by the Brownian motion B.
///   brownian:      X_t = x0 + B_t
///   arithmetic_bm: X_t = x0 + drift*t + vol*B_t
///   geometric_bm:  X_t = x0 * exp((drift - vol^2/2) t + vol*B_t)
struct ForwardModel {
  enum class Kind { brownian, arithmetic_bm, geometric_bm };

  Kind kind = Kind::brownian;
  double x0 = 0.0;
  double drift = 0.0;
  double vol = 1.0;

  static ForwardModel brownian(double x0 = 0.0);
  static ForwardModel arithmetic(double x0, double drift, double vol);
  static ForwardModel geometric(double x0, double drift, double vol);

  /// State after a Brownian increment db over a step of length dt, exact transition.
  double advance(double x, double db, double dt) const;

  void check() const;
};

std::string to_string(ForwardModel::Kind kind);

using DriverFn = std::function<double(double t, double x, double y, std::span<const double> z,
                                      const LawView& law)>;
using DominationFn = std::function<double(double t, double x, double y, const LawView& law)>;
using ObstacleFn = std::function<double(double t, double x, double y, const LawView& law)>;
using TerminalFn = std::function<double(double x)>;

/// z-free upper bound of a z-dependent driver.
struct Domination {
  DominationFn eval;
  double lip_y = 0.0;
  double lip_m = 0.0;
};

/// The generator f(t, x, y, z, law) and its declared regularity.
struct DriverSpec {
  DriverFn eval;
  double lip_y = 0.0;
  double lip_z = 0.0;
  double lip_m = 0.0;
  bool monotone_in_y = false;
  bool monotone_in_m = false;
  /// Set when f reads more than law.mean().
  bool uses_law_sample = false;
  std::optional<Domination> domination;

  /// Single Lipschitz constant bounding all three slopes.
  double c_f() const noexcept { return std::max({lip_y, lip_z, lip_m}); }
  bool depends_on_z() const noexcept { return lip_z > 0.0; }

  double operator()(double t, double x, double y, double z, const LawView& law) const {
    return eval(t, x, y, std::span<const double>(&z, 1), law);
  }

  static DriverSpec zero();
  /// f = a*y + b*mean + c.
  static DriverSpec linear(double a, double b, double c);
};

/// Lower barrier h(t, x, y, law); the admissible set {y >= h(y, law)} is a
/// half-line because gamma1 < 1, which the constructor enforces.
class ObstacleSpec {
 public:
  ObstacleSpec(ObstacleFn eval, double gamma1, double gamma2, bool monotone_in_y,
               bool monotone_in_m, bool state_dependent = false, bool uses_law_sample = false);

  double operator()(double t, double x, double y, const LawView& law) const {
    return eval_(t, x, y, law);
  }

  const ObstacleFn& fn() const noexcept { return eval_; }
  double gamma1() const noexcept { return gamma1_; }
  double gamma2() const noexcept { return gamma2_; }
  bool monotone_in_y() const noexcept { return monotone_in_y_; }
  bool monotone_in_m() const noexcept { return monotone_in_m_; }
  /// True when h depends on (t, x); the threshold must then be solved per node.
  bool state_dependent() const noexcept { return state_dependent_; }
  bool uses_law_sample() const noexcept { return uses_law_sample_; }

  /// h(y, m) = slope_y*y + slope_m*mean + constant.
  static ObstacleSpec affine(double slope_y, double slope_m, double constant);
  /// Constant barrier; a very negative constant stands in for "no obstacle".
  static ObstacleSpec constant(double level);
  static ObstacleSpec inactive() { return constant(-1e12); }

 private:
  ObstacleFn eval_;
  double gamma1_;
  double gamma2_;
  bool monotone_in_y_;
  bool monotone_in_m_;
  bool state_dependent_;
  bool uses_law_sample_;
};

struct TerminalSpec {
  TerminalFn eval;
  double operator()(double x) const { return eval(x); }
  static TerminalSpec constant(double value);
  static TerminalSpec identity();
};

struct ProblemSpec {
  TimeGrid grid;
  ForwardModel forward;
  DriverSpec driver;
  ObstacleSpec obstacle;
  TerminalSpec terminal;
  double p_exponent = 2.0;

  ProblemSpec(TimeGrid grid, ForwardModel forward, DriverSpec driver, ObstacleSpec obstacle,
              TerminalSpec terminal, double p_exponent = 2.0);

  bool needs_law_sample() const noexcept {
    return driver.uses_law_sample || obstacle.uses_law_sample();
  }
};

/// Simulated Brownian increments and exact forward states.
struct PathEnsemble {
  MatrixXd dB;  ///< paths x N
  MatrixXd x;   ///< paths x (N+1)
  std::uint64_t seed = 0;

  Index paths() const noexcept { return x.rows(); }
};

/// Paths are independent: path k draws from its own generator seeded by
/// (seed, k), so the ensemble is identical for any thread count.
PathEnsemble simulate_paths(const ForwardModel& forward, const TimeGrid& grid, Index paths,
                            std::uint64_t seed);

// ---------------------------------------------------------------------------
// Validation

/// Bounds of the random probing box. x defaults to a band around the forward
/// start; y, z and the law mean to [-radius, radius].
struct ProbeBox {
  double x_lo = std::numeric_limits<double>::quiet_NaN();
  double x_hi = std::numeric_limits<double>::quiet_NaN();
  double radius = 5.0;
  std::uint64_t seed = 20240611;
};

struct CheckResult {
  std::string name;
  bool passed = true;
  /// Informational items describe which theorems apply; they never fail validation.
  bool informational = false;
  double worst = 0.0;
  std::string witness;
};

struct ValidationReport {
  std::vector<CheckResult> checks;

  bool ok() const;
  const CheckResult* find(const std::string& name) const;
  std::string summary() const;
};

ValidationReport validate(const ProblemSpec& problem, Index samples = 10000,
                          const ProbeBox& box = {});

// ---------------------------------------------------------------------------
// Insurance reserve example: guaranteed endowment with surrender option.

using TimeFn = std::function<double(double)>;

struct InsuranceParams {
  TimeFn alpha = [](double) { return 0.1; };
  TimeFn beta = [](double) { return 0.05; };
  TimeFn theta = [](double) { return 0.0; };
  TimeFn delta_rate = [](double) { return 0.03; };
  double u = 1.0;
  double mu = 0.5;
  /// Reserve-dependent management fee c(y) and its Lipschitz constant.
  std::function<double(double)> fee = [](double y) { return 0.01 * y; };
  double fee_lipschitz = 0.01;
  bool fee_nondecreasing = true;
  /// Terminal benefit; default is max(X_T, 1.05), a fund-linked guarantee.
  TerminalFn terminal = [](double x) { return std::max(x, 1.05); };
};

/// f = alpha_t - delta_t*y + beta_t*max(theta_t, y - E[Y]),
/// h = u - c(y) + mu*(E[Y] - u)^+.
/// Lipschitz constants are tight sups over a dense sampling of [0, T].
ProblemSpec insurance_problem(const InsuranceParams& params, const TimeGrid& grid,
                              const ForwardModel& forward);

/// Optimal stopping of the put payoff (K - x)^+: f = 0, law-free obstacle.
ProblemSpec american_put_problem(double strike, const TimeGrid& grid, const ForwardModel& forward,
                                 double p_exponent = 2.0);

/// Default grid (T=1, N=100) and fund model (geometric, x0=1, vol 0.2).
ProblemSpec insurance_default(Index steps = 100);

}  // namespace mfrbsde
