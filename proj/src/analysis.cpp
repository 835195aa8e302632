#include "mfrbsde/analysis.hpp"

#include "mfrbsde/errors.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>

namespace mfrbsde {

namespace {

double doob_factor(double p) { return std::pow(p / (p - 1.0), p); }

void require_p_above_one(double p, const char* who) {
  if (!(p > 1.0))
    throw FeasibilityError(fmt::format("{}: requires p > 1 (got {}); use the p = 1 window", who, p));
}

LawView scale_law(const LawView& law, double factor, bool needs_sample) {
  return needs_sample || law.size() <= 1 ? law.scaled(factor) : LawView::point(factor * law.mean());
}

}  // namespace

GammaCondition gamma_condition(double p, double gamma1, double gamma2) {
  require_p_above_one(p, "gamma_condition");
  const double value = std::pow(gamma1 + gamma2, (p - 1.0) / p) *
                       std::pow(doob_factor(p) * gamma1 + gamma2, 1.0 / p);
  return {value, value < 1.0};
}

double contraction_lambda(double delta, double p, double c_f, double gamma1, double gamma2) {
  require_p_above_one(p, "contraction_lambda");
  if (delta < 0.0) throw FeasibilityError("contraction_lambda: delta must be >= 0");
  const double dc = delta * c_f;
  return std::pow(2.0 * dc + gamma1 + gamma2, (p - 1.0) / p) *
         std::pow(doob_factor(p) * (dc + gamma1) + (dc + gamma2), 1.0 / p);
}

double admissible_delta(double p, double c_f, double gamma1, double gamma2, double safety) {
  if (!(safety > 0.0 && safety < 1.0 + 1e-15))
    throw FeasibilityError("admissible_delta: safety must lie in (0, 1]");
  if (p == 1.0) {
    if (!(gamma1 + gamma2 < 1.0)) throw FeasibilityError("no contraction window exists");
    if (c_f == 0.0) return std::numeric_limits<double>::infinity();
    return safety * (1.0 - gamma1 - gamma2) / (2.0 * c_f);
  }
  require_p_above_one(p, "admissible_delta");
  if (!gamma_condition(p, gamma1, gamma2).feasible)
    throw FeasibilityError("no contraction window exists");
  if (c_f == 0.0) return std::numeric_limits<double>::infinity();

  auto excess = [&](double d) { return contraction_lambda(d, p, c_f, gamma1, gamma2) - 1.0; };
  double lo = 0.0;
  double hi = 1.0 / c_f;
  while (excess(hi) <= 0.0) {
    lo = hi;
    hi *= 2.0;
  }
  while (hi - lo > 1e-12 * hi) {
    const double mid = 0.5 * (lo + hi);
    (excess(mid) < 0.0 ? lo : hi) = mid;
  }
  return safety * lo;
}

FeasibilityReport feasibility(double p, double c_f, double gamma1, double gamma2, double safety) {
  FeasibilityReport r;
  r.p = p;
  r.gamma1 = gamma1;
  r.gamma2 = gamma2;
  r.c_f = c_f;
  if (p > 1.0) {
    const auto g = gamma_condition(p, gamma1, gamma2);
    r.gamma_condition_value = g.value;
    r.feasible = g.feasible;
    r.lambda_at_zero = contraction_lambda(0.0, p, c_f, gamma1, gamma2);
  } else {
    r.gamma_condition_value = gamma1 + gamma2;
    r.feasible = gamma1 + gamma2 < 1.0;
    r.lambda_at_zero = gamma1 + gamma2;
  }
  if (r.feasible) {
    r.delta_max = admissible_delta(p, c_f, gamma1, gamma2, 1.0);
    r.delta_used = admissible_delta(p, c_f, gamma1, gamma2, safety);
  }
  return r;
}

FeasibilityReport feasibility(const ProblemSpec& problem, double safety) {
  return feasibility(problem.p_exponent, problem.driver.c_f(), problem.obstacle.gamma1(),
                     problem.obstacle.gamma2(), safety);
}

ProblemSpec theta_transform(const ProblemSpec& problem, double theta) {
  if (theta == 0.0) return problem;
  const double T = problem.grid.horizon();

  DriverSpec f = problem.driver;
  // Scaling copies the whole sample, so mean-only readers get a point law.
  const bool f_sample = problem.driver.uses_law_sample;
  f.eval = [inner = problem.driver.eval, theta, f_sample](double t, double x, double y,
                                                          std::span<const double> z,
                                                          const LawView& law) {
    const double back = std::exp(-theta * t);
    double zs[8];
    const std::size_t d = std::min<std::size_t>(z.size(), 8);
    for (std::size_t k = 0; k < d; ++k) zs[k] = back * z[k];
    return inner(t, x, back * y, std::span<const double>(zs, d), scale_law(law, back, f_sample)) /
               back -
           theta * y;
  };
  const double lip_y0 = problem.driver.lip_y;
  f.lip_y = problem.driver.c_f() + std::abs(theta);
  f.monotone_in_y = problem.driver.monotone_in_y ? theta <= 0.0 : theta <= -lip_y0;
  if (problem.driver.domination) {
    Domination dom = *problem.driver.domination;
    dom.eval = [inner = problem.driver.domination->eval, theta, f_sample](
                   double t, double x, double y, const LawView& law) {
      const double back = std::exp(-theta * t);
      return inner(t, x, back * y, scale_law(law, back, f_sample)) / back - theta * y;
    };
    dom.lip_y += std::abs(theta);
    f.domination = dom;
  }

  const auto& h = problem.obstacle;
  ObstacleSpec g(
      [inner = h.fn(), theta, h_sample = h.uses_law_sample()](double t, double x, double y,
                                                              const LawView& law) {
        const double back = std::exp(-theta * t);
        return inner(t, x, back * y, scale_law(law, back, h_sample)) / back;
      },
      h.gamma1(), h.gamma2(), h.monotone_in_y(), h.monotone_in_m(), h.state_dependent(),
      h.uses_law_sample());

  const double lift = std::exp(theta * T);
  TerminalSpec xi{[inner = problem.terminal.eval, lift](double x) { return lift * inner(x); }};

  return ProblemSpec(problem.grid, problem.forward, std::move(f), std::move(g), std::move(xi),
                     problem.p_exponent);
}

SolutionBundle untransform(const SolutionBundle& bundle, double theta) {
  if (theta == 0.0) return bundle;
  SolutionBundle out = bundle;
  const TimeGrid& grid = bundle.engine->grid();
  std::vector<LawView> law, driving;
  for (Index i = 0; i <= bundle.steps(); ++i) {
    const double back = std::exp(-theta * grid.time(i));
    out.y[static_cast<std::size_t>(i)] *= back;
    if (!out.realized.empty()) out.realized[static_cast<std::size_t>(i)] *= back;
    if (i < bundle.steps()) {
      out.z[static_cast<std::size_t>(i)] *= back;
      out.dk[static_cast<std::size_t>(i)] *= back;
    }
    if (bundle.law.size() > i) law.push_back(bundle.law[i].scaled(back));
    if (bundle.driving_law.size() > i) driving.push_back(bundle.driving_law[i].scaled(back));
  }
  out.law = LawCurve(std::move(law));
  out.driving_law = LawCurve(std::move(driving));
  return out;
}

std::pair<ObstacleSpec, FeasibilityReport> kappa_transform(const ObstacleSpec& obstacle,
                                                           double kappa, double p, double c_f) {
  if (!(kappa > 0.0)) throw FeasibilityError("kappa_transform: kappa must be > 0");
  const double g1 = obstacle.gamma1();
  const double g2 = obstacle.gamma2();
  const double k = kappa * g1;
  const double g1p = (g1 + k) / (1.0 + k);
  const double g2p = g2 / (1.0 + k);

  ObstacleSpec psi(
      [inner = obstacle.fn(), k](double t, double x, double y, const LawView& law) {
        return (inner(t, x, y, law) + k * y) / (1.0 + k);
      },
      g1p, g2p, obstacle.monotone_in_y() || kappa >= 1.0 || g1 == 0.0, obstacle.monotone_in_m(),
      obstacle.state_dependent(), obstacle.uses_law_sample());

  FeasibilityReport r;
  r.p = p;
  r.gamma1 = g1p;
  r.gamma2 = g2p;
  r.c_f = c_f;
  if (p > 1.0) {
    const auto g = gamma_condition(p, g1p, g2p);
    r.gamma_condition_value = g.value;
    r.feasible = g.feasible;
    r.lambda_at_zero = g.value;
  } else {
    r.gamma_condition_value = g1p + g2p;
    r.feasible = g1p + g2p < 1.0;
    r.lambda_at_zero = r.gamma_condition_value;
  }
  if (r.feasible) {
    r.delta_max = admissible_delta(p, c_f, g1p, g2p, 1.0);
    r.delta_used = admissible_delta(p, c_f, g1p, g2p, 0.9);
  }
  return {std::move(psi), r};
}

LinearizationReport linearization_diagnostic(const SolutionBundle& bundle,
                                             const ProblemSpec& problem) {
  constexpr double kZero = 1e-8;
  constexpr double kTol = 1e-12;
  const auto& f = problem.driver;
  const auto& h = problem.obstacle;
  const Engine& engine = *bundle.engine;
  const TimeGrid& grid = engine.grid();
  const LawView origin = LawView::point(0.0);

  LinearizationReport r;
  for (Index i = 0; i < bundle.steps(); ++i) {
    const double t = grid.time(i);
    const LawView& law = bundle.law[i];
    const double m = law.mean();
    const auto x = engine.states(i);
    const VectorXd& y = bundle.y[static_cast<std::size_t>(i)];
    const VectorXd& z = bundle.z[static_cast<std::size_t>(i)];
    for (Index k = 0; k < y.size(); ++k) {
      const double f0m = f(t, x[k], 0.0, z[k], law);
      const double h0m = h(t, x[k], 0.0, law);
      if (std::abs(y[k]) > kZero) {
        r.max_a_f = std::max(r.max_a_f, std::abs((f(t, x[k], y[k], z[k], law) - f0m) / y[k]));
        r.max_a_h = std::max(r.max_a_h, std::abs((h(t, x[k], y[k], law) - h0m) / y[k]));
      }
      if (std::abs(m) > kZero) {
        r.max_b_f = std::max(r.max_b_f, std::abs((f0m - f(t, x[k], 0.0, z[k], origin)) / m));
        r.max_b_h = std::max(r.max_b_h, std::abs((h0m - h(t, x[k], 0.0, origin)) / m));
      }
    }
  }
  auto check = [](double value, double bound, const char* name) {
    if (value > bound + kTol)
      throw FeasibilityError(fmt::format(
          "linearization coefficient {} = {:.12g} exceeds declared bound {:.12g}", name, value,
          bound));
  };
  check(r.max_a_f, f.lip_y, "a_f");
  check(r.max_b_f, f.lip_m, "b_f");
  check(r.max_a_h, h.gamma1(), "a_h");
  check(r.max_b_h, h.gamma2(), "b_h");
  return r;
}

}  // namespace mfrbsde
