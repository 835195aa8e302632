#include "mfrbsde/oracle.hpp"

#include "mfrbsde/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>

namespace mfrbsde::oracle {

VectorXd ode_linear_solve(double a, double b, double c, double xi_mean, const TimeGrid& grid) {
  const double k = a + b;
  const double T = grid.horizon();
  VectorXd m(grid.steps() + 1);
  for (Index i = 0; i <= grid.steps(); ++i) {
    const double tau = T - grid.time(i);
    m[i] = k == 0.0 ? xi_mean + c * tau : (xi_mean + c / k) * std::exp(k * tau) - c / k;
  }
  return m;
}

VectorXd ode_linear_rk4(double a, double b, double c, double xi_mean, const TimeGrid& grid,
                        int substeps) {
  // In reversed time tau = T - t: dm/dtau = (a + b) m + c.
  auto rhs = [&](double m) { return (a + b) * m + c; };
  const Index n = grid.steps();
  const double h = grid.dt() / substeps;
  VectorXd m(n + 1);
  double v = xi_mean;
  m[n] = v;
  for (Index i = n - 1; i >= 0; --i) {
    for (int s = 0; s < substeps; ++s) {
      const double k1 = rhs(v);
      const double k2 = rhs(v + 0.5 * h * k1);
      const double k3 = rhs(v + 0.5 * h * k2);
      const double k4 = rhs(v + h * k3);
      v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    m[i] = v;
  }
  return m;
}

double american_binomial(double strike, double vol, double rate, double horizon, int steps,
                         double spot) {
  if (steps < 1) throw ModelError("american_binomial: steps must be >= 1");
  const double dt = horizon / steps;
  const double drift = (rate - 0.5 * vol * vol) * dt;
  const double up = std::exp(drift + vol * std::sqrt(dt));
  const double down = std::exp(drift - vol * std::sqrt(dt));
  const double disc = std::exp(-rate * dt);

  std::vector<double> v(static_cast<std::size_t>(steps) + 1);
  for (int j = 0; j <= steps; ++j) {
    const double s = spot * std::pow(up, j) * std::pow(down, steps - j);
    v[static_cast<std::size_t>(j)] = std::max(strike - s, 0.0);
  }
  for (int i = steps - 1; i >= 0; --i) {
    for (int j = 0; j <= i; ++j) {
      const double s = spot * std::pow(up, j) * std::pow(down, i - j);
      const double hold = disc * 0.5 * (v[static_cast<std::size_t>(j)] + v[static_cast<std::size_t>(j) + 1]);
      v[static_cast<std::size_t>(j)] = std::max(hold, strike - s);
    }
  }
  return v[0];
}

namespace {

double node_state(const ForwardModel& fwd, double t, double b) {
  switch (fwd.kind) {
    case ForwardModel::Kind::brownian:
      return fwd.x0 + b;
    case ForwardModel::Kind::arithmetic_bm:
      return fwd.x0 + fwd.drift * t + fwd.vol * b;
    case ForwardModel::Kind::geometric_bm:
      return fwd.x0 * std::exp((fwd.drift - 0.5 * fwd.vol * fwd.vol) * t + fwd.vol * b);
  }
  return 0.0;
}

/// Root of phi(y) = 0 for an increasing phi: Newton with a finite-difference
/// slope, safeguarded by bisection once a sign change is seen.
template <class Phi>
double increasing_root(const Phi& phi, double start) {
  double lo = -INFINITY, hi = INFINITY;
  double y = start;
  for (int it = 0; it < 200; ++it) {
    const double v = phi(y);
    if (v == 0.0) return y;
    (v < 0.0 ? lo : hi) = y;
    const double step = 1e-6 * std::max(1.0, std::abs(y));
    const double slope = (phi(y + step) - v) / step;
    double next = slope > 0.0 ? y - v / slope : (v < 0.0 ? y + 1.0 : y - 1.0);
    if (std::isfinite(lo) && std::isfinite(hi) && !(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - y) <= 1e-15 * std::max(1.0, std::abs(y))) return next;
    y = next;
  }
  return y;
}

/// Smallest y with y >= h(y): plain bisection on y - h(y).
template <class H>
double threshold(const H& h) {
  auto g = [&](double y) { return y - h(y); };
  double lo = -1.0, hi = 1.0;
  while (g(lo) > 0.0) lo *= 2.0;
  while (g(hi) < 0.0) hi *= 2.0;
  for (int it = 0; it < 400 && hi - lo > 1e-14 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double binomial_weight(Index i, Index j) {
  // C(i, j) / 2^i through lgamma, fine for the depths used here.
  return std::exp(std::lgamma(i + 1.0) - std::lgamma(j + 1.0) - std::lgamma(i - j + 1.0) -
                  static_cast<double>(i) * std::log(2.0));
}

LawView node_law(const std::vector<double>& y, Index i, bool full) {
  VectorXd v(i + 1), w(i + 1);
  double mean = 0.0;
  for (Index j = 0; j <= i; ++j) {
    v[j] = y[static_cast<std::size_t>(j)];
    w[j] = binomial_weight(i, j);
    mean += w[j] * v[j];
  }
  if (!full) return LawView::point(mean);
  return LawView::weighted(v, w);
}

}  // namespace

TreeSolution tree_solve(const ProblemSpec& problem, const TreeOptions& options) {
  const Index n = problem.grid.steps();
  const double dt = problem.grid.dt();
  const double sdt = std::sqrt(dt);
  const bool full = problem.needs_law_sample();
  const auto& f = problem.driver;
  const auto& h = problem.obstacle;

  std::vector<std::vector<double>> x(static_cast<std::size_t>(n) + 1);
  for (Index i = 0; i <= n; ++i)
    for (Index j = 0; j <= i; ++j)
      x[static_cast<std::size_t>(i)].push_back(
          node_state(problem.forward, problem.grid.time(i), static_cast<double>(2 * j - i) * sdt));

  TreeSolution sol;
  sol.y.resize(static_cast<std::size_t>(n) + 1);
  for (Index j = 0; j <= n; ++j)
    sol.y[static_cast<std::size_t>(n)].push_back(problem.terminal(x[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)]));
  std::vector<LawView> law(static_cast<std::size_t>(n) + 1,
                           node_law(sol.y[static_cast<std::size_t>(n)], n, full));

  for (int iter = 0;; ++iter) {
    std::vector<double> zn;  // Z at step i+1, for the trapezoid
    for (Index i = n - 1; i >= 0; --i) {
      const auto iu = static_cast<std::size_t>(i);
      const double t = problem.grid.time(i);
      const auto& next = sol.y[iu + 1];
      const bool at_end = i + 1 == n;
      const bool trap = options.stepping == Stepping::trapezoid && (!at_end || f.lip_z == 0.0);
      const double w = trap ? 0.5 : 1.0;
      std::vector<double> cur(static_cast<std::size_t>(i) + 1), z(cur.size());
      double ystar = 0.0;
      if (options.reflected && !h.state_dependent())
        ystar = threshold([&](double v) { return h(t, 0.0, v, law[iu]); });
      for (Index j = 0; j <= i; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        double dn = next[ju], up = next[ju + 1];
        z[ju] = (up - dn) / (2.0 * sdt);
        if (trap) {
          const double t1 = problem.grid.time(i + 1);
          dn += 0.5 * dt * f(t1, x[iu + 1][ju], next[ju], at_end ? 0.0 : zn[ju], law[iu + 1]);
          up += 0.5 * dt * f(t1, x[iu + 1][ju + 1], next[ju + 1], at_end ? 0.0 : zn[ju + 1], law[iu + 1]);
        }
        const double c = 0.5 * (dn + up);
        const double xk = x[iu][ju];
        double v = increasing_root(
            [&](double y) { return y - c - w * dt * f(t, xk, y, z[ju], law[iu]); }, c);
        if (options.reflected) {
          const double thr = h.state_dependent()
                                 ? threshold([&](double s) { return h(t, xk, s, law[iu]); })
                                 : ystar;
          v = std::max(v, thr);
        }
        cur[ju] = v;
      }
      sol.y[iu] = std::move(cur);
      zn = std::move(z);
    }
    double dist = 0.0;
    for (Index i = 0; i < n; ++i) {
      LawView next = node_law(sol.y[static_cast<std::size_t>(i)], i, full);
      dist = std::max(dist, std::abs(next.mean() - law[static_cast<std::size_t>(i)].mean()));
      if (full && next.size() == law[static_cast<std::size_t>(i)].size())
        for (Index k = 0; k < next.size(); ++k)
          dist = std::max(dist, std::abs(next.sample()[k] - law[static_cast<std::size_t>(i)].sample()[k]));
      law[static_cast<std::size_t>(i)] = std::move(next);
    }
    sol.iterations = iter + 1;
    if (dist <= options.tol) break;
    if (iter + 1 >= options.max_iter)
      throw ConvergenceError("tree_solve: Picard iteration did not converge", dist);
  }
  for (Index i = 0; i <= n; ++i)
    sol.mean.push_back(node_law(sol.y[static_cast<std::size_t>(i)], i, false).mean());
  return sol;
}

std::string to_string(ComparisonVerdict::Status status) {
  switch (status) {
    case ComparisonVerdict::Status::pass:
      return "pass";
    case ComparisonVerdict::Status::fail:
      return "fail";
    case ComparisonVerdict::Status::skipped:
      return "skipped";
  }
  return "?";
}

ComparisonVerdict comparison_check(const ProblemSpec& lower, const ProblemSpec& upper,
                                   Index probes, std::uint64_t seed) {
  if (!(lower.grid == upper.grid) || lower.forward.kind != upper.forward.kind ||
      lower.forward.x0 != upper.forward.x0 || lower.forward.drift != upper.forward.drift ||
      lower.forward.vol != upper.forward.vol)
    throw ModelError("comparison_check: problems must share grid and forward model");

  ComparisonVerdict verdict;
  const Index n = lower.grid.steps();
  const double sdt = std::sqrt(lower.grid.dt());
  double worst_a = 0.0, worst_b = 0.0, worst_c = 0.0;
  for (Index j = 0; j <= n; ++j) {
    const double x = node_state(lower.forward, lower.grid.horizon(),
                                static_cast<double>(2 * j - n) * sdt);
    worst_a = std::max(worst_a, lower.terminal(x) - upper.terminal(x));
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ut(0.0, lower.grid.horizon()), ub(-3.0, 3.0),
      uv(-5.0, 5.0), ustep(0.0, 2.0);
  for (Index s = 0; s < probes; ++s) {
    const double t = ut(rng);
    const double x = node_state(lower.forward, t, ub(rng) * std::sqrt(std::max(t, 1e-12)));
    const double y = uv(rng), z = uv(rng), m = uv(rng), dm = ustep(rng);
    const LawView law = LawView::point(m);
    worst_b = std::max(worst_b, lower.driver(t, x, y, z, law) - upper.driver(t, x, y, z, law));
    worst_c = std::max(worst_c, lower.driver(t, x, y, z, law) -
                                    lower.driver(t, x, y, z, LawView::point(m + dm)));
  }
  constexpr double kProbeTol = 1e-12;
  if (worst_a > kProbeTol) verdict.report += fmt::format("(a) xi <= xi' fails by {:.3g}; ", worst_a);
  if (worst_b > kProbeTol) verdict.report += fmt::format("(b) f <= f' fails by {:.3g}; ", worst_b);
  if (worst_c > kProbeTol)
    verdict.report += fmt::format("(c) f nondecreasing in the law fails by {:.3g}; ", worst_c);
  if (!verdict.report.empty()) {
    verdict.report = "hypotheses not met, verdict skipped: " + verdict.report;
    verdict.status = ComparisonVerdict::Status::skipped;
    return verdict;
  }

  TreeOptions opt;
  opt.reflected = false;
  const TreeSolution a = tree_solve(lower, opt);
  const TreeSolution b = tree_solve(upper, opt);
  double worst = -INFINITY;
  for (std::size_t i = 0; i < a.y.size(); ++i)
    for (std::size_t j = 0; j < a.y[i].size(); ++j) worst = std::max(worst, a.y[i][j] - b.y[i][j]);
  verdict.max_violation = worst;
  verdict.status = worst <= 1e-10 ? ComparisonVerdict::Status::pass : ComparisonVerdict::Status::fail;
  return verdict;
}

}  // namespace mfrbsde::oracle
