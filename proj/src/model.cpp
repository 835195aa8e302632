#include "mfrbsde/model.hpp"

#include "mfrbsde/analysis.hpp"
#include "mfrbsde/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>

namespace mfrbsde {

TimeGrid::TimeGrid(double horizon, Index steps)
    : horizon_(horizon), steps_(steps), dt_(horizon / static_cast<double>(steps)) {
  if (!(horizon > 0.0)) throw ModelError("TimeGrid: horizon must be positive");
  if (steps < 1) throw ModelError("TimeGrid: steps must be >= 1");
}

VectorXd TimeGrid::times() const {
  VectorXd t(steps_ + 1);
  for (Index i = 0; i <= steps_; ++i) t[i] = time(i);
  return t;
}

ForwardModel ForwardModel::brownian(double x0) { return {Kind::brownian, x0, 0.0, 1.0}; }

ForwardModel ForwardModel::arithmetic(double x0, double drift, double vol) {
  ForwardModel f{Kind::arithmetic_bm, x0, drift, vol};
  f.check();
  return f;
}

ForwardModel ForwardModel::geometric(double x0, double drift, double vol) {
  ForwardModel f{Kind::geometric_bm, x0, drift, vol};
  f.check();
  return f;
}

void ForwardModel::check() const {
  if (vol < 0.0) throw ModelError("ForwardModel: vol must be >= 0");
  if (kind == Kind::geometric_bm && !(x0 > 0.0))
    throw ModelError("ForwardModel: geometric_bm requires x0 > 0");
}

double ForwardModel::advance(double x, double db, double dt) const {
  switch (kind) {
    case Kind::brownian:
      return x + db;
    case Kind::arithmetic_bm:
      return x + drift * dt + vol * db;
    case Kind::geometric_bm:
      return x * std::exp((drift - 0.5 * vol * vol) * dt + vol * db);
  }
  return x;
}

std::string to_string(ForwardModel::Kind kind) {
  switch (kind) {
    case ForwardModel::Kind::brownian:
      return "brownian";
    case ForwardModel::Kind::arithmetic_bm:
      return "arithmetic_bm";
    case ForwardModel::Kind::geometric_bm:
      return "geometric_bm";
  }
  return "unknown";
}

DriverSpec DriverSpec::zero() {
  DriverSpec d;
  d.eval = [](double, double, double, std::span<const double>, const LawView&) { return 0.0; };
  d.monotone_in_y = true;
  d.monotone_in_m = true;
  return d;
}

DriverSpec DriverSpec::linear(double a, double b, double c) {
  DriverSpec d;
  d.eval = [a, b, c](double, double, double y, std::span<const double>, const LawView& law) {
    return a * y + b * law.mean() + c;
  };
  d.lip_y = std::abs(a);
  d.lip_m = std::abs(b);
  d.monotone_in_y = a >= 0.0;
  d.monotone_in_m = b >= 0.0;
  return d;
}

ObstacleSpec::ObstacleSpec(ObstacleFn eval, double gamma1, double gamma2, bool monotone_in_y,
                           bool monotone_in_m, bool state_dependent, bool uses_law_sample)
    : eval_(std::move(eval)),
      gamma1_(gamma1),
      gamma2_(gamma2),
      monotone_in_y_(monotone_in_y),
      monotone_in_m_(monotone_in_m),
      state_dependent_(state_dependent),
      uses_law_sample_(uses_law_sample) {
  if (!eval_) throw ModelError("ObstacleSpec: missing function");
  if (gamma1 < 0.0 || gamma2 < 0.0) throw ModelError("ObstacleSpec: gammas must be >= 0");
  if (!(gamma1 < 1.0))
    throw ModelError(fmt::format(
        "ObstacleSpec: gamma1 = {} violates gamma1 < 1 (y - h(y, m) must be increasing)", gamma1));
}

ObstacleSpec ObstacleSpec::affine(double slope_y, double slope_m, double constant) {
  return ObstacleSpec(
      [=](double, double, double y, const LawView& law) {
        return slope_y * y + slope_m * law.mean() + constant;
      },
      std::abs(slope_y), std::abs(slope_m), slope_y >= 0.0, slope_m >= 0.0);
}

ObstacleSpec ObstacleSpec::constant(double level) {
  return ObstacleSpec([level](double, double, double, const LawView&) { return level; }, 0.0,
                      0.0, true, true);
}

TerminalSpec TerminalSpec::constant(double value) {
  return {[value](double) { return value; }};
}

TerminalSpec TerminalSpec::identity() {
  return {[](double x) { return x; }};
}

ProblemSpec::ProblemSpec(TimeGrid grid_, ForwardModel forward_, DriverSpec driver_,
                         ObstacleSpec obstacle_, TerminalSpec terminal_, double p)
    : grid(grid_),
      forward(forward_),
      driver(std::move(driver_)),
      obstacle(std::move(obstacle_)),
      terminal(std::move(terminal_)),
      p_exponent(p) {
  forward.check();
  if (!driver.eval) throw ModelError("ProblemSpec: driver function missing");
  if (!terminal.eval) throw ModelError("ProblemSpec: terminal function missing");
  if (driver.lip_y < 0.0 || driver.lip_z < 0.0 || driver.lip_m < 0.0)
    throw ModelError("ProblemSpec: Lipschitz constants must be >= 0");
  if (!(p >= 1.0)) throw ModelError("ProblemSpec: p_exponent must be >= 1");
}

// ---------------------------------------------------------------------------

PathEnsemble simulate_paths(const ForwardModel& forward, const TimeGrid& grid, Index paths,
                            std::uint64_t seed) {
  if (paths < 1) throw ModelError("simulate_paths: paths must be >= 1");
  forward.check();
  const Index n = grid.steps();
  const double sdt = std::sqrt(grid.dt());

  PathEnsemble ens;
  ens.seed = seed;
  ens.dB.resize(paths, n);
  ens.x.resize(paths, n + 1);

#pragma omp parallel for schedule(static)
  for (Index k = 0; k < paths; ++k) {
    const auto key = static_cast<std::uint64_t>(k);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    double x = forward.x0;
    ens.x(k, 0) = x;
    for (Index i = 0; i < n; ++i) {
      const double db = sdt * normal(rng);
      ens.dB(k, i) = db;
      x = forward.advance(x, db, grid.dt());
      ens.x(k, i + 1) = x;
    }
  }
  return ens;
}

// ---------------------------------------------------------------------------

bool ValidationReport::ok() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const CheckResult& c) { return c.informational || c.passed; });
}

const CheckResult* ValidationReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

std::string ValidationReport::summary() const {
  std::string out;
  for (const auto& c : checks) {
    out += fmt::format("{:<5} {}{}", c.passed ? "ok" : (c.informational ? "info" : "FAIL"),
                       c.name, c.informational ? " (informational)" : "");
    if (!c.passed && !c.witness.empty()) out += " -- " + c.witness;
    out += '\n';
  }
  return out;
}

namespace {

constexpr double kSlack = 1e-9;

struct Probe {
  double t, x, y, z, m;
};

class Prober {
 public:
  Prober(const ProblemSpec& problem, const ProbeBox& box) : box_(box), rng_(box.seed) {
    const auto& f = problem.forward;
    const double spread = 4.0 * f.vol * std::sqrt(problem.grid.horizon());
    lo_ = box.x_lo;
    hi_ = box.x_hi;
    if (std::isnan(lo_) || std::isnan(hi_)) {
      if (f.kind == ForwardModel::Kind::geometric_bm) {
        lo_ = f.x0 * std::exp(-spread);
        hi_ = f.x0 * std::exp(spread);
      } else {
        const double drift = f.kind == ForwardModel::Kind::arithmetic_bm
                                 ? std::abs(f.drift) * problem.grid.horizon()
                                 : 0.0;
        lo_ = f.x0 - spread - drift - 1.0;
        hi_ = f.x0 + spread + drift + 1.0;
      }
    }
    horizon_ = problem.grid.horizon();
  }

  Probe draw() {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto sym = [&] { return box_.radius * (2.0 * u01(rng_) - 1.0); };
    return {horizon_ * u01(rng_), lo_ + (hi_ - lo_) * u01(rng_), sym(), sym(), sym()};
  }

  double step() {
    std::uniform_real_distribution<double> u(1e-3, 1.0);
    return u(rng_);
  }

 private:
  ProbeBox box_;
  std::mt19937_64 rng_;
  double lo_, hi_, horizon_;
};

std::string where(const Probe& p) {
  return fmt::format("t={:.6g} x={:.6g} y={:.6g} z={:.6g} m={:.6g}", p.t, p.x, p.y, p.z, p.m);
}

// Checks |g(p + d e_k) - g(p)| <= lip*d for one coordinate, and optionally monotonicity.
template <class G, class Shift>
void probe_slope(Prober& prober, Index samples, double lip, G&& g, Shift&& shift,
                 CheckResult& lip_check, CheckResult* mono_check) {
  double worst_excess = -std::numeric_limits<double>::infinity();
  double worst_decrease = 0.0;
  for (Index s = 0; s < samples; ++s) {
    const Probe p = prober.draw();
    const double d = prober.step();
    const double g0 = g(p);
    const double g1 = g(shift(p, d));
    const double slope = (g1 - g0) / d;
    const double excess = std::abs(slope) - lip;
    if (excess > worst_excess) worst_excess = excess;
    if (excess > kSlack * (1.0 + lip) && lip_check.passed) {
      lip_check.passed = false;
      lip_check.witness = fmt::format("slope {:.6g} > {:.6g} at {}", std::abs(slope), lip, where(p));
    }
    if (mono_check && slope < -kSlack && -slope > worst_decrease) {
      worst_decrease = -slope;
      mono_check->passed = false;
      mono_check->witness = fmt::format("slope {:.6g} at {}", slope, where(p));
    }
  }
  lip_check.worst = worst_excess;
  if (mono_check) mono_check->worst = worst_decrease;
}

}  // namespace

ValidationReport validate(const ProblemSpec& problem, Index samples, const ProbeBox& box) {
  ValidationReport report;
  const auto& f = problem.driver;
  const auto& h = problem.obstacle;

  // Terminal compatibility xi >= h(xi, E[xi]).
  {
    CheckResult c{"terminal_compatibility"};
    const TimeGrid one(problem.grid.horizon(), 1);
    const PathEnsemble ens = simulate_paths(problem.forward, one, samples, box.seed);
    VectorXd xi(samples);
    for (Index k = 0; k < samples; ++k) xi[k] = problem.terminal(ens.x(k, 1));
    const LawView law = h.uses_law_sample() ? LawView::empirical(xi) : LawView::point(xi.mean());
    double worst = std::numeric_limits<double>::infinity();
    const double T = problem.grid.horizon();
    for (Index k = 0; k < samples; ++k) {
      const double gap = xi[k] - h(T, ens.x(k, 1), xi[k], law);
      if (gap < worst) {
        worst = gap;
        if (gap < -1e-12)
          c.witness = fmt::format("xi={:.6g} < h={:.6g} at x_T={:.6g}", xi[k], xi[k] - gap,
                                  ens.x(k, 1));
      }
    }
    c.worst = worst;
    c.passed = worst >= -1e-12;
    report.checks.push_back(c);
  }

  Prober prober(problem, box);
  auto fz = [&](const Probe& p) { return f(p.t, p.x, p.y, p.z, LawView::point(p.m)); };
  auto hz = [&](const Probe& p) { return h(p.t, p.x, p.y, LawView::point(p.m)); };
  auto dy = [](Probe p, double d) { p.y += d; return p; };
  auto dz = [](Probe p, double d) { p.z += d; return p; };
  auto dm = [](Probe p, double d) { p.m += d; return p; };

  {
    CheckResult lip{"driver_lipschitz_y"}, mono{"driver_monotone_y"};
    probe_slope(prober, samples, f.lip_y, fz, dy, lip, &mono);
    report.checks.push_back(lip);
    mono.informational = !f.monotone_in_y;
    if (!f.monotone_in_y) mono.name += "_probe";
    report.checks.push_back(mono);
  }
  {
    CheckResult lip{"driver_lipschitz_z"};
    probe_slope(prober, samples, f.lip_z, fz, dz, lip, nullptr);
    report.checks.push_back(lip);
  }
  {
    // (H2)(c): f nondecreasing in the law argument.
    CheckResult lip{"driver_lipschitz_m"}, mono{"driver_monotone_m"};
    probe_slope(prober, samples, f.lip_m, fz, dm, lip, &mono);
    report.checks.push_back(lip);
    mono.informational = !f.monotone_in_m;
    if (!f.monotone_in_m) mono.name += "_probe";
    report.checks.push_back(mono);
  }
  {
    CheckResult lip{"obstacle_lipschitz_y"}, mono{"obstacle_monotone_y"};
    probe_slope(prober, samples, h.gamma1(), hz, dy, lip, &mono);
    report.checks.push_back(lip);
    mono.informational = !h.monotone_in_y();
    if (!h.monotone_in_y()) mono.name += "_probe";
    report.checks.push_back(mono);
  }
  {
    CheckResult lip{"obstacle_lipschitz_m"}, mono{"obstacle_monotone_m"};
    probe_slope(prober, samples, h.gamma2(), hz, dm, lip, &mono);
    report.checks.push_back(lip);
    mono.informational = !h.monotone_in_m();
    if (!h.monotone_in_m()) mono.name += "_probe";
    report.checks.push_back(mono);
  }
  {
    CheckResult c{"gamma1_below_one"};
    c.worst = h.gamma1();
    c.passed = h.gamma1() < 1.0;
    report.checks.push_back(c);
  }
  {
    CheckResult c{"contraction_feasible"};
    if (problem.p_exponent > 1.0) {
      const auto g = gamma_condition(problem.p_exponent, h.gamma1(), h.gamma2());
      c.worst = g.value;
      c.passed = g.feasible;
      if (!c.passed)
        c.witness = fmt::format("gamma condition value {:.6g} >= 1 for p={}", g.value,
                                problem.p_exponent);
    } else {
      c.worst = h.gamma1() + h.gamma2();
      c.passed = c.worst < 1.0;
      if (!c.passed) c.witness = fmt::format("gamma1 + gamma2 = {:.6g} >= 1", c.worst);
    }
    report.checks.push_back(c);
  }
  if (f.domination) {
    CheckResult c{"domination"};
    double worst = -std::numeric_limits<double>::infinity();
    for (Index s = 0; s < samples; ++s) {
      const Probe p = prober.draw();
      const LawView law = LawView::point(p.m);
      const double excess = f(p.t, p.x, p.y, p.z, law) - f.domination->eval(p.t, p.x, p.y, law);
      if (excess > worst) worst = excess;
      if (excess > kSlack && c.passed) {
        c.passed = false;
        c.witness = fmt::format("f exceeds domination by {:.6g} at {}", excess, where(p));
      }
    }
    c.worst = worst;
    report.checks.push_back(c);
  }
  return report;
}

// ---------------------------------------------------------------------------

namespace {

double sup_on(const TimeFn& g, double horizon, bool absolute) {
  double s = -std::numeric_limits<double>::infinity();
  constexpr int kPoints = 2001;
  for (int k = 0; k < kPoints; ++k) {
    const double v = g(horizon * k / (kPoints - 1));
    s = std::max(s, absolute ? std::abs(v) : v);
  }
  return s;
}

double inf_on(const TimeFn& g, double horizon) {
  return -sup_on([&](double t) { return -g(t); }, horizon, false);
}

}  // namespace

ProblemSpec insurance_problem(const InsuranceParams& pr, const TimeGrid& grid,
                              const ForwardModel& forward) {
  if (!(pr.mu > 0.0 && pr.mu < 1.0)) throw ModelError("insurance_problem: mu must lie in (0, 1)");
  const double T = grid.horizon();
  if (inf_on(pr.beta, T) < 0.0) throw ModelError("insurance_problem: beta_t must be >= 0");
  if (inf_on(pr.theta, T) < 0.0) throw ModelError("insurance_problem: theta_t must be >= 0");

  DriverSpec f;
  f.eval = [alpha = pr.alpha, beta = pr.beta, theta = pr.theta, delta = pr.delta_rate](
               double t, double, double y, std::span<const double>, const LawView& law) {
    return alpha(t) - delta(t) * y + beta(t) * std::max(theta(t), y - law.mean());
  };
  // df/dy is -delta or beta - delta depending on the max branch; df/dm is 0 or -beta.
  f.lip_y = sup_on([&](double t) {
    return std::max(std::abs(pr.delta_rate(t)), std::abs(pr.beta(t) - pr.delta_rate(t)));
  }, T, false);
  f.lip_m = sup_on(pr.beta, T, true);
  f.monotone_in_y = sup_on(pr.delta_rate, T, false) <= 0.0 &&
                    inf_on([&](double t) { return pr.beta(t) - pr.delta_rate(t); }, T) >= 0.0;
  f.monotone_in_m = sup_on(pr.beta, T, true) == 0.0;

  const double u = pr.u;
  const double mu = pr.mu;
  ObstacleSpec h(
      [u, mu, fee = pr.fee](double, double, double y, const LawView& law) {
        return u - fee(y) + mu * std::max(law.mean() - u, 0.0);
      },
      pr.fee_lipschitz, mu, !pr.fee_nondecreasing || pr.fee_lipschitz == 0.0, true);

  return ProblemSpec(grid, forward, std::move(f), std::move(h), TerminalSpec{pr.terminal}, 2.0);
}

ProblemSpec insurance_default(Index steps) {
  return insurance_problem(InsuranceParams{}, TimeGrid(1.0, steps),
                           ForwardModel::geometric(1.0, 0.0, 0.2));
}

ProblemSpec american_put_problem(double strike, const TimeGrid& grid, const ForwardModel& forward,
                                 double p_exponent) {
  ObstacleSpec h([strike](double, double x, double, const LawView&) { return std::max(strike - x, 0.0); },
                 0.0, 0.0, true, true, true);
  return ProblemSpec(grid, forward, DriverSpec::zero(), std::move(h),
                     TerminalSpec{[strike](double x) { return std::max(strike - x, 0.0); }}, p_exponent);
}

}  // namespace mfrbsde
