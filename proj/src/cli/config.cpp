#include "mfrbsde/cli.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <random>

namespace mfrbsde::cli {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

const json* child(const json& obj, const std::string& key) {
  if (!obj.is_object()) return nullptr;
  auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

const json& require(const json& obj, const std::string& key, const std::string& path) {
  const json* v = child(obj, key);
  if (v == nullptr) throw ConfigError(join(path, key), "required field is missing");
  return *v;
}

double number(const json& obj, const std::string& key, const std::string& path, double fallback) {
  const json* v = child(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_number()) throw ConfigError(join(path, key), "expected a number");
  const double d = v->get<double>();
  if (!std::isfinite(d)) throw ConfigError(join(path, key), "must be finite");
  return d;
}

std::optional<double> maybe_number(const json& obj, const std::string& key,
                                   const std::string& path) {
  if (child(obj, key) == nullptr) return std::nullopt;
  return number(obj, key, path, 0.0);
}

std::int64_t integer(const json& obj, const std::string& key, const std::string& path,
                     std::int64_t fallback) {
  const json* v = child(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_number_integer()) throw ConfigError(join(path, key), "expected an integer");
  return v->get<std::int64_t>();
}

bool boolean(const json& obj, const std::string& key, const std::string& path, bool fallback) {
  const json* v = child(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_boolean()) throw ConfigError(join(path, key), "expected true or false");
  return v->get<bool>();
}

std::optional<bool> maybe_boolean(const json& obj, const std::string& key,
                                  const std::string& path) {
  if (child(obj, key) == nullptr) return std::nullopt;
  return boolean(obj, key, path, false);
}

std::string string(const json& obj, const std::string& key, const std::string& path,
                   const std::string& fallback) {
  const json* v = child(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_string()) throw ConfigError(join(path, key), "expected a string");
  return v->get<std::string>();
}

/// Accepts either an expression string or a number.
Expression expression(const json& v, const std::string& path) {
  if (v.is_number()) return Expression::parse(fmt::format("{:.17g}", v.get<double>()), path);
  if (!v.is_string()) throw ConfigError(path, "expected an expression string");
  return Expression::parse(v.get<std::string>(), path);
}

// ---------------------------------------------------------------------------
// Probing of undeclared constants for custom coefficients.

struct Probe {
  std::mt19937_64 rng{20240611};
  std::uniform_real_distribution<double> unit{0.0, 1.0};
  double t_hi = 1.0, x_lo = -3.0, x_hi = 3.0, radius = 5.0;

  double t() { return t_hi * unit(rng); }
  double x() { return x_lo + (x_hi - x_lo) * unit(rng); }
  double v() { return radius * (2.0 * unit(rng) - 1.0); }
};

constexpr int kProbes = 20000;

/// sup |e(.., arg + d) - e(.., arg)| / d over random probes, for argument `which`
/// (2 = y, 3 = z, 4 = m).
double probe_slope(const Expression& e, int which, Probe& p) {
  double worst = 0.0;
  for (int s = 0; s < kProbes; ++s) {
    double a[5] = {p.t(), p.x(), p.v(), p.v(), p.v()};
    double b[5] = {a[0], a[1], a[2], a[3], a[4]};
    const double d = 1e-3 + p.unit(p.rng);
    b[which] += d;
    const double r = std::abs(e(b[0], b[1], b[2], b[3], b[4]) - e(a[0], a[1], a[2], a[3], a[4])) / d;
    if (std::isfinite(r)) worst = std::max(worst, r);
  }
  return worst;
}

bool probe_nondecreasing(const Expression& e, int which, Probe& p) {
  for (int s = 0; s < kProbes; ++s) {
    double a[5] = {p.t(), p.x(), p.v(), p.v(), p.v()};
    double b[5] = {a[0], a[1], a[2], a[3], a[4]};
    b[which] += 1e-3 + p.unit(p.rng);
    if (e(b[0], b[1], b[2], b[3], b[4]) < e(a[0], a[1], a[2], a[3], a[4]) - 1e-12) return false;
  }
  return true;
}

/// Snaps probed slopes of piecewise-linear expressions to round values.
double tidy(double slope) {
  const double r = std::round(slope * 1e9) / 1e9;
  return std::abs(r - slope) < 1e-9 ? r : slope;
}

ProblemSpec custom_problem(const json& spec, const TimeGrid& grid, const ForwardModel& fwd,
                           double p, const std::string& path) {
  Probe probe;
  probe.t_hi = grid.horizon();
  probe.x_lo = fwd.x0 - 3.0 * std::max(fwd.vol, 1.0) * std::sqrt(grid.horizon());
  probe.x_hi = fwd.x0 + 3.0 * std::max(fwd.vol, 1.0) * std::sqrt(grid.horizon());
  if (fwd.kind == ForwardModel::Kind::geometric_bm) probe.x_lo = std::max(probe.x_lo, 1e-6);

  const std::string tpath = join(path, "terminal");
  const json& tj = require(spec, "terminal", path);
  const Expression xi = expression(tj.is_object() ? require(tj, "expr", tpath) : tj,
                                   tj.is_object() ? join(tpath, "expr") : tpath);
  for (char c : {'t', 'y', 'z', 'm'})
    if (xi.uses(c)) throw ConfigError(tpath, "terminal may depend on x only");

  const std::string dpath = join(path, "driver");
  const json& dj = require(spec, "driver", path);
  const json dobj = dj.is_object() ? dj : json{{"expr", dj}};
  const Expression fe = expression(require(dobj, "expr", dpath), join(dpath, "expr"));

  DriverSpec f;
  f.eval = [fe](double t, double x, double y, std::span<const double> z, const LawView& law) {
    return fe(t, x, y, z.empty() ? 0.0 : z[0], law.mean());
  };
  auto lip = [&](const char* key, int which) {
    if (auto v = maybe_number(dobj, key, dpath)) {
      if (*v < 0.0) throw ConfigError(join(dpath, key), "must be >= 0");
      return *v;
    }
    return tidy(probe_slope(fe, which, probe));
  };
  f.lip_y = lip("lip_y", 2);
  f.lip_z = lip("lip_z", 3);
  f.lip_m = lip("lip_m", 4);
  f.monotone_in_y =
      maybe_boolean(dobj, "monotone_in_y", dpath).value_or(probe_nondecreasing(fe, 2, probe));
  f.monotone_in_m =
      maybe_boolean(dobj, "monotone_in_m", dpath).value_or(probe_nondecreasing(fe, 4, probe));
  if (const json* dom = child(dobj, "domination")) {
    const std::string ppath = join(dpath, "domination");
    const json dobj2 = dom->is_object() ? *dom : json{{"expr", *dom}};
    const Expression ge = expression(require(dobj2, "expr", ppath), join(ppath, "expr"));
    if (ge.uses('z')) throw ConfigError(ppath, "domination must not depend on z");
    Domination d;
    d.eval = [ge](double t, double x, double y, const LawView& law) {
      return ge(t, x, y, 0.0, law.mean());
    };
    d.lip_y = maybe_number(dobj2, "lip_y", ppath).value_or(tidy(probe_slope(ge, 2, probe)));
    d.lip_m = maybe_number(dobj2, "lip_m", ppath).value_or(tidy(probe_slope(ge, 4, probe)));
    f.domination = d;
  }

  std::optional<ObstacleSpec> h;
  if (const json* oj = child(spec, "obstacle")) {
    const std::string opath = join(path, "obstacle");
    const json oobj = oj->is_object() ? *oj : json{{"expr", *oj}};
    const Expression he = expression(require(oobj, "expr", opath), join(opath, "expr"));
    if (he.uses('z')) throw ConfigError(opath, "obstacle must not depend on z");
    const double g1 = maybe_number(oobj, "gamma1", opath).value_or(tidy(probe_slope(he, 2, probe)));
    const double g2 = maybe_number(oobj, "gamma2", opath).value_or(tidy(probe_slope(he, 4, probe)));
    if (!(g1 < 1.0))
      throw ConfigError(join(opath, "gamma1"), fmt::format("gamma1 = {} violates gamma1 < 1", g1));
    const bool my = maybe_boolean(oobj, "monotone_in_y", opath).value_or(probe_nondecreasing(he, 2, probe));
    const bool mm = maybe_boolean(oobj, "monotone_in_m", opath).value_or(probe_nondecreasing(he, 4, probe));
    h.emplace(
        [he](double t, double x, double y, const LawView& law) { return he(t, x, y, 0.0, law.mean()); },
        g1, g2, my, mm, he.uses('t') || he.uses('x'));
  }
  return ProblemSpec(grid, fwd, std::move(f), h ? *h : ObstacleSpec::inactive(),
                     TerminalSpec{[xi](double x) { return xi(0.0, x, 0.0, 0.0, 0.0); }}, p);
}

ForwardModel forward_model(const json& doc, const ForwardModel& fallback) {
  const json* fj = child(doc, "forward");
  if (fj == nullptr) return fallback;
  const std::string path = "forward";
  const std::string kind = string(*fj, "kind", path, to_string(fallback.kind));
  ForwardModel m = fallback;
  if (kind == "brownian") {
    m = ForwardModel::brownian(number(*fj, "x0", path, 0.0));
  } else if (kind == "arithmetic_bm") {
    m = ForwardModel::arithmetic(number(*fj, "x0", path, 0.0), number(*fj, "drift", path, 0.0),
                                 number(*fj, "vol", path, 1.0));
  } else if (kind == "geometric_bm") {
    m = ForwardModel::geometric(number(*fj, "x0", path, 1.0), number(*fj, "drift", path, 0.0),
                                number(*fj, "vol", path, 0.2));
  } else {
    throw ConfigError("forward.kind", "expected brownian, arithmetic_bm or geometric_bm");
  }
  try {
    m.check();
  } catch (const ModelError& e) {
    throw ConfigError("forward", e.what());
  }
  return m;
}

}  // namespace

Config load_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("<root>", "configuration must be a JSON object");
  Config cfg;

  const json empty = json::object();
  const json* gj = child(doc, "grid");
  const json& g = gj ? *gj : empty;
  const double horizon = number(g, "horizon", "grid", 1.0);
  const std::int64_t steps = integer(g, "steps", "grid", 100);
  if (!(horizon > 0.0)) throw ConfigError("grid.horizon", "must be > 0");
  if (steps < 1) throw ConfigError("grid.steps", "must be >= 1");
  const TimeGrid grid(horizon, steps);

  const json& pj = require(doc, "problem", "");
  const std::string kind = string(pj, "builtin", "problem", "custom");
  const double p = number(pj, "p", "problem", 2.0);
  if (!(p >= 1.0)) throw ConfigError("problem.p", "must be >= 1");
  const json* params = child(pj, "params");
  const json& par = params ? *params : empty;
  const std::string ppath = "problem.params";
  cfg.problem_name = kind;

  if (kind == "insurance") {
    const ForwardModel fwd = forward_model(doc, ForwardModel::geometric(1.0, 0.0, 0.2));
    InsuranceParams ip;
    const double alpha = number(par, "alpha", ppath, 0.1);
    const double beta = number(par, "beta", ppath, 0.05);
    const double theta = number(par, "theta", ppath, 0.0);
    const double delta = number(par, "delta", ppath, 0.03);
    const double fee = number(par, "fee", ppath, 0.01);
    const double guarantee = number(par, "guarantee", ppath, 1.05);
    ip.alpha = [alpha](double) { return alpha; };
    ip.beta = [beta](double) { return beta; };
    ip.theta = [theta](double) { return theta; };
    ip.delta_rate = [delta](double) { return delta; };
    ip.u = number(par, "u", ppath, 1.0);
    ip.mu = number(par, "mu", ppath, 0.5);
    ip.fee = [fee](double y) { return fee * y; };
    ip.fee_lipschitz = std::abs(fee);
    ip.fee_nondecreasing = fee >= 0.0;
    ip.terminal = [guarantee](double x) { return std::max(x, guarantee); };
    try {
      ProblemSpec prob = insurance_problem(ip, grid, fwd);
      prob.p_exponent = p;
      cfg.problem = std::move(prob);
    } catch (const ModelError& e) {
      throw ConfigError(ppath, e.what());
    }
  } else if (kind == "american_put") {
    const ForwardModel fwd = forward_model(doc, ForwardModel::geometric(1.0, 0.0, 0.2));
    cfg.problem = american_put_problem(number(par, "strike", ppath, 1.0), grid, fwd, p);
  } else if (kind == "linear_mf") {
    const ForwardModel fwd = forward_model(doc, ForwardModel::brownian(0.0));
    const Expression xi =
        child(par, "terminal") ? expression(par["terminal"], join(ppath, "terminal"))
                               : Expression::parse("1 + x");
    cfg.problem = ProblemSpec(
        grid, fwd,
        DriverSpec::linear(number(par, "a", ppath, 0.0), number(par, "b", ppath, 0.0),
                           number(par, "c", ppath, 0.0)),
        ObstacleSpec::inactive(), TerminalSpec{[xi](double x) { return xi(0.0, x, 0.0, 0.0, 0.0); }},
        p);
  } else if (kind == "custom") {
    const ForwardModel fwd = forward_model(doc, ForwardModel::brownian(0.0));
    cfg.problem = custom_problem(pj, grid, fwd, p, "problem");
  } else {
    throw ConfigError("problem.builtin", "expected insurance, american_put, linear_mf or custom");
  }

  if (const json* sj = child(doc, "scheme")) {
    if (sj->is_string()) {
      cfg.scheme = sj->get<std::string>();
    } else {
      cfg.scheme = string(*sj, "name", "scheme", cfg.scheme);
      cfg.windowing = boolean(*sj, "windowing", "scheme", cfg.windowing);
      cfg.auto_theta = boolean(*sj, "auto_theta", "scheme", cfg.auto_theta);
      cfg.auto_kappa = boolean(*sj, "auto_kappa", "scheme", cfg.auto_kappa);
      const std::string st = string(*sj, "stepping", "scheme", "trapezoidal");
      if (st == "trapezoidal")
        cfg.stepping = TimeStepping::trapezoidal;
      else if (st == "implicit_euler")
        cfg.stepping = TimeStepping::implicit_euler;
      else
        throw ConfigError("scheme.stepping", "expected trapezoidal or implicit_euler");
      if (const json* ps = child(*sj, "penalty_schedule")) {
        if (!ps->is_array() || ps->empty())
          throw ConfigError("scheme.penalty_schedule", "expected a non-empty array");
        cfg.penalty_schedule.clear();
        for (const auto& v : *ps) {
          if (!v.is_number()) throw ConfigError("scheme.penalty_schedule", "expected numbers");
          cfg.penalty_schedule.push_back(v.get<double>());
        }
      }
    }
  }
  if (const json* ej = child(doc, "engine")) {
    if (ej->is_string()) {
      cfg.engine = ej->get<std::string>();
    } else {
      cfg.engine = string(*ej, "kind", "engine", cfg.engine);
      cfg.paths = integer(*ej, "paths", "engine", cfg.paths);
      cfg.degree = static_cast<int>(integer(*ej, "degree", "engine", cfg.degree));
      cfg.ridge = number(*ej, "ridge", "engine", cfg.ridge);
    }
  }
  if (const json* tj = child(doc, "tolerances")) {
    cfg.picard_tol = number(*tj, "picard", "tolerances", cfg.picard_tol);
    cfg.root_tol = number(*tj, "root", "tolerances", cfg.root_tol);
    cfg.cross_tol = number(*tj, "cross", "tolerances", cfg.cross_tol);
    cfg.penalty_tol = number(*tj, "penalty", "tolerances", cfg.penalty_tol);
    cfg.max_outer = static_cast<int>(integer(*tj, "max_outer", "tolerances", cfg.max_outer));
  }
  if (const json* oj = child(doc, "output")) {
    cfg.out_dir = string(*oj, "dir", "output", cfg.out_dir);
    cfg.plotdata = boolean(*oj, "plotdata", "output", cfg.plotdata);
  }
  if (child(doc, "seed") != nullptr) {
    const std::int64_t s = integer(doc, "seed", "", 42);
    if (s < 0) throw ConfigError("seed", "must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(s);
  }
  return cfg;
}

Config load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open configuration file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
  }
  return load_config(doc);
}

}  // namespace mfrbsde::cli
