#include "mfrbsde/cli.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mfrbsde;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mfrbsde_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome run_tool(const fs::path& dir, const json& config, const std::string& args) {
  const fs::path cfg = dir / "config.json";
  std::ofstream(cfg) << config.dump(2);
  const std::string cmd = std::string("\"") + MFRBSDE_TOOL + "\" " + args + " --config \"" +
                          cfg.string() + "\" > \"" + (dir / "stdout").string() + "\" 2> \"" +
                          (dir / "stderr").string() + "\"";
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.out = slurp(dir / "stdout");
  o.err = slurp(dir / "stderr");
  return o;
}

std::vector<std::vector<std::string>> csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(cell);
    rows.push_back(row);
  }
  return rows;
}

json custom(const std::string& driver, const json& obstacle, const std::string& terminal, int steps = 20) {
  return {{"grid", {{"horizon", 1.0}, {"steps", steps}}},
          {"forward", {{"kind", "brownian"}, {"x0", 0.0}}},
          {"problem", {{"builtin", "custom"}, {"driver", driver}, {"obstacle", obstacle}, {"terminal", terminal}}},
          {"scheme", "snell"},
          {"engine", "lattice"}};
}

}  // namespace

TEST_CASE("expression parser") {
  using cli::Expression;
  const auto e = Expression::parse("2*x^2 - max(y, 0.5) + pos(m - 1) / 4 + neg(z) - -t");
  CHECK(e(0.5, 3.0, 0.2, -2.0, 3.0) == doctest::Approx(18.0 - 0.5 + 0.5 + 2.0 + 0.5));
  CHECK(e.uses('x'));
  CHECK(e.uses('t'));
  CHECK_FALSE(Expression::parse("1 + x").uses('y'));
  CHECK(Expression::parse("2^3^2")(0, 0, 0, 0, 0) == 512.0);
  CHECK(Expression::parse("-2^2")(0, 0, 0, 0, 0) == -4.0);
  CHECK(Expression::parse("min(abs(x), 3)")(0, -5, 0, 0, 0) == 3.0);
  CHECK(Expression::parse("1e-3 * (x + 1)")(0, 1, 0, 0, 0) == doctest::Approx(2e-3));
  CHECK_THROWS_WITH_AS(Expression::parse("1 + foo(x)", "problem.driver"),
                       doctest::Contains("problem.driver"), cli::ConfigError);
  CHECK_THROWS_AS(Expression::parse("max(x)"), cli::ConfigError);
  CHECK_THROWS_AS(Expression::parse("(x + 1"), cli::ConfigError);
  CHECK_THROWS_AS(Expression::parse("x y"), cli::ConfigError);
  CHECK_THROWS_AS(Expression::parse(""), cli::ConfigError);
}

TEST_CASE("config loading") {
  const json ok = custom("0.1*y + 0.2*m", json{{"expr", "0.2*y + 0.3*m - 1"}, {"gamma1", 0.2}, {"gamma2", 0.3}}, "x");
  const cli::Config cfg = cli::load_config(ok);
  REQUIRE(cfg.problem);
  CHECK(cfg.problem->grid.steps() == 20);
  CHECK(cfg.problem->obstacle.gamma1() == 0.2);
  CHECK(cfg.picard_tol == 1e-4);
  CHECK(cfg.root_tol == 1e-12);
  CHECK(cfg.cross_tol == 1e-3);
  CHECK(cfg.problem->driver.lip_y == doctest::Approx(0.1));
  CHECK(cfg.problem->driver.lip_m == doctest::Approx(0.2));

  json missing = ok;
  missing["problem"].erase("terminal");
  try {
    cli::load_config(missing);
    FAIL("expected ConfigError");
  } catch (const cli::ConfigError& e) {
    CHECK(e.path() == "problem.terminal");
  }
  json bad = ok;
  bad["grid"]["steps"] = 0;
  CHECK_THROWS_WITH_AS(cli::load_config(bad), doctest::Contains("grid.steps"), cli::ConfigError);
  bad = ok;
  bad["problem"]["builtin"] = "nonsense";
  CHECK_THROWS_AS(cli::load_config(bad), cli::ConfigError);
  for (const char* name : {"insurance", "american_put", "linear_mf"}) {
    json b = {{"problem", {{"builtin", name}}}};
    CHECK_NOTHROW(cli::load_config(b));
  }
}

TEST_CASE("exit codes") {
  const fs::path dir = scratch("exit");
  SUBCASE("missing terminal") {
    json cfg = custom("0", json{{"expr", "0"}}, "x");
    cfg["problem"].erase("terminal");
    const auto o = run_tool(dir, cfg, "solve");
    CHECK(o.code == 4);
    CHECK(o.err.find("problem.terminal") != std::string::npos);
  }
  SUBCASE("unreadable file") {
    const std::string cmd = std::string("\"") + MFRBSDE_TOOL + "\" solve --config /nonexistent.json 2>/dev/null";
    const int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) == 4);
  }
  SUBCASE("infeasible contraction condition") {
    const json cfg = custom("0", json{{"expr", "0.5*y + 0.5*m - 1"}, {"gamma1", 0.5}, {"gamma2", 0.5}}, "pos(x)");
    const auto o = run_tool(dir, cfg, "solve --out \"" + (dir / "out").string() + "\"");
    CHECK(o.code == 2);
    CHECK(o.err.find("contraction condition") != std::string::npos);
    CHECK(o.err.find("gamma1 = 0.5") != std::string::npos);
    const auto forced = run_tool(dir, cfg, "solve --force --out \"" + (dir / "out").string() + "\"");
    CHECK(forced.code != 2);
    CHECK(forced.err.find("--force") != std::string::npos);
  }
  SUBCASE("unconverged penalty") {
    json cfg = custom("-2", json{{"expr", "0.5"}}, "max(x, 0.5)");
    cfg["scheme"] = "penalty";
    cfg["tolerances"] = {{"penalty", 1e-14}};
    const auto o = run_tool(dir, cfg, "solve --out \"" + (dir / "out").string() + "\"");
    CHECK(o.code == 3);
  }
}

TEST_CASE("reports") {
  SUBCASE("constant solution gives constant columns") {
    const fs::path dir = scratch("const");
    const json cfg = custom("0", json{{"expr", "0"}}, "1", 10);
    const auto o = run_tool(dir, cfg, "solve --out \"" + (dir / "out").string() + "\"");
    REQUIRE(o.code == 0);
    const auto rows = csv(dir / "out" / "snell" / "timeseries.csv");
    REQUIRE(rows.size() == 12);
    CHECK(rows[0] == std::vector<std::string>{"t", "mean_Y", "std_Y", "mean_K", "mean_Z", "constraint_violation"});
    for (std::size_t r = 1; r < rows.size(); ++r) {
      CHECK(rows[r][1] == "1");
      CHECK(rows[r][2] == "0");
      CHECK(rows[r][3] == "0");
      CHECK(rows[r][4] == (r + 1 == rows.size() ? "nan" : "0"));
      CHECK(rows[r][5] == "0");
    }
    const auto plot = csv(dir / "out" / "snell" / "plotdata.csv");
    CHECK(plot[0] == std::vector<std::string>{"t", "q05", "q50", "q95"});
  }
  SUBCASE("insurance run") {
    const fs::path dir = scratch("insurance");
    json cfg = {{"grid", {{"horizon", 1.0}, {"steps", 40}}},
                // No premium income and a high discount rate push the reserve below the
                // surrender value, so the obstacle binds.
                {"problem", {{"builtin", "insurance"},
                             {"params", {{"alpha", 0.0}, {"beta", 0.0}, {"delta", 0.5}, {"mu", 0.2}}}}},
                {"scheme", "both"},
                {"engine", "lattice"}};
    const auto o = run_tool(dir, cfg, "solve --out \"" + (dir / "out").string() + "\"");
    REQUIRE(o.code == 0);
    for (const char* scheme : {"snell", "penalty"}) {
      const auto rows = csv(dir / "out" / scheme / "timeseries.csv");
      REQUIRE(rows.size() == 42);
      for (std::size_t r = 2; r < rows.size(); ++r) CHECK(std::stod(rows[r][3]) >= std::stod(rows[r - 1][3]));
      const json d = json::parse(slurp(dir / "out" / scheme / "diagnostics.json"));
      CHECK(d["schema_version"] == 1);
      for (const char* key : {"gamma_condition", "delta_used", "picard", "skorohod_residual", "constraint_violation"})
        CHECK(d.contains(key));
      CHECK(d["picard"].contains("window_iterations"));
      CHECK(d["penalty"].contains("levels"));
    }
    const json p = json::parse(slurp(dir / "out" / "penalty" / "diagnostics.json"));
    CHECK(p["penalty"]["levels"].size() >= 1);
    CHECK(p["penalty"]["levels"][0].contains("monotonicity_defect"));
    CHECK(p["penalty"]["schedule"].size() == 11);
    const auto k = csv(dir / "out" / "snell" / "timeseries.csv");
    CHECK(std::stod(k.back()[3]) > 0.0);
    const json cross = json::parse(slurp(dir / "out" / "cross_scheme.json"));
    CHECK(cross["within_tol"] == true);
  }
  SUBCASE("unwritable directory") {
    const fs::path dir = scratch("unwritable");
    const json cfg = custom("0", json{{"expr", "0"}}, "1", 4);
    std::ofstream(dir / "blocker") << "x";
    const auto o = run_tool(dir, cfg, "solve --out \"" + (dir / "blocker" / "sub").string() + "\"");
    CHECK(o.code == 1);
    CHECK(o.err.find("cannot create output directory") != std::string::npos);
  }
}

TEST_CASE("validate subcommand") {
  const fs::path dir = scratch("validate");
  const json good = custom("0.1*y", json{{"expr", "0.2*y - 1"}, {"gamma1", 0.2}}, "max(x, 0)");
  const auto o = run_tool(dir, good, "validate");
  CHECK(o.code == 0);
  CHECK_FALSE(o.out.empty());
}

TEST_CASE("monte carlo output does not depend on the thread count") {
  const fs::path dir = scratch("threads");
  json cfg = custom("-0.2*y + 0.1*m", json{{"expr", "0.1*y + 0.2*m + 0.5*pos(-x)"}, {"gamma1", 0.1}, {"gamma2", 0.2}},
                    "abs(x) + 1", 20);
  cfg["engine"] = {{"kind", "mc"}, {"paths", 4000}};
  std::string first;
  for (int threads : {1, 3}) {
    const fs::path out = dir / ("t" + std::to_string(threads));
    const auto o = run_tool(dir, cfg, "solve --seed 11 --threads " + std::to_string(threads) + " --out \"" + out.string() + "\"");
    REQUIRE(o.code == 0);
    const std::string ts = slurp(out / "snell" / "timeseries.csv") + slurp(out / "snell" / "plotdata.csv");
    if (first.empty())
      first = ts;
    else
      CHECK(ts == first);
  }
}
