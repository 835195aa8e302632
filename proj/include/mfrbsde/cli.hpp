#pragma once

#include "mfrbsde/errors.hpp"
#include "mfrbsde/model.hpp"
#include "mfrbsde/penalty.hpp"
#include "mfrbsde/solution.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mfrbsde::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kValidation = 2,
  kNonConvergence = 3,
  kConfig = 4,
};

/// Bad or missing configuration; `path` names the offending field.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Arithmetic in the variables t, x, y, z, m with + - * / ^, unary minus and
/// the combinators max(a, b), min(a, b), pos(a) = a^+, neg(a) = a^-, abs(a).
class Expression {
 public:
  struct Node {
    enum class Op { constant, var, add, sub, mul, div, pow, negate, max, min, pos, neg, abs };
    Op op = Op::constant;
    double value = 0.0;
    int var = 0;  ///< 0..4 for t, x, y, z, m
    int a = -1;
    int b = -1;
  };

  Expression();
  /// Throws ConfigError(field, ...) on a syntax error.
  static Expression parse(const std::string& text, const std::string& field = "expression");

  double operator()(double t, double x, double y, double z, double m) const;
  bool uses(char variable) const;
  const std::string& text() const noexcept { return text_; }

 private:
  std::string text_;
  std::vector<Node> nodes_;
  int root_ = -1;
  unsigned used_ = 0;

  friend class ExpressionParser;
};

struct Config {
  std::optional<ProblemSpec> problem;
  std::string problem_name;
  std::string scheme = "snell";
  std::string engine = "lattice";
  Index paths = 10000;
  int degree = 3;
  double ridge = 1e-8;
  std::uint64_t seed = 42;
  double picard_tol = 1e-4;
  double root_tol = 1e-12;
  double cross_tol = 1e-3;
  double penalty_tol = 1e-3;
  int max_outer = 200;
  bool windowing = true;
  TimeStepping stepping = TimeStepping::trapezoidal;
  std::vector<double> penalty_schedule = PenaltyOptions::default_schedule();
  bool auto_theta = true;
  bool auto_kappa = true;
  std::string out_dir = "out";
  bool plotdata = true;
};

/// Builds a Config from a parsed document; every problem is validated later.
Config load_config(const nlohmann::json& doc);
Config load_config_file(const std::filesystem::path& path);

struct Overrides {
  std::optional<std::string> scheme;
  std::optional<std::string> engine;
  std::optional<Index> paths;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out;
  bool force = false;
};

/// Writes timeseries.csv, diagnostics.json and (optionally) plotdata.csv into
/// `dir`, creating it. `extra` is merged into the diagnostics document.
void write_report(const SolutionBundle& bundle, const ProblemSpec& problem,
                  const std::filesystem::path& dir, bool plotdata,
                  const nlohmann::json& extra = nlohmann::json::object());

/// Runs the configured scheme(s); returns an ExitCode.
int run(const std::filesystem::path& config_path, const Overrides& overrides,
        bool validate_only = false);

/// Command-line entry: `solve` and `validate` subcommands.
int main(int argc, char** argv);

}  // namespace mfrbsde::cli
