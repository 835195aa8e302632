#pragma once

#include <stdexcept>
#include <string>

namespace mfrbsde {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structurally invalid problem data, raised at construction.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// A closed-form condition (contraction window, domination, ...) does not hold.
class FeasibilityError : public Error {
 public:
  using Error::Error;
};

/// Iterative procedure failed to converge. Carries the last observed distance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_distance)
      : Error(what), last_distance_(last_distance) {}
  double last_distance() const noexcept { return last_distance_; }

 private:
  double last_distance_;
};

/// Linear algebra or root finding broke down.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace mfrbsde
