#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace subspec {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent configuration (dimension mismatch, bad JSON, unknown keys).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input outside the mathematical domain of an operation (r <= 0, empty grid, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Parameter constraint violated (Q <= ps, r < 1, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Truncation policy incompatible with the domain.
class PolicyError : public Error {
 public:
  using Error::Error;
};

/// Degenerate input such as a zero field where a nonzero one is required.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// NaN/inf, bracket failure or an N0-boundary hit inside a numeric routine.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what, std::vector<double> trace = {})
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

/// An iterative solver ran out of iterations. Carries the objective trace.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> trace)
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

/// Fiber roots vanished (lambda * F drifted past m_max) during a Nehari branch solve.
class BranchCollapseError : public Error {
 public:
  using Error::Error;
};

/// A check was asked to run on an instance that was never solved.
class SequencingError : public Error {
 public:
  using Error::Error;
};

}  // namespace subspec
