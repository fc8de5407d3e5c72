#pragma once

#include <stdexcept>
#include <string>

namespace poison {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the offending line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Violated precondition or domain rule on user-supplied data or configuration.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver failed (non-convergence, divergence, iteration cap).
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Constraint set has no feasible point.
class InfeasibleError : public SolverError {
 public:
  using SolverError::SolverError;
};

}  // namespace poison
