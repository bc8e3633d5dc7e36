#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace impm {

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid or inconsistent user configuration (bad parameter ranges, unknown
// config keys, geometry that does not cover the body, ...).
struct ConfigError : Error {
  using Error::Error;
};

// A math operation left its domain while recording or evaluating
// (log of a non-positive value, sqrt of a negative value, division by zero).
struct DomainError : Error {
  using Error::Error;
};

// Operation outside the supported elementary op set of the tape.
struct UnsupportedOperation : Error {
  using Error::Error;
};

// Newton-type iteration failed to reach its tolerance.
struct NonConvergenceError : Error {
  NonConvergenceError(const std::string& what, std::vector<double> residuals)
      : Error(what), residual_history(std::move(residuals)) {}
  std::vector<double> residual_history;
};

struct LinearSolverError : Error {
  using Error::Error;
};

// A particle's shape-function support left the background grid.
struct OutOfDomainError : Error {
  using Error::Error;
};

// Block-seeded differentiation observed adjoint mass outside the expected
// sparsity pattern.
struct SeedingFault : Error {
  using Error::Error;
};

}  // namespace impm
