#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mshom {

/// Base class of all toolkit errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid user-facing configuration (bad JSON, unknown keys, out-of-range values).
/// Carries the offending field path so CLI messages can point at it.
class ConfigError : public Error {
public:
  ConfigError(std::string field_path, const std::string& msg)
      : Error(field_path.empty() ? msg : field_path + ": " + msg),
        field(std::move(field_path)) {}
  std::string field;
};

/// An iterative linear solve failed to reach its residual tolerance.
class SolverError : public Error {
public:
  SolverError(const std::string& what_failed, double final_residual, int iterations)
      : Error(what_failed + " (relative residual " + std::to_string(final_residual) +
              " after " + std::to_string(iterations) + " iterations)"),
        residual(final_residual), iters(iterations) {}
  double residual;
  int iters;
};

/// A nonlinear fixed-point loop (SCF density mixing or field coupling) diverged.
class IterationError : public Error {
public:
  IterationError(const std::string& msg, std::vector<double> residual_history)
      : Error(msg), history(std::move(residual_history)) {}
  std::vector<double> history;
};

/// Mesh spacing does not resolve the inclusion geometry.
class MisalignmentError : public Error {
public:
  using Error::Error;
};

/// A sampler produced a non-finite value during assembly.
class AssemblyError : public Error {
public:
  using Error::Error;
};

/// Point evaluation outside the mesh box.
class OutOfDomainError : public Error {
public:
  using Error::Error;
};

/// Difference-quotient stencil does not fit on the grid.
class StencilError : public Error {
public:
  using Error::Error;
};

/// Malformed or truncated binary artifact.
class SnapshotError : public Error {
public:
  using Error::Error;
};

} // namespace mshom
