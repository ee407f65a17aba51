#pragma once

#include <stdexcept>
#include <string>

namespace cmlo {

enum class ErrorKind {
  ShapeMismatch,
  InvalidArgument,
  MissingSamples,
  ConvergenceFailure,
  InvalidLipschitz,
  InfeasibleInterval,
  NumericalFailure,
  EmptyBuffer,
  EmptySlice,
  DegenerateCloud,
  DegenerateBase,
  PlannerFailure,
  InvalidCost,
  OracleMismatch,
  InvalidConfig,
  Io,
};

const char* to_string(ErrorKind kind) noexcept;

// Single exception type for the library; the kind lets callers branch on
// recoverable conditions (e.g. DegenerateCloud -> volume 0).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace cmlo
