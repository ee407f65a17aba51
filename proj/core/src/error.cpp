#include "cmlo/error.hpp"

namespace cmlo {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::MissingSamples: return "MissingSamples";
    case ErrorKind::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorKind::InvalidLipschitz: return "InvalidLipschitz";
    case ErrorKind::InfeasibleInterval: return "InfeasibleInterval";
    case ErrorKind::NumericalFailure: return "NumericalFailure";
    case ErrorKind::EmptyBuffer: return "EmptyBuffer";
    case ErrorKind::EmptySlice: return "EmptySlice";
    case ErrorKind::DegenerateCloud: return "DegenerateCloud";
    case ErrorKind::DegenerateBase: return "DegenerateBase";
    case ErrorKind::PlannerFailure: return "PlannerFailure";
    case ErrorKind::InvalidCost: return "InvalidCost";
    case ErrorKind::OracleMismatch: return "OracleMismatch";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace cmlo
