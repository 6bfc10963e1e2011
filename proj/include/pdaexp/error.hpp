#pragma once

#include <stdexcept>
#include <string>

namespace pdaexp {

enum class ErrorCode {
  DimensionMismatch,
  SingularSaddle,
  NotSpd,
  NonFinite,
  OrderTooHigh,
  SingularZ,
  ZeroInitialVector,
  InconsistentState,
  InconsistentInitialData,
  NoConvergence,
  NegativeEnergy,
  SelfCheckFailed,
  MissingReference,
  InvalidConfig,
  Io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SingularSaddle: return "SingularSaddle";
    case ErrorCode::NotSpd: return "NotSpd";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::OrderTooHigh: return "OrderTooHigh";
    case ErrorCode::SingularZ: return "SingularZ";
    case ErrorCode::ZeroInitialVector: return "ZeroInitialVector";
    case ErrorCode::InconsistentState: return "InconsistentState";
    case ErrorCode::InconsistentInitialData: return "InconsistentInitialData";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NegativeEnergy: return "NegativeEnergy";
    case ErrorCode::SelfCheckFailed: return "SelfCheckFailed";
    case ErrorCode::MissingReference: return "MissingReference";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Single exception type for the library; the code classifies the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// True for failures of the numerics (as opposed to bad input or I/O).
  bool is_numerical() const noexcept {
    switch (code_) {
      case ErrorCode::SingularSaddle:
      case ErrorCode::NotSpd:
      case ErrorCode::NonFinite:
      case ErrorCode::SingularZ:
      case ErrorCode::NoConvergence:
      case ErrorCode::NegativeEnergy:
      case ErrorCode::SelfCheckFailed:
      case ErrorCode::InconsistentState:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorCode code_;
};

namespace detail {

inline void require_dims(bool ok, const char* where) {
  if (!ok) throw Error(ErrorCode::DimensionMismatch, where);
}

}  // namespace detail
}  // namespace pdaexp
