#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ymh {

enum class ErrorCode {
  NonConvergence,
  DomainTooSmall,
  WindowUnderflow,
  OutOfRange,
  GridMismatch,
  EigenNonConvergence,
  SolvabilityDefect,
  DomainBoundary,
  OutsideTube,
  BadIndex,
  ShapeMismatch,
  BoundaryNonzero,
  ValidationGap,
  DegreeUnsupported,
  StencilMargin,
  SupportLeak,
  InsufficientLadder,
  ConfigInvalid,
  PipelineFailure,
};

inline std::string_view to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::DomainTooSmall: return "DomainTooSmall";
    case ErrorCode::WindowUnderflow: return "WindowUnderflow";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::EigenNonConvergence: return "EigenNonConvergence";
    case ErrorCode::SolvabilityDefect: return "SolvabilityDefect";
    case ErrorCode::DomainBoundary: return "DomainBoundary";
    case ErrorCode::OutsideTube: return "OutsideTube";
    case ErrorCode::BadIndex: return "BadIndex";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BoundaryNonzero: return "BoundaryNonzero";
    case ErrorCode::ValidationGap: return "ValidationGap";
    case ErrorCode::DegreeUnsupported: return "DegreeUnsupported";
    case ErrorCode::StencilMargin: return "StencilMargin";
    case ErrorCode::SupportLeak: return "SupportLeak";
    case ErrorCode::InsufficientLadder: return "InsufficientLadder";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::PipelineFailure: return "PipelineFailure";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode c, const std::string& msg) { throw Error(c, msg); }

inline void require(bool ok, ErrorCode c, const std::string& msg) {
  if (!ok) fail(c, msg);
}

}  // namespace ymh
