#include "codetrail/error.hpp"

namespace codetrail {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedJson: return "MalformedJson";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::SeqOrderViolation: return "SeqOrderViolation";
    case ErrorCode::TimestampRegression: return "TimestampRegression";
    case ErrorCode::OffsetOutOfRange: return "OffsetOutOfRange";
    case ErrorCode::RemovedTextMismatch: return "RemovedTextMismatch";
    case ErrorCode::UnknownFile: return "UnknownFile";
    case ErrorCode::EmptySession: return "EmptySession";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::OutOfExtent: return "OutOfExtent";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::RoleViolation: return "RoleViolation";
    case ErrorCode::Unauthorized: return "Unauthorized";
    case ErrorCode::UnknownQuestion: return "UnknownQuestion";
    case ErrorCode::IllegalTransition: return "IllegalTransition";
    case ErrorCode::AnchorOutOfRange: return "AnchorOutOfRange";
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::MalformedGeneration: return "MalformedGeneration";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ConnectionFailed: return "ConnectionFailed";
    case ErrorCode::ServerRejectedFrame: return "ServerRejectedFrame";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, std::string detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail),
      code_(code),
      detail_(std::move(detail)) {}

}  // namespace codetrail
