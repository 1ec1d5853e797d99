#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace codetrail {

enum class ErrorCode {
  MalformedJson,
  SchemaViolation,
  SeqOrderViolation,
  TimestampRegression,
  OffsetOutOfRange,
  RemovedTextMismatch,
  UnknownFile,
  EmptySession,
  LengthMismatch,
  OutOfExtent,
  UnknownSession,
  RoleViolation,
  Unauthorized,
  UnknownQuestion,
  IllegalTransition,
  AnchorOutOfRange,
  ProviderUnavailable,
  MalformedGeneration,
  InvalidConfig,
  ConnectionFailed,
  ServerRejectedFrame,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string detail);

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace codetrail
