#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ragit {

enum class ErrorCode {
  InvalidParams,
  DecodeError,
  EmptyDocument,
  DanglingReference,
  BackendUnavailable,
  AuthError,
  MalformedResponse,
  ZeroVector,
  DimMismatch,
  EmptyIndex,
  CorruptFile,
  NoPairsFound,
  NoRelevantDocuments,
  TemplateOverflow,
  DelimiterInContext,
  EmptyDataset,
  IoError,
  UnparseableVerdict,
  NotFound,
  DuplicateName,
  BaselineDeletionForbidden,
  ConfigError,
  UnknownSubcommand,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::DecodeError: return "DecodeError";
    case ErrorCode::EmptyDocument: return "EmptyDocument";
    case ErrorCode::DanglingReference: return "DanglingReference";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::AuthError: return "AuthError";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::EmptyIndex: return "EmptyIndex";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::NoPairsFound: return "NoPairsFound";
    case ErrorCode::NoRelevantDocuments: return "NoRelevantDocuments";
    case ErrorCode::TemplateOverflow: return "TemplateOverflow";
    case ErrorCode::DelimiterInContext: return "DelimiterInContext";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::UnparseableVerdict: return "UnparseableVerdict";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::BaselineDeletionForbidden: return "BaselineDeletionForbidden";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::UnknownSubcommand: return "UnknownSubcommand";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (CLI exit codes, HTTP status mapping) can dispatch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

  /// Backend failures map to CLI exit code 2 and HTTP 503.
  bool is_backend_failure() const noexcept {
    return code_ == ErrorCode::BackendUnavailable || code_ == ErrorCode::AuthError ||
           code_ == ErrorCode::MalformedResponse;
  }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace ragit
