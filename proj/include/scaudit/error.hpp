#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scaudit {

enum class ErrorCode {
  MissingFile,
  DuplicateId,
  UnknownVulnerabilityType,
  EmptySource,
  BadManifest,
  BadFractions,
  TemplateNotFound,
  BadTemplate,
  WriteFailure,
  MissingLabelField,
  BadTopK,
  BadParams,
  BadBackendSpec,
  NetworkError,
  ContextOverflow,
  AuthError,
  BackendRefusal,
  DuplicateModelRun,
  WeightMissing,
  BadPermutation,
  BadConfig,
  EmptyValidation,
  TooManyModels,
  EmbeddingServiceError,
  MismatchedContractSets,
  BadRunDirectory,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

  // Only transport-level failures are worth retrying.
  bool retriable() const noexcept { return code_ == ErrorCode::NetworkError; }

 private:
  ErrorCode code_;
};

}  // namespace scaudit
