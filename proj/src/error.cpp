#include "scaudit/error.hpp"

namespace scaudit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnknownVulnerabilityType: return "UnknownVulnerabilityType";
    case ErrorCode::EmptySource: return "EmptySource";
    case ErrorCode::BadManifest: return "BadManifest";
    case ErrorCode::BadFractions: return "BadFractions";
    case ErrorCode::TemplateNotFound: return "TemplateNotFound";
    case ErrorCode::BadTemplate: return "BadTemplate";
    case ErrorCode::WriteFailure: return "WriteFailure";
    case ErrorCode::MissingLabelField: return "MissingLabelField";
    case ErrorCode::BadTopK: return "BadTopK";
    case ErrorCode::BadParams: return "BadParams";
    case ErrorCode::BadBackendSpec: return "BadBackendSpec";
    case ErrorCode::NetworkError: return "NetworkError";
    case ErrorCode::ContextOverflow: return "ContextOverflow";
    case ErrorCode::AuthError: return "AuthError";
    case ErrorCode::BackendRefusal: return "BackendRefusal";
    case ErrorCode::DuplicateModelRun: return "DuplicateModelRun";
    case ErrorCode::WeightMissing: return "WeightMissing";
    case ErrorCode::BadPermutation: return "BadPermutation";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::EmptyValidation: return "EmptyValidation";
    case ErrorCode::TooManyModels: return "TooManyModels";
    case ErrorCode::EmbeddingServiceError: return "EmbeddingServiceError";
    case ErrorCode::MismatchedContractSets: return "MismatchedContractSets";
    case ErrorCode::BadRunDirectory: return "BadRunDirectory";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace scaudit
