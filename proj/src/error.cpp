#include "uibench/error.hpp"

namespace uibench {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Internal: return "Internal";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::DatasetNotFound: return "DatasetNotFound";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnreadableImage: return "UnreadableImage";
    case ErrorCode::InvalidInstanceId: return "InvalidInstanceId";
    case ErrorCode::AuthError: return "AuthError";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::ProviderError: return "ProviderError";
    case ErrorCode::RetriesExhausted: return "RetriesExhausted";
    case ErrorCode::ProviderNotFound: return "ProviderNotFound";
    case ErrorCode::DuplicateProvider: return "DuplicateProvider";
    case ErrorCode::MethodError: return "MethodError";
    case ErrorCode::UnknownMethod: return "UnknownMethod";
    case ErrorCode::EmptyGeneration: return "EmptyGeneration";
    case ErrorCode::RenderTimeout: return "RenderTimeout";
    case ErrorCode::BrowserCrash: return "BrowserCrash";
    case ErrorCode::BrowserUnavailable: return "BrowserUnavailable";
    case ErrorCode::EmbeddingBackendUnavailable: return "EmbeddingBackendUnavailable";
    case ErrorCode::RunNotFound: return "RunNotFound";
    case ErrorCode::RunNotTerminal: return "RunNotTerminal";
    case ErrorCode::RunAlreadyActive: return "RunAlreadyActive";
    case ErrorCode::RunAlreadyComplete: return "RunAlreadyComplete";
    case ErrorCode::InvalidArtifactName: return "InvalidArtifactName";
    case ErrorCode::ArtifactNotFound: return "ArtifactNotFound";
  }
  return "Internal";
}

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::UnknownMethod:
    case ErrorCode::ProviderNotFound:
    case ErrorCode::EmptyDataset:
    case ErrorCode::DuplicateId:
    case ErrorCode::UnreadableImage:
    case ErrorCode::InvalidInstanceId:
    case ErrorCode::InvalidArtifactName:
      return 400;
    case ErrorCode::DatasetNotFound:
    case ErrorCode::RunNotFound:
    case ErrorCode::ArtifactNotFound:
      return 404;
    case ErrorCode::RunNotTerminal:
    case ErrorCode::RunAlreadyActive:
      return 409;
    case ErrorCode::RunAlreadyComplete:
      return 200;
    default:
      return 500;
  }
}

int exit_code(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::RunAlreadyComplete: return 0;
    case ErrorCode::ConfigError:
    case ErrorCode::UnknownMethod:
    case ErrorCode::ProviderNotFound:
      return 2;
    case ErrorCode::DatasetNotFound:
    case ErrorCode::EmptyDataset:
    case ErrorCode::DuplicateId:
    case ErrorCode::UnreadableImage:
    case ErrorCode::InvalidInstanceId:
      return 3;
    case ErrorCode::RunNotFound:
    case ErrorCode::ArtifactNotFound:
      return 4;
    case ErrorCode::RunNotTerminal: return 5;
    case ErrorCode::RunAlreadyActive: return 6;
    case ErrorCode::InvalidArtifactName: return 7;
    case ErrorCode::BrowserUnavailable:
    case ErrorCode::BrowserCrash:
      return 8;
    default: return 1;
  }
}

}  // namespace uibench
