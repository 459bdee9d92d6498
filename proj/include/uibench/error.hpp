#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace uibench {

/// Closed set of machine-readable failure codes shared by the library, the
/// REST layer (HTTP status) and the CLI (process exit code).
enum class ErrorCode {
  Internal,
  ConfigError,
  // dataset
  DatasetNotFound,
  EmptyDataset,
  DuplicateId,
  UnreadableImage,
  InvalidInstanceId,
  // llm gateway
  AuthError,
  RateLimited,
  TransportError,
  ProviderError,
  RetriesExhausted,
  ProviderNotFound,
  DuplicateProvider,
  // methods
  MethodError,
  UnknownMethod,
  EmptyGeneration,
  // rendering
  RenderTimeout,
  BrowserCrash,
  BrowserUnavailable,
  // metrics
  EmbeddingBackendUnavailable,
  // runs
  RunNotFound,
  RunNotTerminal,
  RunAlreadyActive,
  RunAlreadyComplete,
  InvalidArtifactName,
  ArtifactNotFound,
};

std::string_view to_string(ErrorCode code) noexcept;
int http_status(ErrorCode code) noexcept;
int exit_code(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace uibench
