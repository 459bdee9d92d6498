#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "uibench/orchestrator.hpp"

namespace uibench {

struct ServiceOptions {
  std::filesystem::path uploads_root = "uploads";
  std::filesystem::path static_dir;  // optional web UI bundle
};

inline constexpr const char* kArtifactNames[] = {"generated.html", "generated.png", "reference.png", "metrics.json",
                                                 "llm_calls.jsonl"};

/// REST front end over an Orchestrator. Runs start on background threads and
/// are polled through GET /api/runs/{id}.
class Service {
 public:
  Service(std::shared_ptr<Orchestrator> orchestrator, ServiceOptions options = {});
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds without serving. Port 0 picks a free port. Throws Error(ConfigError).
  int bind(const std::string& host, int port);
  /// Serves until stop(). Blocking.
  void listen();
  void stop();
  /// Blocks until every background run started by this service has returned.
  void wait_for_runs();

 private:
  class Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace uibench
