#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uibench/dataset.hpp"
#include "uibench/llm.hpp"
#include "uibench/methods.hpp"
#include "uibench/metrics.hpp"
#include "uibench/render.hpp"

namespace uibench {

/// Everything a caller supplies to start a run.
struct RunRequest {
  std::filesystem::path dataset_root;
  ModelSpec model;
  MethodSpec method;
  RenderConfig render_config;
  MetricConfig metric_config;
  RetryPolicy retry;
  int concurrency = 1;
};

/// Accepts "model" as "provider:model_id" or an object, "method" as a name or
/// {name, params}. Throws Error(ConfigError).
RunRequest run_request_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunRequest& r);

struct RunConfig {
  std::string run_id;
  std::string created_at;
  RunRequest request;
  nlohmann::json effective_method_params;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

enum class InstanceStatus { Pending, Generating, Rendering, Evaluating, Done, Failed };

std::string_view to_string(InstanceStatus s) noexcept;
InstanceStatus instance_status_from_string(std::string_view s);
/// Forward-only rule: pending -> generating -> rendering -> evaluating -> done,
/// and failed from any state other than done.
bool is_forward_transition(InstanceStatus from, InstanceStatus to) noexcept;

struct InstanceState {
  std::string id;
  InstanceStatus status = InstanceStatus::Pending;
  std::optional<std::string> failure_code;
  std::optional<std::string> failure_message;
};

enum class RunPhase { Created, Running, Completed };

struct RunState {
  std::string run_id;
  RunPhase phase = RunPhase::Created;
  std::vector<InstanceState> instances;  // sorted by id
  std::string updated_at;

  int count(InstanceStatus s) const;
  int total() const { return static_cast<int>(instances.size()); }
  /// Every instance is done or failed.
  bool all_terminal() const;
  const InstanceState* find(std::string_view id) const;
};

void to_json(nlohmann::json& j, const RunState& s);
void from_json(const nlohmann::json& j, RunState& s);

struct ProgressEvent {
  std::string run_id;
  std::string instance_id;
  InstanceStatus status;
  /// 1-based count of instance transitions persisted in this execution.
  int sequence = 0;
};

struct RunSummary {
  std::string run_id;
  std::string created_at;
  std::string model;
  std::string method;
  RunPhase phase = RunPhase::Created;
  int done = 0;
  int failed = 0;
  int total = 0;
};

void to_json(nlohmann::json& j, const RunSummary& s);

struct OrchestratorOptions {
  std::filesystem::path runs_root = "runs";
  std::shared_ptr<Gateway> gateway;                  // default: mock + openai
  std::shared_ptr<const MethodRegistry> methods;     // default: built-ins
  std::function<std::shared_ptr<Renderer>()> renderer_factory;  // default: ChromeRenderer
  /// Called after every persisted instance transition, from the writer.
  std::function<void(const ProgressEvent&)> observer;
};

/// Run directory layout under runs_root/<run_id>/: config.json, state.json,
/// dataset.json, instances/<id>/..., report.json.
class Orchestrator {
 public:
  explicit Orchestrator(OrchestratorOptions options = {});

  /// Validates, scans the dataset and writes the run directory. Nothing is
  /// created when validation fails. Throws Error(ConfigError | Dataset*).
  std::string create_run(const RunRequest& request);

  /// Runs every pending instance to a terminal state and writes report.json.
  /// Throws RunNotFound, RunAlreadyActive, RunAlreadyComplete, or
  /// BrowserUnavailable (the run stays resumable).
  RunState execute(const std::string& run_id);

  /// Mid-flight instances go back to pending (failed ones too with
  /// retry_failed), then execute.
  RunState resume(const std::string& run_id, bool retry_failed = false);

  /// Throws RunNotFound.
  RunState status(const std::string& run_id) const;
  RunConfig config(const std::string& run_id) const;
  std::vector<RunSummary> list_runs() const;

  std::filesystem::path run_dir(const std::string& run_id) const;
  const std::filesystem::path& runs_root() const noexcept { return options_.runs_root; }
  bool exists(const std::string& run_id) const;

 private:
  class Execution;

  std::shared_ptr<Renderer> renderer();

  OrchestratorOptions options_;
  std::mutex renderer_mutex_;
  std::shared_ptr<Renderer> renderer_;
};

}  // namespace uibench
