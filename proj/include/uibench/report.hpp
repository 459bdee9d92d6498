#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace uibench {

inline constexpr int kReportSchemaVersion = 1;

struct Summary {
  std::optional<double> mean;
  std::optional<double> median;
  std::optional<double> stddev;  // population
  int count = 0;
};

Summary summarize(std::vector<double> values);

/// Aggregates a terminal run from its instance artifacts (metrics.json and
/// llm_calls.jsonl). Throws RunNotFound or RunNotTerminal.
nlohmann::json build_report(const std::filesystem::path& runs_root, const std::string& run_id);

std::string report_markdown(const nlohmann::json& report);

/// One row per run, sorted by `sort_metric` descending ("total_tokens", the
/// mean tokens per instance, sorts ascending). Rows without the sort value go
/// last; ties break on run_id ascending. Throws RunNotFound, RunNotTerminal,
/// or ConfigError for an unknown metric.
nlohmann::json build_leaderboard(const std::filesystem::path& runs_root, const std::vector<std::string>& run_ids,
                                 const std::string& sort_metric = "visual_similarity");

std::string leaderboard_markdown(const nlohmann::json& leaderboard);

}  // namespace uibench
