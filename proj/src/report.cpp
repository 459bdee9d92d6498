#include "uibench/report.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "uibench/encoding.hpp"
#include "uibench/error.hpp"
#include "uibench/metrics.hpp"
#include "uibench/orchestrator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace uibench {

Summary summarize(std::vector<double> values) {
  Summary s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  s.mean = mean;
  s.median = n % 2 == 1 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
  s.stddev = std::sqrt(sq / static_cast<double>(n));
  return s;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json summary_json(const Summary& s) {
  return {{"mean", opt(s.mean)}, {"median", opt(s.median)}, {"stddev", opt(s.stddev)}, {"count_available", s.count}};
}

json read_json(const fs::path& path) {
  const json j = json::parse(read_text(path), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::Internal, "corrupt JSON: " + path.string());
  return j;
}

constexpr const char* kArtifactFiles[] = {"generated.html", "generated.png", "reference.png", "blocks_ref.json",
                                          "blocks_gen.json", "llm_calls.jsonl", "metrics.json"};

}  // namespace

json build_report(const fs::path& runs_root, const std::string& run_id) {
  const fs::path dir = runs_root / run_id;
  if (!is_safe_id(run_id) || !fs::is_regular_file(dir / "state.json")) {
    throw Error(ErrorCode::RunNotFound, "run not found: " + run_id);
  }
  const RunConfig cfg = read_json(dir / "config.json").get<RunConfig>();
  const RunState state = read_json(dir / "state.json").get<RunState>();
  if (!state.all_terminal()) throw Error(ErrorCode::RunNotTerminal, "run " + run_id + " is not finished");

  std::map<std::string, std::vector<double>> values;
  TokenUsage tokens;
  std::int64_t calls = 0;
  std::int64_t estimated_calls = 0;
  int instances_with_calls = 0;
  json rows = json::array();
  json failures = json::array();

  for (const auto& inst : state.instances) {
    const fs::path idir = dir / "instances" / inst.id;
    json row = {{"id", inst.id}, {"status", to_string(inst.status)}};

    TokenUsage usage;
    std::int64_t inst_calls = 0;
    if (fs::is_regular_file(idir / "llm_calls.jsonl")) {
      for (const auto& rec : CallLog::read(idir / "llm_calls.jsonl")) {
        ++inst_calls;
        if (rec.contains("usage")) usage += rec["usage"].get<TokenUsage>();
        if (rec.value("estimated", false)) ++estimated_calls;
      }
      ++instances_with_calls;
    }
    tokens += usage;
    calls += inst_calls;
    row["usage"] = usage;
    row["llm_calls"] = inst_calls;

    if (inst.status == InstanceStatus::Done && fs::is_regular_file(idir / "metrics.json")) {
      const MetricReport m = read_json(idir / "metrics.json").get<MetricReport>();
      json metrics = json::object();
      for (const char* name : kMetricNames) {
        const auto v = metric_value(m, name);
        metrics[name] = opt(v);
        if (v) values[name].push_back(*v);
      }
      row["metrics"] = metrics;
      json unavailable = json::object();
      for (const auto& [metric, reason] : m.unavailable) unavailable[metric] = reason;
      row["unavailable"] = unavailable;
    } else {
      row["metrics"] = nullptr;
    }
    if (inst.status == InstanceStatus::Failed) {
      const json f = {{"id", inst.id},
                      {"code", inst.failure_code.value_or("Internal")},
                      {"message", inst.failure_message.value_or("")}};
      row["failure"] = f;
      failures.push_back(f);
    }
    json artifacts = json::object();
    for (const char* name : kArtifactFiles) {
      if (fs::is_regular_file(idir / name)) artifacts[name] = "instances/" + inst.id + "/" + name;
    }
    row["artifacts"] = artifacts;
    rows.push_back(row);
  }

  json aggregates = json::object();
  for (const char* name : kMetricNames) aggregates[name] = summary_json(summarize(values[name]));

  const double denom = instances_with_calls > 0 ? instances_with_calls : 1;
  const json token_json = {
      {"total", tokens},
      {"llm_calls", calls},
      {"estimated_image_token_calls", estimated_calls},
      {"instances_counted", instances_with_calls},
      {"mean_per_instance",
       instances_with_calls == 0
           ? json(nullptr)
           : json{{"prompt_text_tokens", static_cast<double>(tokens.prompt_text_tokens) / denom},
                  {"prompt_image_tokens", static_cast<double>(tokens.prompt_image_tokens) / denom},
                  {"completion_tokens", static_cast<double>(tokens.completion_tokens) / denom},
                  {"total", static_cast<double>(tokens.total()) / denom}}}};

  const int total = state.total();
  const int failed = state.count(InstanceStatus::Failed);
  return {{"schema_version", kReportSchemaVersion},
          {"run_id", cfg.run_id},
          {"created_at", cfg.created_at},
          {"config",
           {{"model", cfg.request.model.label()},
            {"method", cfg.request.method.name},
            {"method_params", cfg.effective_method_params},
            {"render_config", cfg.request.render_config},
            {"metric_config", cfg.request.metric_config},
            {"dataset_root", cfg.request.dataset_root.string()}}},
          {"counts", {{"total", total}, {"done", state.count(InstanceStatus::Done)}, {"failed", failed}}},
          {"failure_rate", total > 0 ? static_cast<double>(failed) / total : 0.0},
          {"aggregates", aggregates},
          {"tokens", token_json},
          {"instances", rows},
          {"failures", failures}};
}

namespace {

std::string fmt(const json& v, int precision = 4) {
  if (v.is_null()) return "n/a";
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << v.get<double>();
  return out.str();
}

}  // namespace

std::string report_markdown(const json& r) {
  std::ostringstream md;
  md << "# Run " << r.at("run_id").get<std::string>() << "\n\n";
  md << "- model: `" << r["config"]["model"].get<std::string>() << "`\n";
  md << "- method: `" << r["config"]["method"].get<std::string>() << "` " << r["config"]["method_params"].dump()
     << "\n";
  md << "- instances: " << r["counts"]["total"] << " (done " << r["counts"]["done"] << ", failed "
     << r["counts"]["failed"] << ")\n\n";

  md << "| metric | mean | median | stddev | available |\n|---|---|---|---|---|\n";
  for (const char* name : kMetricNames) {
    const auto& a = r["aggregates"][name];
    md << "| " << name << " | " << fmt(a["mean"]) << " | " << fmt(a["median"]) << " | " << fmt(a["stddev"]) << " | "
       << a["count_available"] << " |\n";
  }

  const auto& t = r["tokens"];
  md << "\n| tokens | text | image | completion | total |\n|---|---|---|---|---|\n";
  md << "| sum | " << t["total"]["prompt_text_tokens"] << " | " << t["total"]["prompt_image_tokens"] << " | "
     << t["total"]["completion_tokens"] << " | " << t["total"]["total"] << " |\n";
  if (!t["mean_per_instance"].is_null()) {
    const auto& m = t["mean_per_instance"];
    md << "| mean/instance | " << fmt(m["prompt_text_tokens"], 1) << " | " << fmt(m["prompt_image_tokens"], 1)
       << " | " << fmt(m["completion_tokens"], 1) << " | " << fmt(m["total"], 1) << " |\n";
  }

  md << "\n| instance | status";
  for (const char* name : kMetricNames) md << " | " << name;
  md << " |\n|---|---";
  for (std::size_t i = 0; i < std::size(kMetricNames); ++i) md << "|---";
  md << "|\n";
  for (const auto& row : r["instances"]) {
    md << "| " << row["id"].get<std::string>() << " | " << row["status"].get<std::string>();
    for (const char* name : kMetricNames) {
      md << " | " << (row["metrics"].is_null() ? std::string("n/a") : fmt(row["metrics"][name]));
    }
    md << " |\n";
  }
  if (!r["failures"].empty()) {
    md << "\n## Failures\n\n";
    for (const auto& f : r["failures"]) {
      md << "- `" << f["id"].get<std::string>() << "` " << f["code"].get<std::string>() << ": "
         << f["message"].get<std::string>() << "\n";
    }
  }
  return md.str();
}

json build_leaderboard(const fs::path& runs_root, const std::vector<std::string>& run_ids,
                       const std::string& sort_metric) {
  if (std::find(std::begin(kMetricNames), std::end(kMetricNames), sort_metric) == std::end(kMetricNames) &&
      sort_metric != "total_tokens") {
    throw Error(ErrorCode::ConfigError, "unknown sort metric: " + sort_metric);
  }
  std::vector<json> rows;
  for (const auto& id : run_ids) {
    const json report = build_report(runs_root, id);
    json metrics = json::object();
    for (const char* name : kMetricNames) metrics[name] = report["aggregates"][name]["mean"];
    const auto& mean_tokens = report["tokens"]["mean_per_instance"];
    rows.push_back({{"run_id", id},
                    {"model", report["config"]["model"]},
                    {"method", report["config"]["method"]},
                    {"metrics", metrics},
                    {"mean_total_tokens", mean_tokens.is_null() ? json(nullptr) : mean_tokens["total"]},
                    {"done", report["counts"]["done"]},
                    {"failed", report["counts"]["failed"]}});
  }
  auto key = [&](const json& row) -> const json& {
    return sort_metric == "total_tokens" ? row["mean_total_tokens"] : row["metrics"][sort_metric];
  };
  std::sort(rows.begin(), rows.end(), [&](const json& a, const json& b) {
    const json& ka = key(a);
    const json& kb = key(b);
    if (ka.is_null() != kb.is_null()) return kb.is_null();
    if (!ka.is_null() && ka.get<double>() != kb.get<double>()) {
      // Quality metrics rank high-first; token cost ranks low-first.
      return sort_metric == "total_tokens" ? ka.get<double>() < kb.get<double>() : ka.get<double>() > kb.get<double>();
    }
    return a["run_id"].get<std::string>() < b["run_id"].get<std::string>();
  });
  // Duplicate ids collapse to one row each.
  rows.erase(std::unique(rows.begin(), rows.end(), [](const json& a, const json& b) { return a["run_id"] == b["run_id"]; }),
             rows.end());
  return {{"sort_metric", sort_metric}, {"rows", rows}};
}

std::string leaderboard_markdown(const json& lb) {
  std::ostringstream md;
  md << "| rank | run | model | method";
  for (const char* name : kMetricNames) md << " | " << name;
  md << " | mean tokens |\n|---|---|---|---";
  for (std::size_t i = 0; i <= std::size(kMetricNames); ++i) md << "|---";
  md << "|\n";
  int rank = 1;
  for (const auto& row : lb["rows"]) {
    md << "| " << rank++ << " | " << row["run_id"].get<std::string>() << " | " << row["model"].get<std::string>()
       << " | " << row["method"].get<std::string>();
    for (const char* name : kMetricNames) md << " | " << fmt(row["metrics"][name]);
    md << " | " << fmt(row["mean_total_tokens"], 1) << " |\n";
  }
  return md.str();
}

}  // namespace uibench
