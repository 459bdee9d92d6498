#include "uibench/orchestrator.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstring>
#include <thread>

#include "uibench/encoding.hpp"
#include "uibench/error.hpp"
#include "uibench/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace uibench {

// ---------------------------------------------------------------------------
// Serialization

RunRequest run_request_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "run request must be a JSON object");
  try {
    RunRequest r;
    if (!j.contains("dataset_root")) throw Error(ErrorCode::ConfigError, "dataset_root is required");
    r.dataset_root = j.at("dataset_root").get<std::string>();
    if (!j.contains("model")) throw Error(ErrorCode::ConfigError, "model is required");
    r.model = j.at("model").get<ModelSpec>();
    if (!j.contains("method")) throw Error(ErrorCode::ConfigError, "method is required");
    r.method = j.at("method").get<MethodSpec>();
    if (j.contains("render_config")) r.render_config = j["render_config"].get<RenderConfig>();
    if (j.contains("metric_config")) r.metric_config = j["metric_config"].get<MetricConfig>();
    if (j.contains("retry")) r.retry = j["retry"].get<RetryPolicy>();
    r.concurrency = j.value("concurrency", 1);
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("invalid run request: ") + e.what());
  }
}

json to_json(const RunRequest& r) {
  return {{"dataset_root", r.dataset_root.string()},
          {"model", r.model},
          {"method", r.method},
          {"render_config", r.render_config},
          {"metric_config", r.metric_config},
          {"retry", r.retry},
          {"concurrency", r.concurrency}};
}

void to_json(json& j, const RunConfig& c) {
  j = to_json(c.request);
  j["run_id"] = c.run_id;
  j["created_at"] = c.created_at;
  j["effective_method_params"] = c.effective_method_params;
}

void from_json(const json& j, RunConfig& c) {
  c.request = run_request_from_json(j);
  c.run_id = j.at("run_id").get<std::string>();
  c.created_at = j.at("created_at").get<std::string>();
  c.effective_method_params = j.value("effective_method_params", json::object());
}

namespace {

constexpr const char* kStatusNames[] = {"pending", "generating", "rendering", "evaluating", "done", "failed"};
constexpr const char* kPhaseNames[] = {"created", "running", "completed"};

RunPhase phase_from_string(std::string_view s) {
  for (int i = 0; i < 3; ++i)
    if (s == kPhaseNames[i]) return static_cast<RunPhase>(i);
  throw Error(ErrorCode::Internal, "unknown run phase: " + std::string(s));
}

}  // namespace

std::string_view to_string(InstanceStatus s) noexcept { return kStatusNames[static_cast<int>(s)]; }

InstanceStatus instance_status_from_string(std::string_view s) {
  for (int i = 0; i < 6; ++i)
    if (s == kStatusNames[i]) return static_cast<InstanceStatus>(i);
  throw Error(ErrorCode::Internal, "unknown instance status: " + std::string(s));
}

bool is_forward_transition(InstanceStatus from, InstanceStatus to) noexcept {
  if (to == InstanceStatus::Failed) return from != InstanceStatus::Done && from != InstanceStatus::Failed;
  if (from == InstanceStatus::Failed) return false;
  return static_cast<int>(to) == static_cast<int>(from) + 1;
}

int RunState::count(InstanceStatus s) const {
  return static_cast<int>(std::count_if(instances.begin(), instances.end(), [&](const auto& i) { return i.status == s; }));
}

bool RunState::all_terminal() const {
  return std::all_of(instances.begin(), instances.end(), [](const auto& i) {
    return i.status == InstanceStatus::Done || i.status == InstanceStatus::Failed;
  });
}

const InstanceState* RunState::find(std::string_view id) const {
  for (const auto& i : instances)
    if (i.id == id) return &i;
  return nullptr;
}

void to_json(json& j, const RunState& s) {
  json instances = json::array();
  for (const auto& i : s.instances) {
    json entry = {{"id", i.id}, {"status", to_string(i.status)}};
    if (i.failure_code) entry["failure"] = {{"code", *i.failure_code}, {"message", i.failure_message.value_or("")}};
    instances.push_back(entry);
  }
  json counters = {{"total", s.total()}};
  for (int k = 0; k < 6; ++k) counters[kStatusNames[k]] = s.count(static_cast<InstanceStatus>(k));
  j = {{"run_id", s.run_id},
       {"phase", kPhaseNames[static_cast<int>(s.phase)]},
       {"terminal", s.phase == RunPhase::Completed},
       {"counters", counters},
       {"instances", instances},
       {"updated_at", s.updated_at}};
}

void from_json(const json& j, RunState& s) {
  s.run_id = j.at("run_id").get<std::string>();
  s.phase = phase_from_string(j.at("phase").get<std::string>());
  s.updated_at = j.value("updated_at", "");
  s.instances.clear();
  for (const auto& e : j.at("instances")) {
    InstanceState i;
    i.id = e.at("id").get<std::string>();
    i.status = instance_status_from_string(e.at("status").get<std::string>());
    if (e.contains("failure")) {
      i.failure_code = e["failure"].at("code").get<std::string>();
      i.failure_message = e["failure"].value("message", "");
    }
    s.instances.push_back(std::move(i));
  }
}

void to_json(json& j, const RunSummary& s) {
  j = {{"run_id", s.run_id},
       {"created_at", s.created_at},
       {"model", s.model},
       {"method", s.method},
       {"phase", kPhaseNames[static_cast<int>(s.phase)]},
       {"counters", {{"done", s.done}, {"failed", s.failed}, {"total", s.total}}}};
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

bool is_valid_run_id(std::string_view id) { return is_safe_id(id) && id.front() != '.'; }

json read_json(const fs::path& path) {
  const json j = json::parse(read_text(path), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::Internal, "corrupt JSON: " + path.string());
  return j;
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

// Exclusive advisory lock held for the lifetime of an executor.
class RunLock {
 public:
  explicit RunLock(const fs::path& path) {
    fd_ = ::open(path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error(ErrorCode::Internal, "cannot open lock " + path.string() + ": " + std::strerror(errno));
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw Error(ErrorCode::RunAlreadyActive, "run is already executing");
    }
  }
  ~RunLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  int fd_ = -1;
};

json render_meta(const RenderResult& r) {
  json requests = json::array();
  for (const auto& q : r.requests)
    requests.push_back({{"url", q.url}, {"resource_type", q.resource_type}, {"disposition", q.disposition}});
  return {{"page_width", r.page_width},
          {"page_height", r.page_height},
          {"console_errors", r.console_errors},
          {"requests", requests},
          {"network_requests", r.network_requests}};
}

struct ReferenceRender {
  Bytes screenshot;
  std::vector<Block> blocks;
  json meta;
};

}  // namespace

// ---------------------------------------------------------------------------
// Orchestrator

Orchestrator::Orchestrator(OrchestratorOptions options) : options_(std::move(options)) {
  if (!options_.gateway) options_.gateway = Gateway::with_default_providers();
  if (!options_.methods) options_.methods = std::make_shared<MethodRegistry>(MethodRegistry::with_builtin_methods());
  if (!options_.renderer_factory) {
    options_.renderer_factory = [] { return std::make_shared<ChromeRenderer>(ChromeOptions{}); };
  }
}

fs::path Orchestrator::run_dir(const std::string& run_id) const { return options_.runs_root / run_id; }

bool Orchestrator::exists(const std::string& run_id) const {
  return is_valid_run_id(run_id) && fs::is_regular_file(run_dir(run_id) / "state.json");
}

std::shared_ptr<Renderer> Orchestrator::renderer() {
  std::lock_guard lock(renderer_mutex_);
  if (!renderer_) renderer_ = options_.renderer_factory();
  return renderer_;
}

std::string Orchestrator::create_run(const RunRequest& request) {
  // Validation happens before anything touches the filesystem.
  json effective;
  try {
    request.model.validate();
    if (!options_.gateway->has_provider(request.model.provider)) {
      throw Error(ErrorCode::ConfigError, "provider not registered: " + request.model.provider);
    }
    effective = options_.methods->get(request.method.name).effective_params(request.method.params);
    request.render_config.validate();
    request.metric_config.validate();
    if (request.concurrency < 1) throw Error(ErrorCode::ConfigError, "concurrency must be >= 1");
    if (request.retry.max_attempts < 1) throw Error(ErrorCode::ConfigError, "retry max_attempts must be >= 1");
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    throw Error(ErrorCode::ConfigError, e.what());
  }
  const Dataset dataset = scan_dataset(request.dataset_root);

  RunConfig cfg;
  cfg.request = request;
  cfg.request.dataset_root = fs::absolute(request.dataset_root).lexically_normal();
  cfg.effective_method_params = effective;
  cfg.created_at = utc_timestamp();

  fs::create_directories(options_.runs_root);
  fs::path dir;
  for (;;) {
    cfg.run_id = make_ulid();
    dir = run_dir(cfg.run_id);
    if (fs::create_directory(dir)) break;  // false: id collision, draw again
  }
  RunState state;
  state.run_id = cfg.run_id;
  state.updated_at = cfg.created_at;
  for (const auto& inst : dataset.instances) {
    InstanceState entry;
    entry.id = inst.id;
    state.instances.push_back(std::move(entry));
  }

  write_json(dir / "config.json", cfg);
  write_json(dir / "dataset.json", dataset_manifest(dataset));
  fs::create_directories(dir / "instances");
  write_json(dir / "state.json", state);
  return cfg.run_id;
}

RunState Orchestrator::status(const std::string& run_id) const {
  if (!exists(run_id)) throw Error(ErrorCode::RunNotFound, "run not found: " + run_id);
  return read_json(run_dir(run_id) / "state.json").get<RunState>();
}

RunConfig Orchestrator::config(const std::string& run_id) const {
  if (!exists(run_id)) throw Error(ErrorCode::RunNotFound, "run not found: " + run_id);
  return read_json(run_dir(run_id) / "config.json").get<RunConfig>();
}

std::vector<RunSummary> Orchestrator::list_runs() const {
  std::vector<RunSummary> out;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(options_.runs_root, ec)) {
    const std::string id = entry.path().filename().string();
    if (!exists(id) || !fs::is_regular_file(entry.path() / "config.json")) continue;
    try {
      const RunConfig cfg = config(id);
      const RunState st = status(id);
      out.push_back({id, cfg.created_at, cfg.request.model.label(), cfg.request.method.name, st.phase,
                     st.count(InstanceStatus::Done), st.count(InstanceStatus::Failed), st.total()});
    } catch (const std::exception&) {
      // half-written run directory; skip
    }
  }
  std::sort(out.begin(), out.end(), [](const RunSummary& a, const RunSummary& b) {
    return a.created_at != b.created_at ? a.created_at > b.created_at : a.run_id > b.run_id;
  });
  return out;
}

class Orchestrator::Execution {
 public:
  Execution(Orchestrator& owner, std::string run_id)
      : owner_(owner), run_id_(std::move(run_id)), dir_(owner.run_dir(run_id_)) {}

  RunState run(bool retry_failed, bool fail_if_complete) {
    RunLock lock(dir_ / ".lock");
    cfg_ = read_json(dir_ / "config.json").get<RunConfig>();
    state_ = read_json(dir_ / "state.json").get<RunState>();
    if (state_.phase == RunPhase::Completed) {
      if (fail_if_complete) throw Error(ErrorCode::RunAlreadyComplete, "run " + run_id_ + " already completed");
      return state_;
    }

    // With the lock held, anything mid-flight belongs to a dead executor.
    for (auto& inst : state_.instances) {
      const bool mid_flight = inst.status != InstanceStatus::Pending && inst.status != InstanceStatus::Done &&
                              inst.status != InstanceStatus::Failed;
      if (mid_flight || (retry_failed && inst.status == InstanceStatus::Failed)) {
        inst.status = InstanceStatus::Pending;
        inst.failure_code.reset();
        inst.failure_message.reset();
      }
    }
    state_.phase = RunPhase::Running;
    persist();

    std::vector<std::string> pending;
    for (const auto& inst : state_.instances)
      if (inst.status == InstanceStatus::Pending) pending.push_back(inst.id);

    if (!pending.empty()) {
      renderer_ = owner_.renderer();
      embedding_ = make_embedding_backend(cfg_.request.metric_config);
      dataset_ = scan_dataset(cfg_.request.dataset_root);

      std::atomic<std::size_t> next{0};
      auto worker = [&] {
        for (std::size_t i = next++; i < pending.size() && !fatal_flag_; i = next++) process(pending[i]);
      };
      const int n = std::min<int>(cfg_.request.concurrency, static_cast<int>(pending.size()));
      {
        std::vector<std::jthread> pool;
        for (int t = 1; t < n; ++t) pool.emplace_back(worker);
        worker();
      }
      if (fatal_) std::rethrow_exception(fatal_);
    }

    write_json(dir_ / "report.json", build_report(owner_.runs_root(), run_id_));
    {
      std::lock_guard guard(mutex_);
      state_.phase = RunPhase::Completed;
      persist();
    }
    return state_;
  }

 private:
  void persist() {
    state_.updated_at = utc_timestamp();
    write_json(dir_ / "state.json", state_);
  }

  void transition(const std::string& id, InstanceStatus to, const Error* failure = nullptr) {
    std::lock_guard guard(mutex_);
    auto it = std::find_if(state_.instances.begin(), state_.instances.end(), [&](const auto& i) { return i.id == id; });
    if (!is_forward_transition(it->status, to)) {
      throw Error(ErrorCode::Internal, "illegal transition " + std::string(to_string(it->status)) + " -> " +
                                           std::string(to_string(to)) + " for " + id);
    }
    it->status = to;
    if (failure != nullptr) {
      it->failure_code = std::string(to_string(failure->code()));
      it->failure_message = failure->what();
    }
    persist();
    ++sequence_;
    if (owner_.options_.observer) owner_.options_.observer({run_id_, id, to, sequence_});
  }

  ReferenceRender reference_render(const std::string& html) {
    const RenderConfig& rc = cfg_.request.render_config;
    const std::string key = sha256_hex(html + "\n" + json(rc).dump());
    const fs::path cache = owner_.runs_root() / ".reference-cache" / key;
    ReferenceRender ref;
    if (fs::is_regular_file(cache / "render.json")) {
      ref.screenshot = read_file(cache / "reference.png");
      ref.blocks = read_json(cache / "blocks.json").get<std::vector<Block>>();
      ref.meta = read_json(cache / "render.json");
      return ref;
    }
    const RenderResult r = renderer_->render(html, rc);
    ref.screenshot = r.screenshot;
    ref.blocks = r.blocks;
    ref.meta = render_meta(r);
    fs::create_directories(cache);
    write_file_atomic(cache / "reference.png", ref.screenshot);
    write_json(cache / "blocks.json", ref.blocks);
    write_json(cache / "render.json", ref.meta);  // written last: marks the entry complete
    return ref;
  }

  void process(const std::string& id) {
    const fs::path idir = dir_ / "instances" / id;
    try {
      std::error_code ec;
      fs::remove_all(idir, ec);
      fs::create_directories(idir);
      transition(id, InstanceStatus::Generating);
      const InputInstance* inst = dataset_.find(id);
      if (inst == nullptr) throw Error(ErrorCode::DatasetNotFound, "instance missing from dataset: " + id);

      CallLog log(idir / "llm_calls.jsonl");
      MethodContext ctx{*owner_.options_.gateway, log,           cfg_.request.retry, renderer_.get(),
                        cfg_.request.render_config, embedding_.get(), idir};
      GenerationArtifact artifact =
          run_method(*owner_.options_.methods, cfg_.request.method, ctx, cfg_.request.model, *inst);
      write_file_atomic(idir / "generated.html", artifact.generated_code);
      if (artifact.region_tree) {
        write_json(idir / "regions.json", {{"tree", *artifact.region_tree}, {"cap_reached", artifact.region_cap_reached}});
      }

      transition(id, InstanceStatus::Rendering);
      RenderResult gen = artifact.selected_render
                             ? std::move(*artifact.selected_render)
                             : renderer_->render(artifact.generated_code, cfg_.request.render_config);
      write_file_atomic(idir / "generated.png", gen.screenshot);
      write_json(idir / "blocks_gen.json", gen.blocks);
      write_json(idir / "render_gen.json", render_meta(gen));

      std::optional<ReferenceRender> ref;
      std::string ref_error;
      if (inst->ground_truth_code) {
        try {
          ref = reference_render(*inst->ground_truth_code);
          write_file_atomic(idir / "reference.png", ref->screenshot);
          write_json(idir / "blocks_ref.json", ref->blocks);
          write_json(idir / "render_ref.json", ref->meta);
        } catch (const Error& e) {
          if (e.code() == ErrorCode::BrowserUnavailable) throw;
          ref_error = std::string(to_string(e.code())) + ": " + e.what();
        }
      }

      transition(id, InstanceStatus::Evaluating);
      EvaluationPair pair;
      pair.reference_screenshot = inst->screenshot_image();
      pair.reference_code = inst->ground_truth_code;
      if (ref) {
        pair.reference_blocks = ref->blocks;
        pair.reference_page = {ref->meta.at("page_width").get<double>(), ref->meta.at("page_height").get<double>()};
      }
      pair.generated_code = artifact.generated_code;
      pair.generated_screenshot = decode_image(gen.screenshot);
      pair.generated_blocks = gen.blocks;
      pair.generated_page = {static_cast<double>(gen.page_width), static_cast<double>(gen.page_height)};
      const MetricReport report = evaluate(pair, artifact.usage_total, cfg_.request.metric_config, *embedding_);
      json metrics = report;
      metrics["generation"] = {{"llm_calls", artifact.llm_calls},
                               {"candidates_considered", artifact.candidates_considered},
                               {"candidate_scores", artifact.candidate_scores},
                               {"renders_in_method", artifact.renders},
                               {"region_cap_reached", artifact.region_cap_reached}};
      if (!ref_error.empty()) metrics["reference_render_error"] = ref_error;
      write_json(idir / "metrics.json", metrics);
      transition(id, InstanceStatus::Done);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::BrowserUnavailable) {
        set_fatal(std::current_exception());
        return;
      }
      fail(id, e);
    } catch (const std::exception& e) {
      fail(id, Error(ErrorCode::Internal, e.what()));
    }
  }

  void fail(const std::string& id, const Error& e) {
    try {
      transition(id, InstanceStatus::Failed, &e);
    } catch (...) {
      set_fatal(std::current_exception());
    }
  }

  void set_fatal(std::exception_ptr e) {
    std::lock_guard guard(mutex_);
    if (!fatal_) fatal_ = e;
    fatal_flag_ = true;
  }

  Orchestrator& owner_;
  std::string run_id_;
  fs::path dir_;
  RunConfig cfg_;
  RunState state_;
  Dataset dataset_;
  std::shared_ptr<Renderer> renderer_;
  std::unique_ptr<EmbeddingBackend> embedding_;
  std::mutex mutex_;
  int sequence_ = 0;
  std::exception_ptr fatal_;
  std::atomic<bool> fatal_flag_{false};
};

RunState Orchestrator::execute(const std::string& run_id) {
  if (!exists(run_id)) throw Error(ErrorCode::RunNotFound, "run not found: " + run_id);
  return Execution(*this, run_id).run(false, true);
}

RunState Orchestrator::resume(const std::string& run_id, bool retry_failed) {
  if (!exists(run_id)) throw Error(ErrorCode::RunNotFound, "run not found: " + run_id);
  if (retry_failed) {
    // A completed run with failures can be reopened for them.
    const RunState st = status(run_id);
    if (st.phase == RunPhase::Completed && st.count(InstanceStatus::Failed) > 0) {
      RunLock lock(run_dir(run_id) / ".lock");
      RunState reopened = read_json(run_dir(run_id) / "state.json").get<RunState>();
      reopened.phase = RunPhase::Running;
      reopened.updated_at = utc_timestamp();
      write_json(run_dir(run_id) / "state.json", reopened);
    }
  }
  return Execution(*this, run_id).run(retry_failed, true);
}

}  // namespace uibench
