#include "uibench/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <condition_variable>
#include <list>
#include <sstream>
#include <thread>

#include "uibench/encoding.hpp"
#include "uibench/error.hpp"
#include "uibench/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace uibench {

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(2), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
  const int status = http_status(e.code());
  send_json(res, status, {{"http_status", status}, {"code", to_string(e.code())}, {"message", e.what()}});
}

std::string media_type(std::string_view name) {
  if (name.ends_with(".png")) return "image/png";
  if (name.ends_with(".html")) return "text/html; charset=utf-8";
  if (name.ends_with(".jsonl")) return "application/x-ndjson";
  return "application/json";
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// Instance id derived from an upload filename: its stem with unsafe
// characters replaced, or a positional fallback.
std::string upload_id(const std::string& filename, std::size_t index) {
  std::string stem = fs::path(filename).stem().string();
  for (char& c : stem) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-')) c = '_';
  }
  if (!is_safe_id(stem) || stem.front() == '.') stem = "upload_" + std::to_string(index + 1);
  return stem;
}

}  // namespace

class Service::Impl {
 public:
  Impl(std::shared_ptr<Orchestrator> orchestrator, ServiceOptions options)
      : orch_(std::move(orchestrator)), options_(std::move(options)) {
    routes();
  }

  ~Impl() {
    server_.stop();
    wait_for_runs();
  }

  int bind(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorCode::ConfigError, "cannot bind " + host + ":" + std::to_string(port));
    return bound;
  }

  void listen() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }

  void wait_for_runs() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return active_ == 0; });
  }

 private:
  template <class F>
  auto guarded(F&& handler) {
    return [this, handler = std::forward<F>(handler)](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const std::exception& e) {
        send_error(res, Error(ErrorCode::Internal, e.what()));
      }
    };
  }

  void start_background(const std::string& run_id, bool resume, bool retry_failed) {
    std::lock_guard lock(mutex_);
    ++active_;
    std::thread([this, run_id, resume, retry_failed] {
      try {
        if (resume) orch_->resume(run_id, retry_failed);
        else orch_->execute(run_id);
      } catch (const std::exception&) {
        // Outcome is visible through the run state; nothing to report here.
      }
      std::lock_guard done(mutex_);
      --active_;
      cv_.notify_all();
    }).detach();
  }

  void routes() {
    server_.Post("/api/runs", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body, nullptr, false);
      if (body.is_discarded()) throw Error(ErrorCode::ConfigError, "request body is not valid JSON");
      const std::string run_id = orch_->create_run(run_request_from_json(body));
      start_background(run_id, false, false);
      send_json(res, 202, {{"run_id", run_id}});
    }));

    server_.Get("/api/runs", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, orch_->list_runs());
    }));

    server_.Get(R"(/api/runs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, orch_->status(req.matches[1]));
    }));

    server_.Post(R"(/api/runs/([^/]+)/resume)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const RunState st = orch_->status(id);
      const bool retry_failed = req.get_param_value("retry_failed") == "true";
      if (st.phase == RunPhase::Completed && !(retry_failed && st.count(InstanceStatus::Failed) > 0)) {
        throw Error(ErrorCode::RunAlreadyComplete, "run already completed");
      }
      start_background(id, true, retry_failed);
      send_json(res, 202, {{"run_id", id}});
    }));

    server_.Get(R"(/api/runs/([^/]+)/report)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const RunState st = orch_->status(id);
      if (st.phase != RunPhase::Completed) throw Error(ErrorCode::RunNotTerminal, "run " + id + " is not finished");
      const json report = build_report(orch_->runs_root(), id);
      if (req.get_param_value("format") == "md") {
        res.set_content(report_markdown(report), "text/markdown; charset=utf-8");
      } else {
        send_json(res, 200, report);
      }
    }));

    server_.Get(R"(/api/runs/([^/]+)/instances/([^/]+)/artifacts/(.+))",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const std::string id = req.matches[1];
                  const std::string iid = req.matches[2];
                  const std::string name = req.matches[3];
                  const auto* known = std::find(std::begin(kArtifactNames), std::end(kArtifactNames), name);
                  if (known == std::end(kArtifactNames)) {
                    throw Error(ErrorCode::InvalidArtifactName, "unknown artifact: " + name);
                  }
                  const RunState st = orch_->status(id);
                  const InstanceState* inst = st.find(iid);
                  if (inst == nullptr) throw Error(ErrorCode::ArtifactNotFound, "no instance " + iid);
                  // Joined from validated components only.
                  const fs::path path = orch_->run_dir(st.run_id) / "instances" / inst->id / *known;
                  if (!fs::is_regular_file(path)) throw Error(ErrorCode::ArtifactNotFound, "artifact not present: " + name);
                  const Bytes data = read_file(path);
                  res.status = 200;
                  res.set_content(std::string(data.begin(), data.end()), media_type(name));
                }));

    server_.Post("/api/uploads", guarded([this](const httplib::Request& req, httplib::Response& res) {
      if (!req.is_multipart_form_data() || req.files.empty()) {
        throw Error(ErrorCode::ConfigError, "expected multipart form data with at least one image");
      }
      const fs::path dir = fs::absolute(options_.uploads_root / make_ulid());
      fs::create_directories(dir);
      try {
        std::size_t index = 0;
        json ids = json::array();
        for (const auto& [field, file] : req.files) {
          const auto* bytes = reinterpret_cast<const std::uint8_t*>(file.content.data());
          std::string id = upload_id(file.filename, index);
          while (fs::exists(dir / (id + ".png"))) id += "_" + std::to_string(index + 1);
          ingest_screenshot(dir, id, std::span(bytes, file.content.size()));
          ids.push_back(id);
          ++index;
        }
        send_json(res, 201, {{"dataset_root", dir.string()}, {"instances", ids}});
      } catch (...) {
        std::error_code ec;
        fs::remove_all(dir, ec);
        throw;
      }
    }));

    server_.Get("/api/leaderboard", guarded([this](const httplib::Request& req, httplib::Response& res) {
      std::vector<std::string> ids;
      if (req.has_param("runs")) {
        ids = split_csv(req.get_param_value("runs"));
      } else {
        for (const auto& s : orch_->list_runs())
          if (s.phase == RunPhase::Completed) ids.push_back(s.run_id);
      }
      const std::string sort = req.has_param("sort") ? req.get_param_value("sort") : "visual_similarity";
      for (const auto& id : ids)
        if (!orch_->exists(id)) throw Error(ErrorCode::RunNotFound, "run not found: " + id);
      send_json(res, 200, build_leaderboard(orch_->runs_root(), ids, sort));
    }));

    if (!options_.static_dir.empty()) server_.set_mount_point("/", options_.static_dir.string());
  }

  std::shared_ptr<Orchestrator> orch_;
  ServiceOptions options_;
  httplib::Server server_;
  std::mutex mutex_;
  std::condition_variable cv_;
  int active_ = 0;
};

Service::Service(std::shared_ptr<Orchestrator> orchestrator, ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(orchestrator), std::move(options))) {}
Service::~Service() = default;

int Service::bind(const std::string& host, int port) { return impl_->bind(host, port); }
void Service::listen() { impl_->listen(); }
void Service::stop() { impl_->stop(); }
void Service::wait_for_runs() { impl_->wait_for_runs(); }

}  // namespace uibench
