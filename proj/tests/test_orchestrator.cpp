#include <gtest/gtest.h>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <map>
#include <set>

#include "support.hpp"
#include "uibench/error.hpp"
#include "uibench/orchestrator.hpp"

using namespace uibench;
using nlohmann::json;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Internal;
}

// Provider "t": answers with a page naming the instance, or fails for ids in
// `failing`. Instances are recognised by the digest of their screenshot.
struct Harness {
  TempDir tmp;
  fs::path data = tmp / "data";
  fs::path runs = tmp / "runs";
  std::vector<std::string> ids;
  std::map<std::string, std::string> digest_to_id;
  std::mutex mu;
  std::set<std::string> failing;
  std::map<std::string, int> calls;
  std::shared_ptr<testing_support::FakeRenderer> renderer = std::make_shared<testing_support::FakeRenderer>();
  std::vector<ProgressEvent> events;
  std::function<void(const ProgressEvent&)> on_event;
  std::unique_ptr<Orchestrator> orch;

  explicit Harness(int n, bool with_html = true) {
    ids = testing_support::make_dataset(data, n, with_html);
    for (const auto& id : ids) digest_to_id[sha256_hex(read_file(data / (id + ".png")))] = id;
    GatewayOptions go;
    go.sleep = [](std::chrono::milliseconds) {};
    auto gw = std::make_shared<Gateway>(go);
    gw->register_provider("t", std::make_shared<MockAdapter>([this](const ProviderRequest& req) {
      std::string id;
      for (const auto& p : req.messages[0].parts)
        if (const auto* img = std::get_if<ImagePart>(&p)) id = digest_to_id.at(sha256_hex(img->data));
      std::lock_guard lock(mu);
      ++calls[id];
      if (failing.count(id)) throw Error(ErrorCode::ProviderError, "scripted failure for " + id);
      ProviderReply r;
      r.text = "<html><body><h1>Page for " + id + "</h1></body></html>";
      r.prompt_text_tokens = 10;
      r.prompt_image_tokens = 20;
      r.completion_tokens = 5;
      return r;
    }));
    OrchestratorOptions o;
    o.runs_root = runs;
    o.gateway = gw;
    o.renderer_factory = [this] { return renderer; };
    o.observer = [this](const ProgressEvent& e) {
      events.push_back(e);
      if (on_event) on_event(e);
    };
    orch = std::make_unique<Orchestrator>(o);
  }

  RunRequest request(int concurrency = 1) const {
    RunRequest r;
    r.dataset_root = data;
    r.model = ModelSpec::parse("t:m");
    r.method = MethodSpec{"direct", json::object(), ""};
    r.render_config.viewport_width = 320;
    r.render_config.viewport_height = 240;
    r.concurrency = concurrency;
    return r;
  }

  int run_dirs() const {
    if (!fs::exists(runs)) return 0;
    int n = 0;
    for (const auto& e : fs::directory_iterator(runs)) n += e.is_directory() && e.path().filename().string()[0] != '.';
    return n;
  }
};

}  // namespace

TEST(Orchestrator, InvalidRequestsCreateNothing) {
  Harness h(2);
  auto bad = h.request();
  bad.dataset_root = h.tmp / "missing";
  EXPECT_EQ(code_of([&] { h.orch->create_run(bad); }), ErrorCode::DatasetNotFound);
  bad = h.request();
  bad.model = ModelSpec::parse("nobody:m");
  EXPECT_EQ(code_of([&] { h.orch->create_run(bad); }), ErrorCode::ConfigError);
  bad = h.request();
  bad.method.name = "nope";
  EXPECT_EQ(code_of([&] { h.orch->create_run(bad); }), ErrorCode::ConfigError);
  bad = h.request();
  bad.method = MethodSpec{"decompose", {{"bogus", 1}}, ""};
  EXPECT_EQ(code_of([&] { h.orch->create_run(bad); }), ErrorCode::ConfigError);
  bad = h.request();
  bad.render_config.viewport_width = 1;
  EXPECT_EQ(code_of([&] { h.orch->create_run(bad); }), ErrorCode::ConfigError);
  bad = h.request();
  bad.concurrency = 0;
  EXPECT_EQ(code_of([&] { h.orch->create_run(bad); }), ErrorCode::ConfigError);
  bad = h.request();
  bad.metric_config.embedding_backend = "clip-service";
  EXPECT_EQ(code_of([&] { h.orch->create_run(bad); }), ErrorCode::ConfigError);
  EXPECT_EQ(h.run_dirs(), 0);
}

TEST(Orchestrator, RunsEveryInstanceToDone) {
  Harness h(3);
  const std::string id = h.orch->create_run(h.request());
  EXPECT_EQ(h.orch->status(id).phase, RunPhase::Created);
  EXPECT_EQ(h.orch->status(id).count(InstanceStatus::Pending), 3);
  const RunState st = h.orch->execute(id);
  EXPECT_EQ(st.phase, RunPhase::Completed);
  EXPECT_EQ(st.count(InstanceStatus::Done), 3);
  const fs::path dir = h.orch->run_dir(id);
  for (const char* f : {"config.json", "state.json", "dataset.json", "report.json"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  for (const auto& iid : h.ids) {
    for (const char* f : {"generated.html", "generated.png", "reference.png", "metrics.json", "llm_calls.jsonl"}) {
      EXPECT_TRUE(fs::exists(dir / "instances" / iid / f)) << iid << "/" << f;
    }
    const json m = json::parse(read_text(dir / "instances" / iid / "metrics.json"));
    EXPECT_TRUE(m["code_similarity"].is_number());
    EXPECT_TRUE(m["visual_similarity"].is_number());
    EXPECT_EQ(m["token_usage"]["total"], 35);
  }
  const RunConfig cfg = h.orch->config(id);
  EXPECT_EQ(cfg.run_id, id);
  EXPECT_TRUE(cfg.request.dataset_root.is_absolute());
  EXPECT_EQ(code_of([&] { h.orch->execute(id); }), ErrorCode::RunAlreadyComplete);
}

TEST(Orchestrator, FailuresAreIsolated) {
  Harness h(4);
  h.failing = {"i2"};
  const std::string id = h.orch->create_run(h.request(2));
  const RunState st = h.orch->execute(id);
  EXPECT_EQ(st.phase, RunPhase::Completed);
  EXPECT_EQ(st.count(InstanceStatus::Done), 3);
  EXPECT_EQ(st.count(InstanceStatus::Failed), 1);
  const InstanceState* f = st.find("i2");
  ASSERT_NE(f, nullptr);
  EXPECT_EQ(f->status, InstanceStatus::Failed);
  EXPECT_EQ(f->failure_code, "ProviderError");
  EXPECT_NE(f->failure_message->find("scripted failure"), std::string::npos);
  // Failed calls are still logged.
  EXPECT_EQ(CallLog::read(h.orch->run_dir(id) / "instances" / "i2" / "llm_calls.jsonl").size(), 1u);
}

TEST(Orchestrator, ResumeRetriesOnlyFailuresWhenAsked) {
  Harness h(3);
  h.failing = {"i1"};
  const std::string id = h.orch->create_run(h.request());
  h.orch->execute(id);
  EXPECT_EQ(code_of([&] { h.orch->resume(id); }), ErrorCode::RunAlreadyComplete);
  h.failing.clear();
  const RunState st = h.orch->resume(id, true);
  EXPECT_EQ(st.count(InstanceStatus::Done), 3);
  EXPECT_EQ(h.calls["i0"], 1);
  EXPECT_EQ(h.calls["i1"], 2);
  EXPECT_EQ(h.calls["i2"], 1);
  EXPECT_EQ(code_of([&] { h.orch->resume(id, true); }), ErrorCode::RunAlreadyComplete);
}

TEST(Orchestrator, ResumeRestartsInterruptedInstances) {
  Harness h(3);
  const std::string id = h.orch->create_run(h.request());
  h.orch->execute(id);
  // Rewrite the state as if the process died mid-run.
  const fs::path state_path = h.orch->run_dir(id) / "state.json";
  json st = json::parse(read_text(state_path));
  st["phase"] = "running";
  for (auto& inst : st["instances"]) {
    if (inst["id"] == "i1") inst["status"] = "rendering";
  }
  write_file_atomic(state_path, st.dump());
  const RunState after = h.orch->resume(id);
  EXPECT_EQ(after.count(InstanceStatus::Done), 3);
  EXPECT_EQ(h.calls["i0"], 1);
  EXPECT_EQ(h.calls["i1"], 2);
  EXPECT_EQ(h.calls["i2"], 1);
}

TEST(Orchestrator, UnknownRunsAndConcurrentExecutors) {
  Harness h(1);
  EXPECT_EQ(code_of([&] { h.orch->status("nope"); }), ErrorCode::RunNotFound);
  EXPECT_EQ(code_of([&] { h.orch->execute("nope"); }), ErrorCode::RunNotFound);
  EXPECT_EQ(code_of([&] { h.orch->resume("../x"); }), ErrorCode::RunNotFound);
  const std::string id = h.orch->create_run(h.request());
  const int fd = ::open((h.orch->run_dir(id) / ".lock").c_str(), O_RDWR | O_CREAT, 0644);
  ASSERT_GE(fd, 0);
  ASSERT_EQ(::flock(fd, LOCK_EX | LOCK_NB), 0);
  EXPECT_EQ(code_of([&] { h.orch->execute(id); }), ErrorCode::RunAlreadyActive);
  ::flock(fd, LOCK_UN);
  ::close(fd);
  EXPECT_EQ(h.orch->execute(id).count(InstanceStatus::Done), 1);
}

TEST(Orchestrator, TransitionsAreForwardAndPersistedBeforeNotification) {
  Harness h(5);
  h.failing = {"i3"};
  std::string run_id;
  int checked = 0;
  h.on_event = [&](const ProgressEvent& e) {
    // state.json is complete and already reflects this event.
    const RunState st = json::parse(read_text(h.orch->run_dir(e.run_id) / "state.json")).get<RunState>();
    EXPECT_EQ(st.find(e.instance_id)->status, e.status);
    ++checked;
  };
  run_id = h.orch->create_run(h.request(3));
  h.orch->execute(run_id);
  std::map<std::string, std::vector<InstanceStatus>> seen;
  for (std::size_t i = 0; i < h.events.size(); ++i) {
    EXPECT_EQ(h.events[i].sequence, static_cast<int>(i) + 1);
    seen[h.events[i].instance_id].push_back(h.events[i].status);
  }
  EXPECT_EQ(checked, static_cast<int>(h.events.size()));
  for (const auto& [iid, statuses] : seen) {
    InstanceStatus prev = InstanceStatus::Pending;
    for (auto s : statuses) {
      EXPECT_TRUE(is_forward_transition(prev, s)) << iid;
      prev = s;
    }
    EXPECT_EQ(prev, iid == "i3" ? InstanceStatus::Failed : InstanceStatus::Done);
  }
  EXPECT_EQ(seen.size(), 5u);
}

TEST(Orchestrator, ForwardTransitionRule) {
  using S = InstanceStatus;
  const std::vector<S> order{S::Pending, S::Generating, S::Rendering, S::Evaluating, S::Done};
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = 0; j < order.size(); ++j) EXPECT_EQ(is_forward_transition(order[i], order[j]), j == i + 1);
    EXPECT_EQ(is_forward_transition(order[i], S::Failed), order[i] != S::Done);
    EXPECT_FALSE(is_forward_transition(S::Failed, order[i]));
  }
  for (auto s : {S::Pending, S::Generating, S::Rendering, S::Evaluating, S::Done, S::Failed}) {
    EXPECT_EQ(instance_status_from_string(to_string(s)), s);
  }
}

TEST(Orchestrator, NoGroundTruthStillCompletes) {
  Harness h(2, false);
  const std::string id = h.orch->create_run(h.request());
  EXPECT_EQ(h.orch->execute(id).count(InstanceStatus::Done), 2);
  const json m = json::parse(read_text(h.orch->run_dir(id) / "instances" / "i0" / "metrics.json"));
  EXPECT_TRUE(m["code_similarity"].is_null());
  EXPECT_TRUE(m["visual_similarity"].is_number());
  EXPECT_FALSE(fs::exists(h.orch->run_dir(id) / "instances" / "i0" / "reference.png"));
}

TEST(Orchestrator, ListsRunsNewestFirst) {
  Harness h(1);
  const std::string a = h.orch->create_run(h.request());
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  const std::string b = h.orch->create_run(h.request());
  const auto list = h.orch->list_runs();
  ASSERT_EQ(list.size(), 2u);
  EXPECT_EQ(list[0].run_id, b);
  EXPECT_EQ(list[1].run_id, a);
  EXPECT_EQ(list[0].model, "t:m");
  EXPECT_EQ(list[0].method, "direct");
  EXPECT_EQ(list[0].total, 1);
}

TEST(RunRequestJson, ParsesShorthandAndRejectsGarbage) {
  const RunRequest r = run_request_from_json(
      {{"dataset_root", "/d"}, {"model", "mock:echo"}, {"method", "decompose"}, {"concurrency", 2}});
  EXPECT_EQ(r.model.provider, "mock");
  EXPECT_EQ(r.method.name, "decompose");
  EXPECT_EQ(r.concurrency, 2);
  const RunRequest r2 = run_request_from_json(
      {{"dataset_root", "/d"},
       {"model", {{"provider", "mock"}, {"model_id", "echo"}}},
       {"method", {{"name", "decompose"}, {"params", {{"candidates", 2}}}}}});
  EXPECT_EQ(r2.method.params["candidates"], 2);
  EXPECT_EQ(code_of([] { run_request_from_json(json::array()); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { run_request_from_json({{"model", "mock:echo"}}); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { run_request_from_json({{"dataset_root", "/d"}, {"model", 3}}); }), ErrorCode::ConfigError);
}
