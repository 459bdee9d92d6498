#include <gtest/gtest.h>

#include <thread>

#include <httplib.h>

#include "support.hpp"
#include "uibench/error.hpp"
#include "uibench/report.hpp"
#include "uibench/service.hpp"

using namespace uibench;
using nlohmann::json;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

struct Server {
  TempDir tmp;
  fs::path data = tmp / "data";
  std::shared_ptr<Orchestrator> orch;
  std::unique_ptr<Service> service;
  std::thread thread;
  int port = 0;

  Server() {
    testing_support::make_dataset(data, 2);
    OrchestratorOptions o;
    o.runs_root = tmp / "runs";
    GatewayOptions go;
    go.sleep = [](std::chrono::milliseconds) {};
    o.gateway = Gateway::with_default_providers(go);
    o.renderer_factory = [] { return std::make_shared<testing_support::FakeRenderer>(); };
    orch = std::make_shared<Orchestrator>(o);
    service = std::make_unique<Service>(orch, ServiceOptions{tmp / "uploads", {}});
    port = service->bind("127.0.0.1", 0);
    thread = std::thread([this] { service->listen(); });
  }
  ~Server() {
    service->stop();
    thread.join();
    service->wait_for_runs();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(std::chrono::seconds(30));
    return c;
  }

  json wait_completed(const std::string& id) {
    auto c = client();
    for (int i = 0; i < 600; ++i) {
      auto res = c.Get("/api/runs/" + id);
      const json st = json::parse(res->body);
      if (st["phase"] == "completed") return st;
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    ADD_FAILURE() << "run did not complete";
    return {};
  }

  std::string start_run(const std::string& model = "mock:echo") {
    auto res = client().Post("/api/runs",
                             json{{"dataset_root", data.string()}, {"model", model}, {"method", "direct"}}.dump(),
                             "application/json");
    EXPECT_EQ(res->status, 202);
    return json::parse(res->body).at("run_id");
  }
};

json body_of(const httplib::Result& r) { return json::parse(r->body); }

}  // namespace

TEST(Service, RunLifecycleOverHttp) {
  Server s;
  const std::string id = s.start_run();
  const json st = s.wait_completed(id);
  EXPECT_EQ(st["counters"]["done"], 2);
  auto c = s.client();

  auto list = c.Get("/api/runs");
  ASSERT_EQ(list->status, 200);
  EXPECT_EQ(body_of(list)[0]["run_id"], id);

  auto report = c.Get("/api/runs/" + id + "/report");
  ASSERT_EQ(report->status, 200);
  EXPECT_EQ(body_of(report)["run_id"], id);
  EXPECT_EQ(body_of(report), build_report(s.orch->runs_root(), id));
  auto md = c.Get("/api/runs/" + id + "/report?format=md");
  ASSERT_EQ(md->status, 200);
  EXPECT_EQ(md->body, report_markdown(build_report(s.orch->runs_root(), id)));

  for (const char* name : kArtifactNames) {
    auto a = c.Get("/api/runs/" + id + "/instances/i0/artifacts/" + name);
    ASSERT_EQ(a->status, 200) << name;
    const Bytes disk = read_file(s.orch->run_dir(id) / "instances" / "i0" / name);
    EXPECT_EQ(a->body, std::string(disk.begin(), disk.end())) << name;
  }
  EXPECT_EQ(c.Get("/api/runs/" + id + "/instances/i0/artifacts/generated.png")->get_header_value("Content-Type"),
            "image/png");

  auto resumed = c.Post("/api/runs/" + id + "/resume", "", "application/json");
  EXPECT_EQ(body_of(resumed)["code"], "RunAlreadyComplete");

  auto lb = c.Get("/api/leaderboard?runs=" + id + "&sort=visual_similarity");
  ASSERT_EQ(lb->status, 200);
  EXPECT_EQ(body_of(lb)["rows"].size(), 1u);
  EXPECT_EQ(body_of(c.Get("/api/leaderboard?runs=" + id + "&sort=bogus"))["code"], "ConfigError");
}

TEST(Service, ErrorResponsesCarryCodes) {
  Server s;
  auto c = s.client();
  auto missing = c.Get("/api/runs/nope");
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(body_of(missing)["code"], "RunNotFound");
  EXPECT_EQ(body_of(missing)["http_status"], 404);

  auto garbage = c.Post("/api/runs", "{not json", "application/json");
  EXPECT_EQ(garbage->status, 400);
  EXPECT_EQ(body_of(garbage)["code"], "ConfigError");

  auto bad_provider =
      c.Post("/api/runs", json{{"dataset_root", s.data.string()}, {"model", "ghost:m"}, {"method", "direct"}}.dump(),
             "application/json");
  EXPECT_EQ(bad_provider->status, 400);

  auto no_data = c.Post("/api/runs",
                        json{{"dataset_root", (s.tmp / "none").string()}, {"model", "mock:echo"}, {"method", "direct"}}.dump(),
                        "application/json");
  EXPECT_EQ(body_of(no_data)["code"], "DatasetNotFound");
  EXPECT_EQ(s.orch->list_runs().size(), 0u);

  // A created but unexecuted run has no report yet.
  RunRequest req;
  req.dataset_root = s.data;
  req.model = ModelSpec::parse("mock:echo");
  req.method.name = "direct";
  const std::string id = s.orch->create_run(req);
  auto early = c.Get("/api/runs/" + id + "/report");
  EXPECT_EQ(early->status, 409);
  EXPECT_EQ(body_of(early)["code"], "RunNotTerminal");
}

TEST(Service, ArtifactNamesAreAClosedSet) {
  Server s;
  const std::string id = s.start_run();
  s.wait_completed(id);
  auto c = s.client();
  for (const char* bad : {"config.json", "..%2F..%2Fstate.json", "blocks_ref.json", "generated.html.bak"}) {
    auto r = c.Get("/api/runs/" + id + "/instances/i0/artifacts/" + bad);
    EXPECT_EQ(r->status, 400) << bad;
    EXPECT_EQ(body_of(r)["code"], "InvalidArtifactName") << bad;
  }
  auto unknown = c.Get("/api/runs/" + id + "/instances/zz/artifacts/generated.html");
  EXPECT_EQ(unknown->status, 404);
  EXPECT_EQ(body_of(unknown)["code"], "ArtifactNotFound");
}

TEST(Service, FailedInstancesAreVisibleAndRetriable) {
  Server s;
  const std::string id = s.start_run("mock:fail");
  const json st = s.wait_completed(id);
  EXPECT_EQ(st["counters"]["failed"], 2);
  EXPECT_EQ(st["instances"][0]["failure"]["code"], "ProviderError");
  auto c = s.client();
  // Generated artifacts never existed; the call log did.
  EXPECT_EQ(c.Get("/api/runs/" + id + "/instances/i0/artifacts/generated.html")->status, 404);
  EXPECT_EQ(c.Get("/api/runs/" + id + "/instances/i0/artifacts/llm_calls.jsonl")->status, 200);
  auto retry = c.Post("/api/runs/" + id + "/resume?retry_failed=true", "", "application/json");
  EXPECT_EQ(retry->status, 202);
  s.service->wait_for_runs();
  EXPECT_EQ(s.orch->status(id).count(InstanceStatus::Failed), 2);
}

TEST(Service, UploadsBecomeADataset) {
  Server s;
  auto c = s.client();
  const Bytes png = encode_png(Image(20, 10, 1, 2, 3));
  httplib::MultipartFormDataItems items = {
      {"files", std::string(png.begin(), png.end()), "home page.png", "image/png"},
      {"files", std::string(png.begin(), png.end()), "home page.png", "image/png"},
  };
  auto res = c.Post("/api/uploads", items);
  ASSERT_EQ(res->status, 201);
  const json body = body_of(res);
  ASSERT_EQ(body["instances"].size(), 2u);
  EXPECT_NE(body["instances"][0], body["instances"][1]);
  const Dataset ds = scan_dataset(body["dataset_root"].get<std::string>());
  EXPECT_EQ(ds.instances.size(), 2u);

  httplib::MultipartFormDataItems junk = {{"files", "not an image", "x.png", "image/png"}};
  auto bad = c.Post("/api/uploads", junk);
  EXPECT_EQ(bad->status, http_status(ErrorCode::UnreadableImage));
  EXPECT_EQ(body_of(bad)["code"], "UnreadableImage");
  auto empty = c.Post("/api/uploads", "", "application/json");
  EXPECT_EQ(empty->status, 400);
}

TEST(ErrorMapping, CodesAreDistinctAndMapped) {
  EXPECT_EQ(http_status(ErrorCode::RunNotFound), 404);
  EXPECT_EQ(http_status(ErrorCode::ConfigError), 400);
  EXPECT_EQ(http_status(ErrorCode::RunNotTerminal), 409);
  EXPECT_EQ(exit_code(ErrorCode::RunNotFound), 4);
  EXPECT_EQ(exit_code(ErrorCode::ConfigError), 2);
  EXPECT_EQ(exit_code(ErrorCode::RunAlreadyComplete), 0);
  EXPECT_EQ(to_string(ErrorCode::BrowserUnavailable), "BrowserUnavailable");
}
