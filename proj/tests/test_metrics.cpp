#include <gtest/gtest.h>

#include <thread>

#include <httplib.h>

#include "support.hpp"
#include "uibench/error.hpp"
#include "uibench/metrics.hpp"

using namespace uibench;
using nlohmann::json;

namespace {

Block blk(std::string text, double x, double y, color::Rgb c = {}) { return Block{std::move(text), x, y, 20, 10, c}; }

EvaluationPair full_pair() {
  EvaluationPair p;
  p.reference_screenshot = Image(64, 64, 255, 255, 255);
  p.generated_screenshot = Image(64, 64, 255, 255, 255);
  p.reference_code = "<html><body><h1>Title</h1></body></html>";
  p.generated_code = "<html><body><h1>Title</h1></body></html>";
  p.reference_blocks = std::vector<Block>{blk("Title", 10, 10)};
  p.generated_blocks = {blk("Title", 10, 10)};
  p.reference_page = {100, 100};
  p.generated_page = {100, 100};
  return p;
}

struct EmbedServer {
  explicit EmbedServer(std::function<void(const httplib::Request&, httplib::Response&)> h) {
    server.Post("/embed", std::move(h));
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~EmbedServer() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
  httplib::Server server;
  int port = 0;
  std::thread thread;
};

}  // namespace

TEST(Histogram, DimensionAndNorm) {
  HistogramEmbedding h;
  const auto v = h.embed(testing_support::noise_image(50, 70, 3));
  ASSERT_EQ(v.size(), 88u);
  double n = 0;
  for (double x : v) n += x * x;
  EXPECT_NEAR(n, 1.0, 1e-9);
}

TEST(Histogram, BlackVersusWhiteIsOrthogonal) {
  HistogramEmbedding h;
  EXPECT_NEAR(visual_similarity(Image(32, 32, 0, 0, 0), Image(32, 32, 255, 255, 255), h), 0.0, 1e-12);
}

TEST(Histogram, IdenticalImagesScoreOne) {
  HistogramEmbedding h;
  const Image a = testing_support::noise_image(80, 60, 9);
  EXPECT_NEAR(visual_similarity(a, a, h), 1.0, 1e-12);
}

TEST(Histogram, SymmetricAndBounded) {
  HistogramEmbedding h;
  for (std::uint32_t s = 0; s < 20; ++s) {
    const Image a = testing_support::noise_image(40 + s, 30, s);
    const Image b = Image(30, 30 + s, static_cast<std::uint8_t>(s * 12), 40, 90);
    const double ab = visual_similarity(a, b, h);
    EXPECT_NEAR(ab, visual_similarity(b, a, h), 1e-12);
    EXPECT_GE(ab, -1e-12);
    EXPECT_LE(ab, 1.0 + 1e-12);
  }
}

TEST(Cosine, Examples) {
  EXPECT_NEAR(cosine_similarity({1, 0}, {0, 1}), 0.0, 1e-12);
  EXPECT_NEAR(cosine_similarity({1, 2}, {2, 4}), 1.0, 1e-12);
  EXPECT_NEAR(cosine_similarity({1, 0}, {1, 1}), 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(EmbeddingService, UsesRemoteVectors) {
  std::atomic<int> hits{0};
  EmbedServer server([&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    const Image img = decode_image(std::span(reinterpret_cast<const std::uint8_t*>(req.body.data()), req.body.size()));
    const double r = img.at(0, 0)[0];
    res.set_content(json{{"vector", {r, 255.0 - r}}}.dump(), "application/json");
  });
  MetricConfig cfg;
  cfg.embedding_backend = "clip-service";
  cfg.embedding_url = server.url();
  cfg.validate();
  auto backend = make_embedding_backend(cfg);
  EXPECT_EQ(backend->name(), "clip-service");
  EXPECT_NEAR(visual_similarity(Image(4, 4, 255, 0, 0), Image(4, 4, 0, 0, 0), *backend), 0.0, 1e-12);
  EXPECT_NEAR(visual_similarity(Image(4, 4, 9, 0, 0), Image(4, 4, 9, 0, 0), *backend), 1.0, 1e-12);
  EXPECT_EQ(hits.load(), 4);
}

TEST(EmbeddingService, UnreachableMakesVisualMetricUnavailable) {
  EmbeddingService svc("http://127.0.0.1:1", std::chrono::seconds(2));
  const MetricReport r = evaluate(full_pair(), {}, {}, svc);
  EXPECT_FALSE(r.visual_similarity);
  EXPECT_EQ(r.unavailable.at("visual_similarity"), "EmbeddingBackendUnavailable");
  // The other metrics are unaffected.
  EXPECT_TRUE(r.code_similarity);
  EXPECT_TRUE(r.block_match);
}

TEST(EmbeddingService, BadResponsesAreUnavailable) {
  EmbedServer server([](const httplib::Request&, httplib::Response& res) { res.set_content("{\"nope\":1}", "application/json"); });
  EmbeddingService svc(server.url());
  try {
    svc.embed(Image(4, 4));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmbeddingBackendUnavailable);
  }
}

TEST(MetricConfig, Validation) {
  MetricConfig c;
  EXPECT_NO_THROW(c.validate());
  c.match_threshold = 1.5;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.embedding_backend = "bogus";
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.embedding_backend = "clip-service";
  EXPECT_THROW(c.validate(), Error);
}

TEST(Evaluate, IdenticalPairScoresOneEverywhere) {
  HistogramEmbedding h;
  const MetricReport r = evaluate(full_pair(), TokenUsage{1, 2, 3}, {}, h);
  for (const char* name : kMetricNames) {
    ASSERT_TRUE(metric_value(r, name)) << name;
    EXPECT_NEAR(*metric_value(r, name), 1.0, 1e-12) << name;
  }
  EXPECT_TRUE(r.unavailable.empty());
  EXPECT_EQ(r.token_usage.total(), 6);
}

TEST(Evaluate, NoGroundTruthLeavesOnlyVisual) {
  HistogramEmbedding h;
  EvaluationPair p = full_pair();
  p.reference_code.reset();
  p.reference_blocks.reset();
  const MetricReport r = evaluate(p, {}, {}, h);
  EXPECT_TRUE(r.visual_similarity);
  for (const char* name : kMetricNames) {
    if (std::string_view(name) == "visual_similarity") continue;
    EXPECT_FALSE(metric_value(r, name)) << name;
    EXPECT_EQ(r.unavailable.at(name), "NoGroundTruth");
  }
}

TEST(Evaluate, MissingReferenceBlocksMarksReferenceRenderFailed) {
  HistogramEmbedding h;
  EvaluationPair p = full_pair();
  p.reference_blocks.reset();
  const MetricReport r = evaluate(p, {}, {}, h);
  EXPECT_TRUE(r.code_similarity);
  EXPECT_TRUE(r.visual_similarity);
  for (const char* name : {"block_match", "text_similarity", "color_similarity", "position_similarity"}) {
    EXPECT_EQ(r.unavailable.at(name), "ReferenceRenderFailed");
  }
}

TEST(Evaluate, NoMatchesKeepsBlockMatchAtZero) {
  HistogramEmbedding h;
  EvaluationPair p = full_pair();
  p.generated_blocks = {blk("zzzz", 0, 0)};
  const MetricReport r = evaluate(p, {}, {}, h);
  ASSERT_TRUE(r.block_match);
  EXPECT_DOUBLE_EQ(*r.block_match, 0.0);
  for (const char* name : {"text_similarity", "color_similarity", "position_similarity"}) {
    EXPECT_FALSE(metric_value(r, name));
    EXPECT_EQ(r.unavailable.at(name), "NoMatches");
  }
}

TEST(Evaluate, JsonRoundTrip) {
  HistogramEmbedding h;
  EvaluationPair p = full_pair();
  p.generated_blocks = {blk("Title", 30, 40, {200, 10, 10}), blk("extra", 0, 0)};
  const MetricReport r = evaluate(p, TokenUsage{4, 5, 6}, {}, h);
  const json j = r;
  const MetricReport back = j.get<MetricReport>();
  for (const char* name : kMetricNames) EXPECT_EQ(metric_value(back, name), metric_value(r, name)) << name;
  EXPECT_EQ(back.token_usage, r.token_usage);
  EXPECT_EQ(back.unavailable, r.unavailable);
  EXPECT_TRUE(j.contains("matching"));
  EXPECT_EQ(json(back), j);
}
