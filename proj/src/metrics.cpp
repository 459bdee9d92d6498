#include "uibench/metrics.hpp"

#include <httplib.h>

#include <cmath>
#include <numbers>
#include <numeric>

#include "uibench/assignment.hpp"
#include "uibench/ciede2000.hpp"
#include "uibench/error.hpp"
#include "uibench/text_similarity.hpp"
#include "uibench/url.hpp"

using nlohmann::json;

namespace uibench {

void to_json(json& j, const BlockMatching& m) {
  json pairs = json::array();
  for (const auto& p : m.pairs) pairs.push_back({{"ref", p.ref}, {"gen", p.gen}, {"dice", p.dice}});
  j = {{"pairs", pairs},
       {"unmatched_ref", m.unmatched_ref},
       {"unmatched_gen", m.unmatched_gen},
       {"threshold", m.threshold},
       {"objective", m.objective}};
}

void from_json(const json& j, BlockMatching& m) {
  m.pairs.clear();
  for (const auto& p : j.at("pairs")) {
    m.pairs.push_back({p.at("ref").get<std::size_t>(), p.at("gen").get<std::size_t>(), p.at("dice").get<double>()});
  }
  m.unmatched_ref = j.at("unmatched_ref").get<std::vector<std::size_t>>();
  m.unmatched_gen = j.at("unmatched_gen").get<std::vector<std::size_t>>();
  m.threshold = j.value("threshold", kDefaultMatchThreshold);
  m.objective = j.value("objective", 0.0);
}

BlockMatching match_blocks(const std::vector<Block>& ref, const std::vector<Block>& gen, double threshold) {
  BlockMatching m;
  m.threshold = threshold;
  std::vector<double> w(ref.size() * gen.size());
  for (std::size_t i = 0; i < ref.size(); ++i)
    for (std::size_t j = 0; j < gen.size(); ++j) w[i * gen.size() + j] = text::dice(ref[i].text, gen[j].text);

  const Assignment a =
      max_weight_assignment(ref.size(), gen.size(), [&](std::size_t i, std::size_t j) { return w[i * gen.size() + j]; });
  m.objective = a.total;
  std::vector<bool> gen_used(gen.size(), false);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const auto& col = a.row_to_col[i];
    if (col && w[i * gen.size() + *col] >= threshold) {
      m.pairs.push_back({i, *col, w[i * gen.size() + *col]});
      gen_used[*col] = true;
    } else {
      m.unmatched_ref.push_back(i);
    }
  }
  for (std::size_t j = 0; j < gen.size(); ++j)
    if (!gen_used[j]) m.unmatched_gen.push_back(j);
  return m;
}

double block_match_score(const BlockMatching& m, const std::vector<Block>& ref, const std::vector<Block>& gen) {
  auto size = [](const Block& b) { return static_cast<double>(text::code_point_length(b.text)); };
  double total = 0.0;
  for (const auto& b : ref) total += size(b);
  for (const auto& b : gen) total += size(b);
  if (total == 0.0) return 1.0;
  double matched = 0.0;
  for (const auto& p : m.pairs) matched += size(ref[p.ref]) + size(gen[p.gen]);
  return matched / total;
}

namespace {

template <class F>
std::optional<double> mean_over_pairs(const BlockMatching& m, F&& per_pair) {
  if (m.pairs.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& p : m.pairs) sum += per_pair(p);
  return sum / static_cast<double>(m.pairs.size());
}

}  // namespace

std::optional<double> text_similarity_score(const BlockMatching& m) {
  return mean_over_pairs(m, [](const BlockPair& p) { return p.dice; });
}

std::optional<double> color_similarity_score(const BlockMatching& m, const std::vector<Block>& ref,
                                             const std::vector<Block>& gen) {
  return mean_over_pairs(m, [&](const BlockPair& p) {
    return std::max(0.0, 1.0 - color::ciede2000(ref[p.ref].color, gen[p.gen].color) / 100.0);
  });
}

std::optional<double> position_similarity_score(const BlockMatching& m, const std::vector<Block>& ref,
                                                const std::vector<Block>& gen, PageSize ref_page,
                                                PageSize gen_page) {
  auto norm = [](double v, double extent) { return extent > 0.0 ? std::clamp(v / extent, 0.0, 1.0) : 0.0; };
  return mean_over_pairs(m, [&](const BlockPair& p) {
    const Block& r = ref[p.ref];
    const Block& g = gen[p.gen];
    const double dx = norm(r.center_x(), ref_page.width) - norm(g.center_x(), gen_page.width);
    const double dy = norm(r.center_y(), ref_page.height) - norm(g.center_y(), gen_page.height);
    return std::max(0.0, 1.0 - std::hypot(dx, dy) / std::numbers::sqrt2);
  });
}

std::vector<double> HistogramEmbedding::embed(const Image& image) {
  constexpr int kSide = 64;
  constexpr int kBins = 8;
  constexpr int kThumb = 8;
  const Image small = resize(image, kSide, kSide);
  std::vector<double> v(3 * kBins + kThumb * kThumb, 0.0);
  const double per_pixel = 1.0 / (kSide * kSide);
  for (int y = 0; y < kSide; ++y) {
    for (int x = 0; x < kSide; ++x) {
      const auto* px = small.at(x, y);
      for (int c = 0; c < 3; ++c) v[c * kBins + px[c] / (256 / kBins)] += per_pixel;
    }
  }
  const Image thumb = resize(small, kThumb, kThumb);
  for (int y = 0; y < kThumb; ++y) {
    for (int x = 0; x < kThumb; ++x) {
      const auto* px = thumb.at(x, y);
      v[3 * kBins + y * kThumb + x] = (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) / 255.0;
    }
  }
  const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  if (norm > 0.0)
    for (double& x : v) x /= norm;
  return v;
}

std::vector<double> EmbeddingService::embed(const Image& image) {
  Url url;
  try {
    url = parse_url(url_);
  } catch (const Error& e) {
    throw Error(ErrorCode::EmbeddingBackendUnavailable, e.what());
  }
  httplib::Client client(url.origin());
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(timeout_);
  const Bytes png = encode_png(image);
  auto res = client.Post(url.path_prefix + "/embed", reinterpret_cast<const char*>(png.data()), png.size(), "image/png");
  if (!res) {
    throw Error(ErrorCode::EmbeddingBackendUnavailable,
                "embedding service " + url_ + " unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::EmbeddingBackendUnavailable, "embedding service returned HTTP " + std::to_string(res->status));
  }
  const json body = json::parse(res->body, nullptr, false);
  if (body.is_discarded() || !body.contains("vector") || !body["vector"].is_array() || body["vector"].empty()) {
    throw Error(ErrorCode::EmbeddingBackendUnavailable, "embedding service returned no vector");
  }
  return body["vector"].get<std::vector<double>>();
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::Internal, "embedding dimensions differ");
  const double dot = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  const double na = std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0));
  const double nb = std::sqrt(std::inner_product(b.begin(), b.end(), b.begin(), 0.0));
  if (na == 0.0 || nb == 0.0) return a == b ? 1.0 : 0.0;
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

double visual_similarity(const Image& a, const Image& b, EmbeddingBackend& backend) {
  return cosine_similarity(backend.embed(a), backend.embed(b));
}

void MetricConfig::validate() const {
  if (!(match_threshold >= 0.0 && match_threshold <= 1.0)) {
    throw Error(ErrorCode::ConfigError, "match_threshold must be in [0, 1]");
  }
  if (embedding_backend != "builtin-hist" && embedding_backend != "clip-service") {
    throw Error(ErrorCode::ConfigError, "unknown embedding backend: " + embedding_backend);
  }
  if (embedding_backend == "clip-service" && embedding_url.empty()) {
    throw Error(ErrorCode::ConfigError, "clip-service requires embedding_url");
  }
}

void to_json(json& j, const MetricConfig& c) {
  j = {{"match_threshold", c.match_threshold},
       {"embedding_backend", c.embedding_backend},
       {"embedding_url", c.embedding_url}};
}

void from_json(const json& j, MetricConfig& c) {
  MetricConfig d;
  c.match_threshold = j.value("match_threshold", d.match_threshold);
  c.embedding_backend = j.value("embedding_backend", d.embedding_backend);
  c.embedding_url = j.value("embedding_url", d.embedding_url);
}

std::unique_ptr<EmbeddingBackend> make_embedding_backend(const MetricConfig& config) {
  config.validate();
  if (config.embedding_backend == "clip-service") return std::make_unique<EmbeddingService>(config.embedding_url);
  return std::make_unique<HistogramEmbedding>();
}

std::optional<double> metric_value(const MetricReport& r, std::string_view name) {
  if (name == "code_similarity") return r.code_similarity;
  if (name == "visual_similarity") return r.visual_similarity;
  if (name == "block_match") return r.block_match;
  if (name == "text_similarity") return r.text_similarity;
  if (name == "color_similarity") return r.color_similarity;
  if (name == "position_similarity") return r.position_similarity;
  throw Error(ErrorCode::ConfigError, "unknown metric: " + std::string(name));
}

namespace {

std::optional<double>* metric_slot(MetricReport& r, std::string_view name) {
  if (name == "code_similarity") return &r.code_similarity;
  if (name == "visual_similarity") return &r.visual_similarity;
  if (name == "block_match") return &r.block_match;
  if (name == "text_similarity") return &r.text_similarity;
  if (name == "color_similarity") return &r.color_similarity;
  if (name == "position_similarity") return &r.position_similarity;
  return nullptr;
}

}  // namespace

void to_json(json& j, const MetricReport& r) {
  j = json::object();
  for (const char* name : kMetricNames) {
    const auto v = metric_value(r, name);
    j[name] = v ? json(*v) : json(nullptr);
  }
  j["token_usage"] = r.token_usage;
  j["embedding_backend"] = r.embedding_backend;
  json unavailable = json::array();
  for (const auto& [metric, reason] : r.unavailable) unavailable.push_back({{"metric", metric}, {"reason", reason}});
  j["unavailable"] = unavailable;
  j["matching"] = r.matching ? json(*r.matching) : json(nullptr);
  j["metadata"] = {{"block_size", "characters"},
                   {"match_threshold", r.matching ? r.matching->threshold : kDefaultMatchThreshold},
                   {"color_similarity", "mean of max(0, 1 - dE00/100) over matched pairs"},
                   {"position_similarity", "mean of 1 - |c_ref - c_gen| / sqrt(2), centers normalized per page"},
                   {"text_similarity", "mean bigram dice over matched pairs"},
                   {"code_similarity", "1 - levenshtein / (l1 + l2) over code points"}};
}

void from_json(const json& j, MetricReport& r) {
  for (const char* name : kMetricNames) {
    auto* slot = metric_slot(r, name);
    if (j.contains(name) && j[name].is_number()) *slot = j[name].get<double>();
    else *slot = std::nullopt;
  }
  if (j.contains("token_usage")) r.token_usage = j["token_usage"].get<TokenUsage>();
  r.embedding_backend = j.value("embedding_backend", "");
  r.unavailable.clear();
  for (const auto& u : j.value("unavailable", json::array())) {
    r.unavailable[u.at("metric").get<std::string>()] = u.at("reason").get<std::string>();
  }
  if (j.contains("matching") && j["matching"].is_object()) r.matching = j["matching"].get<BlockMatching>();
  else r.matching.reset();
}

MetricReport evaluate(const EvaluationPair& pair, const TokenUsage& usage, const MetricConfig& config,
                      EmbeddingBackend& backend) {
  MetricReport r;
  r.token_usage = usage;
  r.embedding_backend = backend.name();
  try {
    r.visual_similarity = visual_similarity(pair.generated_screenshot, pair.reference_screenshot, backend);
  } catch (const Error& e) {
    r.unavailable["visual_similarity"] =
        e.code() == ErrorCode::EmbeddingBackendUnavailable ? "EmbeddingBackendUnavailable" : std::string(e.what());
  } catch (const std::exception& e) {
    r.unavailable["visual_similarity"] = e.what();
  }

  if (!pair.reference_code) {
    for (const char* name : kMetricNames) {
      if (std::string_view(name) != "visual_similarity") r.unavailable[name] = "NoGroundTruth";
    }
    return r;
  }

  try {
    r.code_similarity = text::normalized_code_similarity(pair.generated_code, *pair.reference_code);
  } catch (const std::exception& e) {
    r.unavailable["code_similarity"] = e.what();
  }

  if (!pair.reference_blocks) {
    for (const char* name : {"block_match", "text_similarity", "color_similarity", "position_similarity"}) {
      r.unavailable[name] = "ReferenceRenderFailed";
    }
    return r;
  }
  try {
    const auto& ref = *pair.reference_blocks;
    const auto& gen = pair.generated_blocks;
    BlockMatching m = match_blocks(ref, gen, config.match_threshold);
    r.block_match = block_match_score(m, ref, gen);
    r.text_similarity = text_similarity_score(m);
    r.color_similarity = color_similarity_score(m, ref, gen);
    r.position_similarity = position_similarity_score(m, ref, gen, pair.reference_page, pair.generated_page);
    for (const char* name : {"text_similarity", "color_similarity", "position_similarity"}) {
      if (!metric_value(r, name)) r.unavailable[name] = "NoMatches";
    }
    r.matching = std::move(m);
  } catch (const std::exception& e) {
    for (const char* name : {"block_match", "text_similarity", "color_similarity", "position_similarity"}) {
      *metric_slot(r, name) = std::nullopt;
      r.unavailable[name] = e.what();
    }
  }
  return r;
}

}  // namespace uibench
