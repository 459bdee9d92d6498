#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uibench/block.hpp"
#include "uibench/image.hpp"
#include "uibench/llm.hpp"

namespace uibench {

struct BlockPair {
  std::size_t ref = 0;
  std::size_t gen = 0;
  double dice = 0.0;
};

struct BlockMatching {
  std::vector<BlockPair> pairs;  // ordered by ref index
  std::vector<std::size_t> unmatched_ref;
  std::vector<std::size_t> unmatched_gen;
  double threshold = 0.5;
  /// Total dice of the optimal assignment before thresholding.
  double objective = 0.0;
};

void to_json(nlohmann::json& j, const BlockMatching& m);
void from_json(const nlohmann::json& j, BlockMatching& m);

inline constexpr double kDefaultMatchThreshold = 0.5;

/// Optimal one-to-one assignment maximizing total text dice; pairs under the
/// threshold are dropped afterwards.
BlockMatching match_blocks(const std::vector<Block>& ref, const std::vector<Block>& gen,
                           double threshold = kDefaultMatchThreshold);

/// Matched characters over all characters, on both sides. 1 when both empty.
double block_match_score(const BlockMatching& m, const std::vector<Block>& ref, const std::vector<Block>& gen);

/// The scores below are nullopt when there are no matched pairs.
std::optional<double> text_similarity_score(const BlockMatching& m);
std::optional<double> color_similarity_score(const BlockMatching& m, const std::vector<Block>& ref,
                                             const std::vector<Block>& gen);

struct PageSize {
  double width = 0.0;
  double height = 0.0;
};

std::optional<double> position_similarity_score(const BlockMatching& m, const std::vector<Block>& ref,
                                                const std::vector<Block>& gen, PageSize ref_page,
                                                PageSize gen_page);

/// Image embedding for visual similarity.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::string name() const = 0;
  /// Throws Error(EmbeddingBackendUnavailable).
  virtual std::vector<double> embed(const Image& image) = 0;
};

/// 64x64 resample; 8-bin histogram per channel (fractions of pixels) followed
/// by an 8x8 grayscale thumbnail in [0,1]; L2-normalized. 88 dimensions.
class HistogramEmbedding final : public EmbeddingBackend {
 public:
  std::string name() const override { return "builtin-hist"; }
  std::vector<double> embed(const Image& image) override;
};

/// POST {url}/embed with a PNG body; expects {"vector": [...]}.
class EmbeddingService final : public EmbeddingBackend {
 public:
  explicit EmbeddingService(std::string url, std::chrono::seconds timeout = std::chrono::seconds(60))
      : url_(std::move(url)), timeout_(timeout) {}
  std::string name() const override { return "clip-service"; }
  std::vector<double> embed(const Image& image) override;

 private:
  std::string url_;
  std::chrono::seconds timeout_;
};

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

double visual_similarity(const Image& a, const Image& b, EmbeddingBackend& backend);

struct MetricConfig {
  double match_threshold = kDefaultMatchThreshold;
  std::string embedding_backend = "builtin-hist";  // or "clip-service"
  std::string embedding_url;                       // clip-service only

  void validate() const;
};

void to_json(nlohmann::json& j, const MetricConfig& c);
void from_json(const nlohmann::json& j, MetricConfig& c);

std::unique_ptr<EmbeddingBackend> make_embedding_backend(const MetricConfig& config);

struct EvaluationPair {
  Image reference_screenshot;
  std::optional<std::string> reference_code;
  std::optional<std::vector<Block>> reference_blocks;
  PageSize reference_page;
  std::string generated_code;
  Image generated_screenshot;
  std::vector<Block> generated_blocks;
  PageSize generated_page;
};

struct MetricReport {
  std::optional<double> code_similarity;
  std::optional<double> visual_similarity;
  std::optional<double> block_match;
  std::optional<double> text_similarity;
  std::optional<double> color_similarity;
  std::optional<double> position_similarity;
  TokenUsage token_usage;
  std::string embedding_backend;
  std::map<std::string, std::string> unavailable;  // metric -> reason
  std::optional<BlockMatching> matching;
};

inline constexpr const char* kMetricNames[] = {"code_similarity",  "visual_similarity", "block_match",
                                               "text_similarity",  "color_similarity",  "position_similarity"};

std::optional<double> metric_value(const MetricReport& r, std::string_view name);

void to_json(nlohmann::json& j, const MetricReport& r);
void from_json(const nlohmann::json& j, MetricReport& r);

/// Computes every applicable metric. Never throws; failures become entries in
/// `unavailable`.
MetricReport evaluate(const EvaluationPair& pair, const TokenUsage& usage, const MetricConfig& config,
                      EmbeddingBackend& backend);

}  // namespace uibench
