#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "uibench/dataset.hpp"
#include "uibench/image.hpp"
#include "uibench/llm.hpp"
#include "uibench/metrics.hpp"
#include "uibench/render.hpp"

namespace uibench {

inline constexpr std::string_view kDirectPrompt =
    "Here is a prototype image of a webpage. Return a single piece of HTML and Tailwind CSS code to reproduce "
    "exactly the website. Use \"placeholder.png\" to replace the images. Pay attention to things like size, text, "
    "position, and color of all the elements, as well as the overall layout. Respond with the content of the "
    "HTML+Tailwind CSS code.";

inline constexpr std::string_view kPromptVersion = "v1";

/// Pulls the HTML out of a completion: the first ```html fence, else the first
/// fence of any tag, else from the first <!DOCTYPE or <html to the end, else
/// the whole text. Trimmed. Throws Error(EmptyGeneration) when nothing is left.
std::string extract_html(std::string_view completion);

struct Region {
  Rect bbox;
  int depth = 0;
  std::vector<Region> children;

  bool is_leaf() const noexcept { return children.empty(); }
  /// Leaves in depth-first, left-to-right order.
  std::vector<const Region*> leaves() const;
};

void to_json(nlohmann::json& j, const Region& r);

struct SegmentParams {
  int min_band_px = 10;
  double uniformity_tol = 4.0;
  int max_depth = 2;
  int max_regions = 16;

  void validate() const;
};

struct Segmentation {
  Region root;
  /// Set when the leaf cap stopped further splitting.
  bool cap_reached = false;
};

enum class Axis { Rows, Columns };

/// Split coordinates (absolute) inside `rect`: one per separator band, at the
/// band's center. Bands touching either edge of `rect` are not separators.
std::vector<int> find_separators(const Image& image, const Rect& rect, Axis axis, const SegmentParams& params);

/// Breadth-first separator splitting: rows at even depth, columns at odd.
Segmentation segment(const Image& image, const SegmentParams& params);

struct MethodSpec {
  std::string name;
  nlohmann::json params = nlohmann::json::object();
  std::string description;
};

void to_json(nlohmann::json& j, const MethodSpec& m);
void from_json(const nlohmann::json& j, MethodSpec& m);

/// Parses "key=value"; numeric and boolean values become JSON numbers/bools.
std::pair<std::string, nlohmann::json> parse_method_param(std::string_view text);

struct MethodContext {
  Gateway& gateway;
  CallLog& call_log;
  RetryPolicy retry;
  Renderer* renderer = nullptr;
  RenderConfig render_config;
  EmbeddingBackend* embedding = nullptr;
  std::filesystem::path artifact_dir;  // empty: no intermediate files
};

struct GenerationArtifact {
  std::string generated_code;
  std::optional<Region> region_tree;
  bool region_cap_reached = false;
  std::filesystem::path call_log_ref;
  TokenUsage usage_total;
  int llm_calls = 0;
  int candidates_considered = 0;
  std::vector<double> candidate_scores;
  int renders = 0;
  /// The render of the selected candidate, when the method already rendered it.
  std::optional<RenderResult> selected_render;
};

class Method {
 public:
  virtual ~Method() = default;
  virtual std::string name() const = 0;
  virtual std::string description() const = 0;
  /// Defaults merged with `params`. Throws Error(ConfigError) on unknown keys
  /// or bad values.
  virtual nlohmann::json effective_params(const nlohmann::json& params) const = 0;
  virtual GenerationArtifact run(MethodContext& ctx, const ModelSpec& model, const InputInstance& inst,
                                 const nlohmann::json& params) = 0;
};

class DirectMethod final : public Method {
 public:
  std::string name() const override { return "direct"; }
  std::string description() const override { return "single call with the unified prompt and the screenshot"; }
  nlohmann::json effective_params(const nlohmann::json& params) const override;
  GenerationArtifact run(MethodContext& ctx, const ModelSpec& model, const InputInstance& inst,
                         const nlohmann::json& params) override;
};

struct DecomposeParams {
  SegmentParams segment;
  int candidates = 1;
  int parallel_regions = 4;

  static DecomposeParams from(const nlohmann::json& params);
  nlohmann::json to_json() const;
};

class DecomposeMethod final : public Method {
 public:
  std::string name() const override { return "decompose"; }
  std::string description() const override {
    return "segment into regions, generate each region, assemble k candidates and keep the best render";
  }
  nlohmann::json effective_params(const nlohmann::json& params) const override;
  GenerationArtifact run(MethodContext& ctx, const ModelSpec& model, const InputInstance& inst,
                         const nlohmann::json& params) override;

  static std::string region_prompt(const Rect& bbox, int page_width, int page_height);
  static std::string assembly_prompt(const std::vector<std::pair<Rect, std::string>>& fragments, int page_width,
                                     int page_height);
};

class MethodRegistry {
 public:
  /// Throws Error(ConfigError) on a duplicate name.
  void add(std::shared_ptr<Method> method);
  bool has(std::string_view name) const;
  /// Throws Error(UnknownMethod).
  Method& get(std::string_view name) const;
  std::vector<std::string> names() const;

  /// "direct" and "decompose".
  static MethodRegistry with_builtin_methods();

 private:
  std::map<std::string, std::shared_ptr<Method>, std::less<>> methods_;
};

/// Resolves and runs a method. Gateway errors propagate unchanged; other stage
/// failures surface as Error(MethodError) naming the stage, except
/// EmptyGeneration which keeps its code.
GenerationArtifact run_method(const MethodRegistry& registry, const MethodSpec& spec, MethodContext& ctx,
                              const ModelSpec& model, const InputInstance& inst);

}  // namespace uibench
