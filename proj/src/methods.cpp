#include "uibench/methods.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <deque>
#include <thread>

#include "uibench/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace uibench {

// ---------------------------------------------------------------------------
// HTML extraction

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return s.substr(first, last - first + 1);
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

struct Fence {
  std::string tag;
  std::string_view body;
};

// Fenced blocks in order. An unterminated final fence runs to the end.
std::vector<Fence> fences(std::string_view text) {
  std::vector<Fence> out;
  std::size_t pos = 0;
  while ((pos = text.find("```", pos)) != std::string_view::npos) {
    const auto tag_end = text.find('\n', pos + 3);
    if (tag_end == std::string_view::npos) break;
    const std::string tag = lower(trim(text.substr(pos + 3, tag_end - pos - 3)));
    const auto close = text.find("```", tag_end + 1);
    const auto body_end = close == std::string_view::npos ? text.size() : close;
    out.push_back({tag, text.substr(tag_end + 1, body_end - tag_end - 1)});
    if (close == std::string_view::npos) break;
    pos = close + 3;
  }
  return out;
}

std::size_t find_ci(std::string_view hay, std::string_view needle) {
  const std::string h = lower(hay);
  return h.find(lower(needle));
}

}  // namespace

std::string extract_html(std::string_view completion) {
  std::string_view result = completion;
  const auto blocks = fences(completion);
  if (auto it = std::find_if(blocks.begin(), blocks.end(), [](const Fence& f) { return f.tag == "html"; });
      it != blocks.end()) {
    result = it->body;
  } else if (!blocks.empty()) {
    result = blocks.front().body;
  } else {
    const auto doctype = find_ci(completion, "<!doctype");
    const auto html = find_ci(completion, "<html");
    const auto start = std::min(doctype, html);
    if (start != std::string::npos) result = completion.substr(start);
  }
  result = trim(result);
  if (result.empty()) throw Error(ErrorCode::EmptyGeneration, "completion contains no code");
  return std::string(result);
}

// ---------------------------------------------------------------------------
// Segmentation

std::vector<const Region*> Region::leaves() const {
  std::vector<const Region*> out;
  std::vector<const Region*> stack{this};
  while (!stack.empty()) {
    const Region* r = stack.back();
    stack.pop_back();
    if (r->is_leaf()) {
      out.push_back(r);
      continue;
    }
    for (auto it = r->children.rbegin(); it != r->children.rend(); ++it) stack.push_back(&*it);
  }
  return out;
}

void to_json(json& j, const Region& r) {
  j = {{"bbox", {r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h}}, {"depth", r.depth}, {"children", r.children}};
}

void SegmentParams::validate() const {
  if (min_band_px < 1) throw Error(ErrorCode::ConfigError, "min_band_px must be >= 1");
  if (!(uniformity_tol >= 0.0)) throw Error(ErrorCode::ConfigError, "uniformity_tol must be >= 0");
  if (max_depth < 0) throw Error(ErrorCode::ConfigError, "max_depth must be >= 0");
  if (max_regions < 1) throw Error(ErrorCode::ConfigError, "max_regions must be >= 1");
}

namespace {

// Population variance test done in integers: n*sum(x^2) - sum(x)^2 <= tol^2 * n^2.
bool line_is_uniform(const Image& image, const Rect& rect, Axis axis, int line, double tol) {
  const int n = axis == Axis::Rows ? rect.w : rect.h;
  if (n <= 1) return true;
  std::int64_t sum[3] = {0, 0, 0};
  std::int64_t sq[3] = {0, 0, 0};
  for (int k = 0; k < n; ++k) {
    const auto* px = axis == Axis::Rows ? image.at(rect.x + k, line) : image.at(line, rect.y + k);
    for (int c = 0; c < 3; ++c) {
      sum[c] += px[c];
      sq[c] += static_cast<std::int64_t>(px[c]) * px[c];
    }
  }
  const double limit = tol * tol * static_cast<double>(n) * static_cast<double>(n);
  for (int c = 0; c < 3; ++c) {
    const std::int64_t spread = static_cast<std::int64_t>(n) * sq[c] - sum[c] * sum[c];
    if (static_cast<double>(spread) > limit) return false;
  }
  return true;
}

}  // namespace

std::vector<int> find_separators(const Image& image, const Rect& rect, Axis axis, const SegmentParams& params) {
  const int begin = axis == Axis::Rows ? rect.y : rect.x;
  const int end = begin + (axis == Axis::Rows ? rect.h : rect.w);
  std::vector<int> splits;
  int run_start = -1;
  for (int line = begin; line <= end; ++line) {
    const bool uniform = line < end && line_is_uniform(image, rect, axis, line, params.uniformity_tol);
    if (uniform && run_start < 0) run_start = line;
    if (!uniform && run_start >= 0) {
      const bool touches_edge = run_start == begin || line == end;
      if (!touches_edge && line - run_start >= params.min_band_px) splits.push_back((run_start + line) / 2);
      run_start = -1;
    }
  }
  return splits;
}

Segmentation segment(const Image& image, const SegmentParams& params) {
  params.validate();
  Segmentation seg;
  seg.root.bbox = {0, 0, image.width, image.height};
  int leaves = 1;
  std::deque<Region*> queue{&seg.root};
  while (!queue.empty()) {
    Region* node = queue.front();
    queue.pop_front();
    if (node->depth >= params.max_depth) continue;
    if (leaves >= params.max_regions) {
      seg.cap_reached = true;
      break;
    }
    const Axis axis = node->depth % 2 == 0 ? Axis::Rows : Axis::Columns;
    const auto splits = find_separators(image, node->bbox, axis, params);
    if (splits.empty()) continue;
    const int added = static_cast<int>(splits.size());
    if (leaves + added > params.max_regions) {
      seg.cap_reached = true;
      break;
    }
    leaves += added;
    const Rect& b = node->bbox;
    int prev = axis == Axis::Rows ? b.y : b.x;
    const int stop = axis == Axis::Rows ? b.y + b.h : b.x + b.w;
    for (std::size_t i = 0; i <= splits.size(); ++i) {
      const int next = i < splits.size() ? splits[i] : stop;
      Region child;
      child.depth = node->depth + 1;
      child.bbox = axis == Axis::Rows ? Rect{b.x, prev, b.w, next - prev} : Rect{prev, b.y, next - prev, b.h};
      node->children.push_back(child);
      prev = next;
    }
    for (auto& child : node->children) queue.push_back(&child);
  }
  return seg;
}

// ---------------------------------------------------------------------------
// Method specs and params

void to_json(json& j, const MethodSpec& m) {
  j = {{"name", m.name}, {"params", m.params}};
  if (!m.description.empty()) j["description"] = m.description;
}

void from_json(const json& j, MethodSpec& m) {
  if (j.is_string()) {
    m.name = j.get<std::string>();
    m.params = json::object();
    return;
  }
  m.name = j.at("name").get<std::string>();
  m.params = j.value("params", json::object());
  m.description = j.value("description", "");
  if (!m.params.is_object()) throw Error(ErrorCode::ConfigError, "method params must be an object");
}

std::pair<std::string, json> parse_method_param(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw Error(ErrorCode::ConfigError, "method param must be key=value: " + std::string(text));
  }
  const std::string key(text.substr(0, eq));
  const std::string value(text.substr(eq + 1));
  if (value == "true" || value == "false") return {key, value == "true"};
  {
    long long iv = 0;
    const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), iv);
    if (ec == std::errc() && p == value.data() + value.size()) return {key, iv};
  }
  {
    char* endp = nullptr;
    const double dv = std::strtod(value.c_str(), &endp);
    if (!value.empty() && endp == value.c_str() + value.size() && std::isfinite(dv)) return {key, dv};
  }
  return {key, value};
}

namespace {

void reject_unknown_keys(const json& params, std::initializer_list<std::string_view> known, std::string_view method) {
  if (!params.is_object()) throw Error(ErrorCode::ConfigError, "method params must be an object");
  for (const auto& [key, _] : params.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Error(ErrorCode::ConfigError, "method '" + std::string(method) + "' has no parameter '" + key + "'");
    }
  }
}

int int_param(const json& params, const char* key, int fallback) {
  if (!params.contains(key)) return fallback;
  const auto& v = params[key];
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>()) return static_cast<int>(v.get<double>());
  throw Error(ErrorCode::ConfigError, std::string("parameter ") + key + " must be an integer");
}

double number_param(const json& params, const char* key, double fallback) {
  if (!params.contains(key)) return fallback;
  if (!params[key].is_number()) throw Error(ErrorCode::ConfigError, std::string("parameter ") + key + " must be a number");
  return params[key].get<double>();
}

ChatMessage user_message(std::string text, Bytes png) {
  ChatMessage m;
  m.role = Role::User;
  m.parts.emplace_back(TextPart{std::move(text)});
  if (!png.empty()) m.parts.emplace_back(ImagePart{std::move(png), "image/png"});
  return m;
}

void finish(GenerationArtifact& a, const MethodContext& ctx) {
  a.usage_total = ctx.call_log.total_usage();
  a.llm_calls = static_cast<int>(ctx.call_log.size());
  if (ctx.call_log.path()) a.call_log_ref = *ctx.call_log.path();
}

[[noreturn]] void stage_failure(std::string_view stage, const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    throw Error(err->code(), std::string(stage) + ": " + err->what());
  }
  throw Error(ErrorCode::MethodError, std::string(stage) + ": " + e.what());
}

}  // namespace

// ---------------------------------------------------------------------------
// direct

json DirectMethod::effective_params(const json& params) const {
  reject_unknown_keys(params, {}, "direct");
  return {{"prompt_version", kPromptVersion}};
}

GenerationArtifact DirectMethod::run(MethodContext& ctx, const ModelSpec& model, const InputInstance& inst,
                                     const json& params) {
  effective_params(params);
  const ChatMessage message = user_message(std::string(kDirectPrompt), inst.screenshot_png());
  const CompletionResult res = ctx.gateway.complete(model, std::span(&message, 1), ctx.retry, ctx.call_log, "direct");
  GenerationArtifact a;
  a.generated_code = extract_html(res.text);
  a.candidates_considered = 1;
  finish(a, ctx);
  return a;
}

// ---------------------------------------------------------------------------
// decompose

DecomposeParams DecomposeParams::from(const json& params) {
  reject_unknown_keys(params,
                      {"min_band_px", "uniformity_tol", "max_depth", "max_regions", "candidates", "parallel_regions"},
                      "decompose");
  DecomposeParams p;
  p.segment.min_band_px = int_param(params, "min_band_px", p.segment.min_band_px);
  p.segment.uniformity_tol = number_param(params, "uniformity_tol", p.segment.uniformity_tol);
  p.segment.max_depth = int_param(params, "max_depth", p.segment.max_depth);
  p.segment.max_regions = int_param(params, "max_regions", p.segment.max_regions);
  p.candidates = int_param(params, "candidates", p.candidates);
  p.parallel_regions = int_param(params, "parallel_regions", p.parallel_regions);
  p.segment.validate();
  if (p.candidates < 1) throw Error(ErrorCode::ConfigError, "candidates must be >= 1");
  if (p.parallel_regions < 1) throw Error(ErrorCode::ConfigError, "parallel_regions must be >= 1");
  return p;
}

json DecomposeParams::to_json() const {
  return {{"min_band_px", segment.min_band_px},     {"uniformity_tol", segment.uniformity_tol},
          {"max_depth", segment.max_depth},         {"max_regions", segment.max_regions},
          {"candidates", candidates},               {"parallel_regions", parallel_regions},
          {"prompt_version", kPromptVersion}};
}

json DecomposeMethod::effective_params(const json& params) const { return DecomposeParams::from(params).to_json(); }

std::string DecomposeMethod::region_prompt(const Rect& bbox, int page_width, int page_height) {
  return "Here is a cropped region of a webpage screenshot. The region spans x=" + std::to_string(bbox.x) +
         ", y=" + std::to_string(bbox.y) + ", width=" + std::to_string(bbox.w) + ", height=" +
         std::to_string(bbox.h) + " within a " + std::to_string(page_width) + "x" + std::to_string(page_height) +
         " page. Return a self-contained HTML fragment using Tailwind CSS classes that reproduces exactly this "
         "region. Use \"placeholder.png\" to replace the images. Do not include <html>, <head> or <body> tags. "
         "Respond with the HTML fragment only.";
}

std::string DecomposeMethod::assembly_prompt(const std::vector<std::pair<Rect, std::string>>& fragments,
                                             int page_width, int page_height) {
  std::string out = "Here are HTML fragments generated for the regions of a " + std::to_string(page_width) + "x" +
                    std::to_string(page_height) +
                    " webpage screenshot, listed with their bounding boxes (x, y, width, height). Merge them into "
                    "one complete HTML page with Tailwind CSS that places every region at its position and keeps "
                    "its content. Use \"placeholder.png\" to replace the images. Respond with the content of the "
                    "HTML+Tailwind CSS code.\n";
  for (std::size_t i = 0; i < fragments.size(); ++i) {
    const Rect& b = fragments[i].first;
    out += "\nRegion " + std::to_string(i) + " (" + std::to_string(b.x) + ", " + std::to_string(b.y) + ", " +
           std::to_string(b.w) + ", " + std::to_string(b.h) + "):\n```html\n" + fragments[i].second + "\n```\n";
  }
  return out;
}

GenerationArtifact DecomposeMethod::run(MethodContext& ctx, const ModelSpec& model, const InputInstance& inst,
                                        const json& params) {
  const DecomposeParams p = DecomposeParams::from(params);
  GenerationArtifact a;

  Image image;
  Segmentation seg;
  try {
    image = inst.screenshot_image();
    seg = segment(image, p.segment);
  } catch (const std::exception& e) {
    stage_failure("segment", e);
  }
  a.region_cap_reached = seg.cap_reached;
  const auto leaves = seg.root.leaves();

  const fs::path fragment_dir = ctx.artifact_dir.empty() ? fs::path() : ctx.artifact_dir / "fragments";
  if (!fragment_dir.empty()) fs::create_directories(fragment_dir);

  // Region calls, bounded by parallel_regions; each worker pulls the next index.
  std::vector<std::string> fragments(leaves.size());
  std::vector<std::exception_ptr> errors(leaves.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < leaves.size(); i = next++) {
      try {
        const Rect& box = leaves[i]->bbox;
        const ChatMessage m =
            user_message(region_prompt(box, image.width, image.height), encode_png(crop(image, box)));
        const auto res =
            ctx.gateway.complete(model, std::span(&m, 1), ctx.retry, ctx.call_log, "region:" + std::to_string(i));
        fragments[i] = extract_html(res.text);
        if (!fragment_dir.empty()) {
          write_file_atomic(fragment_dir / ("region_" + std::to_string(i) + ".html"), fragments[i]);
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    const int n = std::min<int>(p.parallel_regions, static_cast<int>(leaves.size()));
    std::vector<std::jthread> pool;
    for (int t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      stage_failure("region " + std::to_string(i), e);
    }
  }

  std::vector<std::pair<Rect, std::string>> listed;
  for (std::size_t i = 0; i < leaves.size(); ++i) listed.emplace_back(leaves[i]->bbox, fragments[i]);
  const ChatMessage assembly = user_message(assembly_prompt(listed, image.width, image.height), {});

  std::vector<std::string> candidates;
  for (int c = 0; c < p.candidates; ++c) {
    try {
      const auto res = ctx.gateway.complete(model, std::span(&assembly, 1), ctx.retry, ctx.call_log,
                                            "assembly:" + std::to_string(c));
      candidates.push_back(extract_html(res.text));
    } catch (const std::exception& e) {
      stage_failure("assembly " + std::to_string(c), e);
    }
  }
  a.candidates_considered = static_cast<int>(candidates.size());

  std::size_t best = 0;
  if (candidates.size() > 1) {
    if (ctx.renderer == nullptr || ctx.embedding == nullptr) {
      throw Error(ErrorCode::MethodError, "candidate selection: no renderer or embedding backend configured");
    }
    std::vector<std::optional<RenderResult>> renders(candidates.size());
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      double score = -std::numeric_limits<double>::infinity();
      try {
        renders[c] = ctx.renderer->render(candidates[c], ctx.render_config);
        ++a.renders;
        score = visual_similarity(decode_image(renders[c]->screenshot), image, *ctx.embedding);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::BrowserUnavailable) throw;
      }
      a.candidate_scores.push_back(score);
      if (score > best_score) {
        best_score = score;
        best = c;
      }
    }
    a.selected_render = std::move(renders[best]);
  }
  a.generated_code = candidates[best];
  a.region_tree = std::move(seg.root);
  finish(a, ctx);
  return a;
}

// ---------------------------------------------------------------------------
// Registry

void MethodRegistry::add(std::shared_ptr<Method> method) {
  const std::string name = method->name();
  if (!methods_.emplace(name, std::move(method)).second) {
    throw Error(ErrorCode::ConfigError, "method already registered: " + name);
  }
}

bool MethodRegistry::has(std::string_view name) const { return methods_.find(name) != methods_.end(); }

Method& MethodRegistry::get(std::string_view name) const {
  const auto it = methods_.find(name);
  if (it == methods_.end()) throw Error(ErrorCode::UnknownMethod, "unknown method: " + std::string(name));
  return *it->second;
}

std::vector<std::string> MethodRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : methods_) out.push_back(name);
  return out;
}

MethodRegistry MethodRegistry::with_builtin_methods() {
  MethodRegistry r;
  r.add(std::make_shared<DirectMethod>());
  r.add(std::make_shared<DecomposeMethod>());
  return r;
}

GenerationArtifact run_method(const MethodRegistry& registry, const MethodSpec& spec, MethodContext& ctx,
                              const ModelSpec& model, const InputInstance& inst) {
  Method& method = registry.get(spec.name);
  try {
    return method.run(ctx, model, inst, spec.params);
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::AuthError:
      case ErrorCode::RateLimited:
      case ErrorCode::TransportError:
      case ErrorCode::ProviderError:
      case ErrorCode::RetriesExhausted:
      case ErrorCode::ProviderNotFound:
      case ErrorCode::EmptyGeneration:
      case ErrorCode::MethodError:
      case ErrorCode::ConfigError:
      case ErrorCode::BrowserUnavailable:
        throw;
      default:
        throw Error(ErrorCode::MethodError, spec.name + ": " + e.what());
    }
  } catch (const std::exception& e) {
    throw Error(ErrorCode::MethodError, spec.name + ": " + e.what());
  }
}

}  // namespace uibench
