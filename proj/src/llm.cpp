#include "uibench/llm.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <thread>

#include "uibench/error.hpp"
#include "uibench/image.hpp"
#include "uibench/url.hpp"

using nlohmann::json;

namespace uibench {

std::string_view to_string(Role role) noexcept {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

ModelSpec ModelSpec::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size()) {
    throw Error(ErrorCode::ConfigError, "model must be <provider>:<model_id>, got '" + std::string(text) + "'");
  }
  ModelSpec m;
  m.provider = std::string(text.substr(0, colon));
  m.model_id = std::string(text.substr(colon + 1));
  return m;
}

void ModelSpec::validate() const {
  if (provider.empty()) throw Error(ErrorCode::ConfigError, "model provider is empty");
  if (model_id.empty()) throw Error(ErrorCode::ConfigError, "model_id is empty");
  if (max_output_tokens <= 0) throw Error(ErrorCode::ConfigError, "max_output_tokens must be positive");
  if (!(temperature >= 0.0 && temperature <= 2.0)) {
    throw Error(ErrorCode::ConfigError, "temperature must be in [0, 2]");
  }
}

void to_json(json& j, const ModelSpec& m) {
  j = {{"provider", m.provider},
       {"model_id", m.model_id},
       {"endpoint", m.endpoint},
       {"max_output_tokens", m.max_output_tokens},
       {"temperature", m.temperature}};
}

void from_json(const json& j, ModelSpec& m) {
  if (j.is_string()) {
    m = ModelSpec::parse(j.get<std::string>());
    return;
  }
  m.provider = j.at("provider").get<std::string>();
  m.model_id = j.at("model_id").get<std::string>();
  m.endpoint = j.value("endpoint", std::string{});
  m.max_output_tokens = j.value("max_output_tokens", 4096);
  m.temperature = j.value("temperature", 0.0);
}

void to_json(json& j, const TokenUsage& u) {
  j = {{"prompt_text_tokens", u.prompt_text_tokens},
       {"prompt_image_tokens", u.prompt_image_tokens},
       {"completion_tokens", u.completion_tokens},
       {"total", u.total()}};
}

void from_json(const json& j, TokenUsage& u) {
  u.prompt_text_tokens = j.value("prompt_text_tokens", std::int64_t{0});
  u.prompt_image_tokens = j.value("prompt_image_tokens", std::int64_t{0});
  u.completion_tokens = j.value("completion_tokens", std::int64_t{0});
}

std::chrono::milliseconds RetryPolicy::delay_after(int attempt) const {
  double d = static_cast<double>(initial_delay.count()) * std::pow(std::max(1.0, factor), attempt - 1);
  d = std::min(d, static_cast<double>(max_delay.count()));
  return std::chrono::milliseconds(static_cast<std::int64_t>(d));
}

void to_json(json& j, const RetryPolicy& p) {
  j = {{"max_attempts", p.max_attempts},
       {"initial_delay_ms", p.initial_delay.count()},
       {"factor", p.factor},
       {"max_delay_ms", p.max_delay.count()}};
}

void from_json(const json& j, RetryPolicy& p) {
  p.max_attempts = j.value("max_attempts", 3);
  p.initial_delay = std::chrono::milliseconds(j.value("initial_delay_ms", std::int64_t{2000}));
  p.factor = j.value("factor", 2.0);
  p.max_delay = std::chrono::milliseconds(j.value("max_delay_ms", std::int64_t{60000}));
}

std::int64_t estimate_image_tokens_tiles(int width, int height) {
  if (width <= 0 || height <= 0) return 0;
  double w = width;
  double h = height;
  if (w > 2048 || h > 2048) {
    const double s = 2048.0 / std::max(w, h);
    w *= s;
    h *= s;
  }
  if (std::min(w, h) > 768) {
    const double s = 768.0 / std::min(w, h);
    w *= s;
    h *= s;
  }
  const auto tiles = static_cast<std::int64_t>(std::ceil(w / 512.0) * std::ceil(h / 512.0));
  return 85 + 170 * tiles;
}

std::int64_t estimate_text_tokens(std::string_view text) {
  return static_cast<std::int64_t>((text.size() + 3) / 4);
}

// ---------------------------------------------------------------------------
// OpenAI-compatible adapter

json OpenAiCompatibleAdapter::build_body(const ModelSpec& model, std::span<const ChatMessage> messages) {
  json msgs = json::array();
  for (const auto& m : messages) {
    json content = json::array();
    for (const auto& part : m.parts) {
      if (const auto* t = std::get_if<TextPart>(&part)) {
        content.push_back({{"type", "text"}, {"text", t->text}});
      } else {
        const auto& img = std::get<ImagePart>(part);
        content.push_back({{"type", "image_url"},
                           {"image_url", {{"url", "data:" + img.media_type + ";base64," + base64_encode(img.data)}}}});
      }
    }
    msgs.push_back({{"role", to_string(m.role)}, {"content", std::move(content)}});
  }
  return {{"model", model.model_id},
          {"messages", std::move(msgs)},
          {"max_tokens", model.max_output_tokens},
          {"temperature", model.temperature}};
}

ProviderReply OpenAiCompatibleAdapter::send(const ProviderRequest& request) {
  const std::string base = request.base_url.empty() ? base_url_ : request.base_url;
  const Url url = parse_url(base);
  httplib::Client client(url.origin());
  client.set_connection_timeout(std::chrono::seconds(30));
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  httplib::Headers headers;
  if (!request.api_key.empty()) headers.emplace("Authorization", "Bearer " + request.api_key);

  const json body = build_body(request.model, request.messages);
  auto res = client.Post(url.path_prefix + "/chat/completions", headers, body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::TransportError, "request to " + base + " failed: " + httplib::to_string(res.error()));
  }
  const int status = res->status;
  if (status == 401 || status == 403) throw Error(ErrorCode::AuthError, "HTTP " + std::to_string(status) + ": " + res->body);
  if (status == 429) throw Error(ErrorCode::RateLimited, "HTTP 429: " + res->body);
  if (status >= 500) throw Error(ErrorCode::TransportError, "HTTP " + std::to_string(status) + ": " + res->body);
  if (status >= 400) throw Error(ErrorCode::ProviderError, "HTTP " + std::to_string(status) + ": " + res->body);

  json parsed;
  try {
    parsed = json::parse(res->body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ProviderError, std::string("unparseable provider response: ") + e.what());
  }
  ProviderReply reply;
  try {
    const auto& msg = parsed.at("choices").at(0).at("message");
    if (msg.contains("content") && msg["content"].is_string()) reply.text = msg["content"].get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ProviderError, std::string("provider response has no choices: ") + e.what());
  }
  if (parsed.contains("usage") && parsed["usage"].is_object()) {
    const auto& usage = parsed["usage"];
    if (usage.contains("prompt_tokens")) reply.prompt_tokens_total = usage["prompt_tokens"].get<std::int64_t>();
    if (usage.contains("completion_tokens")) reply.completion_tokens = usage["completion_tokens"].get<std::int64_t>();
    // Some servers split the prompt count by modality.
    if (usage.contains("prompt_tokens_details") && usage["prompt_tokens_details"].is_object()) {
      const auto& details = usage["prompt_tokens_details"];
      if (details.contains("image_tokens")) reply.prompt_image_tokens = details["image_tokens"].get<std::int64_t>();
      if (details.contains("text_tokens")) reply.prompt_text_tokens = details["text_tokens"].get<std::int64_t>();
    }
  }
  if (parsed.contains("id") && parsed["id"].is_string()) reply.request_id = parsed["id"].get<std::string>();
  return reply;
}

// ---------------------------------------------------------------------------
// Mock adapter

namespace {

std::string mock_echo_page(const ProviderRequest& request) {
  std::string digest = "noimage";
  std::size_t prompt_chars = 0;
  std::string first_line;
  for (const auto& m : request.messages) {
    for (const auto& part : m.parts) {
      if (const auto* img = std::get_if<ImagePart>(&part)) {
        if (digest == "noimage") digest = sha256_hex(img->data).substr(0, 12);
      } else {
        const auto& text = std::get<TextPart>(part).text;
        prompt_chars += text.size();
        if (first_line.empty()) first_line = text.substr(0, text.find_first_of(".\n"));
      }
    }
  }
  std::string words;
  for (char c : first_line) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == ' ') words.push_back(c);
  }
  return "Here is the code:\n```html\n"
         "<!DOCTYPE html>\n<html>\n<head><meta charset=\"utf-8\"><title>Mock</title></head>\n"
         "<body class=\"bg-white p-8\">\n"
         "  <h1 class=\"text-2xl font-bold text-slate-800\">Mock page " + digest + "</h1>\n"
         "  <p class=\"mt-4 text-blue-600\">" + words + "</p>\n"
         "  <p class=\"mt-2 text-gray-500\">Prompt size " + std::to_string(prompt_chars) + "</p>\n"
         "</body>\n</html>\n```\n";
}

}  // namespace

ProviderReply MockAdapter::send(const ProviderRequest& request) {
  if (responder_) return responder_(request);
  const std::string& model = request.model.model_id;
  ProviderReply reply;
  if (model == "fail") throw Error(ErrorCode::ProviderError, "mock provider configured to fail");
  if (model == "echo") {
    reply.text = mock_echo_page(request);
  } else if (model != "empty") {
    throw Error(ErrorCode::ProviderError, "mock provider has no model '" + model + "'");
  }
  std::int64_t text_tokens = 0;
  for (const auto& m : request.messages)
    for (const auto& part : m.parts)
      if (const auto* t = std::get_if<TextPart>(&part)) text_tokens += estimate_text_tokens(t->text);
  reply.prompt_text_tokens = text_tokens;
  reply.completion_tokens = estimate_text_tokens(reply.text);
  reply.request_id = "mock-" + sha256_hex(reply.text).substr(0, 16);
  return reply;
}

// ---------------------------------------------------------------------------
// Call log

CallLog::CallLog(std::filesystem::path path) : path_(std::move(path)) {}

void CallLog::append(json record) {
  std::lock_guard lock(mutex_);
  if (path_) {
    std::ofstream out(*path_, std::ios::app | std::ios::binary);
    out << record.dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::Internal, "cannot append to " + path_->string());
  }
  records_.push_back(std::move(record));
}

std::vector<json> CallLog::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::size_t CallLog::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

TokenUsage CallLog::total_usage() const {
  std::lock_guard lock(mutex_);
  TokenUsage sum;
  for (const auto& r : records_) sum += r.at("usage").get<TokenUsage>();
  return sum;
}

std::vector<json> CallLog::read(const std::filesystem::path& path) {
  std::vector<json> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gateway

class Gateway::Limiter {
 public:
  explicit Limiter(int capacity) : available_(std::max(1, capacity)) {}
  void acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return available_ > 0; });
    --available_;
  }
  void release() {
    {
      std::lock_guard lock(mutex_);
      ++available_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  int available_;
};

Gateway::Gateway(GatewayOptions options) : options_(std::move(options)) {
  if (!options_.sleep) options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  if (!options_.getenv) {
    options_.getenv = [](const std::string& name) -> std::optional<std::string> {
      const char* v = std::getenv(name.c_str());
      if (v == nullptr || *v == '\0') return std::nullopt;
      return std::string(v);
    };
  }
}

Gateway::~Gateway() = default;

std::shared_ptr<Gateway> Gateway::with_default_providers(GatewayOptions options) {
  auto gw = std::make_shared<Gateway>(std::move(options));
  gw->register_provider("mock", std::make_shared<MockAdapter>());
  gw->register_provider("openai", std::make_shared<OpenAiCompatibleAdapter>());
  return gw;
}

void Gateway::register_provider(const std::string& name, std::shared_ptr<ProviderAdapter> adapter) {
  std::lock_guard lock(mutex_);
  if (adapters_.count(name) != 0) throw Error(ErrorCode::DuplicateProvider, "provider already registered: " + name);
  adapters_.emplace(name, std::move(adapter));
  limiters_.emplace(name, std::make_unique<Limiter>(options_.per_provider_concurrency));
}

bool Gateway::has_provider(const std::string& name) const {
  std::lock_guard lock(mutex_);
  return adapters_.count(name) != 0;
}

std::vector<std::string> Gateway::providers() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [name, _] : adapters_) out.push_back(name);
  return out;
}

std::shared_ptr<ProviderAdapter> Gateway::adapter(const std::string& name) const {
  std::lock_guard lock(mutex_);
  auto it = adapters_.find(name);
  if (it == adapters_.end()) throw Error(ErrorCode::ProviderNotFound, "provider not registered: " + name);
  return it->second;
}

Gateway::Limiter& Gateway::limiter(const std::string& name) {
  std::lock_guard lock(mutex_);
  return *limiters_.at(name);
}

std::string Gateway::env_prefix(std::string_view provider) {
  std::string out = "UIBENCH_";
  for (char c : provider) {
    out.push_back(std::isalnum(static_cast<unsigned char>(c))
                      ? static_cast<char>(std::toupper(static_cast<unsigned char>(c)))
                      : '_');
  }
  return out;
}

CompletionResult Gateway::complete(const ModelSpec& model, std::span<const ChatMessage> messages,
                                   const RetryPolicy& retry, CallLog& log, std::string_view tag) {
  const auto started = std::chrono::steady_clock::now();
  json record = {{"timestamp", utc_timestamp()},
                 {"provider", model.provider},
                 {"model_id", model.model_id},
                 {"attempt", 0},
                 {"attempt_statuses", json::array()},
                 {"status", "ok"},
                 {"usage", TokenUsage{}},
                 {"estimated", false},
                 {"latency_ms", 0.0},
                 {"downscaled_images", 0}};
  if (!tag.empty()) record["tag"] = std::string(tag);

  auto finish = [&](const std::string& status, const std::string& message) {
    record["status"] = status;
    if (!message.empty()) record["error"] = message;
    record["latency_ms"] =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    log.append(record);
  };

  try {
    if (messages.empty()) throw Error(ErrorCode::ConfigError, "complete() needs at least one message");
    auto provider = adapter(model.provider);

    // Downscale oversized images and collect their final dimensions.
    std::vector<ChatMessage> prepared(messages.begin(), messages.end());
    std::vector<std::pair<int, int>> image_dims;
    int downscaled = 0;
    for (auto& m : prepared) {
      if (m.parts.empty()) throw Error(ErrorCode::ConfigError, "chat message has no parts");
      for (auto& part : m.parts) {
        auto* img = std::get_if<ImagePart>(&part);
        if (img == nullptr) continue;
        Image decoded = decode_image(img->data);
        if (std::max(decoded.width, decoded.height) > kMaxImageSideForProvider) {
          decoded = fit_within(decoded, kMaxImageSideForProvider);
          img->data = encode_png(decoded);
          img->media_type = "image/png";
          ++downscaled;
        }
        image_dims.emplace_back(decoded.width, decoded.height);
      }
    }
    record["downscaled_images"] = downscaled;

    const std::string prefix = env_prefix(model.provider);
    std::string api_key = options_.getenv(prefix + "_API_KEY").value_or("");
    if (provider->requires_api_key() && api_key.empty()) {
      throw Error(ErrorCode::AuthError, "missing API key: set " + prefix + "_API_KEY");
    }
    std::string base_url = options_.getenv(prefix + "_BASE_URL").value_or(model.endpoint);
    ProviderRequest request{model, prepared, std::move(api_key), std::move(base_url)};

    auto& gate = limiter(model.provider);
    gate.acquire();
    struct Release {
      Limiter& l;
      ~Release() { l.release(); }
    } release{gate};

    ProviderReply reply;
    int attempt = 0;
    for (;;) {
      ++attempt;
      record["attempt"] = attempt;
      try {
        reply = provider->send(request);
        record["attempt_statuses"].push_back("ok");
        break;
      } catch (const Error& e) {
        record["attempt_statuses"].push_back(std::string(to_string(e.code())));
        const bool retriable = e.code() == ErrorCode::RateLimited || e.code() == ErrorCode::TransportError;
        if (!retriable) throw;
        if (attempt >= retry.max_attempts) {
          throw Error(ErrorCode::RetriesExhausted, "gave up after " + std::to_string(attempt) +
                                                       " attempts; last error: " + e.what());
        }
        options_.sleep(retry.delay_after(attempt));
      }
    }

    CompletionResult result;
    result.text = std::move(reply.text);
    result.provider_request_id = reply.request_id;
    result.attempts = attempt;

    std::int64_t text_chars_tokens = 0;
    for (const auto& m : prepared)
      for (const auto& part : m.parts)
        if (const auto* t = std::get_if<TextPart>(&part)) text_chars_tokens += estimate_text_tokens(t->text);

    if (reply.prompt_image_tokens) {
      result.usage.prompt_image_tokens = *reply.prompt_image_tokens;
    } else {
      for (const auto& [w, h] : image_dims) result.usage.prompt_image_tokens += provider->estimate_image_tokens(w, h);
      result.image_tokens_estimated = !image_dims.empty();
    }
    if (reply.prompt_text_tokens) {
      result.usage.prompt_text_tokens = *reply.prompt_text_tokens;
    } else if (reply.prompt_tokens_total) {
      result.usage.prompt_text_tokens = std::max<std::int64_t>(0, *reply.prompt_tokens_total - result.usage.prompt_image_tokens);
    } else {
      result.usage.prompt_text_tokens = text_chars_tokens;
    }
    result.usage.completion_tokens = reply.completion_tokens.value_or(estimate_text_tokens(result.text));

    result.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    record["usage"] = result.usage;
    record["estimated"] = result.image_tokens_estimated;
    record["completion_chars"] = result.text.size();
    if (result.provider_request_id) record["request_id"] = *result.provider_request_id;
    finish("ok", "");
    return result;
  } catch (const Error& e) {
    finish(std::string(to_string(e.code())), e.what());
    throw;
  } catch (const std::exception& e) {
    finish("Internal", e.what());
    throw Error(ErrorCode::Internal, e.what());
  }
}

}  // namespace uibench
