#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "uibench/encoding.hpp"

namespace uibench {

enum class Role { System, User, Assistant };

std::string_view to_string(Role role) noexcept;

struct TextPart {
  std::string text;
};

struct ImagePart {
  Bytes data;  // encoded PNG
  std::string media_type = "image/png";
};

using Part = std::variant<TextPart, ImagePart>;

struct ChatMessage {
  Role role = Role::User;
  std::vector<Part> parts;
};

struct ModelSpec {
  std::string provider;
  std::string model_id;
  std::string endpoint;  // empty: adapter default
  int max_output_tokens = 4096;
  double temperature = 0.0;

  /// Parses "provider:model_id". Throws Error(ConfigError).
  static ModelSpec parse(std::string_view text);
  std::string label() const { return provider + ":" + model_id; }
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelSpec& m);
void from_json(const nlohmann::json& j, ModelSpec& m);

struct TokenUsage {
  std::int64_t prompt_text_tokens = 0;
  std::int64_t prompt_image_tokens = 0;
  std::int64_t completion_tokens = 0;

  std::int64_t total() const noexcept { return prompt_text_tokens + prompt_image_tokens + completion_tokens; }

  TokenUsage& operator+=(const TokenUsage& o) noexcept {
    prompt_text_tokens += o.prompt_text_tokens;
    prompt_image_tokens += o.prompt_image_tokens;
    completion_tokens += o.completion_tokens;
    return *this;
  }
  friend bool operator==(const TokenUsage&, const TokenUsage&) = default;
};

void to_json(nlohmann::json& j, const TokenUsage& u);
void from_json(const nlohmann::json& j, TokenUsage& u);

struct CompletionResult {
  std::string text;
  TokenUsage usage;
  double latency_ms = 0.0;
  std::optional<std::string> provider_request_id;
  bool image_tokens_estimated = false;
  int attempts = 1;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_delay{2000};
  double factor = 2.0;
  std::chrono::milliseconds max_delay{60000};

  /// Delay before attempt `attempt + 1`, for attempt >= 1. Non-decreasing.
  std::chrono::milliseconds delay_after(int attempt) const;
};

void to_json(nlohmann::json& j, const RetryPolicy& p);
void from_json(const nlohmann::json& j, RetryPolicy& p);

struct ProviderRequest {
  const ModelSpec& model;
  std::span<const ChatMessage> messages;
  std::string api_key;
  std::string base_url;
};

/// What an adapter parsed from the provider response. Missing counts are
/// filled in by the gateway.
struct ProviderReply {
  std::string text;
  std::optional<std::int64_t> prompt_tokens_total;
  std::optional<std::int64_t> prompt_text_tokens;
  std::optional<std::int64_t> prompt_image_tokens;
  std::optional<std::int64_t> completion_tokens;
  std::optional<std::string> request_id;
};

/// 512-px tile estimate: fit in 2048x2048, shortest side to at most 768,
/// then 85 + 170 * tiles.
std::int64_t estimate_image_tokens_tiles(int width, int height);

/// ceil(utf8 bytes / 4)
std::int64_t estimate_text_tokens(std::string_view text);

class ProviderAdapter {
 public:
  virtual ~ProviderAdapter() = default;
  /// Throws Error with AuthError, RateLimited, TransportError or ProviderError.
  virtual ProviderReply send(const ProviderRequest& request) = 0;
  virtual bool requires_api_key() const { return true; }
  virtual std::string default_base_url() const { return {}; }
  virtual std::int64_t estimate_image_tokens(int width, int height) const {
    return estimate_image_tokens_tiles(width, height);
  }
};

/// OpenAI-compatible /chat/completions over HTTP(S).
class OpenAiCompatibleAdapter final : public ProviderAdapter {
 public:
  explicit OpenAiCompatibleAdapter(std::string default_base_url = "https://api.openai.com/v1",
                                   std::chrono::seconds timeout = std::chrono::seconds(300))
      : base_url_(std::move(default_base_url)), timeout_(timeout) {}
  ProviderReply send(const ProviderRequest& request) override;
  std::string default_base_url() const override { return base_url_; }

  static nlohmann::json build_body(const ModelSpec& model, std::span<const ChatMessage> messages);

 private:
  std::string base_url_;
  std::chrono::seconds timeout_;
};

/// Deterministic offline provider. Model ids:
///   echo  - a small HTML page derived from the request's first image digest
///   empty - an empty completion
///   fail  - ProviderError on every call
/// A custom responder replaces the built-in behaviour entirely.
class MockAdapter final : public ProviderAdapter {
 public:
  using Responder = std::function<ProviderReply(const ProviderRequest&)>;
  MockAdapter() = default;
  explicit MockAdapter(Responder responder) : responder_(std::move(responder)) {}
  ProviderReply send(const ProviderRequest& request) override;
  bool requires_api_key() const override { return false; }

 private:
  Responder responder_;
};

/// Append-only `llm_calls.jsonl` sink; one JSON object per complete() call.
class CallLog {
 public:
  CallLog() = default;  // in-memory only
  explicit CallLog(std::filesystem::path path);

  void append(nlohmann::json record);
  std::vector<nlohmann::json> records() const;
  std::size_t size() const;
  TokenUsage total_usage() const;
  const std::optional<std::filesystem::path>& path() const noexcept { return path_; }

  static std::vector<nlohmann::json> read(const std::filesystem::path& path);

 private:
  mutable std::mutex mutex_;
  std::optional<std::filesystem::path> path_;
  std::vector<nlohmann::json> records_;
};

struct GatewayOptions {
  int per_provider_concurrency = 4;
  std::function<void(std::chrono::milliseconds)> sleep;  // default: this_thread::sleep_for
  std::function<std::optional<std::string>(const std::string&)> getenv;  // default: std::getenv
};

/// Provider registry plus retry, concurrency caps, image downscaling and
/// token accounting around every call.
class Gateway {
 public:
  explicit Gateway(GatewayOptions options = {});
  ~Gateway();

  /// Throws Error(DuplicateProvider).
  void register_provider(const std::string& name, std::shared_ptr<ProviderAdapter> adapter);
  bool has_provider(const std::string& name) const;
  std::vector<std::string> providers() const;

  /// Appends exactly one record to `log`, on success or failure.
  CompletionResult complete(const ModelSpec& model, std::span<const ChatMessage> messages,
                            const RetryPolicy& retry, CallLog& log, std::string_view tag = {});

  /// "mock" and "openai" registered.
  static std::shared_ptr<Gateway> with_default_providers(GatewayOptions options = {});

  static std::string env_prefix(std::string_view provider);

 private:
  class Limiter;
  std::shared_ptr<ProviderAdapter> adapter(const std::string& name) const;
  Limiter& limiter(const std::string& name);

  GatewayOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<ProviderAdapter>> adapters_;
  std::map<std::string, std::unique_ptr<Limiter>> limiters_;
};

inline constexpr int kMaxImageSideForProvider = 2048;

}  // namespace uibench
