#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "uibench/block.hpp"
#include "uibench/encoding.hpp"

namespace uibench {

struct RenderConfig {
  int viewport_width = 1280;
  int viewport_height = 800;
  double device_scale = 1.0;
  int settle_ms = 500;
  bool full_page = true;

  /// Throws Error(ConfigError).
  void validate() const;
};

void to_json(nlohmann::json& j, const RenderConfig& c);
void from_json(const nlohmann::json& j, RenderConfig& c);

/// One intercepted request and what the harness did with it.
struct RequestRecord {
  std::string url;
  std::string resource_type;
  std::string disposition;  // "document" | "runtime" | "placeholder" | "blocked"
};

struct RenderResult {
  Bytes screenshot;  // PNG
  int page_width = 0;   // CSS px
  int page_height = 0;  // CSS px
  std::vector<std::string> console_errors;
  std::vector<Block> blocks;
  std::vector<RequestRecord> requests;
  /// Requests allowed to leave the process. The harness never continues a
  /// request to the network, so this is zero unless that invariant breaks.
  int network_requests = 0;
};

class Renderer {
 public:
  virtual ~Renderer() = default;
  /// Throws Error(RenderTimeout | BrowserCrash | BrowserUnavailable).
  virtual RenderResult render(std::string_view html, const RenderConfig& config) = 0;
};

struct ChromeOptions {
  std::filesystem::path executable;
  std::filesystem::path asset_dir;
  int pool_size = 2;
  std::chrono::milliseconds load_timeout{30000};
  std::string font_family = "Open Sans";
};

/// Locates the browser: $UIBENCH_CHROME, then the build-configured default,
/// then chromium / chromium-browser / google-chrome on PATH. Empty if none.
std::filesystem::path find_chrome();

/// $UIBENCH_ASSETS, else the build-configured asset directory.
std::filesystem::path default_asset_dir();

/// Inserts `<script src=...>` as the first child of <head> (creating one inside
/// <html> when missing; otherwise after any doctype) so the runtime loads
/// before the body is parsed.
std::string inject_script(std::string_view html, std::string_view script_url);

/// Headless Chromium driven over the DevTools protocol (pipe transport).
/// Renders run on up to pool_size concurrent pages; the browser is restarted
/// when it dies.
class ChromeRenderer final : public Renderer {
 public:
  explicit ChromeRenderer(ChromeOptions options);
  ~ChromeRenderer() override;

  ChromeRenderer(const ChromeRenderer&) = delete;
  ChromeRenderer& operator=(const ChromeRenderer&) = delete;

  RenderResult render(std::string_view html, const RenderConfig& config) override;

  /// Test hook: kills the browser process to exercise crash recovery.
  void kill_browser_for_testing();
  int browser_launches() const;

 private:
  class Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace uibench
