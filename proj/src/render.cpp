#include "uibench/render.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>

#include "cdp.hpp"
#include "uibench/error.hpp"
#include "uibench/image.hpp"

#ifndef UIBENCH_DEFAULT_CHROME
#define UIBENCH_DEFAULT_CHROME ""
#endif
#ifndef UIBENCH_DEFAULT_ASSET_DIR
#define UIBENCH_DEFAULT_ASSET_DIR ""
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace uibench {

void RenderConfig::validate() const {
  if (viewport_width < 64 || viewport_height < 64) {
    throw Error(ErrorCode::ConfigError, "viewport must be at least 64x64");
  }
  if (!(device_scale > 0.0 && device_scale <= 4.0)) throw Error(ErrorCode::ConfigError, "device_scale must be in (0, 4]");
  if (settle_ms < 0 || settle_ms > 30000) throw Error(ErrorCode::ConfigError, "settle_ms must be in [0, 30000]");
}

void to_json(json& j, const RenderConfig& c) {
  j = {{"viewport_width", c.viewport_width},
       {"viewport_height", c.viewport_height},
       {"device_scale", c.device_scale},
       {"settle_ms", c.settle_ms},
       {"full_page", c.full_page}};
}

void from_json(const json& j, RenderConfig& c) {
  RenderConfig d;
  c.viewport_width = j.value("viewport_width", d.viewport_width);
  c.viewport_height = j.value("viewport_height", d.viewport_height);
  c.device_scale = j.value("device_scale", d.device_scale);
  c.settle_ms = j.value("settle_ms", d.settle_ms);
  c.full_page = j.value("full_page", d.full_page);
}

fs::path find_chrome() {
  if (const char* env = std::getenv("UIBENCH_CHROME"); env != nullptr && *env != '\0') return env;
  std::error_code ec;
  if (fs::path def = UIBENCH_DEFAULT_CHROME; !def.empty() && fs::is_regular_file(def, ec)) return def;
  if (const char* path = std::getenv("PATH"); path != nullptr) {
    std::string_view rest = path;
    while (!rest.empty()) {
      const auto colon = rest.find(':');
      const fs::path dir(std::string(rest.substr(0, colon)));
      for (const char* name : {"chromium", "chromium-browser", "google-chrome", "headless_shell"}) {
        if (fs::is_regular_file(dir / name, ec)) return dir / name;
      }
      if (colon == std::string_view::npos) break;
      rest.remove_prefix(colon + 1);
    }
  }
  return {};
}

fs::path default_asset_dir() {
  if (const char* env = std::getenv("UIBENCH_ASSETS"); env != nullptr && *env != '\0') return env;
  return UIBENCH_DEFAULT_ASSET_DIR;
}

namespace {

std::size_t find_tag(std::string_view html, std::string_view tag) {
  // Case-insensitive search for "<tag" followed by '>' or whitespace.
  for (std::size_t i = 0; i + tag.size() + 1 < html.size(); ++i) {
    if (html[i] != '<') continue;
    bool match = true;
    for (std::size_t k = 0; k < tag.size() && match; ++k) {
      match = std::tolower(static_cast<unsigned char>(html[i + 1 + k])) == tag[k];
    }
    if (!match) continue;
    const char after = html[i + 1 + tag.size()];
    if (after == '>' || std::isspace(static_cast<unsigned char>(after)) || after == '/') return i;
  }
  return std::string_view::npos;
}

}  // namespace

std::string inject_script(std::string_view html, std::string_view script_url) {
  const std::string tag = "<script src=\"" + std::string(script_url) + "\"></script>";
  std::string out(html);
  if (auto head = find_tag(html, "head"); head != std::string_view::npos) {
    const auto close = html.find('>', head);
    if (close != std::string_view::npos) return out.insert(close + 1, tag);
  }
  if (auto root = find_tag(html, "html"); root != std::string_view::npos) {
    const auto close = html.find('>', root);
    if (close != std::string_view::npos) return out.insert(close + 1, "<head>" + tag + "</head>");
  }
  if (auto doctype = find_tag(html, "!doctype"); doctype != std::string_view::npos) {
    const auto close = html.find('>', doctype);
    if (close != std::string_view::npos) return out.insert(close + 1, tag);
  }
  return tag + out;
}

namespace {

constexpr std::string_view kOrigin = "http://uibench.invalid";
constexpr std::string_view kDocumentPath = "/index.html";
constexpr std::string_view kRuntimePath = "/__uibench/utility-css.js";
constexpr std::string_view kPlaceholderPath = "/__uibench/placeholder.png";

// Collects one block per visible element with non-empty direct text.
constexpr std::string_view kExtractBlocksScript = R"JS(
(() => {
  const skip = new Set(['SCRIPT', 'STYLE', 'NOSCRIPT', 'TEMPLATE', 'HEAD', 'TITLE', 'META', 'LINK']);
  const canvas = document.createElement('canvas');
  canvas.width = 1;
  canvas.height = 1;
  const ctx = canvas.getContext('2d', {willReadFrequently: true});
  const toRgb = (css) => {
    ctx.globalCompositeOperation = 'copy';
    ctx.fillStyle = '#ffffff';
    ctx.fillRect(0, 0, 1, 1);
    ctx.globalCompositeOperation = 'source-over';
    ctx.fillStyle = css;
    ctx.fillRect(0, 0, 1, 1);
    const d = ctx.getImageData(0, 0, 1, 1).data;
    return [d[0], d[1], d[2]];
  };
  const round = (v) => Math.round(v * 1000) / 1000;
  const out = [];
  if (!document.body) return out;
  const elements = [document.body, ...document.body.querySelectorAll('*')];
  for (const el of elements) {
    if (skip.has(el.tagName)) continue;
    let own = '';
    for (const node of el.childNodes) {
      if (node.nodeType === Node.TEXT_NODE) own += node.nodeValue;
    }
    const text = own.replace(/\s+/g, ' ').trim();
    if (!text) continue;
    if (!el.checkVisibility({opacityProperty: true, visibilityProperty: true})) continue;
    const style = getComputedStyle(el);
    if (style.display === 'none' || style.visibility !== 'visible' || parseFloat(style.opacity) <= 0) continue;
    const r = el.getBoundingClientRect();
    if (!(r.width > 0 && r.height > 0)) continue;
    out.push({
      text,
      bbox: [round(r.left + window.scrollX), round(r.top + window.scrollY), round(r.width), round(r.height)],
      color: toRgb(style.color),
    });
  }
  return out;
})()
)JS";

constexpr std::string_view kNextFrameScript =
    "new Promise(r => requestAnimationFrame(() => requestAnimationFrame(() => r(true))))";

constexpr int kMaxPageHeight = 16384;

struct Assets {
  std::string runtime_js;
  Bytes placeholder_png;
};

Assets load_assets(const fs::path& dir) {
  Assets a;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("tailwindcss-browser", 0) == 0 && entry.path().extension() == ".js") {
      a.runtime_js = read_text(entry.path());
    }
  }
  if (a.runtime_js.empty()) {
    throw Error(ErrorCode::BrowserUnavailable, "utility-CSS runtime not found in " + dir.string());
  }
  a.placeholder_png = read_file(dir / "placeholder.png");
  return a;
}

// One exclusively owned page (target + flattened session) for one render.
class PageRender {
 public:
  PageRender(cdp::Connection& conn, const Assets& assets, const ChromeOptions& options)
      : conn_(conn), assets_(assets), options_(options) {}

  ~PageRender() {
    if (!target_id_.empty() && conn_.alive()) {
      try {
        conn_.call("Target.closeTarget", {{"targetId", target_id_}}, std::chrono::seconds(5));
      } catch (...) {
      }
    }
    if (!session_.empty()) conn_.close_session(session_);
  }

  RenderResult run(std::string_view html, const RenderConfig& cfg) {
    document_ = inject_script(html, std::string(kOrigin) + std::string(kRuntimePath));
    const auto call_timeout = std::chrono::seconds(30);
    target_id_ = conn_.call("Target.createTarget", {{"url", "about:blank"}}, call_timeout)
                     .at("targetId")
                     .get<std::string>();
    session_ = conn_.call("Target.attachToTarget", {{"targetId", target_id_}, {"flatten", true}}, call_timeout)
                   .at("sessionId")
                   .get<std::string>();
    conn_.open_session(session_);

    auto deadline = cdp::Clock::now() + call_timeout;
    call("Page.enable", json::object(), deadline);
    call("Runtime.enable", json::object(), deadline);
    call("Emulation.setDeviceMetricsOverride",
         {{"width", cfg.viewport_width},
          {"height", cfg.viewport_height},
          {"deviceScaleFactor", cfg.device_scale},
          {"mobile", false}},
         deadline);
    try {
      const json families = {{"standard", options_.font_family},
                             {"sansSerif", options_.font_family},
                             {"serif", options_.font_family},
                             {"fixed", options_.font_family}};
      call("Page.setFontFamilies", {{"fontFamilies", families}}, deadline);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Internal) throw;
    }
    call("Fetch.enable", {{"patterns", json::array({{{"urlPattern", "*"}}})}}, deadline);

    // Load phase.
    const auto load_deadline = cdp::Clock::now() + options_.load_timeout;
    const int nav = conn_.send(session_, "Page.navigate", {{"url", std::string(kOrigin) + std::string(kDocumentPath)}});
    bool navigated = false;
    while (!(navigated && loaded_)) {
      auto msg = conn_.next(session_, load_deadline);
      if (!msg) throw Error(ErrorCode::RenderTimeout, "page load exceeded " + std::to_string(options_.load_timeout.count()) + " ms");
      if (msg->contains("id") && (*msg)["id"].get<int>() == nav) {
        if (msg->contains("error")) throw Error(ErrorCode::Internal, "Page.navigate: " + (*msg)["error"].dump());
        const auto& result = (*msg)["result"];
        if (result.contains("errorText")) {
          throw Error(ErrorCode::Internal, "navigation failed: " + result["errorText"].get<std::string>());
        }
        navigated = true;
        continue;
      }
      handle(*msg);
    }

    // Settle phase: keep serving requests while the page finishes styling.
    pump_for(std::chrono::milliseconds(cfg.settle_ms));

    deadline = cdp::Clock::now() + call_timeout;
    const json metrics = call("Page.getLayoutMetrics", json::object(), deadline);
    double content_height = cfg.viewport_height;
    if (metrics.contains("cssContentSize")) content_height = metrics["cssContentSize"].value("height", content_height);
    int page_height = cfg.viewport_height;
    if (cfg.full_page) {
      page_height = std::clamp(static_cast<int>(std::ceil(content_height)), cfg.viewport_height, kMaxPageHeight);
    }
    if (page_height != cfg.viewport_height) {
      call("Emulation.setDeviceMetricsOverride",
           {{"width", cfg.viewport_width},
            {"height", page_height},
            {"deviceScaleFactor", cfg.device_scale},
            {"mobile", false}},
           deadline);
    }
    evaluate(kNextFrameScript, true, deadline);

    RenderResult result;
    result.page_width = cfg.viewport_width;
    result.page_height = page_height;
    const json blocks = evaluate(kExtractBlocksScript, false, deadline);
    for (const auto& b : blocks) result.blocks.push_back(b.get<Block>());

    const json shot = call("Page.captureScreenshot",
                           {{"format", "png"}, {"fromSurface", true}, {"captureBeyondViewport", false}}, deadline);
    result.screenshot = base64_decode(shot.at("data").get<std::string>());
    result.console_errors = std::move(console_errors_);
    result.requests = std::move(requests_);
    result.network_requests = network_requests_;
    return result;
  }

 private:
  json call(const std::string& method, json params, cdp::Clock::time_point deadline) {
    const int id = conn_.send(session_, method, std::move(params));
    for (;;) {
      auto msg = conn_.next(session_, deadline);
      if (!msg) throw Error(ErrorCode::RenderTimeout, method + " timed out");
      if (msg->contains("id") && (*msg)["id"].get<int>() == id) {
        if (msg->contains("error")) throw Error(ErrorCode::Internal, method + ": " + (*msg)["error"].dump());
        return msg->value("result", json::object());
      }
      handle(*msg);
    }
  }

  json evaluate(std::string_view expression, bool await_promise, cdp::Clock::time_point deadline) {
    const json r = call("Runtime.evaluate",
                        {{"expression", std::string(expression)}, {"returnByValue", true}, {"awaitPromise", await_promise}},
                        deadline);
    if (r.contains("exceptionDetails")) {
      throw Error(ErrorCode::Internal, "script failed: " + r["exceptionDetails"].dump());
    }
    return r.at("result").value("value", json());
  }

  void pump_for(std::chrono::milliseconds duration) {
    const auto until = cdp::Clock::now() + duration;
    while (auto msg = conn_.next(session_, until)) handle(*msg);
  }

  void fulfill(const std::string& request_id, int status, const std::string& content_type,
               std::span<const std::uint8_t> body) {
    conn_.send(session_, "Fetch.fulfillRequest",
               {{"requestId", request_id},
                {"responseCode", status},
                {"responseHeaders", json::array({{{"name", "Content-Type"}, {"value", content_type}},
                                                 {{"name", "Cache-Control"}, {"value", "no-store"}}})},
                {"body", base64_encode(body)}});
  }

  static std::span<const std::uint8_t> as_bytes(std::string_view s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
  }

  void handle(const json& msg) {
    if (!msg.contains("method")) return;  // stray response to a fire-and-forget command
    const std::string method = msg["method"].get<std::string>();
    const json& params = msg.value("params", json::object());
    if (method == "Fetch.requestPaused") {
      const std::string id = params.at("requestId").get<std::string>();
      const std::string url = params.at("request").at("url").get<std::string>();
      const std::string type = params.value("resourceType", "");
      std::string path;
      if (url.rfind(kOrigin, 0) == 0) path = url.substr(kOrigin.size());
      if (auto q = path.find_first_of("?#"); q != std::string::npos) path.resize(q);
      std::string disposition;
      if (path == kDocumentPath && type == "Document") {
        fulfill(id, 200, "text/html; charset=utf-8", as_bytes(document_));
        disposition = "document";
      } else if (path == kRuntimePath) {
        fulfill(id, 200, "text/javascript", as_bytes(assets_.runtime_js));
        disposition = "runtime";
      } else if (type == "Image" || path == kPlaceholderPath) {
        fulfill(id, 200, "image/png", assets_.placeholder_png);
        disposition = "placeholder";
      } else {
        conn_.send(session_, "Fetch.failRequest", {{"requestId", id}, {"errorReason", "BlockedByClient"}});
        disposition = "blocked";
      }
      requests_.push_back({url, type, disposition});
    } else if (method == "Page.loadEventFired") {
      loaded_ = true;
    } else if (method == "Runtime.exceptionThrown") {
      const auto& details = params.value("exceptionDetails", json::object());
      std::string text = details.value("text", "exception");
      if (details.contains("exception") && details["exception"].contains("description")) {
        text += ": " + details["exception"]["description"].get<std::string>();
      }
      console_errors_.push_back(text);
    } else if (method == "Runtime.consoleAPICalled") {
      if (params.value("type", "") == "error") {
        std::string text;
        for (const auto& arg : params.value("args", json::array())) {
          if (!text.empty()) text += ' ';
          text += arg.contains("value") ? (arg["value"].is_string() ? arg["value"].get<std::string>() : arg["value"].dump())
                                        : arg.value("description", "");
        }
        console_errors_.push_back(text);
      }
    } else if (method == "Inspector.targetCrashed") {
      throw Error(ErrorCode::BrowserCrash, "page process crashed");
    }
  }

  cdp::Connection& conn_;
  const Assets& assets_;
  const ChromeOptions& options_;
  std::string target_id_;
  std::string session_;
  std::string document_;
  bool loaded_ = false;
  std::vector<std::string> console_errors_;
  std::vector<RequestRecord> requests_;
  int network_requests_ = 0;
};

}  // namespace

class ChromeRenderer::Impl {
 public:
  explicit Impl(ChromeOptions options) : options_(std::move(options)) {
    if (options_.executable.empty()) options_.executable = find_chrome();
    if (options_.asset_dir.empty()) options_.asset_dir = default_asset_dir();
    if (options_.executable.empty()) {
      throw Error(ErrorCode::BrowserUnavailable,
                  "no Chromium found; run tools/fetch_chromium.sh or set UIBENCH_CHROME");
    }
    assets_ = load_assets(options_.asset_dir);
    slots_ = std::max(1, options_.pool_size);
    connection();  // fail fast
  }

  std::shared_ptr<cdp::Connection> connection() {
    std::lock_guard lock(mutex_);
    if (conn_ && conn_->alive()) return conn_;
    conn_.reset();
    cdp::LaunchOptions launch;
    launch.executable = options_.executable;
    launch.args = {"--headless",
                   "--no-sandbox",
                   "--no-zygote",
                   "--use-gl=angle",
                   "--use-angle=swiftshader",
                   "--enable-unsafe-swiftshader",
                   "--hide-scrollbars",
                   "--mute-audio",
                   "--force-color-profile=srgb",
                   "--font-render-hinting=none",
                   "--disable-lcd-text",
                   "--disable-background-networking",
                   "--disable-component-update",
                   "--disable-default-apps",
                   "--disable-extensions",
                   "--disable-sync",
                   "--no-first-run",
                   "--no-default-browser-check",
                   "--disable-features=Translate,MediaRouter,OptimizationHints"};
    const fs::path dir = options_.executable.parent_path();
    std::error_code ec;
    if (fs::is_regular_file(dir / "fonts.conf", ec)) launch.env.emplace_back("FONTCONFIG_FILE", (dir / "fonts.conf").string());
    std::string ld = dir.string();
    if (const char* old = std::getenv("LD_LIBRARY_PATH"); old != nullptr && *old != '\0') ld += ":" + std::string(old);
    launch.env.emplace_back("LD_LIBRARY_PATH", ld);

    auto conn = std::make_shared<cdp::Connection>(launch);
    try {
      conn->call("Browser.getVersion", json::object(), std::chrono::seconds(30));
    } catch (const Error& e) {
      throw Error(ErrorCode::BrowserUnavailable, std::string("browser did not start: ") + e.what());
    }
    ++launches_;
    conn_ = conn;
    return conn_;
  }

  RenderResult render(std::string_view html, const RenderConfig& cfg) {
    cfg.validate();
    acquire_slot();
    struct Release {
      Impl* self;
      ~Release() { self->release_slot(); }
    } release{this};

    for (int attempt = 0;; ++attempt) {
      auto conn = connection();
      try {
        PageRender page(*conn, assets_, options_);
        return page.run(html, cfg);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::BrowserCrash || attempt >= 1) throw;
      }
    }
  }

  void kill_browser() {
    std::lock_guard lock(mutex_);
    if (conn_) conn_->kill();
  }

  int launches() const {
    std::lock_guard lock(mutex_);
    return launches_;
  }

 private:
  void acquire_slot() {
    std::unique_lock lock(slot_mutex_);
    slot_cv_.wait(lock, [&] { return slots_ > 0; });
    --slots_;
  }
  void release_slot() {
    {
      std::lock_guard lock(slot_mutex_);
      ++slots_;
    }
    slot_cv_.notify_one();
  }

  ChromeOptions options_;
  Assets assets_;
  mutable std::mutex mutex_;
  std::shared_ptr<cdp::Connection> conn_;
  int launches_ = 0;
  std::mutex slot_mutex_;
  std::condition_variable slot_cv_;
  int slots_ = 1;
};

ChromeRenderer::ChromeRenderer(ChromeOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}
ChromeRenderer::~ChromeRenderer() = default;

RenderResult ChromeRenderer::render(std::string_view html, const RenderConfig& config) {
  if (html.empty()) throw Error(ErrorCode::ConfigError, "render: html is empty");
  return impl_->render(html, config);
}

void ChromeRenderer::kill_browser_for_testing() { impl_->kill_browser(); }
int ChromeRenderer::browser_launches() const { return impl_->launches(); }

}  // namespace uibench
