#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "uibench/encoding.hpp"
#include "uibench/image.hpp"
#include "uibench/render.hpp"

namespace testing_support {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "uibench-test-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_png(const fs::path& path, const uibench::Image& img) {
  uibench::write_file_atomic(path, uibench::encode_png(img));
}

inline uibench::Image noise_image(int w, int h, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> d(0, 255);
  uibench::Image img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(d(rng));
  return img;
}

// Paints rows [y0, y1) a solid colour.
inline void fill_rows(uibench::Image& img, int y0, int y1, std::uint8_t v) {
  for (int y = y0; y < y1; ++y)
    for (int x = 0; x < img.width; ++x) {
      auto* p = img.at(x, y);
      p[0] = p[1] = p[2] = v;
    }
}

inline void fill_cols(uibench::Image& img, int x0, int x1, int y0, int y1, std::uint8_t v) {
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      auto* p = img.at(x, y);
      p[0] = p[1] = p[2] = v;
    }
}

/// Browser-free renderer: a solid image whose colour derives from the HTML
/// digest, with no blocks. Counts calls.
class FakeRenderer final : public uibench::Renderer {
 public:
  uibench::RenderResult render(std::string_view html, const uibench::RenderConfig& cfg) override {
    ++calls;
    const std::string digest = uibench::sha256_hex(html);
    const auto shade = static_cast<std::uint8_t>(std::stoi(digest.substr(0, 2), nullptr, 16));
    uibench::Image img(cfg.viewport_width / 8, cfg.viewport_height / 8, shade, shade, 255 - shade);
    uibench::RenderResult r;
    r.screenshot = uibench::encode_png(img);
    r.page_width = cfg.viewport_width;
    r.page_height = cfg.viewport_height;
    return r;
  }
  std::atomic<int> calls{0};
};

/// Wraps a renderer and counts calls.
class CountingRenderer final : public uibench::Renderer {
 public:
  explicit CountingRenderer(std::shared_ptr<uibench::Renderer> inner) : inner_(std::move(inner)) {}
  uibench::RenderResult render(std::string_view html, const uibench::RenderConfig& cfg) override {
    ++calls;
    return inner_->render(html, cfg);
  }
  std::atomic<int> calls{0};

 private:
  std::shared_ptr<uibench::Renderer> inner_;
};

/// Writes `n` instances named i0, i1, ... with distinct noise screenshots and,
/// when `with_html`, a small ground-truth page each.
inline std::vector<std::string> make_dataset(const fs::path& dir, int n, bool with_html = true) {
  fs::create_directories(dir);
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) {
    const std::string id = "i" + std::to_string(i);
    write_png(dir / (id + ".png"), noise_image(64 + i, 48, 1000 + i));
    if (with_html) {
      uibench::write_file_atomic(dir / (id + ".html"),
                                 "<html><body><h1>Page " + std::to_string(i) + "</h1><p>Body text</p></body></html>");
    }
    ids.push_back(id);
  }
  return ids;
}

inline bool browser_available() {
  const fs::path chrome = uibench::find_chrome();
  std::error_code ec;
  return !chrome.empty() && fs::is_regular_file(chrome, ec);
}

}  // namespace testing_support
