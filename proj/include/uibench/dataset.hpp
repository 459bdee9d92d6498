#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "uibench/encoding.hpp"
#include "uibench/image.hpp"

namespace uibench {

/// One evaluation unit: a reference screenshot and optional ground-truth HTML.
struct InputInstance {
  std::string id;
  std::filesystem::path screenshot;  // PNG on disk
  int width = 0;
  int height = 0;
  std::optional<std::string> ground_truth_code;
  std::filesystem::path source_path;

  Bytes screenshot_png() const { return read_file(screenshot); }
  Image screenshot_image() const { return load_image(screenshot); }
};

struct Dataset {
  std::string name;
  std::filesystem::path root;
  std::vector<InputInstance> instances;  // sorted by id

  const InputInstance* find(std::string_view id) const;
};

/// True when id matches [A-Za-z0-9._-]+.
bool is_safe_id(std::string_view id) noexcept;

/// Discovers `<id>.png` screenshots with optional sibling `<id>.html` ground
/// truth in a flat directory. Other files are ignored.
Dataset scan_dataset(const std::filesystem::path& root);

enum class ValidationWarningKind { OversizedImage, MissingHtmlRoot };

struct ValidationWarning {
  ValidationWarningKind kind;
  std::string message;
};

inline constexpr int kMaxImageSide = 4096;

std::vector<ValidationWarning> validate_instance(const InputInstance& inst);

/// {name, root, instances:[{id, screenshot, width, height, has_ground_truth}]}
nlohmann::json dataset_manifest(const Dataset& dataset);

/// Writes `bytes` (PNG or JPEG) as `<dir>/<id>.png`, converting JPEG to PNG.
/// Throws Error(UnreadableImage) when the bytes do not decode.
std::filesystem::path ingest_screenshot(const std::filesystem::path& dir, std::string_view id,
                                        std::span<const std::uint8_t> bytes);

}  // namespace uibench
