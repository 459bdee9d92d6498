#include "uibench/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "uibench/error.hpp"

namespace fs = std::filesystem;

namespace uibench {

const InputInstance* Dataset::find(std::string_view id) const {
  auto it = std::find_if(instances.begin(), instances.end(),
                         [&](const InputInstance& i) { return i.id == id; });
  return it == instances.end() ? nullptr : &*it;
}

bool is_safe_id(std::string_view id) noexcept {
  if (id.empty() || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-';
  });
}

Dataset scan_dataset(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw Error(ErrorCode::DatasetNotFound, "dataset root is not a directory: " + root.string());
  }
  Dataset ds;
  ds.root = fs::absolute(root).lexically_normal();
  if (!ds.root.has_filename()) ds.root = ds.root.parent_path();
  ds.name = ds.root.filename().string();

  std::set<std::string> seen;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const auto& path = entry.path();
    if (path.extension() != ".png") continue;
    const std::string id = path.stem().string();
    if (!is_safe_id(id)) {
      throw Error(ErrorCode::InvalidInstanceId, "instance id is not filesystem-safe: " + path.string());
    }
    if (!seen.insert(id).second) throw Error(ErrorCode::DuplicateId, "duplicate instance id: " + id);

    InputInstance inst;
    inst.id = id;
    inst.screenshot = ds.root / path.filename();
    inst.source_path = ds.root;
    const Bytes png = read_file(path);
    try {
      const Image decoded = decode_image(png);
      inst.width = decoded.width;
      inst.height = decoded.height;
    } catch (const Error& e) {
      throw Error(ErrorCode::UnreadableImage, "instance " + id + ": " + e.what());
    }
    const fs::path html = ds.root / (id + ".html");
    if (fs::is_regular_file(html)) {
      std::string code = read_text(html);
      if (!code.empty()) inst.ground_truth_code = std::move(code);
    }
    ds.instances.push_back(std::move(inst));
  }
  if (ds.instances.empty()) {
    throw Error(ErrorCode::EmptyDataset, "no .png screenshots found in " + root.string());
  }
  std::sort(ds.instances.begin(), ds.instances.end(),
            [](const InputInstance& a, const InputInstance& b) { return a.id < b.id; });
  return ds;
}

std::vector<ValidationWarning> validate_instance(const InputInstance& inst) {
  std::vector<ValidationWarning> out;
  if (inst.width > kMaxImageSide || inst.height > kMaxImageSide) {
    out.push_back({ValidationWarningKind::OversizedImage,
                   inst.id + ": screenshot " + std::to_string(inst.width) + "x" +
                       std::to_string(inst.height) + " exceeds " + std::to_string(kMaxImageSide) +
                       " px; it will be scaled for comparison"});
  }
  if (inst.ground_truth_code) {
    std::string lower = *inst.ground_truth_code;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower.find("<html") == std::string::npos) {
      out.push_back({ValidationWarningKind::MissingHtmlRoot, inst.id + ": ground truth has no <html> root"});
    }
  }
  return out;
}

nlohmann::json dataset_manifest(const Dataset& dataset) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& inst : dataset.instances) {
    items.push_back({{"id", inst.id},
                     {"screenshot", inst.screenshot.filename().string()},
                     {"width", inst.width},
                     {"height", inst.height},
                     {"has_ground_truth", inst.ground_truth_code.has_value()}});
  }
  return {{"name", dataset.name}, {"root", dataset.root.string()}, {"instances", std::move(items)}};
}

fs::path ingest_screenshot(const fs::path& dir, std::string_view id, std::span<const std::uint8_t> bytes) {
  if (!is_safe_id(id)) throw Error(ErrorCode::InvalidInstanceId, "unsafe instance id: " + std::string(id));
  const Image img = decode_image(bytes);
  fs::create_directories(dir);
  const fs::path out = dir / (std::string(id) + ".png");
  if (is_png(bytes)) {
    write_file_atomic(out, bytes);
  } else {
    write_file_atomic(out, encode_png(img));
  }
  return out;
}

}  // namespace uibench
