#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "uibench/ciede2000.hpp"

namespace uibench {

/// A visible text element: whitespace-normalized text, border-box in page
/// pixels and computed foreground colour.
struct Block {
  std::string text;
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  color::Rgb color;

  double center_x() const noexcept { return x + w / 2.0; }
  double center_y() const noexcept { return y + h / 2.0; }

  friend bool operator==(const Block&, const Block&) = default;
};

inline void to_json(nlohmann::json& j, const Block& b) {
  j = {{"text", b.text},
       {"bbox", {b.x, b.y, b.w, b.h}},
       {"color", {b.color.r, b.color.g, b.color.b}}};
}

inline void from_json(const nlohmann::json& j, Block& b) {
  b.text = j.at("text").get<std::string>();
  const auto& box = j.at("bbox");
  b.x = box.at(0).get<double>();
  b.y = box.at(1).get<double>();
  b.w = box.at(2).get<double>();
  b.h = box.at(3).get<double>();
  const auto& c = j.at("color");
  b.color = {c.at(0).get<std::uint8_t>(), c.at(1).get<std::uint8_t>(), c.at(2).get<std::uint8_t>()};
}

}  // namespace uibench
