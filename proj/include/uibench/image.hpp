#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "uibench/encoding.hpp"

namespace uibench {

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Packed 8-bit RGB raster, row-major. Alpha is composited onto white at decode.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3

  Image() = default;
  Image(int w, int h, std::uint8_t r = 0, std::uint8_t g = 0, std::uint8_t b = 0);

  bool empty() const noexcept { return width <= 0 || height <= 0; }

  std::uint8_t* at(int x, int y) { return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// PNG or JPEG, detected from magic bytes. Throws Error(UnreadableImage).
Image decode_image(std::span<const std::uint8_t> bytes);
Image load_image(const std::filesystem::path& path);

/// Reads only the PNG header. Throws Error(UnreadableImage).
std::pair<int, int> png_dimensions(std::span<const std::uint8_t> bytes);

bool is_png(std::span<const std::uint8_t> bytes) noexcept;
bool is_jpeg(std::span<const std::uint8_t> bytes) noexcept;

Bytes encode_png(const Image& image);

/// Area-averaging resample (each output pixel averages the source pixels its
/// footprint covers; at least one).
Image resize(const Image& image, int width, int height);

/// Scales so the longest side is at most max_side; returns the input when it
/// already fits.
Image fit_within(const Image& image, int max_side);

Image crop(const Image& image, const Rect& rect);

/// Mean absolute per-channel difference on the 8-bit scale. Images of
/// different size compare over the overlap, with the non-overlap counted at 255.
double mean_abs_diff(const Image& a, const Image& b);

}  // namespace uibench
