#include "uibench/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <string>

// jpeglib.h needs FILE/size_t declared first.
#include <jpeglib.h>

#include "uibench/error.hpp"

namespace uibench {

Image::Image(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3) {
  for (std::size_t i = 0; i < pixels.size(); i += 3) {
    pixels[i] = r;
    pixels[i + 1] = g;
    pixels[i + 2] = b;
  }
}

bool is_png(std::span<const std::uint8_t> bytes) noexcept {
  static constexpr std::uint8_t kSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  return bytes.size() >= 8 && std::memcmp(bytes.data(), kSig, 8) == 0;
}

bool is_jpeg(std::span<const std::uint8_t> bytes) noexcept {
  return bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF;
}

namespace {

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()) == 0) {
    throw Error(ErrorCode::UnreadableImage, std::string("png: ") + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  Image out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  // Composite any alpha onto white.
  png_color white{255, 255, 255};
  if (png_image_finish_read(&img, &white, out.pixels.data(), 0, nullptr) == 0) {
    std::string msg = img.message;
    png_image_free(&img);
    throw Error(ErrorCode::UnreadableImage, "png: " + msg);
  }
  if (out.empty()) throw Error(ErrorCode::UnreadableImage, "png: zero-sized image");
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Image decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = jpeg_error_exit;
  Image out;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(ErrorCode::UnreadableImage, std::string("jpeg: ") + jerr.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = static_cast<int>(cinfo.output_width);
  out.height = static_cast<int>(cinfo.output_height);
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  if (out.empty()) throw Error(ErrorCode::UnreadableImage, "jpeg: zero-sized image");
  return out;
}

}  // namespace

Image decode_image(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) return decode_png(bytes);
  if (is_jpeg(bytes)) return decode_jpeg(bytes);
  throw Error(ErrorCode::UnreadableImage, "not a PNG or JPEG image");
}

Image load_image(const std::filesystem::path& path) {
  try {
    return decode_image(read_file(path));
  } catch (const Error& e) {
    throw Error(ErrorCode::UnreadableImage, path.string() + ": " + e.what());
  }
}

std::pair<int, int> png_dimensions(std::span<const std::uint8_t> bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()) == 0) {
    throw Error(ErrorCode::UnreadableImage, std::string("png: ") + img.message);
  }
  std::pair<int, int> dims{static_cast<int>(img.width), static_cast<int>(img.height)};
  png_image_free(&img);
  return dims;
}

Bytes encode_png(const Image& image) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (png_image_write_get_memory_size(img, size, 0, image.pixels.data(), 0, nullptr) == 0) {
    throw Error(ErrorCode::Internal, std::string("png encode: ") + img.message);
  }
  Bytes out(size);
  if (png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr) == 0) {
    throw Error(ErrorCode::Internal, std::string("png encode: ") + img.message);
  }
  out.resize(size);
  return out;
}

Image resize(const Image& image, int width, int height) {
  Image out(width, height);
  for (int y = 0; y < height; ++y) {
    const int y0 = static_cast<int>(static_cast<long long>(y) * image.height / height);
    int y1 = static_cast<int>((static_cast<long long>(y + 1) * image.height + height - 1) / height);
    y1 = std::max(y1, y0 + 1);
    for (int x = 0; x < width; ++x) {
      const int x0 = static_cast<int>(static_cast<long long>(x) * image.width / width);
      int x1 = static_cast<int>((static_cast<long long>(x + 1) * image.width + width - 1) / width);
      x1 = std::max(x1, x0 + 1);
      std::uint64_t sum[3] = {0, 0, 0};
      for (int sy = y0; sy < y1; ++sy) {
        for (int sx = x0; sx < x1; ++sx) {
          const auto* p = image.at(sx, sy);
          sum[0] += p[0];
          sum[1] += p[1];
          sum[2] += p[2];
        }
      }
      const auto count = static_cast<std::uint64_t>(y1 - y0) * (x1 - x0);
      auto* q = out.at(x, y);
      for (int c = 0; c < 3; ++c) q[c] = static_cast<std::uint8_t>((sum[c] + count / 2) / count);
    }
  }
  return out;
}

Image fit_within(const Image& image, int max_side) {
  const int longest = std::max(image.width, image.height);
  if (longest <= max_side) return image;
  const double scale = static_cast<double>(max_side) / longest;
  const int w = std::max(1, static_cast<int>(std::lround(image.width * scale)));
  const int h = std::max(1, static_cast<int>(std::lround(image.height * scale)));
  return resize(image, w, h);
}

Image crop(const Image& image, const Rect& rect) {
  const int x0 = std::clamp(rect.x, 0, image.width);
  const int y0 = std::clamp(rect.y, 0, image.height);
  const int x1 = std::clamp(rect.x + rect.w, x0, image.width);
  const int y1 = std::clamp(rect.y + rect.h, y0, image.height);
  Image out(x1 - x0, y1 - y0);
  for (int y = y0; y < y1; ++y) {
    std::memcpy(out.at(0, y - y0), image.at(x0, y), static_cast<std::size_t>(x1 - x0) * 3);
  }
  return out;
}

double mean_abs_diff(const Image& a, const Image& b) {
  const int w = std::max(a.width, b.width);
  const int h = std::max(a.height, b.height);
  if (w == 0 || h == 0) return 0.0;
  double total = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool in_a = x < a.width && y < a.height;
      const bool in_b = x < b.width && y < b.height;
      if (in_a && in_b) {
        const auto* p = a.at(x, y);
        const auto* q = b.at(x, y);
        for (int c = 0; c < 3; ++c) total += std::abs(int(p[c]) - int(q[c]));
      } else {
        total += 3 * 255.0;
      }
    }
  }
  return total / (3.0 * w * h);
}

}  // namespace uibench
