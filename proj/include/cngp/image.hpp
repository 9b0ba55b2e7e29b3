#pragma once

// 8-bit RGB PNG input/output. Pixels are held as normalized floats in [0, 1]
// (row-major, interleaved RGB); sRGB bytes are used as-is.

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "cngp/error.hpp"

namespace cngp {

struct Image {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<float> rgb;

  Image() = default;
  Image(std::uint32_t w, std::uint32_t h, float fill = 0.0f)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width) * height; }
  float& at(std::uint32_t x, std::uint32_t y, std::uint32_t c) noexcept {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  float at(std::uint32_t x, std::uint32_t y, std::uint32_t c) const noexcept {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  Image crop(std::uint32_t x0, std::uint32_t y0, std::uint32_t x1, std::uint32_t y1) const {
    require(x0 < x1 && y0 < y1 && x1 <= width && y1 <= height, ErrorCode::invalid_argument,
            "crop rectangle outside the image or empty");
    Image out(x1 - x0, y1 - y0);
    for (std::uint32_t y = y0; y < y1; ++y)
      for (std::uint32_t x = x0; x < x1; ++x)
        for (std::uint32_t c = 0; c < 3; ++c) out.at(x - x0, y - y0, c) = at(x, y, c);
    return out;
  }

  bool operator==(const Image&) const = default;
};

inline std::uint8_t to_byte(float v) noexcept {
  const float clamped = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

/// Quantizes to the 8-bit grid a PNG round trip would produce.
inline Image quantize_8bit(const Image& img) {
  Image out = img;
  for (float& v : out.rgb) v = static_cast<float>(to_byte(v)) / 255.0f;
  return out;
}

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline void png_error_handler(png_structp png, png_const_charp message) {
  auto* buffer = static_cast<std::string*>(png_get_error_ptr(png));
  if (buffer) *buffer = message;
  png_longjmp(png, 1);
}

inline void png_warning_handler(png_structp, png_const_charp) {}

}  // namespace detail

/// Reads 8-bit gray, gray+alpha, RGB, RGBA and palette PNGs. Gray is
/// replicated to three channels and alpha dropped. 16-bit files are rejected.
inline Image load_png(const std::string& path) {
  detail::FilePtr file(std::fopen(path.c_str(), "rb"));
  require(file != nullptr, ErrorCode::io_error, "cannot open '" + path + "'");
  unsigned char signature[8] = {};
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    fail(ErrorCode::unsupported_format, "'" + path + "' is not a PNG file");
  }

  std::string message;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, detail::png_error_handler, detail::png_warning_handler);
  require(png != nullptr, ErrorCode::io_error, "libpng initialization failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(ErrorCode::io_error, "libpng initialization failed");
  }

  Image img;
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> bytes;
  bool sixteen_bit = false;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::io_error, "corrupt PNG '" + path + "': " + message);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (bit_depth == 16) {
    sixteen_bit = true;
  } else {
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) {
      png_set_tRNS_to_alpha(png);
      png_set_strip_alpha(png);
    }
    png_read_update_info(png, info);
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    bytes.resize(row_bytes * height);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = bytes.data() + y * row_bytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (sixteen_bit) fail(ErrorCode::unsupported_format, "16-bit PNG '" + path + "' is not supported");

  img = Image(width, height);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = static_cast<float>(bytes[i]) / 255.0f;
  return img;
}

/// Writes 8-bit RGB; values are clamped to [0, 1] and rounded to the nearest byte.
inline void save_png(const std::string& path, const Image& img) {
  require(img.width > 0 && img.height > 0 && img.rgb.size() == img.pixel_count() * 3, ErrorCode::invalid_argument,
          "cannot save an empty or malformed image");
  detail::FilePtr file(std::fopen(path.c_str(), "wb"));
  require(file != nullptr, ErrorCode::io_error, "cannot create '" + path + "'");

  std::vector<std::uint8_t> bytes(img.rgb.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(img.rgb[i]);
  std::vector<png_bytep> rows(img.height);
  for (std::uint32_t y = 0; y < img.height; ++y) rows[y] = bytes.data() + static_cast<std::size_t>(y) * img.width * 3;

  std::string message;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, detail::png_error_handler, detail::png_warning_handler);
  require(png != nullptr, ErrorCode::io_error, "libpng initialization failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(ErrorCode::io_error, "libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::io_error, "failed writing '" + path + "': " + message);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  require(std::fflush(file.get()) == 0, ErrorCode::io_error, "failed flushing '" + path + "'");
}

}  // namespace cngp
