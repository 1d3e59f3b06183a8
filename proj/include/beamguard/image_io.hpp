#pragma once

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "beamguard/tensor.hpp"

namespace beamguard::img {

// interleaved 8-bit RGB
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> rgb;

  ImageU8() = default;
  ImageU8(int w, int h) : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3) {}

  uint8_t* pixel(int x, int y) { return rgb.data() + (static_cast<size_t>(y) * width + x) * 3; }
  const uint8_t* pixel(int x, int y) const {
    return rgb.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
};

namespace detail {
struct FileCloser {
  FILE* f;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};
}  // namespace detail

inline void write_png_rgb8(const std::string& path, const ImageU8& im) {
  if (im.width <= 0 || im.height <= 0) throw std::invalid_argument("write_png_rgb8: empty image");
  detail::FileCloser fc{std::fopen(path.c_str(), "wb")};
  if (!fc.f) throw std::runtime_error("write_png_rgb8: cannot open " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png_rgb8: libpng init failed");
  }
  std::vector<png_bytep> rows(static_cast<size_t>(im.height));
  for (int y = 0; y < im.height; y++)
    rows[static_cast<size_t>(y)] = const_cast<png_bytep>(im.pixel(0, y));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png_rgb8: write failed for " + path);
  }
  png_init_io(png, fc.f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(im.width), static_cast<png_uint_32>(im.height),
               8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline ImageU8 read_png_rgb8(const std::string& path) {
  detail::FileCloser fc{std::fopen(path.c_str(), "rb")};
  if (!fc.f) throw std::runtime_error("read_png_rgb8: cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png_rgb8: libpng init failed");
  }
  ImageU8 im;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png_rgb8: decode failed for " + path);
  }
  png_init_io(png, fc.f);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  if (png_get_channels(png, info) != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png_rgb8: expected RGB data in " + path);
  }
  im.width = static_cast<int>(png_get_image_width(png, info));
  im.height = static_cast<int>(png_get_image_height(png, info));
  im.rgb.resize(static_cast<size_t>(im.width) * im.height * 3);
  rows.resize(static_cast<size_t>(im.height));
  for (int y = 0; y < im.height; y++) rows[static_cast<size_t>(y)] = im.pixel(0, y);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return im;
}

// canonical float view: value k/255 in planes (3, H, W)
inline Tensor<float> to_float(const ImageU8& im) {
  Tensor<float> t({3, im.height, im.width});
  for (int c = 0; c < 3; c++)
    for (int y = 0; y < im.height; y++)
      for (int x = 0; x < im.width; x++)
        t(c, y, x) = static_cast<float>(im.pixel(x, y)[c]) / 255.0f;
  return t;
}

inline uint8_t quantize_u8(double v) {
  long q = std::lround(v * 255.0);
  return static_cast<uint8_t>(q < 0 ? 0 : q > 255 ? 255 : q);
}

inline ImageU8 quantize(const Tensor<float>& t) {
  if (t.rank() != 3 || t.dim(0) != 3) throw std::invalid_argument("quantize: want (3, H, W)");
  ImageU8 im(static_cast<int>(t.dim(2)), static_cast<int>(t.dim(1)));
  for (int c = 0; c < 3; c++)
    for (int y = 0; y < im.height; y++)
      for (int x = 0; x < im.width; x++) im.pixel(x, y)[c] = quantize_u8(t(c, y, x));
  return im;
}

}  // namespace beamguard::img
