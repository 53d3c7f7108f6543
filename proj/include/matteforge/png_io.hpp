#pragma once

#include <png.h>

#include <cstdio>
#include <memory>
#include <string>
#include <variant>

#include "matteforge/image.hpp"

namespace mf {

using LoadedPng = std::variant<GrayMap, RgbImage, RgbaImage>;

inline uint8_t quantize8(double x) {
  double c = std::min(1.0, std::max(0.0, x));
  return uint8_t(std::floor(c * 255.0 + 0.5));  // round half up
}

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Reads an 8-bit PNG into interleaved bytes; channels out: 1, 3 or 4.
inline std::vector<uint8_t> read_png_bytes(const std::string& path, int& height, int& width, int& channels) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("png: cannot open '" + path + "' for reading");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw std::runtime_error("png: failed to allocate read structs");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png: '" + path + "' is not a valid PNG file");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  int bit_depth = png_get_bit_depth(png, info);
  int color_type = png_get_color_type(png, info);
  if (bit_depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png: '" + path + "' has 16-bit depth; only 8-bit PNG is supported");
  }
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);

  width = int(png_get_image_width(png, info));
  height = int(png_get_image_height(png, info));
  channels = int(png_get_channels(png, info));
  if (channels != 1 && channels != 3 && channels != 4) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png: '" + path + "' has " + std::to_string(channels) +
                             " channels; only 1 (gray), 3 (RGB) or 4 (RGBA) are supported");
  }

  std::vector<uint8_t> bytes(size_t(height) * width * channels);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = bytes.data() + size_t(y) * width * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return bytes;
}

inline void write_png_bytes(const std::string& path, const std::vector<uint8_t>& bytes, int height, int width,
                            int channels) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("png: cannot open '" + path + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw std::runtime_error("png: failed to allocate write structs");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png: write to '" + path + "' failed");
  }
  png_init_io(png, fp.get());
  int color_type = channels == 1   ? PNG_COLOR_TYPE_GRAY
                   : channels == 3 ? PNG_COLOR_TYPE_RGB
                                   : PNG_COLOR_TYPE_RGBA;
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y)
    rows[y] = const_cast<png_bytep>(bytes.data() + size_t(y) * width * channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace detail

inline LoadedPng load_png(const std::string& path) {
  int h, w, ch;
  auto bytes = detail::read_png_bytes(path, h, w, ch);
  if (ch == 1) {
    GrayMap g(h, w);
    for (size_t i = 0; i < g.size(); ++i) g.v[i] = bytes[i] / 255.0;
    return g;
  }
  if (ch == 3) {
    RgbImage img(h, w);
    for (size_t i = 0; i < img.ch[0].size(); ++i)
      for (int c = 0; c < 3; ++c) img.ch[c].v[i] = bytes[i * 3 + c] / 255.0;
    return img;
  }
  RgbaImage img;
  img.color = RgbImage(h, w);
  img.alpha = GrayMap(h, w);
  for (size_t i = 0; i < img.alpha.size(); ++i) {
    for (int c = 0; c < 3; ++c) img.color.ch[c].v[i] = bytes[i * 4 + c] / 255.0;
    img.alpha.v[i] = bytes[i * 4 + 3] / 255.0;
  }
  return img;
}

inline GrayMap load_gray_png(const std::string& path) {
  auto any = load_png(path);
  if (auto* g = std::get_if<GrayMap>(&any)) return *g;
  throw std::runtime_error("png: '" + path + "' is not a grayscale PNG");
}

inline RgbImage load_rgb_png(const std::string& path) {
  auto any = load_png(path);
  if (auto* g = std::get_if<RgbImage>(&any)) return *g;
  if (auto* a = std::get_if<RgbaImage>(&any)) return a->color;
  throw std::runtime_error("png: '" + path + "' is not an RGB PNG");
}

inline RgbaImage load_rgba_png(const std::string& path) {
  auto any = load_png(path);
  if (auto* a = std::get_if<RgbaImage>(&any)) return *a;
  throw std::runtime_error("png: '" + path + "' has no alpha channel");
}

inline void save_png(const GrayMap& g, const std::string& path) {
  std::vector<uint8_t> bytes(g.size());
  for (size_t i = 0; i < g.size(); ++i) bytes[i] = quantize8(g.v[i]);
  detail::write_png_bytes(path, bytes, g.h, g.w, 1);
}

inline void save_png(const RgbImage& img, const std::string& path) {
  std::vector<uint8_t> bytes(img.ch[0].size() * 3);
  for (size_t i = 0; i < img.ch[0].size(); ++i)
    for (int c = 0; c < 3; ++c) bytes[i * 3 + c] = quantize8(img.ch[c].v[i]);
  detail::write_png_bytes(path, bytes, img.h(), img.w(), 3);
}

inline void save_png(const RgbaImage& img, const std::string& path) {
  img.check();
  std::vector<uint8_t> bytes(img.alpha.size() * 4);
  for (size_t i = 0; i < img.alpha.size(); ++i) {
    for (int c = 0; c < 3; ++c) bytes[i * 4 + c] = quantize8(img.color.ch[c].v[i]);
    bytes[i * 4 + 3] = quantize8(img.alpha.v[i]);
  }
  detail::write_png_bytes(path, bytes, img.h(), img.w(), 4);
}

inline void save_png(const Trimap& t, const std::string& path) {
  std::vector<uint8_t> bytes(t.v.size());
  for (size_t i = 0; i < t.v.size(); ++i) bytes[i] = Trimap::to_byte(t.v[i]);
  detail::write_png_bytes(path, bytes, t.h, t.w, 1);
}

inline Trimap load_trimap(const std::string& path) {
  int h, w, ch;
  auto bytes = detail::read_png_bytes(path, h, w, ch);
  if (ch != 1) throw std::runtime_error("trimap: '" + path + "' must be a grayscale PNG");
  Trimap t(h, w);
  for (size_t i = 0; i < t.v.size(); ++i) t.v[i] = Trimap::from_byte(bytes[i]);
  return t;
}

}  // namespace mf
