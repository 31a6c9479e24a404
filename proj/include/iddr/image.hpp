#pragma once

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <vector>

#include <png.h>

#include "iddr/common.hpp"

namespace iddr {

// Row-major H x W x C buffer. Pixel values are reals in [0,1]; 8-bit files are
// divided by 255 on load so all loss math stays in normalized scale.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, T fill = T(0))
      : width_(width), height_(height), channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& at(int x, int y, int c) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  const T& at(int x, int y, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  bool same_shape(const Image& o) const {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

using ImageF = Image<float>;

namespace detail {

struct PngReadCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* fp = nullptr;
  ~PngReadCloser() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

struct PngWriteCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* fp = nullptr;
  ~PngWriteCloser() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

}  // namespace detail

// Reads an 8-bit PNG as a normalized RGB image. Grayscale and alpha inputs are
// expanded/stripped to plain RGB.
inline ImageF read_png_rgb(const std::string& path) {
  detail::PngReadCloser ctx;
  ctx.fp = std::fopen(path.c_str(), "rb");
  check_io(ctx.fp != nullptr, "cannot open image: " + path);

  unsigned char sig[8];
  check_io(std::fread(sig, 1, 8, ctx.fp) == 8 && !png_sig_cmp(sig, 0, 8),
           "not a PNG file: " + path);

  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check_io(ctx.png != nullptr, "libpng init failed");
  ctx.info = png_create_info_struct(ctx.png);
  check_io(ctx.info != nullptr, "libpng init failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw IoError("corrupt PNG: " + path);

  png_init_io(ctx.png, ctx.fp);
  png_set_sig_bytes(ctx.png, 8);
  png_read_info(ctx.png, ctx.info);

  png_set_strip_16(ctx.png);
  png_set_strip_alpha(ctx.png);
  png_set_palette_to_rgb(ctx.png);
  png_set_expand_gray_1_2_4_to_8(ctx.png);
  png_set_gray_to_rgb(ctx.png);
  png_read_update_info(ctx.png, ctx.info);

  const int width = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
  const int height = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
  check_io(png_get_channels(ctx.png, ctx.info) == 3, "unexpected channel count: " + path);

  std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height * 3);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) {
    rows[y] = raw.data() + static_cast<std::size_t>(y) * width * 3;
  }
  png_read_image(ctx.png, rows.data());
  png_read_end(ctx.png, nullptr);

  ImageF img(width, height, 3);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    img.data()[i] = static_cast<float>(raw[i]) / 255.0f;
  }
  return img;
}

// Writes a normalized RGB image as 8-bit PNG (values clamped and rounded).
inline void write_png_rgb(const std::string& path, const ImageF& img) {
  check(img.channels() == 3, "write_png_rgb expects 3 channels");
  detail::PngWriteCloser ctx;
  ctx.fp = std::fopen(path.c_str(), "wb");
  check_io(ctx.fp != nullptr, "cannot write image: " + path);
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check_io(ctx.png != nullptr, "libpng init failed");
  ctx.info = png_create_info_struct(ctx.png);
  check_io(ctx.info != nullptr, "libpng init failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw IoError("PNG write failed: " + path);

  png_init_io(ctx.png, ctx.fp);
  png_set_IHDR(ctx.png, ctx.info, img.width(), img.height(), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);

  std::vector<unsigned char> row(static_cast<std::size_t>(img.width()) * 3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        float v = std::clamp(img.at(x, y, c), 0.0f, 1.0f);
        row[static_cast<std::size_t>(x) * 3 + c] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    }
    png_write_row(ctx.png, row.data());
  }
  png_write_end(ctx.png, nullptr);
}

// Depth maps go out as 16-bit grayscale; the caller records the scale factor
// in a sidecar so values can be recovered.
inline void write_png_gray16(const std::string& path, const Image<float>& depth,
                             float scale) {
  check(depth.channels() == 1, "write_png_gray16 expects 1 channel");
  detail::PngWriteCloser ctx;
  ctx.fp = std::fopen(path.c_str(), "wb");
  check_io(ctx.fp != nullptr, "cannot write image: " + path);
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check_io(ctx.png != nullptr, "libpng init failed");
  ctx.info = png_create_info_struct(ctx.png);
  check_io(ctx.info != nullptr, "libpng init failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw IoError("PNG write failed: " + path);

  png_init_io(ctx.png, ctx.fp);
  png_set_IHDR(ctx.png, ctx.info, depth.width(), depth.height(), 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);

  std::vector<unsigned char> row(static_cast<std::size_t>(depth.width()) * 2);
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      float v = std::clamp(depth.at(x, y, 0) * scale, 0.0f, 65535.0f);
      auto q = static_cast<std::uint16_t>(std::lround(v));
      row[static_cast<std::size_t>(x) * 2] = static_cast<unsigned char>(q >> 8);
      row[static_cast<std::size_t>(x) * 2 + 1] = static_cast<unsigned char>(q & 0xff);
    }
    png_write_row(ctx.png, row.data());
  }
  png_write_end(ctx.png, nullptr);
}

}  // namespace iddr
