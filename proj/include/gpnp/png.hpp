#pragma once

// PNG input (8/16-bit, normalized to [0, 1]) and 8-bit preview output.

#include "gpnp/core.hpp"
#include "gpnp/raster.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace gpnp::png {

namespace detail {

struct File {
  explicit File(const std::filesystem::path &p, const char *mode)
      : f(std::fopen(p.string().c_str(), mode)) {}
  ~File() {
    if (f)
      std::fclose(f);
  }
  File(const File &) = delete;
  File &operator=(const File &) = delete;
  std::FILE *f;
};

[[noreturn]] inline void on_error(png_structp, png_const_charp msg) {
  throw raster::IoError(std::string("png: ") + msg);
}
inline void on_warning(png_structp, png_const_charp) {}

} // namespace detail

/// Reads a gray, gray+alpha, RGB, RGBA or palette PNG. Alpha is dropped,
/// palettes are expanded, and samples are scaled to [0, 1] by the bit depth.
inline ImageTensor read_png(const std::filesystem::path &path) {
  detail::File file(path, "rb");
  if (!file.f)
    throw raster::IoError("cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.f) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw raster::IoError(path.string() + ": not a PNG file");

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::on_error, detail::on_warning);
  if (!png)
    throw raster::IoError("png: out of memory");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp *p;
    png_infop *i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  png_init_io(png, file.f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE)
    png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS))
    png_set_tRNS_to_alpha(png);
  if (depth == 16)
    png_set_swap(png); // host little-endian 16-bit
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const std::size_t h = png_get_image_height(png, info);
  const std::size_t w = png_get_image_width(png, info);
  const std::size_t c = png_get_channels(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> buf(rowbytes * h);
  std::vector<png_bytep> rows(h);
  for (std::size_t r = 0; r < h; ++r)
    rows[r] = buf.data() + r * rowbytes;
  png_read_image(png, rows.data());

  ImageTensor img(Shape{h, w, c});
  const double scale = out_depth == 16 ? 65535.0 : 255.0;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t i = 0; i < w * c; ++i) {
      double v;
      if (out_depth == 16) {
        std::uint16_t s;
        std::memcpy(&s, rows[r] + 2 * i, 2);
        v = s;
      } else {
        v = rows[r][i];
      }
      img[r * w * c + i] = v / scale;
    }
  }
  return img;
}

/// Averages channels into a single-channel image.
inline ImageTensor to_gray(const ImageTensor &img) {
  if (img.channels() == 1)
    return img;
  ImageTensor out(Shape{img.height(), img.width(), 1});
  for (std::size_t r = 0; r < img.height(); ++r)
    for (std::size_t q = 0; q < img.width(); ++q) {
      double s = 0.0;
      for (std::size_t ch = 0; ch < img.channels(); ++ch)
        s += img.at(r, q, ch);
      out.at(r, q) = s / static_cast<double>(img.channels());
    }
  return out;
}

/// 8-bit preview; values are clipped to [lo, hi] and mapped linearly to 0..255.
/// Only 1- and 3-channel images are supported.
inline void write_preview(const std::filesystem::path &path, const ImageTensor &img, double lo = 0.0,
                          double hi = 1.0) {
  if (img.channels() != 1 && img.channels() != 3)
    throw raster::IoError("png preview: unsupported channel count " +
                          std::to_string(img.channels()));
  if (!(hi > lo))
    throw raster::IoError("png preview: empty display range");
  detail::File file(path, "wb");
  if (!file.f)
    throw raster::IoError("cannot create " + path.string());

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::on_error, detail::on_warning);
  if (!png)
    throw raster::IoError("png: out of memory");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp *p;
    png_infop *i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};

  const auto h = static_cast<png_uint_32>(img.height());
  const auto w = static_cast<png_uint_32>(img.width());
  png_init_io(png, file.f);
  png_set_IHDR(png, info, w, h, 8, img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t row_len = img.width() * img.channels();
  std::vector<png_byte> row(row_len);
  for (std::size_t r = 0; r < img.height(); ++r) {
    for (std::size_t i = 0; i < row_len; ++i) {
      const double t = std::clamp((img[r * row_len + i] - lo) / (hi - lo), 0.0, 1.0);
      row[i] = static_cast<png_byte>(std::lround(255.0 * t));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
}

} // namespace gpnp::png
