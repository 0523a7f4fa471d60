#pragma once

// Grayscale PNG read/write (8- or 16-bit) through libpng. Output carries no time or text
// chunks, so identical pixels give identical bytes.

#include <png.h>

#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <type_traits>
#include <vector>

#include "ocfr/error.hpp"
#include "ocfr/grid.hpp"

namespace ocfr::io {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngErrorState {
  std::jmp_buf jump;
  std::string message;
};

inline void png_error_fn(png_structp png, png_const_charp msg) {
  auto* st = static_cast<PngErrorState*>(png_get_error_ptr(png));
  st->message = msg ? msg : "unknown libpng error";
  std::longjmp(st->jump, 1);
}
inline void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace detail

/// Decoded grayscale image; `depth` is 8 or 16.
struct GrayImage {
  int depth = 8;
  Grid<std::uint16_t> pixels;
};

template <typename P>
void write_png(const std::filesystem::path& path, const Grid<P>& img) {
  static_assert(std::is_same_v<P, std::uint8_t> || std::is_same_v<P, std::uint16_t>);
  constexpr int depth = sizeof(P) * 8;
  if (img.empty()) throw IoError(path.string() + ": refusing to write an empty image");
  detail::FilePtr f(std::fopen(path.string().c_str(), "wb"));
  if (!f) throw IoError(path.string() + ": cannot open for writing");
  detail::PngErrorState st;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &st, detail::png_error_fn, detail::png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError(path.string() + ": libpng initialisation failed");
  }
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.cols()) * sizeof(P));
  if (setjmp(st.jump)) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path.string() + ": " + st.message);
  }
  png_init_io(png, f.get());
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, img.cols(), img.rows(), depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) {
      const auto v = img(r, c);
      if constexpr (depth == 16) {
        row[2 * c] = static_cast<std::uint8_t>(v >> 8);
        row[2 * c + 1] = static_cast<std::uint8_t>(v & 0xFF);
      } else {
        row[c] = v;
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(f.get()) != 0) throw IoError(path.string() + ": write failed");
}

inline GrayImage read_png(const std::filesystem::path& path) {
  detail::FilePtr f(std::fopen(path.string().c_str(), "rb"));
  if (!f) throw IoError(path.string() + ": cannot open");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) throw IoError(path.string() + ": not a PNG file");
  detail::PngErrorState st;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &st, detail::png_error_fn, detail::png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError(path.string() + ": libpng initialisation failed");
  }
  GrayImage out;
  std::vector<std::uint8_t> row;
  if (setjmp(st.jump)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path.string() + ": " + st.message);
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int type = png_get_color_type(png, info);
  if (type != PNG_COLOR_TYPE_GRAY || (depth != 8 && depth != 16) || png_get_interlace_type(png, info) != PNG_INTERLACE_NONE) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path.string() + ": expected a non-interlaced 8- or 16-bit grayscale PNG");
  }
  out.depth = depth;
  out.pixels = Grid<std::uint16_t>(h, w);
  row.resize(static_cast<std::size_t>(w) * (depth / 8));
  for (int r = 0; r < h; ++r) {
    png_read_row(png, row.data(), nullptr);
    for (int c = 0; c < w; ++c)
      out.pixels(r, c) = depth == 16 ? static_cast<std::uint16_t>((row[2 * c] << 8) | row[2 * c + 1]) : row[c];
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace ocfr::io
