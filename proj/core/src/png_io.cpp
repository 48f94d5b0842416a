#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "semrecon/errors.hpp"
#include "semrecon/io.hpp"

namespace semrecon {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png(const std::filesystem::path& path, const Grid& g) {
  if (g.channels() != 1 && g.channels() != 3) throw ParameterError("write_png: need 1 or 3 channels");
  if (g.empty()) throw ParameterError("write_png: empty image");
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw ParameterError("write_png: cannot open " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw ParameterError("write_png: libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ParameterError("write_png: encoding failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(g.width()), static_cast<png_uint_32>(g.height()), 8,
               g.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(g.width()) * g.channels());
  for (int r = 0; r < g.height(); ++r) {
    const auto px = g.pixel(r, 0);
    for (std::size_t i = 0; i < row.size(); ++i) {
      row[i] = static_cast<png_byte>(std::lround(std::clamp(px.data()[i], 0.0, 1.0) * 255.0));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Grid read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw ParameterError("read_png: cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw ParameterError("read_png: not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw ParameterError("read_png: libpng init failed");
  png_infop info = png_create_info_struct(png);
  Grid out;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParameterError("read_png: decoding failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_packing(png);
  png_set_strip_alpha(png);
  const png_byte type = png_get_color_type(png, info);
  if (type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  std::vector<png_byte> row(png_get_rowbytes(png, info));
  const int color = channels >= 3 ? 3 : 1;
  out = Grid(h, w, color);
  for (int r = 0; r < h; ++r) {
    png_read_row(png, row.data(), nullptr);
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < color; ++ch) out(r, c, ch) = row[static_cast<std::size_t>(c) * channels + ch] / 255.0;
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace semrecon
