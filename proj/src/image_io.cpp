#include "fogscene/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

namespace fogscene {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) {
    if (mode[0] == 'r') throw DatasetError("cannot open " + path.string());
    throw Error("cannot write " + path.string());
  }
  return f;
}

struct Decoded {
  int width = 0, height = 0, channels = 0, depth = 0;
  std::vector<png_byte> bytes;  // tightly packed rows
};

Decoded decode(const std::filesystem::path& path) {
  FilePtr fp = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError("not a PNG file: " + path.string());
  }
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("libpng initialisation failed");
  }
  Decoded out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG file: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_strip_alpha(png);
  }
  if (bit_depth == 16) png_set_swap(png);  // host little-endian uint16
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  out.bytes.resize(stride * out.height);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = out.bytes.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void encode(const std::filesystem::path& path, int width, int height,
            int channels, int bit_depth, const png_byte* data) {
  FilePtr fp = open_file(path, "wb");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("libpng initialisation failed");
  }
  const std::size_t stride =
      static_cast<std::size_t>(width) * channels * (bit_depth / 8);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) {
    rows[y] = const_cast<png_bytep>(data + y * stride);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, bit_depth,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Grid<std::uint8_t> read_png8(const std::filesystem::path& path) {
  Decoded d = decode(path);
  if (d.depth != 8) throw FormatError("expected 8-bit PNG: " + path.string());
  Grid<std::uint8_t> g(d.height, d.width, d.channels);
  std::copy(d.bytes.begin(), d.bytes.end(), g.data.begin());
  return g;
}

Grid<std::uint16_t> read_png16(const std::filesystem::path& path) {
  Decoded d = decode(path);
  if (d.depth != 16 || d.channels != 1) {
    throw FormatError("expected single-channel 16-bit PNG: " + path.string());
  }
  Grid<std::uint16_t> g(d.height, d.width, 1);
  std::memcpy(g.data.data(), d.bytes.data(), d.bytes.size());
  return g;
}

void write_png8(const std::filesystem::path& path,
                const Grid<std::uint8_t>& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw ContractError("write_png8 expects 1 or 3 channels");
  }
  encode(path, img.width, img.height, img.channels, 8, img.data.data());
}

void write_png16(const std::filesystem::path& path,
                 const Grid<std::uint16_t>& img) {
  if (img.channels != 1) throw ContractError("write_png16 expects 1 channel");
  encode(path, img.width, img.height, 1, 16,
         reinterpret_cast<const png_byte*>(img.data.data()));
}

Grid<std::uint8_t> quantize8(const Image& img) {
  Grid<std::uint8_t> out(img.height, img.width, img.channels);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double v = std::clamp(img.data[i], 0.0, 1.0);
    out.data[i] = static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
  }
  return out;
}

Image dequantize8(const Grid<std::uint8_t>& img) {
  Image out(img.height, img.width, img.channels);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    out.data[i] = img.data[i] / 255.0;
  }
  return out;
}

Grid<std::uint16_t> encode_depth16(const Image& depth_m) {
  Grid<std::uint16_t> out(depth_m.height, depth_m.width, 1);
  for (std::size_t i = 0; i < depth_m.data.size(); ++i) {
    const double v = std::floor(depth_m.data[i] * 256.0 + 0.5);
    out.data[i] = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
  }
  return out;
}

Image decode_depth16(const Grid<std::uint16_t>& raw) {
  Image out(raw.height, raw.width, 1);
  for (std::size_t i = 0; i < raw.data.size(); ++i) {
    out.data[i] = raw.data[i] / 256.0;
  }
  return out;
}

}  // namespace fogscene
