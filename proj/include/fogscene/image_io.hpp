#pragma once

// PNG reading and writing through libpng. 8-bit images hold 1 or 3 channels,
// 16-bit images are single-channel.

#include <cstdint>
#include <filesystem>

#include "fogscene/fogdata.hpp"

namespace fogscene {

/// Raw 8-bit grid. Gray+alpha and RGBA inputs are reduced to gray and RGB.
Grid<std::uint8_t> read_png8(const std::filesystem::path& path);
Grid<std::uint16_t> read_png16(const std::filesystem::path& path);

void write_png8(const std::filesystem::path& path,
                const Grid<std::uint8_t>& img);
void write_png16(const std::filesystem::path& path,
                 const Grid<std::uint16_t>& img);

/// [0,1] doubles to 8-bit with round-half-up.
Grid<std::uint8_t> quantize8(const Image& img);
Image dequantize8(const Grid<std::uint8_t>& img);

/// Depth storage convention: value = meters × 256, 0 = invalid.
Grid<std::uint16_t> encode_depth16(const Image& depth_m);
Image decode_depth16(const Grid<std::uint16_t>& raw);

}  // namespace fogscene
