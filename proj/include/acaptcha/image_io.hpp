#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "acaptcha/image.hpp"

namespace acaptcha::io {

// 8-bit codecs. Stored level i maps to intensity i/255; writing rounds to the
// nearest level after clamping to [0,1]. PNG supports 1 (gray) or 3 (RGB)
// channels; PGM is gray only (binary P5).

std::vector<std::uint8_t> encode_png(const Image& img);
Image decode_png(std::span<const std::uint8_t> bytes);
void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_pgm(const Image& img);
Image decode_pgm(std::span<const std::uint8_t> bytes);
void write_pgm(const std::filesystem::path& path, const Image& img);
Image read_pgm(const std::filesystem::path& path);

// Round-trips an image through 8-bit levels.
Image quantize8(const Image& img);

}  // namespace acaptcha::io
