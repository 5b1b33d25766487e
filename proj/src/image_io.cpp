#include "acaptcha/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <string>

#include "acaptcha/fsutil.hpp"

namespace acaptcha::io {

namespace {

std::uint8_t to_level(double v) {
  const double c = std::min(1.0, std::max(0.0, v));
  return std::uint8_t(std::lround(c * 255.0));
}

struct PngReadState {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
};

void png_read_cb(png_structp png, png_bytep out, png_size_t n) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->pos + n > st->bytes.size()) png_error(png, "truncated PNG stream");
  std::memcpy(out, st->bytes.data() + st->pos, n);
  st->pos += n;
}

void png_write_cb(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}

void png_flush_cb(png_structp) {}

[[noreturn]] void png_error_cb(png_structp, png_const_charp msg) { throw FormatError(std::string("PNG: ") + msg); }
void png_warning_cb(png_structp, png_const_charp) {}

}  // namespace

Image quantize8(const Image& img) {
  Image out = img;
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = to_level(out.data()[i]) / 255.0;
  return out;
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw InvalidInput("PNG encoding supports 1 or 3 channels, got " + std::to_string(img.channels()));
  }
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_cb, png_warning_cb);
  png_infop info = png_create_info_struct(png);
  try {
    png_set_write_fn(png, &out, png_write_cb, png_flush_cb);
    const int color = img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, png_uint_32(img.width()), png_uint_32(img.height()), 8, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<std::uint8_t> row(std::size_t(img.width() * img.channels()));
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        for (int c = 0; c < img.channels(); ++c) {
          row[std::size_t(x * img.channels() + c)] = to_level(img.at(c, y, x));
        }
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw FormatError("PNG: bad signature at byte offset 0");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_cb, png_warning_cb);
  png_infop info = png_create_info_struct(png);
  PngReadState st{bytes, 0};
  Image img;
  try {
    png_set_read_fn(png, &st, png_read_cb);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_packing(png);
    png_set_strip_alpha(png);
    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    const int width = int(png_get_image_width(png, info));
    const int height = int(png_get_image_height(png, info));
    const int channels = int(png_get_channels(png, info));
    if (channels != 1 && channels != 3) throw FormatError("PNG: unsupported channel count");
    img = Image(channels, height, width);
    std::vector<std::uint8_t> row(png_get_rowbytes(png, info));
    for (int y = 0; y < height; ++y) {
      png_read_row(png, row.data(), nullptr);
      for (int x = 0; x < width; ++x) {
        for (int c = 0; c < channels; ++c) img.at(c, y, x) = row[std::size_t(x * channels + c)] / 255.0;
      }
    }
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img) { write_file_atomic(path, encode_png(img)); }
Image read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

std::vector<std::uint8_t> encode_pgm(const Image& img) {
  if (img.channels() != 1) throw InvalidInput("PGM supports gray images only");
  const std::string header = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (Eigen::Index i = 0; i < img.size(); ++i) out.push_back(to_level(img.data()[i]));
  return out;
}

Image decode_pgm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) ++pos;
    if (start == pos) throw FormatError("PGM: truncated header at byte offset " + std::to_string(pos));
    return std::string(bytes.begin() + std::ptrdiff_t(start), bytes.begin() + std::ptrdiff_t(pos));
  };
  if (token() != "P5") throw FormatError("PGM: bad magic at byte offset 0");
  const int width = std::stoi(token());
  const int height = std::stoi(token());
  const int maxval = std::stoi(token());
  if (maxval != 255) throw FormatError("PGM: only maxval 255 is supported");
  ++pos;  // single whitespace before raster
  const std::size_t need = std::size_t(width) * std::size_t(height);
  if (pos + need > bytes.size()) throw FormatError("PGM: raster truncated at byte offset " + std::to_string(pos));
  Image img(1, height, width);
  for (std::size_t i = 0; i < need; ++i) img.data()[Eigen::Index(i)] = bytes[pos + i] / 255.0;
  return img;
}

void write_pgm(const std::filesystem::path& path, const Image& img) { write_file_atomic(path, encode_pgm(img)); }
Image read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

}  // namespace acaptcha::io
