#include "acaptcha/captcha/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "acaptcha/fsutil.hpp"
#include "acaptcha/image_io.hpp"

namespace acaptcha::captcha {

namespace fs = std::filesystem;

namespace {

std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t at) {
  if (at + 4 > b.size()) throw FormatError("IDX header truncated at byte offset " + std::to_string(at));
  return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) | (std::uint32_t(b[at + 2]) << 8) |
         std::uint32_t(b[at + 3]);
}

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& in) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw Error("zlib init failed");
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> chunk(1 << 20);
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = uInt(in.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk.data();
    zs.avail_out = uInt(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      const auto at = zs.total_in;
      inflateEnd(&zs);
      throw FormatError("corrupt gzip stream at byte offset " + std::to_string(at));
    }
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
    if (rc != Z_STREAM_END && zs.avail_in == 0 && zs.avail_out != 0) {
      const auto at = zs.total_in;
      inflateEnd(&zs);
      throw FormatError("truncated gzip stream at byte offset " + std::to_string(at));
    }
  }
  inflateEnd(&zs);
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

std::vector<std::uint8_t> read_maybe_gzip(const fs::path& path) {
  auto bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) return gunzip(bytes);
  return bytes;
}

std::vector<Image> decode_idx_images(std::span<const std::uint8_t> bytes) {
  const std::uint32_t magic = be32(bytes, 0);
  if (magic != kIdxImagesMagic) {
    std::ostringstream msg;
    msg << "IDX images: bad magic 0x" << std::hex << magic << " at byte offset 0 (expected 0x803)";
    throw FormatError(msg.str());
  }
  const std::uint32_t count = be32(bytes, 4);
  const std::uint32_t rows = be32(bytes, 8);
  const std::uint32_t cols = be32(bytes, 12);
  const std::size_t pixels = std::size_t(rows) * cols;
  const std::size_t need = 16 + std::size_t(count) * pixels;
  if (bytes.size() < need) {
    throw FormatError("IDX images: payload truncated at byte offset " + std::to_string(bytes.size()) + " (need " +
                      std::to_string(need) + ")");
  }
  std::vector<Image> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Image img(1, int(rows), int(cols));
    const std::uint8_t* src = bytes.data() + 16 + std::size_t(i) * pixels;
    for (std::size_t p = 0; p < pixels; ++p) img.data()[Eigen::Index(p)] = src[p] / 255.0;
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<int> decode_idx_labels(std::span<const std::uint8_t> bytes) {
  const std::uint32_t magic = be32(bytes, 0);
  if (magic != kIdxLabelsMagic) {
    std::ostringstream msg;
    msg << "IDX labels: bad magic 0x" << std::hex << magic << " at byte offset 0 (expected 0x801)";
    throw FormatError(msg.str());
  }
  const std::uint32_t count = be32(bytes, 4);
  if (bytes.size() < 8 + std::size_t(count)) {
    throw FormatError("IDX labels: payload truncated at byte offset " + std::to_string(bytes.size()));
  }
  return std::vector<int>(bytes.begin() + 8, bytes.begin() + 8 + count);
}

LabeledSet load_mnist(const fs::path& images_path, const fs::path& labels_path) {
  LabeledSet set;
  set.images = decode_idx_images(read_maybe_gzip(images_path));
  set.labels = decode_idx_labels(read_maybe_gzip(labels_path));
  if (set.images.size() != set.labels.size()) {
    throw FormatError("IDX image count " + std::to_string(set.images.size()) + " != label count " +
                      std::to_string(set.labels.size()) + " (header byte offset 4)");
  }
  return set;
}

LabeledSet load_png_corpus(const fs::path& dir) {
  std::ifstream in(dir / "labels.csv");
  if (!in) throw FormatError("missing labels.csv in " + dir.string());
  LabeledSet set;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("labels.csv line " + std::to_string(line_no) + ": missing comma");
    const std::string name = trim(line.substr(0, comma));
    const std::string category = trim(line.substr(comma + 1));
    if (line_no == 1 && name == "filename") continue;
    int label = 0;
    try {
      std::size_t used = 0;
      label = std::stoi(category, &used);
      if (used != category.size()) throw std::invalid_argument(category);
    } catch (const std::exception&) {
      throw FormatError("labels.csv line " + std::to_string(line_no) + ": category '" + category +
                        "' is not an integer");
    }
    set.push_back(io::read_png(dir / name), label);
  }
  return set;
}

void save_png_corpus(const fs::path& dir, const LabeledSet& corpus) {
  fs::create_directories(dir);
  std::ostringstream csv;
  csv << "filename,category\n";
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%06zu.png", i);
    io::write_png(dir / name, corpus.images[i]);
    csv << name << ',' << corpus.labels[i] << '\n';
  }
  write_file_atomic(dir / "labels.csv", csv.str());
}

// ----------------------------------------------------------- synthetic corpus

namespace {

struct Painter {
  Image& img;
  std::array<double, 3> fg;

  void blend(int y, int x, double alpha) {
    if (y < 0 || x < 0 || y >= img.height() || x >= img.width()) return;
    for (int c = 0; c < 3; ++c) img.at(c, y, x) = (1 - alpha) * img.at(c, y, x) + alpha * fg[std::size_t(c)];
  }
};

// Coverage of shape `cls` at normalized coordinates (u,v) in [-1,1]^2 already
// rotated into the shape frame; `p` is a per-sample shape parameter in [0,1].
double coverage(int cls, double u, double v, double p) {
  const double r = std::hypot(u, v);
  switch (cls) {
    case 0: return r < 0.75 ? 1.0 : 0.0;                                           // disk
    case 1: return std::max(std::abs(u), std::abs(v)) < 0.65 ? 1.0 : 0.0;          // square
    case 2: return (v < 0.6 && v > -0.7 + 2.0 * std::abs(u) * 1.1) ? 1.0 : 0.0;    // triangle
    case 3: return (r < 0.8 && r > 0.45) ? 1.0 : 0.0;                              // ring
    case 4: return std::fmod(v + 2.0 + p, 0.5) < 0.25 && std::abs(u) < 0.85 && std::abs(v) < 0.85 ? 1.0 : 0.0;
    case 5: return std::fmod(u + 2.0 + p, 0.5) < 0.25 && std::abs(u) < 0.85 && std::abs(v) < 0.85 ? 1.0 : 0.0;
    case 6: return (std::abs(u) < 0.2 || std::abs(v) < 0.2) && r < 0.85 ? 1.0 : 0.0;  // plus
    case 7: {                                                                      // checkerboard
      if (std::abs(u) > 0.85 || std::abs(v) > 0.85) return 0.0;
      const int a = int(std::floor((u + 2.0) / 0.425));
      const int b = int(std::floor((v + 2.0) / 0.425));
      return ((a + b) & 1) ? 1.0 : 0.0;
    }
    case 8: return (std::abs(u - v) < 0.22 || std::abs(u + v) < 0.22) && r < 0.9 ? 1.0 : 0.0;  // X
    case 9: {                                                                      // two dots
      const double d1 = std::hypot(u - 0.4, v), d2 = std::hypot(u + 0.4, v);
      return (d1 < 0.3 || d2 < 0.3) ? 1.0 : 0.0;
    }
    default: return 0.0;
  }
}

}  // namespace

LabeledSet synthetic_color_corpus(int per_class, std::uint64_t seed, int size) {
  if (per_class < 1 || size < 8) throw InvalidInput("corpus needs per_class >= 1 and size >= 8");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  LabeledSet set;
  for (int i = 0; i < per_class; ++i) {
    for (int cls = 0; cls < 10; ++cls) {
      Image img(3, size, size);
      // Background: two-color linear gradient.
      std::array<double, 3> bg0{}, bg1{}, fg{};
      for (auto& c : bg0) c = unit(rng);
      for (auto& c : bg1) c = unit(rng);
      // Foreground far enough from the background mean to stay visible.
      do {
        for (auto& c : fg) c = unit(rng);
      } while (std::abs((fg[0] + fg[1] + fg[2]) - (bg0[0] + bg0[1] + bg0[2] + bg1[0] + bg1[1] + bg1[2]) / 2) < 0.45);
      const double gdir = unit(rng) * 2 * std::numbers::pi;
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          const double t = 0.5 + 0.5 * ((x - size / 2.0) * std::cos(gdir) + (y - size / 2.0) * std::sin(gdir)) / size;
          for (int c = 0; c < 3; ++c) {
            img.at(c, y, x) = (1 - t) * bg0[std::size_t(c)] + t * bg1[std::size_t(c)];
          }
        }
      }
      const double scale = size * (0.28 + 0.14 * unit(rng));
      const double cx = size / 2.0 + (unit(rng) - 0.5) * size * 0.25;
      const double cy = size / 2.0 + (unit(rng) - 0.5) * size * 0.25;
      const double angle = (unit(rng) - 0.5) * 0.6;
      const double param = unit(rng);
      Painter painter{img, fg};
      constexpr int ss = 3;  // supersampling
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          double cover = 0.0;
          for (int sy = 0; sy < ss; ++sy) {
            for (int sx = 0; sx < ss; ++sx) {
              const double px = (x + (sx + 0.5) / ss - cx) / scale;
              const double py = (y + (sy + 0.5) / ss - cy) / scale;
              const double u = px * std::cos(angle) + py * std::sin(angle);
              const double v = -px * std::sin(angle) + py * std::cos(angle);
              cover += coverage(cls, u, v, param);
            }
          }
          if (cover > 0) painter.blend(y, x, cover / (ss * ss));
        }
      }
      const double sigma = 0.04 + 0.06 * unit(rng);
      for (Eigen::Index p = 0; p < img.size(); ++p) img.data()[p] += sigma * noise(rng);
      img.clamp01();
      set.push_back(std::move(img), cls);
    }
  }
  return set;
}

}  // namespace acaptcha::captcha
