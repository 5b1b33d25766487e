#include "acaptcha/net/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>

#include "acaptcha/fsutil.hpp"

namespace acaptcha::net {

namespace {

constexpr char kMagic[4] = {'A', 'C', 'A', 'P'};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_ + std::size_t(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return lo | (hi << 32);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::size_t offset() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw FormatError("checkpoint truncated at byte offset " + std::to_string(pos_));
    }
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  return std::uint32_t(crc32(0L, bytes.data(), uInt(bytes.size())));
}

}  // namespace

std::vector<std::uint8_t> serialize(const Classifier& model) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, std::uint32_t(model.architecture()));
  const Shape& s = model.input_shape();
  put_u32(out, std::uint32_t(s.channels));
  put_u32(out, std::uint32_t(s.height));
  put_u32(out, std::uint32_t(s.width));
  put_u32(out, std::uint32_t(model.num_classes()));
  put_u32(out, std::uint32_t(model.encoding().kind));
  put_u32(out, std::uint32_t(model.encoding().levels));
  put_f32(out, float(model.temperature()));
  put_u32(out, std::uint32_t(model.neighbors()));

  if (model.architecture() == Architecture::knn) {
    const auto& refs = model.reference_matrix();
    const auto& labels = model.references().labels;
    put_u64(out, std::uint64_t(refs.size()) + labels.size());
    for (Eigen::Index i = 0; i < refs.size(); ++i) put_f32(out, float(refs.data()[i]));
    for (int label : labels) put_f32(out, float(label));
  } else {
    const auto params = model.parameters();
    put_u64(out, params.size());
    for (double p : params) put_f32(out, float(p));
  }
  put_u32(out, crc_of(out));
  return out;
}

Classifier deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a checkpoint: bad magic at byte offset 0");
  }
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.subspan(bytes.size() - 4));
  if (crc_of(body) != tail.u32()) {
    throw FormatError("checkpoint CRC mismatch at byte offset " + std::to_string(bytes.size() - 4));
  }
  Reader r(body);
  r.u32();  // magic
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " at byte offset 4");
  }
  const std::uint32_t arch_id = r.u32();
  if (arch_id > std::uint32_t(Architecture::knn)) {
    throw FormatError("unknown architecture id " + std::to_string(arch_id) + " at byte offset 8");
  }
  const auto arch = Architecture(arch_id);
  Shape shape;
  shape.channels = int(r.u32());
  shape.height = int(r.u32());
  shape.width = int(r.u32());
  const int classes = int(r.u32());
  InputEncoding enc;
  const std::uint32_t kind = r.u32();
  if (kind > 1) throw FormatError("unknown input encoding at byte offset 28");
  enc.kind = InputEncoding::Kind(kind);
  enc.levels = int(r.u32());
  const float temperature = r.f32();
  const int k = int(r.u32());
  const std::uint64_t count = r.u64();
  const std::size_t blob_at = r.offset();
  if (count > (body.size() - blob_at) / 4) {
    throw FormatError("parameter blob truncated at byte offset " + std::to_string(blob_at));
  }
  std::vector<double> values(count);
  for (auto& v : values) v = double(r.f32());
  if (r.offset() != body.size()) {
    throw FormatError("trailing bytes after parameter blob at byte offset " + std::to_string(r.offset()));
  }

  if (arch == Architecture::knn) {
    const std::uint64_t features = std::uint64_t(shape.size());
    if (features == 0 || count % (features + 1) != 0) {
      throw FormatError("KNN reference blob size inconsistent with shape");
    }
    const std::size_t n = std::size_t(count / (features + 1));
    LabeledSet refs;
    for (std::size_t i = 0; i < n; ++i) {
      Image img(shape);
      std::copy_n(values.data() + i * features, features, img.data().data());
      refs.push_back(std::move(img), int(values[n * features + i]));
    }
    Classifier model = Classifier::knn(std::move(refs), classes, k);
    model.set_temperature(temperature);
    return model;
  }
  Classifier model(arch, shape, classes, enc, 0);
  model.set_parameters(values);
  model.set_temperature(temperature);
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const Classifier& model) {
  write_file_atomic(path, serialize(model));
}

Classifier load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return deserialize(bytes);
}

}  // namespace acaptcha::net
