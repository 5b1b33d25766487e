#include "acaptcha/net/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "net/layers.hpp"

namespace acaptcha::net {

using detail::Network;

std::string_view to_string(Architecture arch) {
  switch (arch) {
    case Architecture::lenet: return "lenet";
    case Architecture::maxout: return "maxout";
    case Architecture::nin: return "nin";
    case Architecture::linear_svm: return "svm";
    case Architecture::knn: return "knn";
  }
  return "unknown";
}

Architecture parse_architecture(std::string_view name) {
  if (name == "lenet") return Architecture::lenet;
  if (name == "maxout") return Architecture::maxout;
  if (name == "nin") return Architecture::nin;
  if (name == "svm" || name == "linear_svm") return Architecture::linear_svm;
  if (name == "knn") return Architecture::knn;
  throw InvalidInput("unknown architecture '" + std::string(name) +
                     "' (expected lenet, maxout, nin, svm, knn)");
}

Image thermometer_encode(const Image& x, int levels) {
  if (levels < 1) throw InvalidInput("thermometer level count must be >= 1");
  Image out(x.channels() * levels, x.height(), x.width());
  const int plane = x.shape().plane();
  for (int c = 0; c < x.channels(); ++c) {
    for (int k = 1; k <= levels; ++k) {
      const double threshold = double(k) / double(levels);
      auto dst = out.data().segment(Eigen::Index(c * levels + k - 1) * plane, plane);
      auto src = x.data().segment(Eigen::Index(c) * plane, plane);
      // The top level can never be exceeded, so it fires on saturated pixels.
      if (k == levels) {
        dst = (src >= 1.0).cast<double>();
      } else {
        dst = (src > threshold).cast<double>();
      }
    }
  }
  return out;
}

Vector softmax(const Vector& logits, double temperature) {
  if (!(temperature > 0.0)) throw InvalidInput("softmax temperature must be positive");
  const Vector scaled = logits / temperature;
  const Eigen::ArrayXd e = (scaled.array() - scaled.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

namespace {

Shape encoded_shape(Shape in, const InputEncoding& enc) {
  if (enc.kind == InputEncoding::Kind::thermometer) in.channels *= enc.levels;
  return in;
}

void build(Network& net, Architecture arch, Shape in, int classes) {
  using namespace detail;
  switch (arch) {
    case Architecture::lenet: {
      auto& c1 = net.add<Conv2d>(in, 6, 5);
      net.add<Relu>(c1.output_shape());
      auto& p1 = net.add<MaxPool2>(c1.output_shape());
      auto& c2 = net.add<Conv2d>(p1.output_shape(), 16, 5);
      net.add<Relu>(c2.output_shape());
      auto& p2 = net.add<MaxPool2>(c2.output_shape());
      auto& d1 = net.add<Dense>(p2.output_shape(), 120);
      net.add<Relu>(d1.output_shape());
      auto& d2 = net.add<Dense>(d1.output_shape(), 84);
      net.add<Relu>(d2.output_shape());
      net.add<Dense>(d2.output_shape(), classes);
      break;
    }
    case Architecture::maxout: {
      auto& c1 = net.add<Conv2d>(in, 16, 5);
      auto& m1 = net.add<Maxout>(c1.output_shape(), 2);
      auto& p1 = net.add<MaxPool2>(m1.output_shape());
      auto& c2 = net.add<Conv2d>(p1.output_shape(), 32, 5);
      auto& m2 = net.add<Maxout>(c2.output_shape(), 2);
      auto& p2 = net.add<MaxPool2>(m2.output_shape());
      auto& d1 = net.add<Dense>(p2.output_shape(), 128);
      auto& m3 = net.add<Maxout>(d1.output_shape(), 2);
      net.add<Dense>(m3.output_shape(), classes);
      break;
    }
    case Architecture::nin: {
      auto& c1 = net.add<Conv2d>(in, 12, 5);
      net.add<Relu>(c1.output_shape());
      auto& c1b = net.add<Conv2d>(c1.output_shape(), 12, 1);
      net.add<Relu>(c1b.output_shape());
      auto& p1 = net.add<MaxPool2>(c1b.output_shape());
      auto& c2 = net.add<Conv2d>(p1.output_shape(), 24, 3);
      net.add<Relu>(c2.output_shape());
      auto& c2b = net.add<Conv2d>(c2.output_shape(), 24, 1);
      net.add<Relu>(c2b.output_shape());
      auto& p2 = net.add<MaxPool2>(c2b.output_shape());
      auto& c3 = net.add<Conv2d>(p2.output_shape(), classes, 1);
      net.add<GlobalAvgPool>(c3.output_shape());
      break;
    }
    case Architecture::linear_svm:
      net.add<Dense>(in, classes);
      break;
    case Architecture::knn:
      break;
  }
}

int argmax(const Vector& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return int(best);
}

}  // namespace

Classifier::Classifier(Architecture arch, Shape input_shape, int num_classes, InputEncoding encoding,
                       std::uint64_t init_seed)
    : arch_(arch),
      input_shape_(input_shape),
      num_classes_(num_classes),
      encoding_(encoding),
      net_(std::make_unique<Network>()) {
  if (num_classes < 2) throw InvalidInput("classifier needs at least two classes");
  if (input_shape.size() <= 0) throw InvalidInput("empty input shape");
  if (encoding.kind == InputEncoding::Kind::thermometer && encoding.levels < 1) {
    throw InvalidInput("thermometer level count must be >= 1");
  }
  if (arch == Architecture::knn) throw InvalidInput("use Classifier::knn for reference-set models");
  build(*net_, arch, encoded_shape(input_shape, encoding), num_classes);
  std::mt19937_64 rng(init_seed);
  net_->init(rng);
}

Classifier Classifier::knn(LabeledSet refs, int num_classes, int k) {
  if (refs.empty()) throw InvalidInput("KNN reference set is empty");
  if (k < 1) throw InvalidInput("KNN neighbor count must be >= 1");
  if (num_classes < 2) throw InvalidInput("classifier needs at least two classes");
  Classifier c;
  c.arch_ = Architecture::knn;
  c.input_shape_ = refs.images.front().shape();
  c.num_classes_ = num_classes;
  c.net_ = std::make_unique<Network>();
  c.knn_k_ = k;
  c.ref_matrix_.resize(c.input_shape_.size(), Eigen::Index(refs.size()));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs.images[i].shape() != c.input_shape_) throw InvalidInput("KNN references differ in shape");
    if (refs.labels[i] < 0 || refs.labels[i] >= num_classes) throw InvalidInput("label out of range");
    c.ref_matrix_.col(Eigen::Index(i)) = refs.images[i].data().matrix();
  }
  c.ref_sq_norms_ = c.ref_matrix_.colwise().squaredNorm().transpose();
  c.refs_ = std::move(refs);
  return c;
}

Classifier::Classifier(const Classifier& other)
    : arch_(other.arch_),
      input_shape_(other.input_shape_),
      num_classes_(other.num_classes_),
      encoding_(other.encoding_),
      temperature_(other.temperature_),
      net_(std::make_unique<Network>(*other.net_)),
      refs_(other.refs_),
      ref_matrix_(other.ref_matrix_),
      ref_sq_norms_(other.ref_sq_norms_),
      knn_k_(other.knn_k_) {}

Classifier& Classifier::operator=(const Classifier& other) {
  if (this != &other) {
    Classifier copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Classifier::Classifier(Classifier&&) noexcept = default;
Classifier& Classifier::operator=(Classifier&&) noexcept = default;
Classifier::~Classifier() = default;

void Classifier::set_temperature(double t) {
  if (!(t > 0.0)) throw InvalidInput("softmax temperature must be positive");
  temperature_ = t;
}

void Classifier::check_input(const Image& x) const {
  if (x.shape() != input_shape_) {
    throw InvalidInput("input shape " + to_string(x.shape()) + " does not match model input " +
                       to_string(input_shape_));
  }
}

Matrix Classifier::encode_batch(std::span<const Image> xs) const {
  const Shape enc = encoded_shape(input_shape_, encoding_);
  Matrix batch(enc.size(), Eigen::Index(xs.size()));
  for (std::size_t j = 0; j < xs.size(); ++j) {
    check_input(xs[j]);
    if (encoding_.kind == InputEncoding::Kind::thermometer) {
      batch.col(Eigen::Index(j)) = thermometer_encode(xs[j], encoding_.levels).data().matrix();
    } else {
      batch.col(Eigen::Index(j)) = xs[j].data().matrix();
    }
  }
  return batch;
}

Vector Classifier::knn_votes(const Image& x, int k) const {
  const Eigen::Index n = ref_matrix_.cols();
  if (k < 1) throw InvalidInput("KNN neighbor count must be >= 1");
  if (k > n) {
    throw InvalidInput("k=" + std::to_string(k) + " exceeds reference set size " + std::to_string(n));
  }
  const Eigen::VectorXd d2 = (ref_matrix_.colwise() - x.data().matrix()).colwise().squaredNorm().transpose();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return d2[a] < d2[b] || (d2[a] == d2[b] && a < b);
  });
  Vector votes = Vector::Zero(num_classes_);
  for (int i = 0; i < k; ++i) votes[refs_.labels[std::size_t(order[std::size_t(i)])]] += 1.0;
  return votes;
}

int knn_predict(const Classifier& model, const Image& x, int k) {
  if (model.arch_ != Architecture::knn) throw UnsupportedModel("knn_predict requires a KNN model");
  model.check_input(x);
  return argmax(model.knn_votes(x, k));
}

Vector Classifier::logits(const Image& x) const {
  check_input(x);
  if (arch_ == Architecture::knn) return knn_votes(x, knn_k_);
  const Matrix out = net_->forward(encode_batch(std::span(&x, 1)), nullptr);
  return out.col(0);
}

Matrix Classifier::logits(std::span<const Image> xs) const {
  if (arch_ == Architecture::knn) {
    Matrix out(num_classes_, Eigen::Index(xs.size()));
    for (std::size_t j = 0; j < xs.size(); ++j) out.col(Eigen::Index(j)) = logits(xs[j]);
    return out;
  }
  constexpr std::size_t chunk = 256;
  Matrix out(num_classes_, Eigen::Index(xs.size()));
  for (std::size_t begin = 0; begin < xs.size(); begin += chunk) {
    const std::size_t n = std::min(chunk, xs.size() - begin);
    out.middleCols(Eigen::Index(begin), Eigen::Index(n)) =
        net_->forward(encode_batch(xs.subspan(begin, n)), nullptr);
  }
  return out;
}

Vector Classifier::probabilities(const Image& x) const { return softmax(logits(x), temperature_); }

int Classifier::predict(const Image& x) const { return argmax(logits(x)); }

std::vector<int> Classifier::predict(std::span<const Image> xs) const {
  const Matrix z = logits(xs);
  std::vector<int> out(xs.size());
  for (std::size_t j = 0; j < xs.size(); ++j) out[j] = argmax(z.col(Eigen::Index(j)));
  return out;
}

Image Classifier::input_gradient(const Image& x, int class_index) const {
  if (class_index < 0 || class_index >= num_classes_) {
    throw InvalidInput("class index " + std::to_string(class_index) + " out of range");
  }
  return input_gradient(x, Vector::Unit(num_classes_, class_index));
}

Image Classifier::input_gradient(const Image& x, const Vector& logit_weights, Vector* logits_out) const {
  if (!differentiable()) throw UnsupportedModel("input gradients are undefined for KNN models");
  check_input(x);
  if (logit_weights.size() != num_classes_) throw InvalidInput("logit weight vector has wrong length");
  std::vector<detail::Cache> caches;
  const Matrix out = net_->forward(encode_batch(std::span(&x, 1)), &caches);
  if (logits_out) *logits_out = out.col(0);
  const Matrix grad = net_->backward(caches, logit_weights, true, nullptr);
  if (encoding_.kind == InputEncoding::Kind::raw) {
    return Image(input_shape_, grad.col(0).array().eval());
  }
  // Thermometer bits are step functions of the pixel; the straight-through
  // surrogate sums the gradients of a pixel's bits.
  Image g(input_shape_);
  const int plane = input_shape_.plane();
  const int levels = encoding_.levels;
  for (int c = 0; c < input_shape_.channels; ++c) {
    auto dst = g.data().segment(Eigen::Index(c) * plane, plane);
    for (int k = 0; k < levels; ++k) {
      dst += grad.col(0).segment(Eigen::Index(c * levels + k) * plane, plane).array();
    }
  }
  return g;
}

std::size_t Classifier::parameter_count() const {
  if (arch_ == Architecture::knn) return 0;
  std::size_t n = 0;
  for (const auto* p : std::as_const(*net_).params()) n += std::size_t(p->size());
  return n;
}

std::vector<double> Classifier::parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto* p : std::as_const(*net_).params()) out.insert(out.end(), p->data(), p->data() + p->size());
  return out;
}

void Classifier::set_parameters(std::span<const double> values) {
  if (values.size() != parameter_count()) {
    throw InvalidInput("parameter count mismatch: expected " + std::to_string(parameter_count()) + ", got " +
                       std::to_string(values.size()));
  }
  std::size_t offset = 0;
  for (auto* p : net_->params()) {
    std::copy_n(values.data() + offset, p->size(), p->data());
    offset += std::size_t(p->size());
  }
}

}  // namespace acaptcha::net
