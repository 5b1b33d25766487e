#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "acaptcha/image.hpp"

namespace acaptcha::net {

namespace detail {
class Network;
}

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Stable numeric ids; they are written into checkpoints.
enum class Architecture : std::uint32_t {
  lenet = 0,
  maxout = 1,
  nin = 2,
  linear_svm = 3,
  knn = 4,
};

std::string_view to_string(Architecture arch);
// Accepts "lenet", "maxout", "nin", "svm"/"linear_svm", "knn".
Architecture parse_architecture(std::string_view name);

struct InputEncoding {
  enum class Kind : std::uint32_t { raw = 0, thermometer = 1 };
  Kind kind = Kind::raw;
  int levels = 0;

  static InputEncoding raw() { return {}; }
  static InputEncoding thermometer(int levels) { return {Kind::thermometer, levels}; }
  friend bool operator==(const InputEncoding&, const InputEncoding&) = default;
};

// l-level thermometer code: output channel c*l + (k-1) holds 1 iff pixel > k/l,
// for k = 1..l-1; the last channel holds 1 iff the pixel is saturated (>= 1).
Image thermometer_encode(const Image& x, int levels);

// Softmax of z/T.
Vector softmax(const Vector& logits, double temperature = 1.0);

// Trained model. Values are immutable after training and safe to share across
// threads for inference and gradient queries.
class Classifier {
 public:
  // Builds the fixed layer stack for `arch` and initializes weights from seed.
  Classifier(Architecture arch, Shape input_shape, int num_classes,
             InputEncoding encoding = InputEncoding::raw(), std::uint64_t init_seed = 0);
  // Reference-set classifier; stores a copy of refs.
  static Classifier knn(LabeledSet refs, int num_classes, int k = 5);

  Classifier(const Classifier& other);
  Classifier& operator=(const Classifier& other);
  Classifier(Classifier&&) noexcept;
  Classifier& operator=(Classifier&&) noexcept;
  ~Classifier();

  Architecture architecture() const { return arch_; }
  const Shape& input_shape() const { return input_shape_; }
  int num_classes() const { return num_classes_; }
  const InputEncoding& encoding() const { return encoding_; }
  double temperature() const { return temperature_; }
  void set_temperature(double t);
  bool differentiable() const { return arch_ != Architecture::knn; }
  int neighbors() const { return knn_k_; }

  // Z(x): pre-softmax outputs. For KNN these are neighbor vote counts.
  Vector logits(const Image& x) const;
  // Columns are per-image logits.
  Matrix logits(std::span<const Image> xs) const;
  // F(x) = softmax(Z(x) / T).
  Vector probabilities(const Image& x) const;
  // C(x) = argmax, ties to the smallest index.
  int predict(const Image& x) const;
  std::vector<int> predict(std::span<const Image> xs) const;

  // dZ(x)_class / dx.
  Image input_gradient(const Image& x, int class_index) const;
  // d(weights . Z(x)) / dx; optionally returns Z(x) from the same pass.
  Image input_gradient(const Image& x, const Vector& logit_weights, Vector* logits_out = nullptr) const;

  // Flat parameter view used by training and checkpoints.
  std::size_t parameter_count() const;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> values);

  // KNN reference set (empty for other architectures).
  const LabeledSet& references() const { return refs_; }
  const Matrix& reference_matrix() const { return ref_matrix_; }

  // Raw layer stack access for the trainer.
  detail::Network& network() { return *net_; }
  const detail::Network& network() const { return *net_; }

  // Encodes and flattens images into a (features x batch) matrix.
  Matrix encode_batch(std::span<const Image> xs) const;

 private:
  Classifier() = default;
  void check_input(const Image& x) const;
  Vector knn_votes(const Image& x, int k) const;

  friend int knn_predict(const Classifier& model, const Image& x, int k);

  Architecture arch_ = Architecture::lenet;
  Shape input_shape_{};
  int num_classes_ = 0;
  InputEncoding encoding_{};
  double temperature_ = 1.0;
  std::unique_ptr<detail::Network> net_;
  // KNN state
  LabeledSet refs_;
  Matrix ref_matrix_;
  Vector ref_sq_norms_;
  int knn_k_ = 0;
};

// Majority label among the k nearest references (Euclidean); ties go to the
// smallest class index.
int knn_predict(const Classifier& model, const Image& x, int k);

}  // namespace acaptcha::net
