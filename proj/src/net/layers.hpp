#pragma once

// Internal layer stack used by Classifier. Activations travel as
// (features x batch) column-major matrices, features flattened CHW.

#include <Eigen/Core>

#include <memory>
#include <random>
#include <span>
#include <vector>

#include "acaptcha/image.hpp"

namespace acaptcha::net::detail {

using Matrix = Eigen::MatrixXd;

struct Cache {
  Matrix input;
  std::vector<int> index;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual Shape input_shape() const = 0;
  virtual Shape output_shape() const = 0;
  virtual void forward(const Matrix& in, Matrix& out, Cache* cache) const = 0;
  // grad_in may be null; param_grads (if non-empty) is aligned with params()
  // and accumulated into.
  virtual void backward(const Cache& cache, const Matrix& grad_out, Matrix* grad_in,
                        std::span<Matrix> param_grads) const = 0;
  virtual std::vector<Matrix*> params() { return {}; }
  virtual std::vector<const Matrix*> params() const { return {}; }
  virtual void init(std::mt19937_64& /*rng*/) {}
};

class Conv2d final : public Layer {
 public:
  Conv2d(Shape in, int out_channels, int kernel, int pad = 0);
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }
  Shape input_shape() const override { return in_; }
  Shape output_shape() const override { return out_; }
  void forward(const Matrix& in, Matrix& out, Cache* cache) const override;
  void backward(const Cache& cache, const Matrix& grad_out, Matrix* grad_in,
                std::span<Matrix> param_grads) const override;
  std::vector<Matrix*> params() override { return {&weight_, &bias_}; }
  std::vector<const Matrix*> params() const override { return {&weight_, &bias_}; }
  void init(std::mt19937_64& rng) override;

 private:
  void im2col(const double* src, Matrix& cols) const;
  void col2im(const Matrix& cols, double* dst) const;

  Shape in_;
  Shape out_;
  int kernel_;
  int pad_;
  Matrix weight_;  // (in_c*k*k) x out_c
  Matrix bias_;    // out_c x 1
};

class Dense final : public Layer {
 public:
  Dense(Shape in, int outputs);
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }
  Shape input_shape() const override { return in_; }
  Shape output_shape() const override { return Shape{outputs_, 1, 1}; }
  void forward(const Matrix& in, Matrix& out, Cache* cache) const override;
  void backward(const Cache& cache, const Matrix& grad_out, Matrix* grad_in,
                std::span<Matrix> param_grads) const override;
  std::vector<Matrix*> params() override { return {&weight_, &bias_}; }
  std::vector<const Matrix*> params() const override { return {&weight_, &bias_}; }
  void init(std::mt19937_64& rng) override;

 private:
  Shape in_;
  int outputs_;
  Matrix weight_;  // outputs x inputs
  Matrix bias_;
};

class Relu final : public Layer {
 public:
  explicit Relu(Shape s) : shape_(s) {}
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(*this); }
  Shape input_shape() const override { return shape_; }
  Shape output_shape() const override { return shape_; }
  void forward(const Matrix& in, Matrix& out, Cache* cache) const override;
  void backward(const Cache& cache, const Matrix& grad_out, Matrix* grad_in,
                std::span<Matrix> param_grads) const override;

 private:
  Shape shape_;
};

// 2x2 stride-2 max pooling.
class MaxPool2 final : public Layer {
 public:
  explicit MaxPool2(Shape in);
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool2>(*this); }
  Shape input_shape() const override { return in_; }
  Shape output_shape() const override { return out_; }
  void forward(const Matrix& in, Matrix& out, Cache* cache) const override;
  void backward(const Cache& cache, const Matrix& grad_out, Matrix* grad_in,
                std::span<Matrix> param_grads) const override;

 private:
  Shape in_;
  Shape out_;
};

// Max over groups of `pieces` consecutive channels.
class Maxout final : public Layer {
 public:
  Maxout(Shape in, int pieces);
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Maxout>(*this); }
  Shape input_shape() const override { return in_; }
  Shape output_shape() const override { return out_; }
  void forward(const Matrix& in, Matrix& out, Cache* cache) const override;
  void backward(const Cache& cache, const Matrix& grad_out, Matrix* grad_in,
                std::span<Matrix> param_grads) const override;

 private:
  Shape in_;
  Shape out_;
  int pieces_;
};

class GlobalAvgPool final : public Layer {
 public:
  explicit GlobalAvgPool(Shape in) : in_(in) {}
  std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }
  Shape input_shape() const override { return in_; }
  Shape output_shape() const override { return Shape{in_.channels, 1, 1}; }
  void forward(const Matrix& in, Matrix& out, Cache* cache) const override;
  void backward(const Cache& cache, const Matrix& grad_out, Matrix* grad_in,
                std::span<Matrix> param_grads) const override;

 private:
  Shape in_;
};

// Owning, deep-copyable layer sequence.
class Network {
 public:
  Network() = default;
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    auto& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  Shape output_shape() const { return layers_.back()->output_shape(); }
  bool empty() const { return layers_.empty(); }

  void init(std::mt19937_64& rng);
  // Forward pass; fills caches when non-null (one per layer).
  Matrix forward(const Matrix& in, std::vector<Cache>* caches) const;
  // Backward pass from dLoss/dOutput. Returns dLoss/dInput when want_input is set.
  Matrix backward(const std::vector<Cache>& caches, const Matrix& grad_out, bool want_input,
                  std::vector<Matrix>* param_grads) const;

  std::vector<Matrix*> params();
  std::vector<const Matrix*> params() const;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace acaptcha::net::detail
