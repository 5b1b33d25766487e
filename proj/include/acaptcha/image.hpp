#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <vector>

#include "acaptcha/error.hpp"

namespace acaptcha {

// Channel/height/width triple. Pixel data is always stored channel-major (CHW).
struct Shape {
  int channels = 1;
  int height = 0;
  int width = 0;

  constexpr int plane() const { return height * width; }
  constexpr int size() const { return channels * height * width; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

template <typename Scalar>
using PlaneMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename Scalar>
using ConstPlaneMap =
    Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Dense multi-channel pixel grid. Intensities live in [0,1] for images that
// come out of I/O or generators; intermediate tensors may leave that range.
template <typename Scalar>
class BasicImage {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  BasicImage() = default;
  explicit BasicImage(Shape shape, Scalar fill = Scalar(0))
      : shape_(shape), data_(Array::Constant(shape.size(), fill)) {
    if (shape.channels < 1 || shape.height < 0 || shape.width < 0) {
      throw InvalidInput("image shape must have positive channel count and non-negative extent");
    }
  }
  BasicImage(int channels, int height, int width, Scalar fill = Scalar(0))
      : BasicImage(Shape{channels, height, width}, fill) {}
  BasicImage(Shape shape, Array data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape.size()) {
      throw InvalidInput("pixel buffer length " + std::to_string(data_.size()) +
                         " does not match shape " + to_string(shape));
    }
  }

  static BasicImage gray(int height, int width, Scalar fill = Scalar(0)) {
    return BasicImage(1, height, width, fill);
  }

  const Shape& shape() const { return shape_; }
  int channels() const { return shape_.channels; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  Eigen::Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Scalar& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  Scalar at(int c, int y, int x) const { return data_[index(c, y, x)]; }
  Scalar& operator()(int y, int x) { return data_[index(0, y, x)]; }
  Scalar operator()(int y, int x) const { return data_[index(0, y, x)]; }

  Array& data() { return data_; }
  const Array& data() const { return data_; }

  PlaneMap<Scalar> plane(int c) {
    return PlaneMap<Scalar>(data_.data() + std::ptrdiff_t(c) * shape_.plane(), shape_.height,
                            shape_.width);
  }
  ConstPlaneMap<Scalar> plane(int c) const {
    return ConstPlaneMap<Scalar>(data_.data() + std::ptrdiff_t(c) * shape_.plane(),
                                 shape_.height, shape_.width);
  }

  BasicImage& clamp01() {
    data_ = data_.max(Scalar(0)).min(Scalar(1));
    return *this;
  }

  template <typename Other>
  BasicImage<Other> cast() const {
    return BasicImage<Other>(shape_, data_.template cast<Other>().eval());
  }

  friend bool operator==(const BasicImage& a, const BasicImage& b) {
    return a.shape_ == b.shape_ && (a.data_ == b.data_).all();
  }

 private:
  Eigen::Index index(int c, int y, int x) const {
    return (Eigen::Index(c) * shape_.height + y) * shape_.width + x;
  }

  Shape shape_{};
  Array data_;
};

using Image = BasicImage<double>;

// Images with integer class labels.
struct LabeledSet {
  std::vector<Image> images;
  std::vector<int> labels;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
  void push_back(Image img, int label) {
    images.push_back(std::move(img));
    labels.push_back(label);
  }
  LabeledSet slice(std::size_t begin, std::size_t end) const;
};

// Largest absolute pixel difference; throws on shape mismatch.
template <typename Scalar>
Scalar max_abs_diff(const BasicImage<Scalar>& a, const BasicImage<Scalar>& b) {
  if (a.shape() != b.shape()) throw InvalidInput("shape mismatch");
  if (a.empty()) return Scalar(0);
  return (a.data() - b.data()).abs().maxCoeff();
}

}  // namespace acaptcha
