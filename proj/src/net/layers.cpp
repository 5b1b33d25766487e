#include "net/layers.hpp"

#include <cmath>
#include <limits>

namespace acaptcha::net::detail {

namespace {

void he_uniform(Matrix& m, int fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / double(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(Shape in, int out_channels, int kernel, int pad)
    : in_(in), kernel_(kernel), pad_(pad) {
  const int oh = in.height + 2 * pad - kernel + 1;
  const int ow = in.width + 2 * pad - kernel + 1;
  if (oh <= 0 || ow <= 0) throw InvalidInput("convolution kernel larger than input " + to_string(in));
  out_ = Shape{out_channels, oh, ow};
  weight_ = Matrix::Zero(in.channels * kernel * kernel, out_channels);
  bias_ = Matrix::Zero(out_channels, 1);
}

void Conv2d::init(std::mt19937_64& rng) {
  he_uniform(weight_, in_.channels * kernel_ * kernel_, rng);
  bias_.setZero();
}

void Conv2d::im2col(const double* src, Matrix& cols) const {
  const int oh = out_.height, ow = out_.width;
  cols.resize(Eigen::Index(oh) * ow, Eigen::Index(in_.channels) * kernel_ * kernel_);
  for (int c = 0; c < in_.channels; ++c) {
    const double* plane = src + std::ptrdiff_t(c) * in_.plane();
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        double* col = cols.col((c * kernel_ + ky) * kernel_ + kx).data();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy + ky - pad_;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox + kx - pad_;
            const bool inside = iy >= 0 && iy < in_.height && ix >= 0 && ix < in_.width;
            col[oy * ow + ox] = inside ? plane[iy * in_.width + ix] : 0.0;
          }
        }
      }
    }
  }
}

void Conv2d::col2im(const Matrix& cols, double* dst) const {
  const int oh = out_.height, ow = out_.width;
  for (int c = 0; c < in_.channels; ++c) {
    double* plane = dst + std::ptrdiff_t(c) * in_.plane();
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        const double* col = cols.col((c * kernel_ + ky) * kernel_ + kx).data();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy + ky - pad_;
          if (iy < 0 || iy >= in_.height) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox + kx - pad_;
            if (ix < 0 || ix >= in_.width) continue;
            plane[iy * in_.width + ix] += col[oy * ow + ox];
          }
        }
      }
    }
  }
}

void Conv2d::forward(const Matrix& in, Matrix& out, Cache* cache) const {
  const Eigen::Index batch = in.cols();
  const Eigen::Index positions = out_.plane();
  out.resize(out_.size(), batch);
  Matrix cols;
  for (Eigen::Index j = 0; j < batch; ++j) {
    im2col(in.col(j).data(), cols);
    Eigen::Map<Matrix> dst(out.col(j).data(), positions, out_.channels);
    dst.noalias() = cols * weight_;
    dst.rowwise() += bias_.col(0).transpose();
  }
  if (cache) cache->input = in;
}

void Conv2d::backward(const Cache& cache, const Matrix& grad_out, Matrix* grad_in,
                      std::span<Matrix> param_grads) const {
  const Eigen::Index batch = grad_out.cols();
  const Eigen::Index positions = out_.plane();
  if (grad_in) grad_in->setZero(in_.size(), batch);
  Matrix cols, dcols;
  for (Eigen::Index j = 0; j < batch; ++j) {
    Eigen::Map<const Matrix> g(grad_out.col(j).data(), positions, out_.channels);
    if (!param_grads.empty()) {
      im2col(cache.input.col(j).data(), cols);
      param_grads[0].noalias() += cols.transpose() * g;
      param_grads[1] += g.colwise().sum().transpose();
    }
    if (grad_in) {
      dcols.noalias() = g * weight_.transpose();
      col2im(dcols, grad_in->col(j).data());
    }
  }
}

// ----------------------------------------------------------------- Dense

Dense::Dense(Shape in, int outputs) : in_(in), outputs_(outputs) {
  weight_ = Matrix::Zero(outputs, in.size());
  bias_ = Matrix::Zero(outputs, 1);
}

void Dense::init(std::mt19937_64& rng) {
  he_uniform(weight_, in_.size(), rng);
  bias_.setZero();
}

void Dense::forward(const Matrix& in, Matrix& out, Cache* cache) const {
  out.noalias() = weight_ * in;
  out.colwise() += bias_.col(0);
  if (cache) cache->input = in;
}

void Dense::backward(const Cache& cache, const Matrix& grad_out, Matrix* grad_in,
                     std::span<Matrix> param_grads) const {
  if (!param_grads.empty()) {
    param_grads[0].noalias() += grad_out * cache.input.transpose();
    param_grads[1] += grad_out.rowwise().sum();
  }
  if (grad_in) grad_in->noalias() = weight_.transpose() * grad_out;
}

// ------------------------------------------------------------------ Relu

void Relu::forward(const Matrix& in, Matrix& out, Cache* cache) const {
  out = in.cwiseMax(0.0);
  if (cache) cache->input = in;
}

void Relu::backward(const Cache& cache, const Matrix& grad_out, Matrix* grad_in,
                    std::span<Matrix>) const {
  if (grad_in) *grad_in = (cache.input.array() > 0.0).select(grad_out, 0.0);
}

// -------------------------------------------------------------- MaxPool2

MaxPool2::MaxPool2(Shape in) : in_(in), out_{in.channels, in.height / 2, in.width / 2} {
  if (out_.height == 0 || out_.width == 0) throw InvalidInput("pooling input too small: " + to_string(in));
}

void MaxPool2::forward(const Matrix& in, Matrix& out, Cache* cache) const {
  const Eigen::Index batch = in.cols();
  out.resize(out_.size(), batch);
  if (cache) cache->index.assign(std::size_t(out_.size() * batch), 0);
  for (Eigen::Index j = 0; j < batch; ++j) {
    const double* src = in.col(j).data();
    double* dst = out.col(j).data();
    for (int c = 0; c < out_.channels; ++c) {
      for (int y = 0; y < out_.height; ++y) {
        for (int x = 0; x < out_.width; ++x) {
          int best = -1;
          double best_value = -std::numeric_limits<double>::infinity();
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const int idx = (c * in_.height + 2 * y + dy) * in_.width + 2 * x + dx;
              if (src[idx] > best_value) {
                best_value = src[idx];
                best = idx;
              }
            }
          }
          const int o = (c * out_.height + y) * out_.width + x;
          dst[o] = best_value;
          if (cache) cache->index[std::size_t(j * out_.size() + o)] = best;
        }
      }
    }
  }
}

void MaxPool2::backward(const Cache& cache, const Matrix& grad_out, Matrix* grad_in,
                        std::span<Matrix>) const {
  if (!grad_in) return;
  const Eigen::Index batch = grad_out.cols();
  grad_in->setZero(in_.size(), batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    for (int o = 0; o < out_.size(); ++o) {
      (*grad_in)(cache.index[std::size_t(j * out_.size() + o)], j) += grad_out(o, j);
    }
  }
}

// ---------------------------------------------------------------- Maxout

Maxout::Maxout(Shape in, int pieces) : in_(in), pieces_(pieces) {
  if (pieces < 1 || in.channels % pieces != 0) {
    throw InvalidInput("maxout pieces must divide channel count");
  }
  out_ = Shape{in.channels / pieces, in.height, in.width};
}

void Maxout::forward(const Matrix& in, Matrix& out, Cache* cache) const {
  const Eigen::Index batch = in.cols();
  const int plane = in_.plane();
  out.resize(out_.size(), batch);
  if (cache) cache->index.assign(std::size_t(out_.size() * batch), 0);
  for (Eigen::Index j = 0; j < batch; ++j) {
    const double* src = in.col(j).data();
    for (int c = 0; c < out_.channels; ++c) {
      for (int p = 0; p < plane; ++p) {
        int best = (c * pieces_) * plane + p;
        for (int k = 1; k < pieces_; ++k) {
          const int idx = (c * pieces_ + k) * plane + p;
          if (src[idx] > src[best]) best = idx;
        }
        const int o = c * plane + p;
        out(o, j) = src[best];
        if (cache) cache->index[std::size_t(j * out_.size() + o)] = best;
      }
    }
  }
}

void Maxout::backward(const Cache& cache, const Matrix& grad_out, Matrix* grad_in,
                      std::span<Matrix>) const {
  if (!grad_in) return;
  const Eigen::Index batch = grad_out.cols();
  grad_in->setZero(in_.size(), batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    for (int o = 0; o < out_.size(); ++o) {
      (*grad_in)(cache.index[std::size_t(j * out_.size() + o)], j) += grad_out(o, j);
    }
  }
}

// --------------------------------------------------------- GlobalAvgPool

void GlobalAvgPool::forward(const Matrix& in, Matrix& out, Cache*) const {
  const Eigen::Index batch = in.cols();
  const int plane = in_.plane();
  out.resize(in_.channels, batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    for (int c = 0; c < in_.channels; ++c) {
      out(c, j) = in.col(j).segment(Eigen::Index(c) * plane, plane).mean();
    }
  }
}

void GlobalAvgPool::backward(const Cache&, const Matrix& grad_out, Matrix* grad_in,
                             std::span<Matrix>) const {
  if (!grad_in) return;
  const Eigen::Index batch = grad_out.cols();
  const int plane = in_.plane();
  grad_in->resize(in_.size(), batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    for (int c = 0; c < in_.channels; ++c) {
      grad_in->col(j).segment(Eigen::Index(c) * plane, plane).setConstant(grad_out(c, j) / plane);
    }
  }
}

// --------------------------------------------------------------- Network

Network::Network(const Network& other) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void Network::init(std::mt19937_64& rng) {
  for (auto& l : layers_) l->init(rng);
}

Matrix Network::forward(const Matrix& in, std::vector<Cache>* caches) const {
  if (caches) caches->assign(layers_.size(), Cache{});
  Matrix current = in;
  Matrix next;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->forward(current, next, caches ? &(*caches)[i] : nullptr);
    current.swap(next);
  }
  return current;
}

Matrix Network::backward(const std::vector<Cache>& caches, const Matrix& grad_out, bool want_input,
                         std::vector<Matrix>* param_grads) const {
  // param_grads is laid out in params() order: walk layers back to front while
  // tracking each layer's offset into it.
  std::vector<std::size_t> offsets(layers_.size() + 1, 0);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    offsets[i + 1] = offsets[i] + std::as_const(*layers_[i]).params().size();
  }
  Matrix grad = grad_out;
  Matrix grad_prev;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    std::span<Matrix> pg;
    if (param_grads && offsets[k + 1] > offsets[k]) {
      pg = std::span<Matrix>(param_grads->data() + offsets[k], offsets[k + 1] - offsets[k]);
    }
    const bool need_in = k > 0 || want_input;
    if (!need_in && pg.empty()) break;
    layers_[k]->backward(caches[k], grad, need_in ? &grad_prev : nullptr, pg);
    if (need_in) grad.swap(grad_prev);
  }
  return want_input ? grad : Matrix{};
}

std::vector<Matrix*> Network::params() {
  std::vector<Matrix*> out;
  for (auto& l : layers_) {
    for (auto* p : l->params()) out.push_back(p);
  }
  return out;
}

std::vector<const Matrix*> Network::params() const {
  std::vector<const Matrix*> out;
  for (const auto& l : layers_) {
    for (const auto* p : std::as_const(*l).params()) out.push_back(p);
  }
  return out;
}

}  // namespace acaptcha::net::detail
