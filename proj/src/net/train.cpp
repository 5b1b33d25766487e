#include "acaptcha/net/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "net/layers.hpp"

namespace acaptcha::net {

namespace {

constexpr double kSvmL2 = 1e-4;

void check_dataset(const LabeledSet& data, const Shape& shape, int num_classes) {
  if (data.empty()) throw InvalidInput("training set is empty");
  if (data.images.size() != data.labels.size()) throw InvalidInput("image/label count mismatch");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.images[i].shape() != shape) {
      throw InvalidInput("sample " + std::to_string(i) + " has shape " + to_string(data.images[i].shape()) +
                         ", expected " + to_string(shape));
    }
    if (data.labels[i] < 0 || data.labels[i] >= num_classes) {
      throw InvalidInput("sample " + std::to_string(i) + " label " + std::to_string(data.labels[i]) +
                         " outside [0," + std::to_string(num_classes) + ")");
    }
  }
}

// Shuffled epoch order, refilled deterministically when exhausted.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    reshuffle();
  }
  std::vector<std::size_t> next(std::size_t batch) {
    std::vector<std::size_t> out;
    out.reserve(batch);
    while (out.size() < batch) {
      if (pos_ == order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    // Fisher-Yates with explicit draws; std::shuffle's exact sequence is
    // implementation-defined.
    for (std::size_t i = order_.size(); i > 1; --i) {
      std::swap(order_[i - 1], order_[std::size_t(rng_() % i)]);
    }
    pos_ = 0;
  }
  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

struct Adam {
  explicit Adam(const std::vector<Matrix*>& params, double lr) : lr(lr) {
    for (auto* p : params) {
      m.push_back(Matrix::Zero(p->rows(), p->cols()));
      v.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i].cwiseProduct(grads[i]);
      params[i]->array() -= lr * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + eps);
    }
  }
  double lr;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int t = 0;
  std::vector<Matrix> m, v;
};


}  // namespace

void TrainConfig::validate() const {
  if (rounds < 1) throw InvalidInput("rounds must be >= 1");
  if (batch_size < 1) throw InvalidInput("batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidInput("learning rate must be positive");
  if (const auto* d = std::get_if<Distillation>(&defense); d && !(d->temperature > 0.0)) {
    throw InvalidInput("distillation temperature must be positive");
  }
  if (const auto* t = std::get_if<ThermometerDefense>(&defense); t && t->levels < 1) {
    throw InvalidInput("thermometer level count must be >= 1");
  }
}

double accuracy(const Classifier& model, const LabeledSet& data, std::size_t limit) {
  if (data.empty()) return 0.0;
  const std::size_t n = limit == 0 ? data.size() : std::min(limit, data.size());
  const auto pred = model.predict(std::span<const Image>(data.images.data(), n));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) correct += pred[i] == data.labels[i];
  return double(correct) / double(n);
}

double fit(Classifier& model, const LabeledSet& train, const TrainConfig& cfg, double temperature,
           const Matrix* soft_targets) {
  cfg.validate();
  if (!model.differentiable()) throw UnsupportedModel("fit requires a differentiable model");
  check_dataset(train, model.input_shape(), model.num_classes());
  if (soft_targets && (soft_targets->cols() != Eigen::Index(train.size()) ||
                       soft_targets->rows() != model.num_classes())) {
    throw InvalidInput("soft target matrix has wrong dimensions");
  }
  const bool hinge = model.architecture() == Architecture::linear_svm;
  auto& net = model.network();
  auto params = net.params();
  Adam adam(params, cfg.learning_rate);
  BatchSampler sampler(train.size(), cfg.seed * 0x9E3779B97F4A7C15ULL + 1);
  std::vector<Matrix> grads(params.size());
  std::vector<detail::Cache> caches;
  std::vector<Image> batch_images;
  const int classes = model.num_classes();
  double last_loss = 0.0;

  for (int step = 0; step < cfg.rounds; ++step) {
    const auto idx = sampler.next(std::size_t(cfg.batch_size));
    batch_images.clear();
    for (auto i : idx) batch_images.push_back(train.images[i]);
    const Matrix input = model.encode_batch(batch_images);
    const Matrix z = net.forward(input, &caches);
    const double n = double(idx.size());

    Matrix grad_z(classes, z.cols());
    double loss = 0.0;
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      const int label = train.labels[idx[std::size_t(j)]];
      if (hinge) {
        for (int k = 0; k < classes; ++k) {
          const double y = k == label ? 1.0 : -1.0;
          const double margin = 1.0 - y * z(k, j);
          loss += std::max(0.0, margin);
          grad_z(k, j) = margin > 0.0 ? -y : 0.0;
        }
      } else {
        const Vector p = softmax(z.col(j), temperature);
        Vector target;
        if (soft_targets) {
          target = soft_targets->col(Eigen::Index(idx[std::size_t(j)]));
        } else {
          target = Vector::Unit(classes, label);
        }
        loss -= (target.array() * p.array().max(1e-300).log()).sum();
        grad_z.col(j) = (p - target) / temperature;
      }
    }
    loss /= n;
    grad_z /= n;

    for (std::size_t i = 0; i < params.size(); ++i) grads[i].setZero(params[i]->rows(), params[i]->cols());
    net.backward(caches, grad_z, false, &grads);
    if (hinge) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->cols() > 1) {
          grads[i] += kSvmL2 * *params[i];
          loss += 0.5 * kSvmL2 * params[i]->squaredNorm();
        }
      }
    }
    if (!std::isfinite(loss)) {
      throw TrainingError("training diverged: loss became non-finite at step " + std::to_string(step));
    }
    adam.step(params, grads);
    last_loss = loss;
  }
  return last_loss;
}

Trained train_classifier(const LabeledSet& train, Architecture arch, const TrainConfig& cfg, const LabeledSet* test,
                         int num_classes) {
  cfg.validate();
  if (train.empty()) throw InvalidInput("training set is empty");
  const Shape shape = train.images.front().shape();
  check_dataset(train, shape, num_classes);
  if (std::holds_alternative<Distillation>(cfg.defense)) {
    return train_distilled(train, arch, cfg, test, num_classes);
  }
  if (std::holds_alternative<EnsembleAdversarial>(cfg.defense)) {
    throw InvalidInput("ensemble adversarial training needs donor models; use train_ensemble_adversarial");
  }

  TrainReport report;
  if (arch == Architecture::knn) {
    Classifier model = Classifier::knn(train, num_classes, 5);
    report.train_accuracy = accuracy(model, train, std::min<std::size_t>(cfg.report_limit, 500));
    if (test) report.test_accuracy = accuracy(model, *test, cfg.report_limit);
    return {std::move(model), report};
  }

  InputEncoding encoding;
  if (const auto* t = std::get_if<ThermometerDefense>(&cfg.defense)) encoding = InputEncoding::thermometer(t->levels);
  Classifier model(arch, shape, num_classes, encoding, cfg.seed);
  report.final_loss = fit(model, train, cfg);
  report.rounds = cfg.rounds;
  report.train_accuracy = accuracy(model, train, cfg.report_limit);
  if (test) report.test_accuracy = accuracy(model, *test, cfg.report_limit);
  return {std::move(model), report};
}

Matrix soft_labels(const Classifier& teacher, const LabeledSet& data, double temperature) {
  const Matrix z = teacher.logits(std::span<const Image>(data.images));
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) out.col(j) = softmax(z.col(j), temperature);
  return out;
}

Trained train_distilled(const LabeledSet& train, Architecture arch, const TrainConfig& cfg, const LabeledSet* test,
                        int num_classes) {
  cfg.validate();
  const auto* d = std::get_if<Distillation>(&cfg.defense);
  const double temperature = d ? d->temperature : 1.0;
  if (arch == Architecture::knn) throw UnsupportedModel("distillation requires a differentiable model");
  if (train.empty()) throw InvalidInput("training set is empty");
  const Shape shape = train.images.front().shape();

  Classifier teacher(arch, shape, num_classes, InputEncoding::raw(), cfg.seed);
  fit(teacher, train, cfg, temperature);
  const Matrix targets = soft_labels(teacher, train, temperature);

  TrainConfig student_cfg = cfg;
  student_cfg.seed = cfg.seed + 1;
  Classifier student(arch, shape, num_classes, InputEncoding::raw(), student_cfg.seed);
  TrainReport report;
  report.final_loss = fit(student, train, student_cfg, temperature, &targets);
  report.rounds = cfg.rounds;
  report.train_accuracy = accuracy(student, train, cfg.report_limit);
  if (test) report.test_accuracy = accuracy(student, *test, cfg.report_limit);
  return {std::move(student), report};
}

}  // namespace acaptcha::net
