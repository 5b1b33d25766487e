#pragma once

// Lazily loaded MNIST slices and a small trained LeNet shared by the suites
// that need a realistic model. Training is deterministic, so every suite sees
// the same weights.

#include "acaptcha/captcha/dataset.hpp"
#include "acaptcha/net/train.hpp"
#include "support.hpp"

namespace testing {

inline const acaptcha::LabeledSet& mnist_train() {
  static const acaptcha::LabeledSet set = acaptcha::captcha::load_mnist(
      data_dir() / "mnist/train-images-idx3-ubyte.gz", data_dir() / "mnist/train-labels-idx1-ubyte.gz");
  return set;
}

inline const acaptcha::LabeledSet& mnist_test() {
  static const acaptcha::LabeledSet set = acaptcha::captcha::load_mnist(
      data_dir() / "mnist/t10k-images-idx3-ubyte.gz", data_dir() / "mnist/t10k-labels-idx1-ubyte.gz");
  return set;
}

// About 0.95 test accuracy after a few seconds of training.
inline const acaptcha::net::Classifier& small_lenet() {
  static const acaptcha::net::Classifier model = [] {
    acaptcha::net::TrainConfig cfg;
    cfg.rounds = 600;
    cfg.seed = 1;
    const auto train = mnist_train().slice(0, 4000);
    return acaptcha::net::train_classifier(train, acaptcha::net::Architecture::lenet, cfg).model;
  }();
  return model;
}

}  // namespace testing
