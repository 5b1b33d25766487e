#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "acaptcha/net/classifier.hpp"

namespace acaptcha::net {

struct NoDefense {};
struct Distillation {
  double temperature = 100.0;
};
struct ThermometerDefense {
  int levels = 16;
};
// Donor models and generators are resolved by the caller; see ensemble.hpp.
struct EnsembleAdversarial {
  std::vector<std::string> donors;
  std::vector<std::string> generators;
  double fraction = 1.0;
};

using Defense = std::variant<NoDefense, Distillation, ThermometerDefense, EnsembleAdversarial>;

struct TrainConfig {
  int rounds = 5000;
  int batch_size = 50;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  Defense defense = NoDefense{};
  // Accuracy reports evaluate at most this many samples (0 = all).
  std::size_t report_limit = 2000;

  void validate() const;
};

struct TrainReport {
  double train_accuracy = 0.0;
  std::optional<double> test_accuracy;
  double final_loss = 0.0;
  int rounds = 0;
};

struct Trained {
  Classifier model;
  TrainReport report;
};

// Trains a classifier of the given architecture. Deterministic in cfg.seed.
// Distillation and thermometer defenses are honored here; ensemble adversarial
// training needs donor models and goes through train_ensemble_adversarial.
Trained train_classifier(const LabeledSet& train, Architecture arch, const TrainConfig& cfg,
                         const LabeledSet* test = nullptr, int num_classes = 10);

// Teacher at temperature T, soft labels at T, student at T. The student is
// returned with softmax temperature 1.
Trained train_distilled(const LabeledSet& train, Architecture arch, const TrainConfig& cfg,
                        const LabeledSet* test = nullptr, int num_classes = 10);

// Soft labels softmax(Z(x)/T) of `teacher` for every sample, one column each.
Matrix soft_labels(const Classifier& teacher, const LabeledSet& data, double temperature);

// Fits an already-constructed model in place. `soft_targets`, when given, has
// one probability column per sample and replaces the one-hot labels.
double fit(Classifier& model, const LabeledSet& train, const TrainConfig& cfg, double temperature = 1.0,
           const Matrix* soft_targets = nullptr);

double accuracy(const Classifier& model, const LabeledSet& data, std::size_t limit = 0);

}  // namespace acaptcha::net
