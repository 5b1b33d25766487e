#pragma once

#include <span>
#include <vector>

#include "acaptcha/advgen/advgen.hpp"
#include "acaptcha/net/train.hpp"

namespace acaptcha::net {

struct EnsembleReport {
  std::size_t clean = 0;
  std::size_t adversarial = 0;
  std::size_t fooled = 0;  // adversarial copies that fooled their donor
};

struct EnsembleTrained {
  Classifier model;
  TrainReport report;
  EnsembleReport augmentation;
};

// Number of adversarial copies requested per donor x generator pair for a
// training set of n samples, after capping the total at n so that one epoch
// is at most twice the clean set. Earlier pairs absorb the remainder.
std::vector<std::size_t> ensemble_quota(std::size_t n, std::size_t pairs, double fraction);

// Augments `train` with adversarial copies crafted on each donor by each
// generator (text generators attack single characters, image generators use
// their noise budget), then trains `arch` on the union. The fraction comes from
// an EnsembleAdversarial defense in cfg, 1.0 otherwise.
EnsembleTrained train_ensemble_adversarial(const LabeledSet& train, Architecture arch,
                                           std::span<const Classifier> donors,
                                           std::span<const advgen::Generator> generators, const TrainConfig& cfg,
                                           const advgen::GeneratorConfig& gen_cfg = {},
                                           const LabeledSet* test = nullptr, int num_classes = 10);

}  // namespace acaptcha::net
