#include "acaptcha/net/ensemble.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace acaptcha::net {

std::vector<std::size_t> ensemble_quota(std::size_t n, std::size_t pairs, double fraction) {
  if (pairs == 0) throw InvalidInput("ensemble training needs at least one donor and one generator");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidInput("augmentation fraction must be in (0, 1]");
  const auto per = std::size_t(std::llround(double(n) * fraction));
  std::vector<std::size_t> quota(pairs, per);
  if (per * pairs > n) {
    const std::size_t base = n / pairs;
    const std::size_t extra = n % pairs;
    for (std::size_t i = 0; i < pairs; ++i) quota[i] = base + (i < extra ? 1 : 0);
  }
  return quota;
}

EnsembleTrained train_ensemble_adversarial(const LabeledSet& train, Architecture arch,
                                           std::span<const Classifier> donors,
                                           std::span<const advgen::Generator> generators, const TrainConfig& cfg,
                                           const advgen::GeneratorConfig& gen_cfg, const LabeledSet* test,
                                           int num_classes) {
  cfg.validate();
  if (donors.empty()) throw InvalidInput("ensemble training needs at least one donor model");
  if (generators.empty()) throw InvalidInput("ensemble training needs at least one generator");
  if (train.empty()) throw InvalidInput("training set is empty");
  const Shape shape = train.images.front().shape();
  for (std::size_t d = 0; d < donors.size(); ++d) {
    if (donors[d].input_shape() != shape) {
      throw InvalidInput("donor " + std::to_string(d) + " expects " + to_string(donors[d].input_shape()) +
                         " but the training set has " + to_string(shape));
    }
    if (!donors[d].differentiable()) throw UnsupportedModel("donor " + std::to_string(d) + " has no gradients");
  }
  double fraction = 1.0;
  if (const auto* e = std::get_if<EnsembleAdversarial>(&cfg.defense)) fraction = e->fraction;

  const auto quota = ensemble_quota(train.size(), donors.size() * generators.size(), fraction);
  LabeledSet augmented = train;
  EnsembleReport aug;
  aug.clean = train.size();
  std::mt19937_64 rng(cfg.seed ^ 0xE45EULL);
  std::vector<std::size_t> order(train.size());
  std::size_t pair = 0;
  for (const auto& donor : donors) {
    for (const auto g : generators) {
      advgen::GeneratorConfig gc = gen_cfg;
      gc.generator = g;
      // Fresh partial shuffle per pair so pairs draw different samples.
      std::iota(order.begin(), order.end(), std::size_t{0});
      const std::size_t take = quota[pair++];
      for (std::size_t i = 0; i < take; ++i) {
        std::swap(order[i], order[i + std::size_t(rng() % (order.size() - i))]);
        const std::size_t k = order[i];
        const advgen::CharResult r = advgen::is_text_generator(g)
                                         ? advgen::generate_char(donor, train.images[k], train.labels[k], gc)
                                         : advgen::generate_image(donor, train.images[k], train.labels[k], gc);
        aug.fooled += r.success;
        augmented.push_back(r.image, train.labels[k]);
        ++aug.adversarial;
      }
    }
  }

  TrainConfig plain = cfg;
  plain.defense = NoDefense{};
  Trained t = train_classifier(augmented, arch, plain, test, num_classes);
  return {std::move(t.model), t.report, aug};
}

}  // namespace acaptcha::net
