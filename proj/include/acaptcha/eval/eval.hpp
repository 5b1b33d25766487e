#pragma once

#include <concepts>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "acaptcha/advgen/advgen.hpp"
#include "acaptcha/captcha/captcha.hpp"
#include "acaptcha/filters.hpp"
#include "acaptcha/net/classifier.hpp"

namespace acaptcha::eval {

// Anything that labels a single character image.
template <typename M>
concept SlotModel = requires(const M& m, const Image& x) {
  { m.predict(x) } -> std::convertible_to<int>;
};

// The chain runs over the whole CAPTCHA, then each slot is classified. Success
// only if every character matches.
template <SlotModel M>
bool recognize_captcha(const M& model, const captcha::CaptchaSample& c, const filters::PreprocChain& chain) {
  if constexpr (std::same_as<M, net::Classifier>) {
    const Shape& s = model.input_shape();
    if (c.length() == 0 || s.height != c.image.height() || s.width != c.slot_width() ||
        s.channels != c.image.channels()) {
      throw InvalidInput("model expects " + to_string(s) + " but CAPTCHA slots are " +
                         std::to_string(c.image.channels()) + "x" + std::to_string(c.image.height()) + "x" +
                         std::to_string(c.length() ? c.slot_width() : 0));
    }
  }
  const captcha::CaptchaSample pre{filters::apply_chain(c.image, chain), c.label};
  for (int i = 0; i < pre.length(); ++i) {
    if (model.predict(pre.slot(i)) != c.label[std::size_t(i)] - '0') return false;
  }
  return true;
}

template <SlotModel M>
double sar(const M& model, std::span<const captcha::CaptchaSample> set, const filters::PreprocChain& chain) {
  if (set.empty()) throw InvalidInput("SAR of an empty set is undefined");
  std::size_t ok = 0;
  for (const auto& c : set) ok += recognize_captcha(model, c, chain);
  return double(ok) / double(set.size());
}

// Image challenges: solved when the model's top-1 category for the
// (preprocessed) source equals the source category.
bool solve_image_challenge(const net::Classifier& model, const captcha::ImageChallenge& ch,
                           const filters::PreprocChain& chain);
double image_sar(const net::Classifier& model, std::span<const captcha::ImageChallenge> set,
                 const filters::PreprocChain& chain);
// Same metric over bare labeled images.
double image_sar(const net::Classifier& model, std::span<const Image> images, std::span<const int> labels,
                 const filters::PreprocChain& chain);

inline constexpr std::string_view kNormal = "normal";  // generator id of untouched sets
inline constexpr std::string_view kNoModel = "-";

struct SarCell {
  std::string generator;
  std::string gen_model;
  std::string attack_model;
  std::string chain;  // canonical chain string
  std::size_t set_size = 0;
  double sar = 0.0;
  std::uint64_t run_seed = 0;
};

struct SarReport {
  std::vector<std::string> generators;
  std::vector<std::string> gen_models;
  std::vector<std::string> attack_models;
  std::vector<std::string> chains;
  // Row-major over (generator, gen_model, attack_model, chain).
  std::vector<SarCell> cells;
  std::vector<std::uint64_t> seeds;
  std::string created;  // ISO-8601 UTC, informational only

  std::size_t index(std::size_t g, std::size_t gm, std::size_t am, std::size_t ch) const;
  const SarCell& at(std::string_view generator, std::string_view gen_model, std::string_view attack_model,
                    std::string_view chain) const;
  // Throws if the cell count or any value breaks the report invariants.
  void validate() const;
};

struct MatrixRequest {
  std::vector<std::string> generators;  // generator ids or "normal"
  std::vector<std::string> gen_models;
  std::vector<std::string> attack_models;
  std::vector<std::string> chains;
  std::size_t set_size = 100;
  std::uint64_t seed = 0;
  int runs = 3;
  int length = 4;
};

using ModelZoo = std::map<std::string, net::Classifier, std::less<>>;

// Full Cartesian evaluation. Each run draws a fresh CAPTCHA set from `pool`
// with seed + run, attacks it per (generator, gen_model), and scores every
// (attack_model, chain); cells hold the mean over runs.
SarReport sar_matrix(const MatrixRequest& req, const ModelZoo& zoo, const LabeledSet& pool,
                     const advgen::GeneratorConfig& base = {});

// A pre-generated set: text CAPTCHAs or image challenges (exactly one filled).
struct NamedSet {
  std::string name;
  std::vector<captcha::CaptchaSample> samples;
  std::vector<captcha::ImageChallenge> challenges;
  std::uint64_t seed = 0;

  std::size_t size() const { return samples.empty() ? challenges.size() : samples.size(); }
};

// Scores pre-generated sets. The generator axis holds the set names and the
// generating-model axis a single "-" entry.
SarReport evaluate_sets(std::span<const NamedSet> sets, const ModelZoo& zoo,
                        std::span<const std::string> attack_models, std::span<const std::string> chains);

enum class ReportFormat { csv, markdown };

std::string render_report(const SarReport& r, ReportFormat format);
// Inverse of the CSV rendering.
SarReport parse_report_csv(std::string_view text);

inline constexpr std::string_view kReportHeader = "generator,gen_model,attack_model,chain,set_size,sar,run_seed";

}  // namespace acaptcha::eval
