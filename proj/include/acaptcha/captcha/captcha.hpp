#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "acaptcha/image.hpp"

namespace acaptcha::captcha {

// Text challenge: characters side by side in equal-width slots.
struct CaptchaSample {
  Image image;
  std::string label;  // one digit per slot

  int length() const { return int(label.size()); }
  int slot_width() const { return length() == 0 ? 0 : image.width() / length(); }
  int slot_offset(int i) const { return i * slot_width(); }
  Image slot(int i) const;
  void set_slot(int i, const Image& ch);
};

Image hconcat(std::span<const Image> parts);

// Concatenates ι equally sized characters; labels must be in 0..9.
CaptchaSample assemble_captcha(std::span<const Image> chars, std::span<const int> labels);
// Cuts the image at slot boundaries.
std::vector<Image> segment(const CaptchaSample& c);

// Draws `count` challenges of length ι from pool, deterministic under seed.
std::vector<CaptchaSample> random_captchas(const LabeledSet& pool, int length, std::size_t count, std::uint64_t seed);

struct ImageChallenge {
  Image source;
  std::vector<Image> candidates;  // 10
  int target_index = 0;
  int source_category = 0;
  std::vector<int> candidate_categories;
  // Corpus indices, for provenance.
  std::size_t source_id = 0;
  std::vector<std::size_t> candidate_ids;
};

inline constexpr int kCandidateCount = 10;

// Source and target share a category; nine distractors come from nine other
// distinct categories. Throws InvalidInput listing category counts when the
// corpus cannot support a challenge.
ImageChallenge build_image_challenge(const LabeledSet& corpus, std::uint64_t seed);

// One manifest.csv row: filename,label,length,generator,model,seed.
struct ManifestRow {
  std::string filename;
  std::string label;
  int length = 0;
  std::string generator;
  std::string model;
  std::uint64_t seed = 0;
  friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

std::string render_manifest(std::span<const ManifestRow> rows);
std::vector<ManifestRow> parse_manifest(std::string_view text);

struct CaptchaSet {
  std::vector<CaptchaSample> samples;
  std::vector<ManifestRow> rows;
};

// PNG per sample plus manifest.csv; every file is written atomically.
void save_captcha_set(const std::filesystem::path& dir, std::span<const CaptchaSample> samples,
                      const std::string& generator, const std::string& model, std::uint64_t seed);
CaptchaSet load_captcha_set(const std::filesystem::path& dir);

// challenges.csv: id,source,target_index,source_category,candidates,candidate_categories
// with ';'-separated lists; images stored as PNG next to it.
void save_image_challenges(const std::filesystem::path& dir, std::span<const ImageChallenge> challenges);
std::vector<ImageChallenge> load_image_challenges(const std::filesystem::path& dir);

}  // namespace acaptcha::captcha
