#include "acaptcha/captcha/captcha.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <sstream>

#include "acaptcha/fsutil.hpp"
#include "acaptcha/image_io.hpp"
#include "textutil.hpp"

namespace acaptcha::captcha {

namespace fs = std::filesystem;

Image CaptchaSample::slot(int i) const {
  if (i < 0 || i >= length()) throw InvalidInput("slot index out of range");
  const int w = slot_width();
  Image out(image.channels(), image.height(), w);
  for (int c = 0; c < image.channels(); ++c) out.plane(c) = image.plane(c).middleCols(slot_offset(i), w);
  return out;
}

void CaptchaSample::set_slot(int i, const Image& ch) {
  if (i < 0 || i >= length()) throw InvalidInput("slot index out of range");
  if (ch.channels() != image.channels() || ch.height() != image.height() || ch.width() != slot_width()) {
    throw InvalidInput("character shape " + to_string(ch.shape()) + " does not fit the slot");
  }
  for (int c = 0; c < image.channels(); ++c) image.plane(c).middleCols(slot_offset(i), slot_width()) = ch.plane(c);
}

Image hconcat(std::span<const Image> parts) {
  if (parts.empty()) throw InvalidInput("nothing to concatenate");
  const Shape s = parts.front().shape();
  for (const auto& p : parts) {
    if (p.shape() != s) throw InvalidInput("mismatched character sizes: " + to_string(p.shape()) + " vs " + to_string(s));
  }
  Image out(s.channels, s.height, s.width * int(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    for (int c = 0; c < s.channels; ++c) out.plane(c).middleCols(int(i) * s.width, s.width) = parts[i].plane(c);
  }
  return out;
}

CaptchaSample assemble_captcha(std::span<const Image> chars, std::span<const int> labels) {
  if (chars.empty()) throw InvalidInput("a CAPTCHA needs at least one character");
  if (chars.size() != labels.size()) throw InvalidInput("character/label count mismatch");
  CaptchaSample out;
  for (int l : labels) {
    if (l < 0 || l > 9) throw InvalidInput("character label " + std::to_string(l) + " is not a digit");
    out.label.push_back(char('0' + l));
  }
  out.image = hconcat(chars);
  return out;
}

std::vector<Image> segment(const CaptchaSample& c) {
  std::vector<Image> out;
  out.reserve(std::size_t(c.length()));
  for (int i = 0; i < c.length(); ++i) out.push_back(c.slot(i));
  return out;
}

std::vector<CaptchaSample> random_captchas(const LabeledSet& pool, int length, std::size_t count, std::uint64_t seed) {
  if (length < 1) throw InvalidInput("CAPTCHA length must be >= 1");
  if (pool.empty()) throw InvalidInput("character pool is empty");
  std::mt19937_64 rng(seed);
  std::vector<CaptchaSample> out;
  out.reserve(count);
  std::vector<Image> chars(static_cast<std::size_t>(length));
  std::vector<int> labels(static_cast<std::size_t>(length));
  for (std::size_t n = 0; n < count; ++n) {
    for (int i = 0; i < length; ++i) {
      const std::size_t pick = std::size_t(rng() % pool.size());
      chars[std::size_t(i)] = pool.images[pick];
      labels[std::size_t(i)] = pool.labels[pick];
    }
    out.push_back(assemble_captcha(chars, labels));
  }
  return out;
}

ImageChallenge build_image_challenge(const LabeledSet& corpus, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_cat;
  for (std::size_t i = 0; i < corpus.size(); ++i) by_cat[corpus.labels[i]].push_back(i);
  std::vector<int> eligible;
  for (const auto& [cat, ids] : by_cat) {
    if (ids.size() >= 2) eligible.push_back(cat);
  }
  if (eligible.empty() || by_cat.size() < std::size_t(kCandidateCount)) {
    std::ostringstream msg;
    msg << "corpus cannot form an image challenge (needs a category with >= 2 images and "
        << kCandidateCount - 1 << " other categories); category counts:";
    for (const auto& [cat, ids] : by_cat) msg << ' ' << cat << '=' << ids.size();
    throw InvalidInput(msg.str());
  }
  std::mt19937_64 rng(seed);
  auto uniform = [&](std::size_t n) { return std::size_t(rng() % n); };

  ImageChallenge ch;
  const int cat = eligible[uniform(eligible.size())];
  const auto& ids = by_cat[cat];
  const std::size_t a = uniform(ids.size());
  std::size_t b = uniform(ids.size() - 1);
  if (b >= a) ++b;
  ch.source_id = ids[a];
  ch.source_category = cat;
  ch.source = corpus.images[ids[a]];

  std::vector<int> others;
  for (const auto& [c, _] : by_cat) {
    if (c != cat) others.push_back(c);
  }
  // Partial Fisher-Yates: first 9 entries become the distractor categories.
  for (std::size_t i = 0; i < std::size_t(kCandidateCount - 1); ++i) {
    std::swap(others[i], others[i + uniform(others.size() - i)]);
  }
  std::vector<std::size_t> picks{ids[b]};
  for (int i = 0; i < kCandidateCount - 1; ++i) {
    const auto& pool = by_cat[others[std::size_t(i)]];
    picks.push_back(pool[uniform(pool.size())]);
  }
  ch.target_index = int(uniform(std::size_t(kCandidateCount)));
  std::swap(picks[0], picks[std::size_t(ch.target_index)]);
  for (auto id : picks) {
    ch.candidate_ids.push_back(id);
    ch.candidates.push_back(corpus.images[id]);
    ch.candidate_categories.push_back(corpus.labels[id]);
  }
  return ch;
}

std::string render_manifest(std::span<const ManifestRow> rows) {
  std::ostringstream out;
  out << "filename,label,length,generator,model,seed\n";
  for (const auto& r : rows) {
    detail::check_field(r.filename, "filename");
    detail::check_field(r.generator, "generator");
    detail::check_field(r.model, "model");
    out << r.filename << ',' << r.label << ',' << r.length << ',' << r.generator << ',' << r.model << ',' << r.seed
        << '\n';
  }
  return out.str();
}

std::vector<ManifestRow> parse_manifest(std::string_view text) {
  const auto ls = detail::lines(text);
  if (ls.empty() || ls.front() != "filename,label,length,generator,model,seed") {
    throw FormatError("manifest.csv: missing or unexpected header");
  }
  std::vector<ManifestRow> rows;
  for (std::size_t i = 1; i < ls.size(); ++i) {
    const auto f = detail::split(ls[i], ',');
    if (f.size() != 6) throw FormatError("manifest.csv line " + std::to_string(i + 1) + ": expected 6 fields");
    ManifestRow r{f[0], f[1], detail::parse_number<int>(f[2], "length"), f[3], f[4],
                  detail::parse_number<std::uint64_t>(f[5], "seed")};
    if (int(r.label.size()) != r.length) {
      throw FormatError("manifest.csv line " + std::to_string(i + 1) + ": label length != length column");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void save_captcha_set(const fs::path& dir, std::span<const CaptchaSample> samples, const std::string& generator,
                      const std::string& model, std::uint64_t seed) {
  fs::create_directories(dir);
  std::vector<ManifestRow> rows;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "captcha_%06zu.png", i);
    write_file_atomic(dir / name, io::encode_png(samples[i].image));
    rows.push_back({name, samples[i].label, samples[i].length(), generator, model, seed});
  }
  write_file_atomic(dir / "manifest.csv", render_manifest(rows));
}

CaptchaSet load_captcha_set(const fs::path& dir) {
  const auto bytes = read_file(dir / "manifest.csv");
  CaptchaSet set;
  set.rows = parse_manifest(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  for (const auto& r : set.rows) {
    CaptchaSample s{io::read_png(dir / r.filename), r.label};
    if (s.length() == 0 || s.image.width() % s.length() != 0) {
      throw FormatError(r.filename + ": width " + std::to_string(s.image.width()) + " not divisible by length");
    }
    set.samples.push_back(std::move(s));
  }
  return set;
}

namespace {

template <typename T>
std::string join(const std::vector<T>& v, char sep) {
  std::ostringstream out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out << sep;
    out << v[i];
  }
  return out.str();
}

}  // namespace

void save_image_challenges(const fs::path& dir, std::span<const ImageChallenge> challenges) {
  fs::create_directories(dir);
  std::ostringstream csv;
  csv << "id,source,target_index,source_category,candidates,candidate_categories\n";
  for (std::size_t i = 0; i < challenges.size(); ++i) {
    const auto& ch = challenges[i];
    char base[32];
    std::snprintf(base, sizeof base, "challenge_%06zu", i);
    const std::string src = std::string(base) + "_src.png";
    write_file_atomic(dir / src, io::encode_png(ch.source));
    std::vector<std::string> names;
    for (std::size_t k = 0; k < ch.candidates.size(); ++k) {
      names.push_back(std::string(base) + "_c" + std::to_string(k) + ".png");
      write_file_atomic(dir / names.back(), io::encode_png(ch.candidates[k]));
    }
    csv << i << ',' << src << ',' << ch.target_index << ',' << ch.source_category << ',' << join(names, ';') << ','
        << join(ch.candidate_categories, ';') << '\n';
  }
  write_file_atomic(dir / "challenges.csv", csv.str());
}

std::vector<ImageChallenge> load_image_challenges(const fs::path& dir) {
  const auto bytes = read_file(dir / "challenges.csv");
  const auto ls = detail::lines(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  if (ls.empty() || ls.front() != "id,source,target_index,source_category,candidates,candidate_categories") {
    throw FormatError("challenges.csv: missing or unexpected header");
  }
  std::vector<ImageChallenge> out;
  for (std::size_t i = 1; i < ls.size(); ++i) {
    const auto f = detail::split(ls[i], ',');
    const std::string where = "challenges.csv line " + std::to_string(i + 1);
    if (f.size() != 6) throw FormatError(where + ": expected 6 fields");
    ImageChallenge ch;
    ch.source = io::read_png(dir / f[1]);
    ch.target_index = detail::parse_number<int>(f[2], "target_index");
    ch.source_category = detail::parse_number<int>(f[3], "source_category");
    for (const auto& name : detail::split(f[4], ';')) ch.candidates.push_back(io::read_png(dir / name));
    for (const auto& c : detail::split(f[5], ';')) ch.candidate_categories.push_back(detail::parse_number<int>(c, "category"));
    if (ch.candidates.size() != ch.candidate_categories.size() || ch.target_index < 0 ||
        ch.target_index >= int(ch.candidates.size())) {
      throw FormatError(where + ": inconsistent candidate list");
    }
    out.push_back(std::move(ch));
  }
  return out;
}

}  // namespace acaptcha::captcha
