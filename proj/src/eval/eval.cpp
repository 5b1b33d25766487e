#include "acaptcha/eval/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <optional>
#include <sstream>

#include "parallel.hpp"
#include "textutil.hpp"

namespace acaptcha::eval {

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::size_t position(const std::vector<std::string>& axis, std::string_view v, const char* what) {
  const auto it = std::find(axis.begin(), axis.end(), v);
  if (it == axis.end()) throw InvalidInput(std::string("report has no ") + what + " '" + std::string(v) + "'");
  return std::size_t(it - axis.begin());
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

SarReport empty_report(std::vector<std::string> g, std::vector<std::string> gm, std::vector<std::string> am,
                       std::vector<std::string> ch) {
  SarReport r;
  r.generators = std::move(g);
  r.gen_models = std::move(gm);
  r.attack_models = std::move(am);
  r.chains = std::move(ch);
  r.cells.resize(r.generators.size() * r.gen_models.size() * r.attack_models.size() * r.chains.size());
  for (std::size_t a = 0; a < r.generators.size(); ++a)
    for (std::size_t b = 0; b < r.gen_models.size(); ++b)
      for (std::size_t c = 0; c < r.attack_models.size(); ++c)
        for (std::size_t d = 0; d < r.chains.size(); ++d) {
          auto& cell = r.cells[r.index(a, b, c, d)];
          cell.generator = r.generators[a];
          cell.gen_model = r.gen_models[b];
          cell.attack_model = r.attack_models[c];
          cell.chain = r.chains[d];
        }
  r.created = utc_now();
  return r;
}

}  // namespace

bool solve_image_challenge(const net::Classifier& model, const captcha::ImageChallenge& ch,
                           const filters::PreprocChain& chain) {
  return model.predict(filters::apply_chain(ch.source, chain)) == ch.source_category;
}

double image_sar(const net::Classifier& model, std::span<const captcha::ImageChallenge> set,
                 const filters::PreprocChain& chain) {
  if (set.empty()) throw InvalidInput("SAR of an empty set is undefined");
  std::size_t ok = 0;
  for (const auto& ch : set) ok += solve_image_challenge(model, ch, chain);
  return double(ok) / double(set.size());
}

double image_sar(const net::Classifier& model, std::span<const Image> images, std::span<const int> labels,
                 const filters::PreprocChain& chain) {
  if (images.empty()) throw InvalidInput("SAR of an empty set is undefined");
  if (images.size() != labels.size()) throw InvalidInput("image/label count mismatch");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < images.size(); ++i) ok += model.predict(filters::apply_chain(images[i], chain)) == labels[i];
  return double(ok) / double(images.size());
}

std::size_t SarReport::index(std::size_t g, std::size_t gm, std::size_t am, std::size_t ch) const {
  return ((g * gen_models.size() + gm) * attack_models.size() + am) * chains.size() + ch;
}

const SarCell& SarReport::at(std::string_view generator, std::string_view gen_model, std::string_view attack_model,
                             std::string_view chain) const {
  return cells[index(position(generators, generator, "generator"), position(gen_models, gen_model, "generating model"),
                     position(attack_models, attack_model, "attack model"), position(chains, chain, "chain"))];
}

void SarReport::validate() const {
  if (cells.size() != generators.size() * gen_models.size() * attack_models.size() * chains.size()) {
    throw InvalidInput("report cell count does not match its axes");
  }
  for (const auto& c : cells) {
    if (!(c.sar >= 0.0 && c.sar <= 1.0)) throw InvalidInput("SAR outside [0,1]: " + format_double(c.sar));
    if (c.set_size < 1) throw InvalidInput("report cell with empty set");
  }
}

SarReport sar_matrix(const MatrixRequest& req, const ModelZoo& zoo, const LabeledSet& pool,
                     const advgen::GeneratorConfig& base) {
  std::vector<std::string> problems;
  std::vector<std::optional<advgen::Generator>> gens;
  for (const auto& g : req.generators) {
    if (g == kNormal) {
      gens.emplace_back();
      continue;
    }
    try {
      const auto id = advgen::parse_generator(g);
      if (!advgen::is_text_generator(id)) problems.push_back("generator '" + g + "' is not a text generator");
      gens.emplace_back(id);
    } catch (const Error&) {
      problems.push_back("unknown generator '" + g + "'");
    }
  }
  auto check_model = [&](const std::string& m, const char* role) {
    if (!zoo.contains(m)) problems.push_back(std::string("unknown ") + role + " '" + m + "'");
  };
  for (const auto& m : req.gen_models) check_model(m, "generating model");
  for (const auto& m : req.attack_models) check_model(m, "attack model");
  std::vector<filters::PreprocChain> chains;
  std::vector<std::string> chain_names;
  for (const auto& c : req.chains) {
    try {
      chains.push_back(filters::parse_chain(c));
      chain_names.push_back(filters::to_string(chains.back()));
    } catch (const Error& e) {
      problems.push_back("bad chain '" + c + "': " + e.what());
    }
  }
  if (req.generators.empty() || req.gen_models.empty() || req.attack_models.empty() || req.chains.empty()) {
    problems.push_back("every axis needs at least one entry");
  }
  if (req.set_size < 1) problems.push_back("set size must be >= 1");
  if (req.runs < 1) problems.push_back("run count must be >= 1");
  if (!problems.empty()) {
    std::string msg = "cannot build SAR matrix:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw InvalidInput(msg);
  }

  SarReport r = empty_report(req.generators, req.gen_models, req.attack_models, chain_names);
  std::vector<double> sums(r.cells.size(), 0.0);
  for (int run = 0; run < req.runs; ++run) {
    const std::uint64_t seed = req.seed + std::uint64_t(run);
    r.seeds.push_back(seed);
    const auto normal = captcha::random_captchas(pool, req.length, req.set_size, seed);
    for (std::size_t g = 0; g < gens.size(); ++g) {
      for (std::size_t gm = 0; gm < req.gen_models.size(); ++gm) {
        std::vector<captcha::CaptchaSample> set;
        if (!gens[g]) {
          set = normal;
        } else {
          advgen::GeneratorConfig cfg = base;
          cfg.generator = *gens[g];
          const auto& gen_model = zoo.find(req.gen_models[gm])->second;
          set.resize(normal.size());
          detail::parallel_for(normal.size(), [&](std::size_t i) {
            set[i] = advgen::generate_text(gen_model, normal[i], cfg).sample;
          });
        }
        for (std::size_t am = 0; am < req.attack_models.size(); ++am) {
          const auto& model = zoo.find(req.attack_models[am])->second;
          std::vector<double> vals(chains.size());
          detail::parallel_for(chains.size(), [&](std::size_t c) { vals[c] = sar(model, std::span(set), chains[c]); });
          for (std::size_t c = 0; c < chains.size(); ++c) sums[r.index(g, gm, am, c)] += vals[c];
        }
      }
    }
  }
  for (std::size_t i = 0; i < r.cells.size(); ++i) {
    r.cells[i].sar = sums[i] / double(req.runs);
    r.cells[i].set_size = req.set_size;
    r.cells[i].run_seed = req.seed;
  }
  return r;
}

SarReport evaluate_sets(std::span<const NamedSet> sets, const ModelZoo& zoo,
                        std::span<const std::string> attack_models, std::span<const std::string> chains) {
  std::vector<std::string> problems;
  std::vector<std::string> names;
  for (const auto& s : sets) {
    names.push_back(s.name);
    detail::check_field(s.name, "set name");
    if (s.size() == 0) problems.push_back("set '" + s.name + "' is empty");
    if (!s.samples.empty() && !s.challenges.empty()) problems.push_back("set '" + s.name + "' mixes text and image");
  }
  for (const auto& m : attack_models) {
    if (!zoo.contains(m)) problems.push_back("unknown attack model '" + m + "'");
  }
  std::vector<filters::PreprocChain> parsed;
  std::vector<std::string> chain_names;
  for (const auto& c : chains) {
    try {
      parsed.push_back(filters::parse_chain(c));
      chain_names.push_back(filters::to_string(parsed.back()));
    } catch (const Error& e) {
      problems.push_back("bad chain '" + c + "': " + e.what());
    }
  }
  if (sets.empty() || attack_models.empty() || chains.empty()) problems.push_back("every axis needs at least one entry");
  if (!problems.empty()) {
    std::string msg = "cannot evaluate sets:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw InvalidInput(msg);
  }
  SarReport r = empty_report(names, {std::string(kNoModel)},
                             std::vector<std::string>(attack_models.begin(), attack_models.end()), chain_names);
  for (std::size_t s = 0; s < sets.size(); ++s) {
    r.seeds.push_back(sets[s].seed);
    for (std::size_t am = 0; am < attack_models.size(); ++am) {
      const auto& model = zoo.find(attack_models[am])->second;
      std::vector<double> vals(parsed.size());
      detail::parallel_for(parsed.size(), [&](std::size_t c) {
        vals[c] = sets[s].samples.empty() ? image_sar(model, std::span(sets[s].challenges), parsed[c])
                                          : sar(model, std::span(sets[s].samples), parsed[c]);
      });
      for (std::size_t c = 0; c < parsed.size(); ++c) {
        auto& cell = r.cells[r.index(s, 0, am, c)];
        cell.sar = vals[c];
        cell.set_size = sets[s].size();
        cell.run_seed = sets[s].seed;
      }
    }
  }
  return r;
}

std::string render_report(const SarReport& r, ReportFormat format) {
  r.validate();
  std::ostringstream out;
  if (format == ReportFormat::csv) {
    out << kReportHeader << '\n';
    for (const auto& c : r.cells) {
      out << c.generator << ',' << c.gen_model << ',' << c.attack_model << ',' << c.chain << ',' << c.set_size << ','
          << format_double(c.sar) << ',' << c.run_seed << '\n';
    }
    return out.str();
  }
  // One table per (attack model, generating model); chain rows x generator columns.
  for (std::size_t am = 0; am < r.attack_models.size(); ++am) {
    for (std::size_t gm = 0; gm < r.gen_models.size(); ++gm) {
      out << "### attack model " << r.attack_models[am];
      if (r.gen_models[gm] != kNoModel) out << ", generated on " << r.gen_models[gm];
      out << "\n\n| Preprocessing |";
      for (const auto& g : r.generators) out << ' ' << g << " |";
      out << "\n|---|";
      for (std::size_t g = 0; g < r.generators.size(); ++g) out << "---:|";
      out << '\n';
      for (std::size_t ch = 0; ch < r.chains.size(); ++ch) {
        out << "| " << filters::display_name(filters::parse_chain(r.chains[ch])) << " |";
        for (std::size_t g = 0; g < r.generators.size(); ++g) {
          char buf[16];
          std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * r.cells[r.index(g, gm, am, ch)].sar);
          out << ' ' << buf << " |";
        }
        out << '\n';
      }
      out << '\n';
    }
  }
  return out.str();
}

SarReport parse_report_csv(std::string_view text) {
  const auto ls = detail::lines(text);
  if (ls.empty() || ls.front() != kReportHeader) throw FormatError("SAR report: missing or unexpected header");
  SarReport r;
  std::vector<SarCell> rows;
  auto note = [](std::vector<std::string>& axis, const std::string& v) {
    if (std::find(axis.begin(), axis.end(), v) == axis.end()) axis.push_back(v);
  };
  for (std::size_t i = 1; i < ls.size(); ++i) {
    const auto f = detail::split(ls[i], ',');
    if (f.size() != 7) throw FormatError("SAR report line " + std::to_string(i + 1) + ": expected 7 fields");
    SarCell c{f[0], f[1], f[2], f[3], detail::parse_number<std::size_t>(f[4], "set_size"),
              detail::parse_number<double>(f[5], "sar"), detail::parse_number<std::uint64_t>(f[6], "run_seed")};
    note(r.generators, c.generator);
    note(r.gen_models, c.gen_model);
    note(r.attack_models, c.attack_model);
    note(r.chains, c.chain);
    rows.push_back(std::move(c));
  }
  r.cells.resize(r.generators.size() * r.gen_models.size() * r.attack_models.size() * r.chains.size());
  if (rows.size() != r.cells.size()) throw FormatError("SAR report: rows do not form a full matrix");
  std::vector<bool> seen(r.cells.size(), false);
  for (auto& c : rows) {
    const std::size_t k = r.index(position(r.generators, c.generator, "generator"),
                                  position(r.gen_models, c.gen_model, "generating model"),
                                  position(r.attack_models, c.attack_model, "attack model"),
                                  position(r.chains, c.chain, "chain"));
    if (seen[k]) throw FormatError("SAR report: duplicate cell");
    seen[k] = true;
    if (std::find(r.seeds.begin(), r.seeds.end(), c.run_seed) == r.seeds.end()) r.seeds.push_back(c.run_seed);
    r.cells[k] = std::move(c);
  }
  try {
    r.validate();
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("SAR report: ") + e.what());
  }
  return r;
}

}  // namespace acaptcha::eval
