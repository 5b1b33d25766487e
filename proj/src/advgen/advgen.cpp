#include "acaptcha/advgen/advgen.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "textutil.hpp"

namespace acaptcha::advgen {

using spectral::Spectrum;

namespace {

constexpr std::array<std::pair<Generator, std::string_view>, 12> kNames{{
    {Generator::jsma, "jsma"},
    {Generator::l2, "l2"},
    {Generator::l0, "l0"},
    {Generator::linf, "linf"},
    {Generator::jsma_f, "jsma_f"},
    {Generator::l2_f, "l2_f"},
    {Generator::l0_f, "l0_f"},
    {Generator::linf_f, "linf_f"},
    {Generator::jsma_i, "jsma_i"},
    {Generator::l2_i, "l2_i"},
    {Generator::l0_i, "l0_i"},
    {Generator::linf_i, "linf_i"},
}};

void check_model(const net::Classifier& model, const Image& x) {
  if (!model.differentiable()) throw UnsupportedModel("generators need a differentiable model");
  if (x.shape() != model.input_shape()) {
    throw InvalidInput("input shape " + to_string(x.shape()) + " != model input " + to_string(model.input_shape()));
  }
}

int count_changed(const Spectrum& a, const Spectrum& b) {
  return int((a.coeffs().array() != b.coeffs().array()).count());
}

int digit(char ch) {
  if (ch < '0' || ch > '9') throw InvalidInput(std::string("label character '") + ch + "' is not a digit");
  return ch - '0';
}

int argmax(const Vector& z) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < z.size(); ++i) {
    if (z[i] > z[best]) best = i;
  }
  return int(best);
}

template <typename CharFn>
TextResult per_slot(const captcha::CaptchaSample& c, CharFn fn) {
  TextResult out;
  out.sample = c;
  for (int i = 0; i < c.length(); ++i) {
    CharResult r = fn(c.slot(i), digit(c.label[std::size_t(i)]));
    out.sample.set_slot(i, r.image);
    out.slots.push_back(std::move(r));
  }
  return out;
}

}  // namespace

std::string_view to_string(Generator g) {
  for (const auto& [id, name] : kNames) {
    if (id == g) return name;
  }
  return "?";
}

Generator parse_generator(std::string_view name) {
  for (const auto& [id, n] : kNames) {
    if (n == name) return id;
  }
  std::string valid;
  for (const auto& [id, n] : kNames) valid += (valid.empty() ? "" : ", ") + std::string(n);
  throw InvalidInput("unknown generator '" + std::string(name) + "' (valid: " + valid + ")");
}

std::vector<Generator> all_generators() {
  std::vector<Generator> out;
  for (const auto& [id, n] : kNames) out.push_back(id);
  return out;
}

bool is_text_generator(Generator g) {
  return g != Generator::jsma_i && g != Generator::l2_i && g != Generator::l0_i && g != Generator::linf_i;
}

bool TextResult::all_success() const {
  return std::all_of(slots.begin(), slots.end(), [](const CharResult& r) { return r.success; });
}

void FreqAttackConfig::validate() const {
  if (neighbor_radius < 0) throw InvalidInput("neighbor radius must be >= 0");
  if (max_iterations < 1) throw InvalidInput("iteration cap must be >= 1");
  if (!(step > 0.0)) throw InvalidInput("coefficient step must be > 0");
  cw.validate();
}

FreqAttackConfig default_freq_config(int slot_width, int slot_height, int mask_inner) {
  if (mask_inner < 0 || mask_inner % 2 != 0) throw InvalidInput("mask inner size must be even and >= 0");
  FreqAttackConfig cfg;
  cfg.mask = spectral::make_mask(slot_width, slot_height, mask_inner / 2, mask_inner / 2);
  cfg.cw.max_iterations = 100;
  cfg.cw.step_size = 0.05;
  cfg.cw.c = 50.0;
  cfg.cw.kappa = 50.0;
  return cfg;
}

void ImageAttackConfig::validate() const {
  if (cap < 1) throw InvalidInput("image cap must be >= 1");
  if (neighbor_radius < 0) throw InvalidInput("neighbor radius must be >= 0");
  if (!(l2_step > 0.0) || !(linf_step > 0.0) || !(l0_step > 0.0)) throw InvalidInput("steps must be > 0");
  if (l0_pixels < 1) throw InvalidInput("l0 pixels per round must be >= 1");
}

// ------------------------------------------------------------ frequency domain

FreqSpace::FreqSpace(const Image& x0, const spectral::FreqMask& mask) : s0_(spectral::dft2(x0)) {
  const int h = s0_.height(), w = s0_.width();
  if (mask.height() != h || mask.width() != w) throw InvalidInput("mask dimensions do not match the image");
  std::vector<double> wts;
  for (int ky = 0; ky < h; ++ky) {
    for (int kx = 0; kx < w; ++kx) {
      if (!mask.editable(ky, kx)) continue;
      const int py = spectral::partner_index(ky, h), px = spectral::partner_index(kx, w);
      const int self = ky * w + kx, other = py * w + px;
      if (self > other) continue;  // handled through its partner
      if (self == other) {
        params_.push_back({ky, kx, py, px, false});
        wts.push_back(1.0);
      } else {
        params_.push_back({ky, kx, py, px, false});
        params_.push_back({ky, kx, py, px, true});
        wts.push_back(2.0);
        wts.push_back(2.0);
      }
    }
  }
  weights_ = Eigen::Map<const Vector>(wts.data(), Eigen::Index(wts.size()));
}

Spectrum FreqSpace::spectrum(const Vector& v) const {
  Spectrum s = s0_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& p = params_[i];
    const double d = v[Eigen::Index(i)];
    if (d == 0.0) continue;
    const bool self = p.ky == p.py && p.kx == p.px;
    if (p.imag) {
      s(p.ky, p.kx) += std::complex<double>(0.0, d);
      s(p.py, p.px) -= std::complex<double>(0.0, d);
    } else {
      s(p.ky, p.kx) += d;
      if (!self) s(p.py, p.px) += d;
    }
  }
  return s;
}

Image FreqSpace::render(const Vector& v) const { return spectral::idft2(spectrum(v)); }

Vector FreqSpace::pullback(const Image& grad, const Vector&) const {
  const Spectrum g = spectral::dft2(grad);
  Vector out(dim());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& p = params_[i];
    const bool self = p.ky == p.py && p.kx == p.px;
    if (p.imag) {
      out[Eigen::Index(i)] = g(p.ky, p.kx).imag() - g(p.py, p.px).imag();
    } else {
      out[Eigen::Index(i)] = g(p.ky, p.kx).real() + (self ? 0.0 : g(p.py, p.px).real());
    }
  }
  return out;
}

CharResult jsma_f_char(const net::Classifier& model, const Image& ch, int label, const FreqAttackConfig& cfg) {
  cfg.validate();
  check_model(model, ch);
  if (ch.channels() != 1) throw InvalidInput("frequency generators expect single-channel characters");
  const auto& mask = cfg.mask;
  if (mask.height() != ch.height() || mask.width() != ch.width()) {
    throw InvalidInput("mask dimensions do not match the character slot");
  }
  if (mask.editable_count() == 0) throw AttackError("frequency mask leaves no modifiable coefficient");

  CharResult res;
  res.original = spectral::dft2(ch);
  res.perturbed = res.original;
  res.image = ch;
  if (model.predict(ch) != label) {
    res.success = true;
    return res;
  }
  Spectrum& s = res.perturbed;
  const int h = s.height(), w = s.width(), r = cfg.neighbor_radius;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    const Spectrum g = spectral::freq_gradient(model, s, label);
    int by = -1, bx = -1;
    double best = 0.0;
    for (int ky = 0; ky < h; ++ky) {
      for (int kx = 0; kx < w; ++kx) {
        const double a = std::abs(g(ky, kx));
        if (a > best && mask.editable(ky, kx)) {
          best = a;
          by = ky;
          bx = kx;
        }
      }
    }
    if (by < 0) break;  // flat gradient: nothing left to follow
    for (int ny = std::max(0, by - r); ny <= std::min(h - 1, by + r); ++ny) {
      for (int nx = std::max(0, bx - r); nx <= std::min(w - 1, bx + r); ++nx) {
        const double a = std::abs(g(ny, nx));
        if (a == 0.0 || !mask.editable(ny, nx)) continue;
        const std::complex<double> d = -cfg.step * g(ny, nx) / a;
        const int py = spectral::partner_index(ny, h), px = spectral::partner_index(nx, w);
        if (py == ny && px == nx) {
          s(ny, nx) += d.real();
        } else {
          s(ny, nx) += d;
          s(py, px) += std::conj(d);
        }
      }
    }
    res.image = spectral::idft2(s);
    res.iterations = it + 1;
    if (model.predict(res.image) != label) {
      res.success = true;
      break;
    }
  }
  res.hit_cap = !res.success;
  res.changed = count_changed(res.original, res.perturbed);
  return res;
}

CharResult lp_f_char(Norm kind, const net::Classifier& model, const Image& ch, int label,
                     const FreqAttackConfig& cfg) {
  cfg.validate();
  check_model(model, ch);
  if (ch.channels() != 1) throw InvalidInput("frequency generators expect single-channel characters");
  if (cfg.mask.editable_count() == 0) throw AttackError("frequency mask leaves no modifiable coefficient");
  const FreqSpace space(ch, cfg.mask);
  CharResult res;
  res.original = space.origin();
  res.perturbed = res.original;
  res.image = ch;
  if (model.predict(ch) != label) {
    res.success = true;
    return res;
  }
  const auto out = attacks::cw_search(model, space, label, kind, attacks::AttackMode::untargeted(), cfg.cw);
  res.perturbed = space.spectrum(out.v);
  res.image = out.result.image;
  res.success = out.result.success;
  res.iterations = out.result.iterations;
  res.hit_cap = !res.success;
  res.changed = count_changed(res.original, res.perturbed);
  return res;
}

TextResult jsma_f(const net::Classifier& model, const captcha::CaptchaSample& c, const FreqAttackConfig& cfg) {
  if (cfg.mask.editable_count() == 0) throw AttackError("frequency mask leaves no modifiable coefficient");
  return per_slot(c, [&](const Image& ch, int label) { return jsma_f_char(model, ch, label, cfg); });
}

TextResult lp_f(Norm kind, const net::Classifier& model, const captcha::CaptchaSample& c,
                const FreqAttackConfig& cfg) {
  if (cfg.mask.editable_count() == 0) throw AttackError("frequency mask leaves no modifiable coefficient");
  return per_slot(c, [&](const Image& ch, int label) { return lp_f_char(kind, model, ch, label, cfg); });
}

// ---------------------------------------------------------------- image domain

CharResult jsma_i(const net::Classifier& model, const Image& x, int label, NoiseBudget budget,
                  const ImageAttackConfig& cfg) {
  cfg.validate();
  check_model(model, x);
  if (budget.K < 0) throw InvalidInput("noise budget K must be >= 0");
  CharResult res;
  res.image = x;
  Image& cur = res.image;
  const int h = x.height(), w = x.width(), r = cfg.neighbor_radius;
  std::vector<char> chosen(std::size_t(h * w), 0);
  const Vector unit = Vector::Unit(model.num_classes(), label);
  Vector z;
  Image g = model.input_gradient(cur, unit, &z);
  int k = budget.K;
  bool fooled = argmax(z) != label;
  while (!fooled || k > 0) {
    if (res.iterations >= cfg.cap) {
      res.hit_cap = true;
      break;
    }
    int by = -1, bx = -1;
    double best = -1.0;
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        if (chosen[std::size_t(y * w + xx)]) continue;
        double score = 0.0;
        for (int c = 0; c < x.channels(); ++c) score += std::abs(g.at(c, y, xx));
        if (score > best) {
          best = score;
          by = y;
          bx = xx;
        }
      }
    }
    if (by < 0) break;  // every location already used
    chosen[std::size_t(by * w + bx)] = 1;
    for (int ny = std::max(0, by - r); ny <= std::min(h - 1, by + r); ++ny) {
      for (int nx = std::max(0, bx - r); nx <= std::min(w - 1, bx + r); ++nx) {
        for (int c = 0; c < x.channels(); ++c) {
          const double gi = g.at(c, ny, nx);
          if (gi > 0.0) cur.at(c, ny, nx) = 0.0;
          else if (gi < 0.0) cur.at(c, ny, nx) = 1.0;
        }
      }
    }
    ++res.iterations;
    k = std::max(0, k - 1);
    g = model.input_gradient(cur, unit, &z);
    fooled = argmax(z) != label;
  }
  res.success = fooled;
  res.changed = int(attacks::lp_norm(x, cur, Norm::l0));
  return res;
}

CharResult lp_i(Norm kind, const net::Classifier& model, const Image& x, int label, NoiseBudget budget,
                const ImageAttackConfig& cfg) {
  cfg.validate();
  check_model(model, x);
  if (budget.K < 0) throw InvalidInput("noise budget K must be >= 0");
  const attacks::PixelSpace space(x);
  Vector v = Vector::Zero(space.dim());
  CharResult res;
  res.image = x;
  // Margin gradient and logits from one pass. The runner-up class is guessed
  // from the previous round and the pass repeated only when it changed.
  Vector z;
  attacks::Margin m;
  Image grad;
  auto refresh = [&](int runner_up) {
    Vector wts = Vector::Zero(model.num_classes());
    wts[label] = 1.0;
    wts[runner_up] = -1.0;
    grad = model.input_gradient(res.image, wts, &z);
    m = attacks::margin(z, attacks::AttackMode::untargeted(), label);
    if (m.negative != runner_up) {
      wts.setZero();
      wts[label] = 1.0;
      wts[m.negative] = -1.0;
      grad = model.input_gradient(res.image, wts);
    }
  };
  refresh(label == 0 ? 1 : 0);
  bool fooled = argmax(z) != label;
  bool latched = fooled;
  int k = budget.K;
  while (!fooled || k > 0) {
    if (res.iterations >= cfg.cap) {
      res.hit_cap = true;
      break;
    }
    const Vector g = space.pullback(grad, v);
    Vector step = Vector::Zero(v.size());
    switch (kind) {
      case Norm::l2: {
        const double n = g.norm();
        if (n > 0.0) step = -cfg.l2_step * g / n;
        break;
      }
      case Norm::linf: step = -cfg.linf_step * g.cwiseSign(); break;
      case Norm::l0: {
        // Largest-gradient coordinates that can still move in the useful direction.
        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < g.size(); ++i) {
          const double xi = x.data()[i] + v[i];
          if ((g[i] > 0.0 && xi > 0.0) || (g[i] < 0.0 && xi < 1.0)) idx.push_back(i);
        }
        const std::size_t take = std::min<std::size_t>(idx.size(), std::size_t(cfg.l0_pixels));
        std::partial_sort(idx.begin(), idx.begin() + std::ptrdiff_t(take), idx.end(),
                          [&](Eigen::Index a, Eigen::Index b) { return std::abs(g[a]) > std::abs(g[b]); });
        for (std::size_t j = 0; j < take; ++j) step[idx[j]] = -cfg.l0_step * (g[idx[j]] > 0.0 ? 1.0 : -1.0);
        break;
      }
    }
    Vector cand = v + step;
    space.project(cand);
    if (latched) {
      // Past the fooling point the noise only grows.
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(cand[i]) < std::abs(v[i])) cand[i] = v[i];
      }
    }
    v = std::move(cand);
    res.image = space.render(v);
    ++res.iterations;
    k = std::max(0, k - 1);
    refresh(m.negative);
    fooled = argmax(z) != label;
    latched = latched || fooled;
  }
  res.success = fooled;
  res.changed = int(attacks::lp_norm(x, res.image, Norm::l0));
  return res;
}

// ----------------------------------------------------------------- config file

void GeneratorConfig::validate() const {
  if (mask_inner < 0 || mask_inner % 2 != 0) throw InvalidInput("mask_inner must be even and >= 0");
  freq.validate();
  space.validate();
  if (noise.K < 0) throw InvalidInput("K must be >= 0");
  image.validate();
}

namespace {

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct Field {
  std::string_view key;
  std::function<std::string(const GeneratorConfig&)> get;
  std::function<void(GeneratorConfig&, const std::string&)> set;
};

double to_double(const std::string& s, std::string_view key) { return detail::parse_number<double>(s, key); }
int to_int(const std::string& s, std::string_view key) { return detail::parse_number<int>(s, key); }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      {"generator", [](const GeneratorConfig& c) { return std::string(to_string(c.generator)); },
       [](GeneratorConfig& c, const std::string& v) { c.generator = parse_generator(v); }},
      {"mask_inner", [](const GeneratorConfig& c) { return std::to_string(c.mask_inner); },
       [](GeneratorConfig& c, const std::string& v) { c.mask_inner = to_int(v, "mask_inner"); }},
      {"neighbor_radius", [](const GeneratorConfig& c) { return std::to_string(c.freq.neighbor_radius); },
       [](GeneratorConfig& c, const std::string& v) { c.freq.neighbor_radius = to_int(v, "neighbor_radius"); }},
      {"freq_max_iterations", [](const GeneratorConfig& c) { return std::to_string(c.freq.max_iterations); },
       [](GeneratorConfig& c, const std::string& v) { c.freq.max_iterations = to_int(v, "freq_max_iterations"); }},
      {"freq_step", [](const GeneratorConfig& c) { return num(c.freq.step); },
       [](GeneratorConfig& c, const std::string& v) { c.freq.step = to_double(v, "freq_step"); }},
      {"freq_cw_max_iterations", [](const GeneratorConfig& c) { return std::to_string(c.freq.cw.max_iterations); },
       [](GeneratorConfig& c, const std::string& v) { c.freq.cw.max_iterations = to_int(v, "freq_cw_max_iterations"); }},
      {"freq_cw_step_size", [](const GeneratorConfig& c) { return num(c.freq.cw.step_size); },
       [](GeneratorConfig& c, const std::string& v) { c.freq.cw.step_size = to_double(v, "freq_cw_step_size"); }},
      {"freq_cw_c", [](const GeneratorConfig& c) { return num(c.freq.cw.c); },
       [](GeneratorConfig& c, const std::string& v) { c.freq.cw.c = to_double(v, "freq_cw_c"); }},
      {"freq_cw_kappa", [](const GeneratorConfig& c) { return num(c.freq.cw.kappa); },
       [](GeneratorConfig& c, const std::string& v) { c.freq.cw.kappa = to_double(v, "freq_cw_kappa"); }},
      {"freq_cw_l0_rounds", [](const GeneratorConfig& c) { return std::to_string(c.freq.cw.l0_rounds); },
       [](GeneratorConfig& c, const std::string& v) { c.freq.cw.l0_rounds = to_int(v, "freq_cw_l0_rounds"); }},
      {"space_max_iterations", [](const GeneratorConfig& c) { return std::to_string(c.space.max_iterations); },
       [](GeneratorConfig& c, const std::string& v) { c.space.max_iterations = to_int(v, "space_max_iterations"); }},
      {"space_step_size", [](const GeneratorConfig& c) { return num(c.space.step_size); },
       [](GeneratorConfig& c, const std::string& v) { c.space.step_size = to_double(v, "space_step_size"); }},
      {"space_c", [](const GeneratorConfig& c) { return num(c.space.c); },
       [](GeneratorConfig& c, const std::string& v) { c.space.c = to_double(v, "space_c"); }},
      {"space_kappa", [](const GeneratorConfig& c) { return num(c.space.kappa); },
       [](GeneratorConfig& c, const std::string& v) { c.space.kappa = to_double(v, "space_kappa"); }},
      {"space_max_pixels", [](const GeneratorConfig& c) { return std::to_string(c.space.max_pixels); },
       [](GeneratorConfig& c, const std::string& v) { c.space.max_pixels = to_int(v, "space_max_pixels"); }},
      {"space_l0_rounds", [](const GeneratorConfig& c) { return std::to_string(c.space.l0_rounds); },
       [](GeneratorConfig& c, const std::string& v) { c.space.l0_rounds = to_int(v, "space_l0_rounds"); }},
      {"K", [](const GeneratorConfig& c) { return std::to_string(c.noise.K); },
       [](GeneratorConfig& c, const std::string& v) { c.noise.K = to_int(v, "K"); }},
      {"image_cap", [](const GeneratorConfig& c) { return std::to_string(c.image.cap); },
       [](GeneratorConfig& c, const std::string& v) { c.image.cap = to_int(v, "image_cap"); }},
      {"image_neighbor_radius", [](const GeneratorConfig& c) { return std::to_string(c.image.neighbor_radius); },
       [](GeneratorConfig& c, const std::string& v) { c.image.neighbor_radius = to_int(v, "image_neighbor_radius"); }},
      {"image_l2_step", [](const GeneratorConfig& c) { return num(c.image.l2_step); },
       [](GeneratorConfig& c, const std::string& v) { c.image.l2_step = to_double(v, "image_l2_step"); }},
      {"image_linf_step", [](const GeneratorConfig& c) { return num(c.image.linf_step); },
       [](GeneratorConfig& c, const std::string& v) { c.image.linf_step = to_double(v, "image_linf_step"); }},
      {"image_l0_pixels", [](const GeneratorConfig& c) { return std::to_string(c.image.l0_pixels); },
       [](GeneratorConfig& c, const std::string& v) { c.image.l0_pixels = to_int(v, "image_l0_pixels"); }},
      {"image_l0_step", [](const GeneratorConfig& c) { return num(c.image.l0_step); },
       [](GeneratorConfig& c, const std::string& v) { c.image.l0_step = to_double(v, "image_l0_step"); }},
  };
  return f;
}

constexpr int kConfigVersion = 1;

}  // namespace

std::string render_config(const GeneratorConfig& cfg) {
  std::ostringstream out;
  out << "# acaptcha generator config\n";
  out << "version = " << kConfigVersion << '\n';
  for (const auto& f : fields()) out << f.key << " = " << f.get(cfg) << '\n';
  return out.str();
}

GeneratorConfig parse_config(std::string_view text) {
  GeneratorConfig cfg;
  bool have_version = false;
  int line_no = 0;
  for (const auto& raw : detail::split(text, '\n')) {
    ++line_no;
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
    line.erase(line.begin(), std::find_if(line.begin(), line.end(), not_space));
    line.erase(std::find_if(line.rbegin(), line.rend(), not_space).base(), line.end());
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(line_no);
    if (eq == std::string::npos) throw FormatError(where + ": expected key = value");
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    key.erase(std::find_if(key.rbegin(), key.rend(), not_space).base(), key.end());
    value.erase(value.begin(), std::find_if(value.begin(), value.end(), not_space));
    if (key == "version") {
      if (detail::parse_number<int>(value, "version") != kConfigVersion) {
        throw FormatError(where + ": unsupported config version " + value);
      }
      have_version = true;
      continue;
    }
    const auto& fs = fields();
    const auto it = std::find_if(fs.begin(), fs.end(), [&](const Field& f) { return f.key == key; });
    if (it == fs.end()) throw FormatError(where + ": unknown key '" + key + "'");
    try {
      it->set(cfg, value);
    } catch (const InvalidInput& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  if (!have_version) throw FormatError("config has no version line");
  const auto cw = cfg.freq.cw;
  const int radius = cfg.freq.neighbor_radius, iters = cfg.freq.max_iterations;
  const double step = cfg.freq.step;
  cfg.freq = default_freq_config(28, 28, cfg.mask_inner);
  cfg.freq.cw = cw;
  cfg.freq.neighbor_radius = radius;
  cfg.freq.max_iterations = iters;
  cfg.freq.step = step;
  cfg.validate();
  return cfg;
}

CharResult generate_char(const net::Classifier& model, const Image& ch, int label, const GeneratorConfig& cfg) {
  cfg.validate();
  if (!is_text_generator(cfg.generator)) {
    throw InvalidInput("generator '" + std::string(to_string(cfg.generator)) + "' is not a text generator");
  }
  const auto mode = attacks::AttackMode::untargeted();
  auto from_space = [](const attacks::AttackResult& r) {
    CharResult out;
    out.image = r.image;
    out.success = r.success;
    out.iterations = r.iterations;
    out.changed = r.changed;
    out.hit_cap = !r.success;
    return out;
  };
  FreqAttackConfig freq = cfg.freq;
  if (freq.mask.width() != ch.width() || freq.mask.height() != ch.height()) {
    freq.mask = spectral::make_mask(ch.width(), ch.height(), cfg.mask_inner / 2, cfg.mask_inner / 2);
  }
  switch (cfg.generator) {
    case Generator::jsma: return from_space(attacks::jsma(model, ch, label, mode, cfg.space));
    case Generator::l2: return from_space(attacks::cw_attack(model, ch, label, Norm::l2, mode, cfg.space));
    case Generator::l0: return from_space(attacks::cw_attack(model, ch, label, Norm::l0, mode, cfg.space));
    case Generator::linf: return from_space(attacks::cw_attack(model, ch, label, Norm::linf, mode, cfg.space));
    case Generator::jsma_f: return jsma_f_char(model, ch, label, freq);
    case Generator::l2_f: return lp_f_char(Norm::l2, model, ch, label, freq);
    case Generator::l0_f: return lp_f_char(Norm::l0, model, ch, label, freq);
    case Generator::linf_f: return lp_f_char(Norm::linf, model, ch, label, freq);
    default: break;
  }
  throw InvalidInput("unsupported text generator");
}

TextResult generate_text(const net::Classifier& model, const captcha::CaptchaSample& c, const GeneratorConfig& cfg) {
  cfg.validate();
  if (!is_text_generator(cfg.generator)) {
    throw InvalidInput("generator '" + std::string(to_string(cfg.generator)) + "' is not a text generator");
  }
  return per_slot(c, [&](const Image& ch, int label) { return generate_char(model, ch, label, cfg); });
}

CharResult generate_image(const net::Classifier& model, const Image& x, int label, const GeneratorConfig& cfg) {
  cfg.validate();
  switch (cfg.generator) {
    case Generator::jsma_i: return jsma_i(model, x, label, cfg.noise, cfg.image);
    case Generator::l2_i: return lp_i(Norm::l2, model, x, label, cfg.noise, cfg.image);
    case Generator::l0_i: return lp_i(Norm::l0, model, x, label, cfg.noise, cfg.image);
    case Generator::linf_i: return lp_i(Norm::linf, model, x, label, cfg.noise, cfg.image);
    default: break;
  }
  throw InvalidInput("generator '" + std::string(to_string(cfg.generator)) + "' is not an image generator");
}

}  // namespace acaptcha::advgen
