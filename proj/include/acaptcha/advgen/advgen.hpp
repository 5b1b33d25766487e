#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "acaptcha/attacks/attacks.hpp"
#include "acaptcha/captcha/captcha.hpp"
#include "acaptcha/spectral.hpp"

namespace acaptcha::advgen {

using attacks::Norm;
using net::Vector;

enum class Generator {
  // space-domain baselines (text)
  jsma,
  l2,
  l0,
  linf,
  // frequency-domain (text)
  jsma_f,
  l2_f,
  l0_f,
  linf_f,
  // image-domain with noise floor K (color)
  jsma_i,
  l2_i,
  l0_i,
  linf_i,
};

std::string_view to_string(Generator g);
Generator parse_generator(std::string_view name);
std::vector<Generator> all_generators();
bool is_text_generator(Generator g);

struct FreqAttackConfig {
  spectral::FreqMask mask;
  int neighbor_radius = 1;
  int max_iterations = 200;  // per character
  double step = 2.0;         // coefficient change per selection (orthonormal units)
  // Optimizer settings for the L2/L0/L-inf variants.
  attacks::AttackBudget cw{};

  void validate() const;
};

FreqAttackConfig default_freq_config(int slot_width = 28, int slot_height = 28, int mask_inner = 8);

struct NoiseBudget {
  int K = 50;
};

struct ImageAttackConfig {
  int cap = 400;
  int neighbor_radius = 1;
  double l2_step = 0.5;     // Euclidean length of one L2 round
  double linf_step = 0.01;  // per-coordinate step of one L-inf round
  int l0_pixels = 10;       // coordinates touched by one L0 round
  double l0_step = 1.0;

  void validate() const;
};

// Result for one attacked character or image.
struct CharResult {
  Image image;
  bool success = false;
  int iterations = 0;
  int changed = 0;             // frequency: coefficients differing from the original
  spectral::Spectrum original;   // frequency generators only
  spectral::Spectrum perturbed;  // state before the final clamped inverse transform
  bool hit_cap = false;
};

struct TextResult {
  captcha::CaptchaSample sample;
  std::vector<CharResult> slots;
  bool all_success() const;
};

CharResult jsma_f_char(const net::Classifier& model, const Image& ch, int label, const FreqAttackConfig& cfg);
CharResult lp_f_char(Norm kind, const net::Classifier& model, const Image& ch, int label,
                     const FreqAttackConfig& cfg);

TextResult jsma_f(const net::Classifier& model, const captcha::CaptchaSample& c, const FreqAttackConfig& cfg);
TextResult lp_f(Norm kind, const net::Classifier& model, const captcha::CaptchaSample& c,
                const FreqAttackConfig& cfg);

CharResult jsma_i(const net::Classifier& model, const Image& x, int label, NoiseBudget budget,
                  const ImageAttackConfig& cfg);
CharResult lp_i(Norm kind, const net::Classifier& model, const Image& x, int label, NoiseBudget budget,
                const ImageAttackConfig& cfg);

// Masked spectrum of a fixed image as a real parameter vector. Hermitian
// pairs share one (re, im) parameter couple; self-conjugate coefficients get a
// single real parameter.
class FreqSpace final : public attacks::PerturbationSpace {
 public:
  FreqSpace(const Image& x0, const spectral::FreqMask& mask);
  Eigen::Index dim() const override { return Eigen::Index(params_.size()); }
  Image render(const Vector& v) const override;
  Vector pullback(const Image& grad, const Vector& v) const override;
  const Vector& weights() const override { return weights_; }

  spectral::Spectrum spectrum(const Vector& v) const;
  const spectral::Spectrum& origin() const { return s0_; }

 private:
  struct Param {
    int ky, kx;     // representative coefficient
    int py, px;     // conjugate partner
    bool imag;      // imaginary part of the representative
  };
  spectral::Spectrum s0_;
  std::vector<Param> params_;
  Vector weights_;
};

// Every generator in one place, configured from a versioned key-value file.
struct GeneratorConfig {
  Generator generator = Generator::jsma_f;
  int mask_inner = 8;
  FreqAttackConfig freq = default_freq_config();
  attacks::AttackBudget space{};  // text baselines
  NoiseBudget noise{};
  ImageAttackConfig image{};

  void validate() const;
};

std::string render_config(const GeneratorConfig& cfg);
GeneratorConfig parse_config(std::string_view text);

// Attacks one character with a text generator; the mask follows the character size.
CharResult generate_char(const net::Classifier& model, const Image& ch, int label, const GeneratorConfig& cfg);
// Attacks each slot of a text challenge with a text generator.
TextResult generate_text(const net::Classifier& model, const captcha::CaptchaSample& c, const GeneratorConfig& cfg);
// Attacks one color image with an image generator.
CharResult generate_image(const net::Classifier& model, const Image& x, int label, const GeneratorConfig& cfg);

}  // namespace acaptcha::advgen
