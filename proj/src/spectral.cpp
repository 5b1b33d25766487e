#include "acaptcha/spectral.hpp"

namespace acaptcha::spectral {

long FreqMask::editable_count() const {
  long n = 0;
  for (int y = 0; y < height(); ++y) {
    for (int x = 0; x < width(); ++x) n += editable(y, x);
  }
  return n;
}

FreqMask make_mask(int width, int height, int inner_half_width, int inner_half_height) {
  if (width < 1 || height < 1) throw InvalidInput("mask grid must be at least 1x1");
  if (inner_half_width < 0 || inner_half_height < 0) throw InvalidInput("inner window half-size must be >= 0");
  const int cy = center_index(height), cx = center_index(width);
  const int y0 = cy - inner_half_height, y1 = cy + inner_half_height;
  const int x0 = cx - inner_half_width, x1 = cx + inner_half_width;
  if (y0 < 0 || x0 < 0 || y1 > height || x1 > width) {
    throw InvalidInput("inner window " + std::to_string(2 * inner_half_width) + "x" +
                       std::to_string(2 * inner_half_height) + " does not fit a " + std::to_string(width) + "x" +
                       std::to_string(height) + " grid");
  }
  FreqMask::Bits bits = FreqMask::Bits::Ones(height, width);
  bits.block(y0, x0, y1 - y0, x1 - x0).setZero();
  return FreqMask(std::move(bits));
}

Spectrum freq_gradient(const net::Classifier& model, const Spectrum& s, const net::Vector& logit_weights,
                       net::Vector* logits_out) {
  const Image x = idft2(s);
  return dft2(model.input_gradient(x, logit_weights, logits_out));
}

Spectrum freq_gradient(const net::Classifier& model, const Spectrum& s, int class_index) {
  if (class_index < 0 || class_index >= model.num_classes()) throw InvalidInput("class index out of range");
  return freq_gradient(model, s, net::Vector::Unit(model.num_classes(), class_index));
}

}  // namespace acaptcha::spectral
