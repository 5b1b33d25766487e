#pragma once

#include <Eigen/Core>

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>

#include "acaptcha/image.hpp"
#include "acaptcha/net/classifier.hpp"

namespace acaptcha::spectral {

template <typename Scalar>
using ComplexGrid = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Index of the zero frequency along an axis of length n in the centered layout.
constexpr int center_index(int n) { return n / 2; }

// Index of the conjugate-symmetric partner of k along an axis of length n.
constexpr int partner_index(int k, int n) { return ((2 * center_index(n) - k) % n + n) % n; }

// Unitary centered DFT matrix: row k holds frequency k - n/2,
// F(k, j) = exp(-2*pi*i*(k - n/2)*j / n) / sqrt(n).
template <typename Scalar>
ComplexGrid<Scalar> centered_dft_matrix(int n) {
  ComplexGrid<Scalar> f(n, n);
  const Scalar norm = Scalar(1) / std::sqrt(Scalar(n));
  const int h = center_index(n);
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      // Reduce the phase index mod n before scaling to keep the angle small.
      const long long m = (((long long)(k - h) * j) % n + n) % n;
      const Scalar angle = -Scalar(2) * std::numbers::pi_v<Scalar> * Scalar(m) / Scalar(n);
      f(k, j) = std::polar(norm, angle);
    }
  }
  return f;
}

// Complex coefficient grid of a single-channel image, DC at
// (height/2, width/2), orthonormal scaling.
template <typename Scalar>
class BasicSpectrum {
 public:
  BasicSpectrum() = default;
  BasicSpectrum(int height, int width) : coeffs_(ComplexGrid<Scalar>::Zero(height, width)) {}
  explicit BasicSpectrum(ComplexGrid<Scalar> coeffs) : coeffs_(std::move(coeffs)) {}

  int height() const { return int(coeffs_.rows()); }
  int width() const { return int(coeffs_.cols()); }
  std::complex<Scalar>& operator()(int ky, int kx) { return coeffs_(ky, kx); }
  const std::complex<Scalar>& operator()(int ky, int kx) const { return coeffs_(ky, kx); }
  ComplexGrid<Scalar>& coeffs() { return coeffs_; }
  const ComplexGrid<Scalar>& coeffs() const { return coeffs_; }

  Scalar norm() const { return coeffs_.norm(); }

 private:
  ComplexGrid<Scalar> coeffs_;
};

using Spectrum = BasicSpectrum<double>;

template <typename Scalar>
BasicSpectrum<Scalar> dft2(const BasicImage<Scalar>& x) {
  if (x.channels() != 1) throw InvalidInput("dft2 expects a single-channel image");
  const auto fh = centered_dft_matrix<Scalar>(x.height());
  const auto fw = centered_dft_matrix<Scalar>(x.width());
  const ComplexGrid<Scalar> spatial = x.plane(0).template cast<std::complex<Scalar>>();
  return BasicSpectrum<Scalar>(fh * spatial * fw.transpose());
}

// Real part of the inverse transform, without clamping. This is the linear map
// whose adjoint is dft2.
template <typename Scalar>
BasicImage<Scalar> idft2_linear(const BasicSpectrum<Scalar>& s) {
  const auto fh = centered_dft_matrix<Scalar>(s.height());
  const auto fw = centered_dft_matrix<Scalar>(s.width());
  const ComplexGrid<Scalar> spatial = fh.adjoint() * s.coeffs() * fw.conjugate();
  BasicImage<Scalar> out = BasicImage<Scalar>::gray(s.height(), s.width());
  out.plane(0) = spatial.real();
  return out;
}

// Image reconstruction: real part of the inverse transform clamped to [0,1].
template <typename Scalar>
BasicImage<Scalar> idft2(const BasicSpectrum<Scalar>& s) {
  auto out = idft2_linear(s);
  out.clamp01();
  return out;
}

// Binary frequency mask: 1 = modifiable (high frequency), 0 = protected (the
// centered inner window of low frequencies).
class FreqMask {
 public:
  using Bits = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  FreqMask() = default;
  explicit FreqMask(Bits bits) : bits_(std::move(bits)) {}

  int height() const { return int(bits_.rows()); }
  int width() const { return int(bits_.cols()); }
  bool operator()(int ky, int kx) const { return bits_(ky, kx) != 0; }
  const Bits& bits() const { return bits_; }
  long ones() const { return long(bits_.template cast<long>().sum()); }

  // A coefficient may change only when it and its conjugate partner are both
  // modifiable; this keeps the spectrum Hermitian and the image real.
  bool editable(int ky, int kx) const {
    return (*this)(ky, kx) && (*this)(partner_index(ky, height()), partner_index(kx, width()));
  }
  long editable_count() const;

 private:
  Bits bits_;
};

FreqMask make_mask(int width, int height, int inner_half_width, int inner_half_height);

// Gradient of Z(x)_class with respect to the real and imaginary parts of each
// coefficient of s (packed as re + i*im), through x = Re(idft2(s)). Equals
// dft2 of the spatial input gradient at idft2(s).
Spectrum freq_gradient(const net::Classifier& model, const Spectrum& s, int class_index);
// Same for an arbitrary linear functional weights . Z(x).
Spectrum freq_gradient(const net::Classifier& model, const Spectrum& s, const net::Vector& logit_weights,
                       net::Vector* logits_out = nullptr);

}  // namespace acaptcha::spectral
