#pragma once

// Shared test helpers: seeded random generators for property tests and small
// reference implementations used as oracles. Oracles are written the slow,
// obvious way on purpose and share no code with the library.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "acaptcha/image.hpp"
#include "acaptcha/spectral.hpp"

namespace testing {

using acaptcha::Image;
using acaptcha::Shape;

inline std::filesystem::path data_dir() { return ACAPTCHA_TEST_DATA_DIR; }

// Fresh empty scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("acaptcha-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return uniform() < p; }
  std::uint64_t raw() { return rng_(); }

  Image image(Shape s) {
    Image x(s);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = uniform();
    return x;
  }
  // Mostly dark with a few bright strokes, like a digit.
  Image sparse_image(Shape s, double density = 0.2) {
    Image x(s);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = coin(density) ? uniform(0.5, 1.0) : 0.0;
    return x;
  }
  // Random 8-bit levels; rank filters are easier to compare on exact values.
  Image quantized_image(Shape s, int levels = 256) {
    Image x(s);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = double(integer(0, levels - 1)) / double(levels - 1);
    return x;
  }
  acaptcha::spectral::Spectrum spectrum(int h, int w) {
    acaptcha::spectral::Spectrum s(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) s(y, x) = {normal(), normal()};
    return s;
  }
  Eigen::VectorXd vector(int n, double scale = 1.0) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = scale * normal();
    return v;
  }

 private:
  std::mt19937_64 rng_;
};

// Direct summation of the centered unitary 2-D DFT.
inline acaptcha::spectral::Spectrum naive_dft2(const Image& x) {
  const int h = x.height(), w = x.width();
  acaptcha::spectral::Spectrum s(h, w);
  const double pi = std::numbers::pi;
  for (int ky = 0; ky < h; ++ky) {
    for (int kx = 0; kx < w; ++kx) {
      std::complex<double> acc = 0.0;
      for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
          const double phase = -2.0 * pi * (double(ky - h / 2) * y / h + double(kx - w / 2) * xx / w);
          acc += x(y, xx) * std::complex<double>(std::cos(phase), std::sin(phase));
        }
      }
      s(ky, kx) = acc / std::sqrt(double(h * w));
    }
  }
  return s;
}

// Clamp-to-edge neighborhood of (y, x) in channel c, row-major order.
inline std::vector<double> window(const Image& img, int c, int y, int x, int size) {
  std::vector<double> out;
  const int r = size / 2;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const int yy = std::clamp(y + dy, 0, img.height() - 1);
      const int xx = std::clamp(x + dx, 0, img.width() - 1);
      out.push_back(img.at(c, yy, xx));
    }
  }
  return out;
}

// Correlation with clamp-to-edge borders, output clamped to [0,1].
inline Image naive_convolve(const Image& img, const std::vector<double>& weights, int size, double scale,
                            double offset) {
  Image out(img.shape());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        const auto win = window(img, c, y, x, size);
        double acc = 0.0;
        for (std::size_t i = 0; i < win.size(); ++i) acc += weights[i] * win[i];
        out.at(c, y, x) = std::clamp(acc / scale + offset, 0.0, 1.0);
      }
  return out;
}

inline Image naive_rank(const Image& img, int size, const std::string& kind) {
  Image out(img.shape());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        auto win = window(img, c, y, x, size);
        std::sort(win.begin(), win.end());
        double v = 0.0;
        if (kind == "min") {
          v = win.front();
        } else if (kind == "median") {
          v = win[win.size() / 2];
        } else {
          // Most frequent 8-bit level, lowest level on ties; kept only when it
          // occurs more than twice, else the center pixel stays.
          int best_level = -1, best_count = 0;
          for (int level = 0; level < 256; ++level) {
            int count = 0;
            for (double p : win) count += int(std::lround(p * 255.0)) == level;
            if (count > best_count) {
              best_count = count;
              best_level = level;
            }
          }
          v = best_count > 2 ? best_level / 255.0 : img.at(c, y, x);
        }
        out.at(c, y, x) = v;
      }
  return out;
}

}  // namespace testing
