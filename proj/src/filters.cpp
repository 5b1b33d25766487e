#include "acaptcha/filters.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cctype>
#include <cmath>

namespace acaptcha::filters {

namespace {

Kernel make_kernel(int size, double scale, std::vector<double> w) { return Kernel{size, std::move(w), scale, 0.0}; }

const Kernel kBlur = make_kernel(5, 16, {1, 1, 1, 1, 1,  //
                                         1, 0, 0, 0, 1,  //
                                         1, 0, 0, 0, 1,  //
                                         1, 0, 0, 0, 1,  //
                                         1, 1, 1, 1, 1});
const Kernel kDetail = make_kernel(3, 6, {0, -1, 0, -1, 10, -1, 0, -1, 0});
const Kernel kEdgeEnhance = make_kernel(3, 2, {-1, -1, -1, -1, 10, -1, -1, -1, -1});
const Kernel kSmooth = make_kernel(3, 13, {1, 1, 1, 1, 5, 1, 1, 1, 1});
const Kernel kSmoothMore = make_kernel(5, 100, {1, 1, 1,  1, 1,  //
                                                1, 5, 5,  5, 1,  //
                                                1, 5, 44, 5, 1,  //
                                                1, 5, 5,  5, 1,  //
                                                1, 1, 1,  1, 1});

int clampi(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }

Image convolve(const Image& x, const Kernel& k) {
  Image out(x.shape());
  const int r = k.size / 2;
  const int h = x.height(), w = x.width();
  for (int c = 0; c < x.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy) {
          const int sy = clampi(y + dy, 0, h - 1);
          for (int dx = -r; dx <= r; ++dx) {
            acc += k.weights[std::size_t((dy + r) * k.size + dx + r)] * x.at(c, sy, clampi(xx + dx, 0, w - 1));
          }
        }
        out.at(c, y, xx) = acc / k.scale + k.offset;
      }
    }
  }
  return out.clamp01();
}

template <typename Reduce>
Image rank_filter(const Image& x, int size, Reduce reduce) {
  Image out(x.shape());
  const int r = size / 2;
  const int h = x.height(), w = x.width();
  std::vector<double> window(std::size_t(size * size));
  for (int c = 0; c < x.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        std::size_t i = 0;
        for (int dy = -r; dy <= r; ++dy) {
          for (int dx = -r; dx <= r; ++dx) {
            window[i++] = x.at(c, clampi(y + dy, 0, h - 1), clampi(xx + dx, 0, w - 1));
          }
        }
        out.at(c, y, xx) = reduce(window, x.at(c, y, xx));
      }
    }
  }
  return out.clamp01();
}

double mode_of(const std::vector<double>& window, double center) {
  // Histogram over 8-bit levels; the most frequent level wins (lowest level on
  // ties) but only if it occurs more than twice.
  std::array<int, 256> hist{};
  for (double v : window) ++hist[std::size_t(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))];
  int best = 0;
  for (int i = 1; i < 256; ++i) {
    if (hist[std::size_t(i)] > hist[std::size_t(best)]) best = i;
  }
  return hist[std::size_t(best)] > 2 ? best / 255.0 : center;
}

std::string lower_trim(std::string_view s) {
  std::string out;
  for (char ch : s) {
    if (!std::isspace(static_cast<unsigned char>(ch))) out.push_back(char(std::tolower(static_cast<unsigned char>(ch))));
  }
  return out;
}

std::string format_number(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void FilterKind::validate() const {
  switch (id) {
    case FilterId::gaussian_blur:
      if (!(radius > 0.0) || !std::isfinite(radius)) throw InvalidInput("gaussian radius must be > 0");
      break;
    case FilterId::min_filter:
    case FilterId::median_filter:
    case FilterId::mode_filter:
      if (size < 3 || size % 2 == 0) {
        throw InvalidInput("rank filter size must be odd and >= 3, got " + std::to_string(size));
      }
      break;
    default: break;
  }
}

std::vector<FilterKind> all_filters() {
  return {FilterKind::blur(),     FilterKind::detail(), FilterKind::edge_enhance(),
          FilterKind::smooth(),   FilterKind::smooth_more(), FilterKind::gaussian(),
          FilterKind::min(),      FilterKind::median(), FilterKind::mode()};
}

const Kernel& fixed_kernel(FilterId id) {
  switch (id) {
    case FilterId::blur: return kBlur;
    case FilterId::detail: return kDetail;
    case FilterId::edge_enhance: return kEdgeEnhance;
    case FilterId::smooth: return kSmooth;
    case FilterId::smooth_more: return kSmoothMore;
    default: throw InvalidInput("filter has no fixed kernel");
  }
}

Kernel gaussian_kernel(double radius) {
  FilterKind::gaussian(radius).validate();
  const int r = std::max(1, int(std::ceil(3.0 * radius)));
  const int size = 2 * r + 1;
  Kernel k{size, std::vector<double>(std::size_t(size * size)), 0.0, 0.0};
  for (int y = -r; y <= r; ++y) {
    for (int x = -r; x <= r; ++x) {
      const double v = std::exp(-(x * x + y * y) / (2.0 * radius * radius));
      k.weights[std::size_t((y + r) * size + x + r)] = v;
      k.scale += v;
    }
  }
  return k;
}

Image apply_filter(const Image& x, const FilterKind& kind) {
  kind.validate();
  if (x.empty()) throw InvalidInput("cannot filter an empty image");
  switch (kind.id) {
    case FilterId::blur:
    case FilterId::detail:
    case FilterId::edge_enhance:
    case FilterId::smooth:
    case FilterId::smooth_more: return convolve(x, fixed_kernel(kind.id));
    case FilterId::gaussian_blur: return convolve(x, gaussian_kernel(kind.radius));
    case FilterId::min_filter:
      return rank_filter(x, kind.size, [](std::vector<double>& w, double) { return *std::min_element(w.begin(), w.end()); });
    case FilterId::median_filter:
      return rank_filter(x, kind.size, [](std::vector<double>& w, double) {
        auto mid = w.begin() + std::ptrdiff_t(w.size() / 2);
        std::nth_element(w.begin(), mid, w.end());
        return *mid;
      });
    case FilterId::mode_filter:
      return rank_filter(x, kind.size, [](std::vector<double>& w, double center) { return mode_of(w, center); });
  }
  throw InvalidInput("unknown filter");
}

Image binarize(const Image& x) {
  if (x.channels() != 1) throw InvalidInput("binarization is defined for single-channel images only");
  return Image(x.shape(), (x.data() > kBinarizeThreshold).cast<double>().eval());
}

Image apply_chain(const Image& x, const PreprocChain& chain) {
  if (chain.binarize && x.channels() != 1) {
    throw InvalidInput("binarization requested on a " + std::to_string(x.channels()) + "-channel image");
  }
  Image out = x;
  for (const auto& f : chain.filters) out = apply_filter(out, f);
  if (chain.binarize) out = binarize(out);
  return out;
}

FilterKind parse_filter(std::string_view token) {
  const std::string t = lower_trim(token);
  std::string name = t;
  std::string arg;
  if (const auto open = t.find('('); open != std::string::npos) {
    if (t.back() != ')') throw InvalidInput("unbalanced parentheses in filter '" + std::string(token) + "'");
    name = t.substr(0, open);
    arg = t.substr(open + 1, t.size() - open - 2);
    if (arg.empty()) throw InvalidInput("empty parameter in filter '" + std::string(token) + "'");
  }
  auto num = [&](double fallback) {
    if (arg.empty()) return fallback;
    double v = 0;
    const auto res = std::from_chars(arg.data(), arg.data() + arg.size(), v);
    if (res.ec != std::errc() || res.ptr != arg.data() + arg.size()) {
      throw InvalidInput("bad parameter '" + arg + "' in filter '" + std::string(token) + "'");
    }
    return v;
  };
  auto integer = [&](int fallback) {
    const double v = num(fallback);
    if (v != std::floor(v)) throw InvalidInput("filter size must be an integer: '" + std::string(token) + "'");
    return int(v);
  };
  auto no_arg = [&](FilterKind k) {
    if (!arg.empty()) throw InvalidInput("filter '" + name + "' takes no parameter");
    return k;
  };
  FilterKind k;
  if (name == "blur") k = no_arg(FilterKind::blur());
  else if (name == "detail") k = no_arg(FilterKind::detail());
  else if (name == "edge_enhance" || name == "edge") k = no_arg(FilterKind::edge_enhance());
  else if (name == "smooth") k = no_arg(FilterKind::smooth());
  else if (name == "smooth_more") k = no_arg(FilterKind::smooth_more());
  else if (name == "gaussian" || name == "gaussian_blur") k = FilterKind::gaussian(num(2.0));
  else if (name == "min" || name == "min_filter") k = FilterKind::min(integer(3));
  else if (name == "median" || name == "median_filter") k = FilterKind::median(integer(3));
  else if (name == "mode" || name == "mode_filter") k = FilterKind::mode(integer(3));
  else throw InvalidInput("unknown filter '" + std::string(token) + "'");
  k.validate();
  return k;
}

PreprocChain parse_chain(std::string_view text) {
  const std::string t = lower_trim(text);
  PreprocChain chain;
  if (t.empty()) throw InvalidInput("empty chain token (use 'none')");
  if (t == "none" || t == "-") return chain;
  std::size_t start = 0;
  while (start <= t.size()) {
    const auto plus = t.find('+', start);
    const std::string part = t.substr(start, plus == std::string::npos ? std::string::npos : plus - start);
    if (part.empty()) throw InvalidInput("empty element in chain '" + std::string(text) + "'");
    if (part == "bin" || part == "b") {
      chain.binarize = true;
    } else {
      if (chain.binarize) throw InvalidInput("binarization must come last in chain '" + std::string(text) + "'");
      chain.filters.push_back(parse_filter(part));
    }
    if (plus == std::string::npos) break;
    start = plus + 1;
  }
  return chain;
}

std::vector<PreprocChain> parse_chain_list(std::string_view text) {
  std::vector<PreprocChain> out;
  std::size_t start = 0;
  const std::string s(text);
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(parse_chain(s.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string to_string(const FilterKind& kind) {
  switch (kind.id) {
    case FilterId::blur: return "blur";
    case FilterId::detail: return "detail";
    case FilterId::edge_enhance: return "edge_enhance";
    case FilterId::smooth: return "smooth";
    case FilterId::smooth_more: return "smooth_more";
    case FilterId::gaussian_blur: return "gaussian(" + format_number(kind.radius) + ")";
    case FilterId::min_filter: return "min(" + std::to_string(kind.size) + ")";
    case FilterId::median_filter: return "median(" + std::to_string(kind.size) + ")";
    case FilterId::mode_filter: return "mode(" + std::to_string(kind.size) + ")";
  }
  return "?";
}

std::string to_string(const PreprocChain& chain) {
  if (chain.empty()) return "none";
  std::string out;
  for (const auto& f : chain.filters) {
    if (!out.empty()) out += '+';
    out += to_string(f);
  }
  if (chain.binarize) out += out.empty() ? "bin" : "+bin";
  return out;
}

std::string display_name(const FilterKind& kind) {
  switch (kind.id) {
    case FilterId::blur: return "Blur";
    case FilterId::detail: return "Detail";
    case FilterId::edge_enhance: return "EdgeEnhance";
    case FilterId::smooth: return "Smooth";
    case FilterId::smooth_more: return "SmoothMore";
    case FilterId::gaussian_blur: return "GaussianBlur(" + format_number(kind.radius) + ")";
    case FilterId::min_filter: return "MinFilter(" + std::to_string(kind.size) + ")";
    case FilterId::median_filter: return "MedianFilter(" + std::to_string(kind.size) + ")";
    case FilterId::mode_filter: return "ModeFilter(" + std::to_string(kind.size) + ")";
  }
  return "?";
}

std::string display_name(const PreprocChain& chain) {
  if (chain.filters.empty()) return chain.binarize ? "B" : "−";
  std::string out;
  for (const auto& f : chain.filters) {
    if (!out.empty()) out += " + ";
    out += display_name(f);
  }
  if (chain.binarize) out += " + B";
  return out;
}

}  // namespace acaptcha::filters
