#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "acaptcha/image.hpp"

namespace acaptcha::filters {

enum class FilterId {
  blur,
  detail,
  edge_enhance,
  smooth,
  smooth_more,
  gaussian_blur,
  min_filter,
  median_filter,
  mode_filter,
};

struct FilterKind {
  FilterId id = FilterId::blur;
  double radius = 2.0;  // gaussian_blur only
  int size = 3;         // rank filters only

  static FilterKind blur() { return {FilterId::blur}; }
  static FilterKind detail() { return {FilterId::detail}; }
  static FilterKind edge_enhance() { return {FilterId::edge_enhance}; }
  static FilterKind smooth() { return {FilterId::smooth}; }
  static FilterKind smooth_more() { return {FilterId::smooth_more}; }
  static FilterKind gaussian(double radius = 2.0) { return {FilterId::gaussian_blur, radius}; }
  static FilterKind min(int size = 3) { return {FilterId::min_filter, 2.0, size}; }
  static FilterKind median(int size = 3) { return {FilterId::median_filter, 2.0, size}; }
  static FilterKind mode(int size = 3) { return {FilterId::mode_filter, 2.0, size}; }

  void validate() const;
  friend bool operator==(const FilterKind&, const FilterKind&) = default;
};

// The nine filters with default parameters, in a fixed order.
std::vector<FilterKind> all_filters();

// Fixed convolution kernel: out = sum(w * window) / scale + offset.
struct Kernel {
  int size = 3;
  std::vector<double> weights;  // row-major size x size
  double scale = 1.0;
  double offset = 0.0;
};
// Only defined for blur, detail, edge_enhance, smooth, smooth_more.
const Kernel& fixed_kernel(FilterId id);
Kernel gaussian_kernel(double radius);

inline constexpr double kBinarizeThreshold = 0.5;

// Filters each channel independently with clamp-to-edge borders; output is
// clamped to [0,1].
Image apply_filter(const Image& x, const FilterKind& kind);
// 1 where intensity > 0.5, else 0. Single-channel only.
Image binarize(const Image& x);

struct PreprocChain {
  std::vector<FilterKind> filters;
  bool binarize = false;

  bool empty() const { return filters.empty() && !binarize; }
  friend bool operator==(const PreprocChain&, const PreprocChain&) = default;
};

Image apply_chain(const Image& x, const PreprocChain& chain);

// Grammar: a chain is "none", or filter tokens joined by '+', optionally
// including "bin"; parameters go in parentheses, e.g. "gaussian(1.5)+bin",
// "median(5)". A list is comma-separated chains.
PreprocChain parse_chain(std::string_view text);
std::vector<PreprocChain> parse_chain_list(std::string_view text);
FilterKind parse_filter(std::string_view token);

// Canonical token form; parse_chain(to_string(c)) == c.
std::string to_string(const FilterKind& kind);
std::string to_string(const PreprocChain& chain);
// Human-readable table label ("−" for the empty chain, "Smooth + B", ...).
std::string display_name(const PreprocChain& chain);
std::string display_name(const FilterKind& kind);

}  // namespace acaptcha::filters
