#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "acaptcha/error.hpp"

namespace acaptcha::detail {

// Unquoted delimiter split; CSV fields in this project never contain commas.
inline std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto at = line.find(sep, start);
    out.emplace_back(line.substr(start, at == std::string_view::npos ? std::string_view::npos : at - start));
    if (at == std::string_view::npos) break;
    start = at + 1;
  }
  return out;
}

inline std::vector<std::string> lines(std::string_view text) {
  std::vector<std::string> out;
  for (auto& l : split(text, '\n')) {
    if (!l.empty() && l.back() == '\r') l.pop_back();
    if (!l.empty()) out.push_back(std::move(l));
  }
  return out;
}

template <typename T>
T parse_number(std::string_view s, std::string_view what) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
    throw FormatError(std::string(what) + ": '" + std::string(s) + "' is not a number");
  }
  return v;
}

inline void check_field(std::string_view s, std::string_view what) {
  if (s.find_first_of(",\n\r") != std::string_view::npos) {
    throw InvalidInput(std::string(what) + " must not contain commas or newlines: '" + std::string(s) + "'");
  }
}

}  // namespace acaptcha::detail
