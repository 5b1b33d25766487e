#include "acaptcha/image.hpp"

namespace acaptcha {

std::string to_string(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

LabeledSet LabeledSet::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw InvalidInput("slice bounds outside labeled set");
  LabeledSet out;
  out.images.assign(images.begin() + std::ptrdiff_t(begin), images.begin() + std::ptrdiff_t(end));
  out.labels.assign(labels.begin() + std::ptrdiff_t(begin), labels.begin() + std::ptrdiff_t(end));
  return out;
}

}  // namespace acaptcha
