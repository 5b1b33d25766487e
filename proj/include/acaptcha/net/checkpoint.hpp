#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "acaptcha/net/classifier.hpp"

namespace acaptcha::net {

// Checkpoint layout, all integers little-endian:
//   "ACAP" | u32 version | u32 arch | u32 C,H,W | u32 classes |
//   u32 encoding kind | u32 levels | f32 temperature | u32 knn k |
//   u64 n | n x f32 parameters | u32 CRC32 of all preceding bytes
// KNN models store their reference pixels followed by the labels as floats.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize(const Classifier& model);
Classifier deserialize(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Classifier& model);
Classifier load_checkpoint(const std::filesystem::path& path);

}  // namespace acaptcha::net
