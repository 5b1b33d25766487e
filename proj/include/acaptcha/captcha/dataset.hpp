#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "acaptcha/image.hpp"

namespace acaptcha::captcha {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Reads an IDX image/label pair (optionally gzip-compressed). Images come back
// as 1 x rows x cols grids in [0,1]. Throws FormatError with the byte offset of
// the first inconsistency.
LabeledSet load_mnist(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

// Decoders over in-memory (already decompressed) IDX buffers.
std::vector<Image> decode_idx_images(std::span<const std::uint8_t> bytes);
std::vector<int> decode_idx_labels(std::span<const std::uint8_t> bytes);

// Returns the file's bytes, inflating gzip streams transparently.
std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path);

// Directory-of-PNG corpus with labels.csv ("filename,category", integer
// categories, header line optional).
LabeledSet load_png_corpus(const std::filesystem::path& dir);
void save_png_corpus(const std::filesystem::path& dir, const LabeledSet& corpus);

// Procedurally drawn 10-category color corpus (shape classes with random
// color, placement, scale, background texture and noise).
LabeledSet synthetic_color_corpus(int per_class, std::uint64_t seed, int size = 32);

}  // namespace acaptcha::captcha
