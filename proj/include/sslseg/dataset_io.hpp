#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sslseg/core_data.hpp"

namespace sslseg::data {

/// A dataset root on disk: manifest.json plus per-tile raw arrays
/// vv_<id>.bin, vh_<id>.bin, valid_<id>.bin and mask_<id>.bin.
struct Dataset {
  CompositeNormalization normalization;
  DatasetIndex train{Split::Train};
  DatasetIndex val{Split::Val};
  DatasetIndex test{Split::Test};
};

/// 16-byte header: 4-byte magic ("SSF4" float32 / "SSU1" uint8), then
/// little-endian uint32 height, width, channels.
struct ArrayHeader {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;
};

void write_float_array(const std::filesystem::path& path, const ArrayHeader& header,
                       std::span<const float> values);
void write_byte_array(const std::filesystem::path& path, const ArrayHeader& header,
                      std::span<const std::uint8_t> values);
std::vector<float> read_float_array(const std::filesystem::path& path, ArrayHeader& header);
std::vector<std::uint8_t> read_byte_array(const std::filesystem::path& path, ArrayHeader& header);

void write_mask(const std::filesystem::path& path, const GroundTruthMask& mask);
GroundTruthMask read_mask(const std::filesystem::path& path);

void save_dataset(const std::filesystem::path& root, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& root);

/// 8-bit grayscale PNG; mask values are scaled to 0/255.
void write_mask_png(const std::filesystem::path& path, const GroundTruthMask& mask);

}  // namespace sslseg::data
