#pragma once

// Checkpoint file format (safetensors layout):
//
//   u64 little-endian H | H bytes of UTF-8 JSON header | raw data buffer
//
// The header maps each tensor name to
//   {"dtype": "F32"|"F16"|"BF16", "shape": [...], "data_offsets": [begin, end]}
// with offsets relative to the start of the data buffer, plus an optional
// "__metadata__" string-to-string map. Tensor data is little-endian.
//
// Readers accept F32, F16 and BF16 and widen to double. Writers always emit
// F32, tensors in name order, contiguous, with the header padded by spaces to
// a multiple of 8 bytes. Re-saving a loaded F32 checkpoint reproduces it
// byte for byte.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ame/weightstore.hpp"

namespace ame {

struct LoadOptions {
  // Non-finite values are rejected unless this is set.
  bool allow_non_finite = false;
};

WeightMap decode_checkpoint(std::span<const std::uint8_t> bytes, const LoadOptions& opts = {});
std::vector<std::uint8_t> encode_checkpoint(const WeightMap& map);

WeightMap load_checkpoint(const std::filesystem::path& path, const LoadOptions& opts = {});
void save_checkpoint(const WeightMap& map, const std::filesystem::path& path);

float half_to_float(std::uint16_t bits);
float bfloat16_to_float(std::uint16_t bits);

}  // namespace ame
