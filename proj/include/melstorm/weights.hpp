#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "melstorm/model.hpp"

namespace melstorm {

// Weight file layout, all integers little-endian:
//   "AMNW"  u16 version  u32 len + model fingerprint (canonical JSON)
//   u32 array count, then per array:
//   u16 len + name  u8 rank  u32 extents[rank]  f32 values[numel]
// Arrays are the learnable parameters followed by batch-norm running
// statistics.
inline constexpr std::uint16_t kWeightsVersion = 1;

std::vector<std::uint8_t> encode_weights(const Model& model);

/// Rejects bad magic, unknown version, truncation, and any name/shape that
/// does not match the fingerprint (or `expected`, when given). The error
/// message names the offending field.
Model decode_weights(std::span<const std::uint8_t> bytes, const std::optional<ModelConfig>& expected = std::nullopt);

void save_weights(const Model& model, const std::filesystem::path& path);
Model load_weights(const std::filesystem::path& path, const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace melstorm
