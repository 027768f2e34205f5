#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "melstorm/audio.hpp"

namespace melstorm {

/// Decodes a RIFF/WAVE PCM16 container. Channels are averaged to mono,
/// samples scaled by 1/32768, and anything not at 48 kHz is resampled.
/// Errors name the offending chunk.
AudioClip parse_wav(std::span<const std::uint8_t> bytes, int label = 0, std::string id = {});

/// Mono PCM16 encoding at the clip's own sample rate; samples are rounded
/// from s * 32768 and saturated to the int16 range.
std::vector<std::uint8_t> encode_wav(const AudioClip& clip);

AudioClip read_wav(const std::filesystem::path& path, int label = 0);
void write_wav(const AudioClip& clip, const std::filesystem::path& path);

}  // namespace melstorm
