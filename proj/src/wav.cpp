#include "melstorm/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>

#include "melstorm/error.hpp"

namespace melstorm {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

std::string tag_at(std::span<const std::uint8_t> b, std::size_t at) {
  std::string s(reinterpret_cast<const char*>(b.data() + at), 4);
  for (auto& c : s) {
    if (c < 32 || c > 126) c = '?';
  }
  return s;
}

struct FmtChunk {
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
};

FmtChunk parse_fmt(std::span<const std::uint8_t> b, std::size_t at, std::uint32_t size) {
  if (size < 16) throw FormatError("wav: 'fmt ' chunk is " + std::to_string(size) + " bytes, need at least 16");
  std::uint16_t format = read_u16(b, at);
  FmtChunk fmt;
  fmt.channels = read_u16(b, at + 2);
  fmt.sample_rate = read_u32(b, at + 4);
  fmt.bits = read_u16(b, at + 14);
  if (format == kFormatExtensible) {
    if (size < 40) throw FormatError("wav: extensible 'fmt ' chunk is too short for its sub-format GUID");
    format = read_u16(b, at + 24);
  }
  if (format != kFormatPcm) {
    throw FormatError("wav: 'fmt ' chunk declares codec " + std::to_string(format) + ", only PCM (1) is supported");
  }
  if (fmt.bits != 16) {
    throw FormatError("wav: 'fmt ' chunk declares " + std::to_string(fmt.bits) + "-bit samples, only 16-bit is supported");
  }
  if (fmt.channels == 0) throw FormatError("wav: 'fmt ' chunk declares zero channels");
  if (fmt.sample_rate == 0) throw FormatError("wav: 'fmt ' chunk declares a zero sample rate");
  return fmt;
}

}  // namespace

AudioClip parse_wav(std::span<const std::uint8_t> bytes, int label, std::string id) {
  if (bytes.size() < 12) throw FormatError("wav: file is " + std::to_string(bytes.size()) + " bytes, too short for a RIFF header");
  if (!tag_is(bytes, 0, "RIFF")) throw FormatError("wav: missing 'RIFF' tag, found '" + tag_at(bytes, 0) + "'");
  if (!tag_is(bytes, 8, "WAVE")) throw FormatError("wav: RIFF form type is '" + tag_at(bytes, 8) + "', expected 'WAVE'");

  std::optional<FmtChunk> fmt;
  std::span<const std::uint8_t> data;
  bool have_data = false;
  std::size_t at = 12;
  while (at + 8 <= bytes.size()) {
    const std::string tag = tag_at(bytes, at);
    const std::uint32_t size = read_u32(bytes, at + 4);
    const std::size_t body = at + 8;
    if (size > bytes.size() - body) {
      // A truncated trailing data chunk is common in the wild; anything else is corrupt.
      if (tag != "data") {
        throw FormatError("wav: chunk '" + tag + "' declares " + std::to_string(size) + " bytes but only " +
                          std::to_string(bytes.size() - body) + " remain");
      }
    }
    const std::size_t available = std::min<std::size_t>(size, bytes.size() - body);
    if (tag == "fmt ") {
      fmt = parse_fmt(bytes, body, static_cast<std::uint32_t>(available));
    } else if (tag == "data") {
      data = bytes.subspan(body, available);
      have_data = true;
    }
    at = body + available + (available & 1);
  }
  if (!fmt) throw FormatError("wav: no 'fmt ' chunk");
  if (!have_data) throw FormatError("wav: no 'data' chunk");

  const std::size_t frame_bytes = 2u * fmt->channels;
  const std::size_t frames = data.size() / frame_bytes;
  if (frames == 0) throw FormatError("wav: 'data' chunk holds no complete sample frames");

  std::vector<float> mono(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < fmt->channels; ++c) {
      const auto raw = static_cast<std::int16_t>(read_u16(data, f * frame_bytes + 2 * c));
      acc += static_cast<double>(raw) / 32768.0;
    }
    mono[f] = static_cast<float>(acc / fmt->channels);
  }

  AudioClip clip;
  clip.label = label;
  clip.id = std::move(id);
  const int rate = static_cast<int>(fmt->sample_rate);
  clip.samples = rate == kModelSampleRate ? std::move(mono) : resample_linear(mono, rate, kModelSampleRate);
  clip.sample_rate = kModelSampleRate;
  return clip;
}

std::vector<std::uint8_t> encode_wav(const AudioClip& clip) {
  const auto data_bytes = static_cast<std::uint32_t>(2 * clip.samples.size());
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (float s : clip.samples) {
    const double scaled = std::round(static_cast<double>(s) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  return out;
}

AudioClip read_wav(const std::filesystem::path& path, int label) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_wav(bytes, label, path.stem().string());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const auto bytes = encode_wav(clip);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace melstorm
