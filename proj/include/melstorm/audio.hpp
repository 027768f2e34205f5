#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "melstorm/rng.hpp"

namespace melstorm {

inline constexpr int kModelSampleRate = 48000;

/// Mono waveform in [-1, 1] with its digit label.
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = kModelSampleRate;
  int label = 0;
  std::string id;
  std::string speaker;
};

/// Linear-interpolation resampling; output length round(len * to / from).
std::vector<float> resample_linear(const std::vector<float>& samples, int from_rate, int to_rate);

/// Zero-pads at the end or truncates to exactly `length` samples.
std::vector<float> canonical_length(const std::vector<float>& samples, std::size_t length);

/// Prepends k zeros to the clip; no canonicalization.
AudioClip prepend_zeros(const AudioClip& clip, std::size_t k);

/// Draws k uniformly from [0, floor(max_shift_fraction * len)], prepends k
/// zeros and then pads/truncates to `canonical` samples.
AudioClip shift_augment(const AudioClip& clip, double max_shift_fraction, std::size_t canonical, Rng& rng);

/// Deterministic desk-scale stand-in for a spoken-digit corpus.
///
/// Digit d is a two-tone chord: fundamental 200 + 60 d Hz and its second
/// harmonic, with a random attack/decay envelope, random loudness, onset
/// jitter, slight detuning, and Gaussian background noise 30 dB below the
/// voiced signal. Clips are one second at 48 kHz; ids encode digit and index.
std::vector<AudioClip> synth_corpus(std::size_t n_per_class, std::uint64_t seed);

}  // namespace melstorm
