#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "melstorm/audio.hpp"
#include "melstorm/fft.hpp"

namespace melstorm {

/// HTK mel scale: 2595 log10(1 + f / 700).
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters over the one-sided power spectrum.
struct MelBank {
  std::size_t n_mels = 0;
  std::size_t n_bins = 0;
  double fmin = 0.0;
  double fmax = 0.0;
  std::vector<double> weights;     // n_mels x n_bins, row-major
  std::vector<double> centers_hz;  // peak frequency of each filter
  std::vector<std::size_t> first_bin;
  std::vector<std::size_t> last_bin;  // inclusive; nonzero support of each row

  std::span<const double> row(std::size_t m) const { return {weights.data() + m * n_bins, n_bins}; }
};

/// n_mels filters with peaks equally spaced in HTK mel between fmin and fmax,
/// evaluated at FFT bin centers k * sample_rate / n_fft for k < n_fft/2 + 1.
/// Throws when a filter ends up with no positive weight.
MelBank mel_filterbank(std::size_t n_fft, std::size_t n_mels, double sample_rate, double fmin, double fmax);

struct FeatureConfig {
  int sample_rate = kModelSampleRate;
  std::size_t n_fft = 2034;
  std::size_t hop_length = 512;
  std::size_t n_mels = 64;
  double fmin = 0.0;
  double fmax = 24000.0;
  double top_db = 80.0;
  std::size_t clip_samples = 48000;
  double max_shift_fraction = 0.1;

  std::size_t n_frames() const { return 1 + clip_samples / hop_length; }
  void validate() const;
  std::string fingerprint() const;
};

/// Normalized mel spectrogram, shape 1 x n_mels x n_frames, values in [0, 1].
struct FeatureMap {
  std::size_t n_mels = 0;
  std::size_t n_frames = 0;
  std::vector<double> values;
  std::string clip_id;
  std::string fingerprint;

  double at(std::size_t mel, std::size_t frame) const { return values[mel * n_frames + frame]; }
};

/// Clip -> FeatureMap pipeline: canonical length, centered Hann frames with
/// reflect padding, power spectrum, mel projection, dB relative to the clip
/// maximum clamped at -top_db, then (dB + top_db) / top_db.
/// Immutable once built; safe to share across threads.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(FeatureConfig config);

  const FeatureConfig& config() const { return config_; }
  const MelBank& bank() const { return bank_; }

  /// Mel power spectrogram before the dB step, n_mels x n_frames.
  std::vector<double> mel_power(const AudioClip& clip) const;
  FeatureMap operator()(const AudioClip& clip) const;

 private:
  FeatureConfig config_;
  MelBank bank_;
  FftPlan plan_;
  std::vector<double> window_;
};

/// Convenience wrapper building a one-off extractor.
FeatureMap mel_spectrogram(const AudioClip& clip, const FeatureConfig& config);

}  // namespace melstorm
