#include "melstorm/mel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "melstorm/error.hpp"

namespace melstorm {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelBank mel_filterbank(std::size_t n_fft, std::size_t n_mels, double sample_rate, double fmin, double fmax) {
  if (n_fft < 2) throw Error("mel_filterbank: n_fft must be at least 2");
  if (n_mels == 0) throw Error("mel_filterbank: n_mels must be positive");
  if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) {
    throw Error("mel_filterbank: need 0 <= fmin < fmax <= sample_rate / 2");
  }
  MelBank bank;
  bank.n_mels = n_mels;
  bank.n_bins = n_fft / 2 + 1;
  bank.fmin = fmin;
  bank.fmax = fmax;
  bank.weights.assign(n_mels * bank.n_bins, 0.0);

  const double mel_lo = hz_to_mel(fmin);
  const double mel_step = (hz_to_mel(fmax) - mel_lo) / static_cast<double>(n_mels + 1);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) edges[i] = mel_to_hz(mel_lo + mel_step * static_cast<double>(i));

  const double bin_hz = sample_rate / static_cast<double>(n_fft);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    bank.centers_hz.push_back(center);
    std::size_t first = bank.n_bins, last = 0;
    for (std::size_t k = 0; k < bank.n_bins; ++k) {
      const double f = bin_hz * static_cast<double>(k);
      const double up = (f - lo) / (center - lo);
      const double down = (hi - f) / (hi - center);
      const double w = std::max(0.0, std::min(up, down));
      if (w > 0.0) {
        bank.weights[m * bank.n_bins + k] = w;
        first = std::min(first, k);
        last = k;
      }
    }
    if (first == bank.n_bins) {
      std::ostringstream msg;
      msg << "mel_filterbank: filter " << m << " (" << lo << "-" << hi << " Hz) covers no FFT bin at "
          << bin_hz << " Hz resolution; reduce n_mels or raise n_fft";
      throw Error(msg.str());
    }
    bank.first_bin.push_back(first);
    bank.last_bin.push_back(last);
  }
  return bank;
}

void FeatureConfig::validate() const {
  if (sample_rate <= 0) throw Error("features: sample_rate must be positive");
  if (n_fft < 2) throw Error("features: n_fft must be at least 2");
  if (hop_length == 0) throw Error("features: hop_length must be positive");
  if (n_mels == 0) throw Error("features: n_mels must be positive");
  if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) {
    throw Error("features: need 0 <= fmin < fmax <= sample_rate / 2");
  }
  if (!(top_db > 0.0)) throw Error("features: top_db must be positive");
  if (clip_samples <= n_fft / 2) throw Error("features: clip_samples must exceed n_fft / 2 for reflect padding");
  if (!(max_shift_fraction >= 0.0 && max_shift_fraction <= 0.5)) {
    throw Error("features: max_shift_fraction must lie in [0, 0.5]");
  }
}

std::string FeatureConfig::fingerprint() const {
  std::ostringstream out;
  out << "sr=" << sample_rate << ";n_fft=" << n_fft << ";hop=" << hop_length << ";n_mels=" << n_mels
      << ";fmin=" << fmin << ";fmax=" << fmax << ";top_db=" << top_db << ";len=" << clip_samples;
  return out.str();
}

FeatureExtractor::FeatureExtractor(FeatureConfig config)
    : config_((config.validate(), config)),
      bank_(mel_filterbank(config_.n_fft, config_.n_mels, config_.sample_rate, config_.fmin, config_.fmax)),
      plan_(config_.n_fft),
      window_(config_.n_fft) {
  for (std::size_t j = 0; j < config_.n_fft; ++j) {
    window_[j] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(j) /
                                      static_cast<double>(config_.n_fft));
  }
}

std::vector<double> FeatureExtractor::mel_power(const AudioClip& clip) const {
  if (clip.sample_rate != config_.sample_rate) {
    throw Error("mel_spectrogram: clip '" + clip.id + "' is at " + std::to_string(clip.sample_rate) +
                " Hz, extractor expects " + std::to_string(config_.sample_rate) + " Hz");
  }
  const auto signal = canonical_length(clip.samples, config_.clip_samples);
  const auto len = static_cast<std::ptrdiff_t>(signal.size());
  const auto pad = static_cast<std::ptrdiff_t>(config_.n_fft / 2);
  const std::size_t frames = config_.n_frames();
  const std::size_t n_bins = bank_.n_bins;

  std::vector<double> out(config_.n_mels * frames, 0.0);
  std::vector<Complex> buf(config_.n_fft);
  std::vector<double> power(n_bins);
  for (std::size_t t = 0; t < frames; ++t) {
    const auto start = static_cast<std::ptrdiff_t>(t * config_.hop_length) - pad;
    for (std::size_t j = 0; j < config_.n_fft; ++j) {
      std::ptrdiff_t i = start + static_cast<std::ptrdiff_t>(j);
      if (i < 0) i = -i;
      if (i >= len) i = 2 * (len - 1) - i;
      buf[j] = {static_cast<double>(signal[static_cast<std::size_t>(i)]) * window_[j], 0.0};
    }
    plan_.forward(buf);
    for (std::size_t k = 0; k < n_bins; ++k) power[k] = std::norm(buf[k]);
    for (std::size_t m = 0; m < config_.n_mels; ++m) {
      const auto row = bank_.row(m);
      double acc = 0.0;
      for (std::size_t k = bank_.first_bin[m]; k <= bank_.last_bin[m]; ++k) acc += row[k] * power[k];
      out[m * frames + t] = acc;
    }
  }
  return out;
}

FeatureMap FeatureExtractor::operator()(const AudioClip& clip) const {
  auto power = mel_power(clip);
  const double peak = std::max(*std::max_element(power.begin(), power.end()), 1e-10);
  const double top_db = config_.top_db;
  for (auto& v : power) {
    double db = v > 0.0 ? 10.0 * std::log10(v / peak) : -top_db;
    db = std::clamp(db, -top_db, 0.0);
    v = (db + top_db) / top_db;
  }
  FeatureMap map;
  map.n_mels = config_.n_mels;
  map.n_frames = config_.n_frames();
  map.values = std::move(power);
  map.clip_id = clip.id;
  map.fingerprint = config_.fingerprint();
  return map;
}

FeatureMap mel_spectrogram(const AudioClip& clip, const FeatureConfig& config) {
  return FeatureExtractor(config)(clip);
}

}  // namespace melstorm
