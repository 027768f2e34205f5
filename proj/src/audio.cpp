#include "melstorm/audio.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "melstorm/error.hpp"

namespace melstorm {

std::vector<float> resample_linear(const std::vector<float>& samples, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw Error("resample: sample rates must be positive");
  if (from_rate == to_rate || samples.empty()) return samples;
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(samples.size()) * to_rate / static_cast<double>(from_rate)));
  std::vector<float> out(out_len);
  const double ratio = static_cast<double>(from_rate) / to_rate;
  const std::size_t last = samples.size() - 1;
  for (std::size_t i = 0; i < out_len; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto left = static_cast<std::size_t>(pos);
    if (left >= last) {
      out[i] = samples[last];
      continue;
    }
    const double frac = pos - static_cast<double>(left);
    out[i] = static_cast<float>((1.0 - frac) * samples[left] + frac * samples[left + 1]);
  }
  return out;
}

std::vector<float> canonical_length(const std::vector<float>& samples, std::size_t length) {
  std::vector<float> out(length, 0.0f);
  std::copy_n(samples.begin(), std::min(length, samples.size()), out.begin());
  return out;
}

AudioClip prepend_zeros(const AudioClip& clip, std::size_t k) {
  AudioClip out = clip;
  out.samples.assign(k, 0.0f);
  out.samples.insert(out.samples.end(), clip.samples.begin(), clip.samples.end());
  return out;
}

AudioClip shift_augment(const AudioClip& clip, double max_shift_fraction, std::size_t canonical, Rng& rng) {
  if (!(max_shift_fraction >= 0.0 && max_shift_fraction <= 0.5)) {
    throw Error("shift_augment: max_shift_fraction must lie in [0, 0.5]");
  }
  const auto max_shift =
      static_cast<std::size_t>(std::floor(max_shift_fraction * static_cast<double>(clip.samples.size())));
  const std::size_t k = max_shift == 0 ? 0 : rng.uniform_index(max_shift + 1);
  AudioClip out = prepend_zeros(clip, k);
  out.samples = canonical_length(out.samples, canonical);
  return out;
}

std::vector<AudioClip> synth_corpus(std::size_t n_per_class, std::uint64_t seed) {
  if (n_per_class == 0) throw Error("synth_corpus: n_per_class must be at least 1");
  constexpr double rate = kModelSampleRate;
  constexpr std::size_t length = kModelSampleRate;
  constexpr double two_pi = 2.0 * std::numbers::pi;

  std::vector<AudioClip> corpus;
  corpus.reserve(10 * n_per_class);
  for (std::size_t i = 0; i < n_per_class; ++i) {
    for (int digit = 0; digit < 10; ++digit) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(digit), i));
      const double f0 = (200.0 + 60.0 * digit) * (1.0 + rng.uniform(-0.01, 0.01));
      const double harmonic = rng.uniform(0.3, 0.7);
      const double phase1 = rng.uniform(0.0, two_pi);
      const double phase2 = rng.uniform(0.0, two_pi);
      const double onset = rng.uniform(0.05, 0.35);
      const double duration = rng.uniform(0.30, 0.55);
      const double attack = rng.uniform(0.02, 0.08);
      const double release = rng.uniform(0.05, 0.15);
      const double peak = std::exp(rng.uniform(std::log(0.02), std::log(0.3)));

      std::vector<double> voiced(length, 0.0);
      double energy = 0.0;
      std::size_t voiced_count = 0;
      for (std::size_t s = 0; s < length; ++s) {
        const double t = static_cast<double>(s) / rate - onset;
        if (t < 0.0 || t > duration) continue;
        double env = 1.0;
        if (t < attack) env = t / attack;
        if (duration - t < release) env = std::min(env, (duration - t) / release);
        const double tone = std::sin(two_pi * f0 * t + phase1) + harmonic * std::sin(two_pi * 2.0 * f0 * t + phase2);
        voiced[s] = peak * env * tone / (1.0 + harmonic);
        energy += voiced[s] * voiced[s];
        ++voiced_count;
      }
      const double signal_rms = std::sqrt(energy / static_cast<double>(std::max<std::size_t>(voiced_count, 1)));
      const double noise_rms = signal_rms * std::pow(10.0, -30.0 / 20.0);

      AudioClip clip;
      clip.sample_rate = kModelSampleRate;
      clip.label = digit;
      clip.speaker = "synth";
      clip.id = "synth_d" + std::to_string(digit) + "_" + std::to_string(i);
      clip.samples.resize(length);
      for (std::size_t s = 0; s < length; ++s) {
        const double v = voiced[s] + noise_rms * rng.normal();
        clip.samples[s] = static_cast<float>(std::clamp(v, -1.0, 1.0));
      }
      corpus.push_back(std::move(clip));
    }
  }
  return corpus;
}

}  // namespace melstorm
