#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "melstorm/audio.hpp"
#include "melstorm/rng.hpp"

namespace melstorm {

enum class PoisonTarget { train, test, both };

std::string to_string(PoisonTarget target);
PoisonTarget parse_poison_target(const std::string& name);

struct PoisonConfig {
  double amplitude = 0.05;  // waveform units
  double fraction = 1.0;
  PoisonTarget apply_to = PoisonTarget::both;
  std::uint64_t seed = 0;

  void validate() const;
  bool targets_train() const { return apply_to != PoisonTarget::test; }
  bool targets_test() const { return apply_to != PoisonTarget::train; }
};

/// out[i] = clamp(clip[i] + u[i], -1, 1), u[i] ~ Uniform(-amplitude, amplitude).
/// |out[i] - clip[i]| <= amplitude holds after rounding to float storage.
/// Label is kept; the id gains a ".poisoned" suffix.
AudioClip poison_signal(const AudioClip& clip, double amplitude, Rng& rng);

struct PoisonRecord {
  std::size_t index = 0;
  std::string id;
  std::uint64_t seed = 0;
};

struct PoisonedSet {
  std::vector<AudioClip> clips;
  std::vector<PoisonRecord> records;  // ascending index
};

/// Replaces a seeded subset of round(fraction * N) clips by poisoned copies.
/// Clip i draws its noise from derive_seed(config.seed, stream, i), so the
/// output is independent of processing order. `stream` separates datasets
/// poisoned under one config.
PoisonedSet poison_dataset(const std::vector<AudioClip>& clips, const PoisonConfig& config, std::uint64_t stream = 0);

/// Writes the clips under `root/poisoned/<label>/` and a
/// `root/poison_manifest.json` describing the config and per-clip seeds.
void export_poisoned(const PoisonedSet& set, const PoisonConfig& config, const std::filesystem::path& root);

}  // namespace melstorm
