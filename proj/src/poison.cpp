#include "melstorm/poison.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "melstorm/corpus.hpp"
#include "melstorm/error.hpp"

namespace melstorm {

namespace {
constexpr std::uint64_t kSelectStream = 0x5e1ec7;
}

std::string to_string(PoisonTarget target) {
  switch (target) {
    case PoisonTarget::train:
      return "train";
    case PoisonTarget::test:
      return "test";
    case PoisonTarget::both:
      return "both";
  }
  return "unknown";
}

PoisonTarget parse_poison_target(const std::string& name) {
  if (name == "train") return PoisonTarget::train;
  if (name == "test") return PoisonTarget::test;
  if (name == "both") return PoisonTarget::both;
  throw Error("unknown poison target '" + name + "' (expected train, test, or both)");
}

void PoisonConfig::validate() const {
  if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) throw Error("poison: amplitude must be finite and >= 0");
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error("poison: fraction must lie in [0, 1]");
}

AudioClip poison_signal(const AudioClip& clip, double amplitude, Rng& rng) {
  if (!(amplitude >= 0.0)) throw Error("poison: amplitude must be >= 0");
  AudioClip out = clip;
  out.id = clip.id + ".poisoned";
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    const double u = rng.uniform(-amplitude, amplitude);
    const float src = clip.samples[i];
    float v = static_cast<float>(std::clamp(static_cast<double>(src) + u, -1.0, 1.0));
    // Rounding to float can push the sample just past the noise support.
    while (std::abs(static_cast<double>(v) - static_cast<double>(src)) > amplitude) v = std::nextafter(v, src);
    out.samples[i] = v;
  }
  return out;
}

PoisonedSet poison_dataset(const std::vector<AudioClip>& clips, const PoisonConfig& config, std::uint64_t stream) {
  config.validate();
  const std::size_t n = clips.size();
  const auto n_poison =
      std::min(n, static_cast<std::size_t>(std::llround(config.fraction * static_cast<double>(n))));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng select(derive_seed(config.seed, kSelectStream, stream));
  select.shuffle(order);
  order.resize(n_poison);
  std::sort(order.begin(), order.end());

  PoisonedSet out;
  out.clips = clips;
  for (const std::size_t i : order) {
    const std::uint64_t seed = derive_seed(config.seed, stream, i);
    Rng rng(seed);
    out.clips[i] = poison_signal(clips[i], config.amplitude, rng);
    out.records.push_back({i, clips[i].id, seed});
  }
  return out;
}

void export_poisoned(const PoisonedSet& set, const PoisonConfig& config, const std::filesystem::path& root) {
  write_corpus(set.clips, root / "poisoned");
  nlohmann::json clips = nlohmann::json::array();
  for (const auto& r : set.records) clips.push_back({{"index", r.index}, {"id", r.id}, {"seed", r.seed}});
  const nlohmann::json manifest{
      {"config",
       {{"amplitude", config.amplitude},
        {"fraction", config.fraction},
        {"apply_to", to_string(config.apply_to)},
        {"seed", config.seed}}},
      {"n_clips", set.clips.size()},
      {"poisoned", clips},
  };
  std::ofstream out(root / "poison_manifest.json");
  if (!out) throw Error("cannot write " + (root / "poison_manifest.json").string());
  out << manifest.dump(2) << '\n';
}

}  // namespace melstorm
