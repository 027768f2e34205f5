#pragma once

#include <filesystem>
#include <string>

#include "melstorm/corpus.hpp"
#include "melstorm/mel.hpp"
#include "melstorm/rng.hpp"
#include "melstorm/train.hpp"

namespace fixture {

// Clean features for `per_class` synthetic clips per digit.
inline melstorm::Dataset synth_features(std::size_t per_class, std::uint64_t seed) {
  const melstorm::FeatureExtractor fx(melstorm::FeatureConfig{});
  melstorm::Dataset out;
  for (const auto& clip : melstorm::synth_corpus(per_class, seed)) {
    out.add(fx(clip), static_cast<std::size_t>(clip.label));
  }
  return out;
}

inline melstorm::Tensor random_input(std::size_t n, std::uint64_t seed, std::size_t h = 64, std::size_t w = 94) {
  melstorm::Rng rng(seed);
  std::vector<double> v(n * h * w);
  for (auto& x : v) x = rng.uniform();
  return melstorm::Tensor::from({n, 1, h, w}, std::move(v));
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("melstorm_" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixture
