#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "melstorm/mel.hpp"
#include "melstorm/model.hpp"
#include "melstorm/poison.hpp"
#include "melstorm/split.hpp"
#include "melstorm/sweep.hpp"
#include "melstorm/train.hpp"

namespace melstorm {

enum class DataSource { synth, directory };

struct DataConfig {
  DataSource source = DataSource::synth;
  std::string path;  // corpus root for `directory`
  std::size_t n_per_class = 100;
  std::uint64_t seed = 1234;
  SplitSpec split{0.8, 0.12, 0.08, 7};
};

struct ExperimentConfig {
  DataConfig data;
  FeatureConfig features;
  bool augment = true;
  std::uint64_t augment_seed = 5;
  ModelConfig model;
  std::uint64_t model_seed = 42;
  TrainConfig train{0.001, 5, 64, 3};
  std::optional<PoisonConfig> poison;
  bool export_poisoned = false;
  std::vector<SweepSpec> attacks;
  std::string output_dir = "runs/default";
  std::size_t jobs = 0;  // 0 = all processors

  /// Defaults plus FGSM, PGD and CW sweeps with the default grid.
  static ExperimentConfig defaults();
};

/// Parses a configuration document. Missing keys take their defaults; unknown
/// keys and wrong types raise ConfigError naming the JSON path.
ExperimentConfig parse_config(const nlohmann::json& doc);

/// Applies dotted `key=value` overrides to a document. Values are read as
/// JSON when they parse and as strings otherwise; numeric path segments index
/// arrays.
void apply_overrides(nlohmann::json& doc, const std::vector<std::string>& overrides);

/// Reads `path` (or `{}` when empty), applies overrides and parses.
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Full resolved document; parse_config(to_json(c)) == c.
nlohmann::json to_json(const ExperimentConfig& config);

/// FNV-1a of the canonical resolved document.
std::string config_hash(const ExperimentConfig& config);

}  // namespace melstorm
