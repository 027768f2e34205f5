#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "melstorm/config.hpp"

namespace melstorm {

/// Synthesizes or loads the corpus described by `data`.
std::vector<AudioClip> load_clips(const DataConfig& data);

/// Features for clips[indices[k]] in that order. With `augment`, clip k is
/// shifted by a draw from derive_seed(augment_seed, 0, indices[k]), so the
/// result does not depend on `jobs`.
Dataset build_dataset(const std::vector<AudioClip>& clips, std::span<const std::size_t> indices,
                      const FeatureExtractor& extractor, bool augment, double max_shift_fraction,
                      std::uint64_t augment_seed, std::size_t jobs);

struct PreparedData {
  std::vector<AudioClip> clips;
  SplitIndices split;
  Dataset train;
  Dataset val;
  Dataset test;
  std::vector<PoisonRecord> poison_records;  // index into clips
};

/// Split plus features. `poison`, when set, replaces the targeted splits by
/// poisoned clips before feature extraction (train and val share the train
/// target).
PreparedData prepare_data(const ExperimentConfig& config, std::vector<AudioClip> clips,
                          const std::optional<PoisonConfig>& poison = std::nullopt);

struct TrainedModel {
  Model model;
  TrainLog log;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
};

TrainedModel train_model(const ExperimentConfig& config, const PreparedData& data, std::ostream* progress = nullptr);

struct ExperimentResult {
  TrainedModel clean;
  std::vector<SweepReport> reports;
  std::optional<TrainedModel> poisoned;
};

/// ingest -> split -> features -> train -> evaluate -> sweeps, then the
/// poisoned retrain when configured. Writes into config.output_dir:
/// resolved_config.json, model.amnw, train_log.jsonl, reports/*.csv (+ .json),
/// accuracy.csv, manifest.json and, with poisoning, poisoned_model.amnw and
/// poisoned_train_log.jsonl.
ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* progress = nullptr);

/// File name of the i-th sweep report: "<kind>.csv", or "<kind>_<i>.csv" when
/// the kind repeats.
std::string report_name(const std::vector<SweepSpec>& attacks, std::size_t i);

}  // namespace melstorm
