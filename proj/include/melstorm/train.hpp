#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "melstorm/mel.hpp"
#include "melstorm/model.hpp"

namespace melstorm {

/// Feature maps with their labels; all maps share one shape.
struct Dataset {
  std::vector<FeatureMap> features;
  std::vector<std::size_t> labels;

  std::size_t size() const { return features.size(); }
  bool empty() const { return features.empty(); }
  void add(FeatureMap map, std::size_t label);
  /// Stacks the selected items into an [n,1,n_mels,n_frames] tensor.
  Tensor batch(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> batch_labels(std::span<const std::size_t> indices) const;
};

Tensor feature_tensor(const FeatureMap& map);

struct TrainConfig {
  double lr = 0.001;
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
};

using TrainLog = std::vector<EpochRecord>;

/// Mini-batch training: per epoch a seeded shuffle, then forward (train mode)
/// -> mean cross-entropy -> backprop -> Adam for every batch. Validation
/// accuracy is measured after each epoch when `val` is non-empty (NaN
/// otherwise). `on_epoch` is called after each epoch.
TrainLog train(Model& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config,
               const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Argmax of eval-mode logits for every item.
std::vector<std::size_t> predict(const Classifier& model, const Dataset& data, std::size_t batch_size = 64);

/// Fraction of items whose argmax prediction equals the label.
double evaluate(const Classifier& model, const Dataset& data, std::size_t batch_size = 64);

std::size_t argmax(std::span<const double> row);

/// One JSON object per line: {"epoch":..,"train_loss":..,"val_acc":..}.
void write_train_log(const TrainLog& log, const std::filesystem::path& path);

}  // namespace melstorm
