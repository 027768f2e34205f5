#include "melstorm/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "melstorm/error.hpp"
#include "melstorm/rng.hpp"

namespace melstorm {

void Dataset::add(FeatureMap map, std::size_t label) {
  if (!features.empty() && (map.n_mels != features.front().n_mels || map.n_frames != features.front().n_frames)) {
    throw ShapeError("dataset: feature map '" + map.clip_id + "' has shape " + std::to_string(map.n_mels) + "x" +
                     std::to_string(map.n_frames) + ", dataset holds " + std::to_string(features.front().n_mels) +
                     "x" + std::to_string(features.front().n_frames));
  }
  features.push_back(std::move(map));
  labels.push_back(label);
}

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw Error("dataset: empty batch");
  const auto& first = features.at(indices.front());
  const std::size_t plane = first.n_mels * first.n_frames;
  std::vector<double> values;
  values.reserve(indices.size() * plane);
  for (auto i : indices) {
    const auto& f = features.at(i);
    values.insert(values.end(), f.values.begin(), f.values.end());
  }
  return Tensor::from({indices.size(), 1, first.n_mels, first.n_frames}, std::move(values));
}

std::vector<std::size_t> Dataset::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

Tensor feature_tensor(const FeatureMap& map) { return Tensor::from({1, 1, map.n_mels, map.n_frames}, map.values); }

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw Error("train: lr must be a finite non-negative number");
  if (epochs == 0) throw Error("train: epochs must be at least 1");
  if (batch_size == 0) throw Error("train: batch_size must be at least 1");
}

std::size_t argmax(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

TrainLog train(Model& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config,
               const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (train_set.empty()) throw Error("train: training set is empty");

  AdamState adam(AdamOptions{.lr = config.lr});
  Rng rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainLog log;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_total = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor x = train_set.batch(idx);
      const auto y = train_set.batch_labels(idx);

      for (auto& p : model.parameters()) p.tensor.zero_grad();
      const Tensor loss = cross_entropy_loss(model.forward(x, Mode::train), y);
      backprop(loss);
      adam_step(model.parameters(), adam);

      loss_total += loss.item() * static_cast<double>(idx.size());
      seen += idx.size();
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_total / static_cast<double>(seen);
    rec.val_acc = val_set.empty() ? std::numeric_limits<double>::quiet_NaN() : evaluate(model, val_set);
    log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return log;
}

std::vector<std::size_t> predict(const Classifier& model, const Dataset& data, std::size_t batch_size) {
  std::vector<std::size_t> preds;
  preds.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    const Tensor z = model.logits(data.batch(idx));
    const std::size_t k = z.dim(1);
    for (std::size_t r = 0; r < idx.size(); ++r) preds.push_back(argmax(z.data().subspan(r * k, k)));
  }
  return preds;
}

double evaluate(const Classifier& model, const Dataset& data, std::size_t batch_size) {
  if (data.empty()) throw Error("evaluate: dataset is empty");
  const auto preds = predict(model, data, batch_size);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == data.labels[i];
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

void write_train_log(const TrainLog& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& rec : log) {
    nlohmann::json j{{"epoch", rec.epoch}, {"train_loss", rec.train_loss}};
    if (std::isnan(rec.val_acc)) {
      j["val_acc"] = nullptr;
    } else {
      j["val_acc"] = rec.val_acc;
    }
    out << j.dump() << '\n';
  }
}

}  // namespace melstorm
