#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "melstorm/adam.hpp"
#include "melstorm/ops.hpp"
#include "melstorm/tensor.hpp"

namespace melstorm {

struct ConvLayerSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  Extent2 kernel{3, 3};
  Extent2 stride{1, 1};
  Extent2 padding{0, 0};
  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

/// Architecture of the digit classifier. Defaults are the four-block network:
/// channels 1 -> 8 -> 16 -> 32 -> 64, kernels 5x5 then 3x3, stride 2
/// throughout, then global average pooling and a 64 -> 10 affine layer.
struct ModelConfig {
  std::vector<ConvLayerSpec> conv_layers{
      {1, 8, {5, 5}, {2, 2}, {2, 2}},
      {8, 16, {3, 3}, {2, 2}, {1, 1}},
      {16, 32, {3, 3}, {2, 2}, {1, 1}},
      {32, 64, {3, 3}, {2, 2}, {1, 1}},
  };
  std::size_t n_classes = 10;
  std::size_t n_mels = 64;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  void validate() const;
  /// Canonical compact JSON of the architecture; stored in weight files.
  std::string fingerprint() const;
  static ModelConfig from_fingerprint(const std::string& text);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Spatial extent after each conv block for an input of the given extent.
std::vector<Extent2> block_extents(const ModelConfig& config, Extent2 input);

/// Anything the attacks can query: eval-mode logits whose tape is recorded
/// only through the input.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual Tensor logits(const Tensor& input) const = 0;
  virtual std::size_t n_classes() const = 0;
};

class Model : public Classifier {
 public:
  Model() = default;
  /// Deep copies: parameter storage is never shared between models.
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  /// He-normal conv/affine weights (std sqrt(2 / fan_in)), zero biases,
  /// gamma 1, beta 0, running mean 0 and variance 1.
  static Model build(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::span<NamedTensor> parameters() { return params_; }
  std::span<const NamedTensor> parameters() const { return params_; }
  std::vector<BatchNormStats>& bn_stats() { return bn_stats_; }
  const std::vector<BatchNormStats>& bn_stats() const { return bn_stats_; }

  std::size_t parameter_count() const;
  const Tensor& parameter(const std::string& name) const;

  /// Conv -> ReLU -> batch norm per block, then pooling and the affine head.
  /// Train mode records parameter gradients and updates running statistics.
  Tensor forward(const Tensor& input, Mode mode);

  Tensor logits(const Tensor& input) const override;
  std::size_t n_classes() const override { return config_.n_classes; }

  /// FNV-1a over parameter values and running statistics.
  std::uint64_t checksum() const;

 private:
  friend class ModelBuilder;
  // Train mode when `train_stats` is non-null.
  Tensor run(const Tensor& input, bool track_params, std::vector<BatchNormStats>* train_stats) const;
  void check_input(const Tensor& input) const;

  ModelConfig config_;
  std::vector<NamedTensor> params_;
  std::vector<BatchNormStats> bn_stats_;
};

/// Assembles a model from named arrays, checking the name set and shapes
/// against the configuration.
class ModelBuilder {
 public:
  explicit ModelBuilder(ModelConfig config);

  /// Names and shapes required by the configuration, in canonical order:
  /// learnable parameters first, then running statistics.
  const std::vector<std::pair<std::string, Shape>>& layout() const { return layout_; }
  void set(const std::string& name, const Shape& shape, std::vector<double> values);
  Model finish();

 private:
  ModelConfig config_;
  std::vector<std::pair<std::string, Shape>> layout_;
  std::vector<std::vector<double>> values_;
  std::vector<bool> filled_;
};

}  // namespace melstorm
