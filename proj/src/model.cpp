#include "melstorm/model.hpp"

#include <cmath>
#include <cstring>

#include "json.hpp"
#include "melstorm/error.hpp"
#include "melstorm/rng.hpp"

namespace melstorm {

using nlohmann::json;

namespace {

json extent_json(Extent2 e) { return json::array({e.h, e.w}); }

Extent2 extent_from(const json& j) { return {j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>()}; }

std::vector<std::pair<std::string, Shape>> make_layout(const ModelConfig& cfg) {
  std::vector<std::pair<std::string, Shape>> layout;
  for (std::size_t i = 0; i < cfg.conv_layers.size(); ++i) {
    const auto& l = cfg.conv_layers[i];
    const std::string idx = std::to_string(i + 1);
    layout.push_back({"conv" + idx + ".weight", {l.out_channels, l.in_channels, l.kernel.h, l.kernel.w}});
    layout.push_back({"conv" + idx + ".bias", {l.out_channels}});
    layout.push_back({"bn" + idx + ".gamma", {l.out_channels}});
    layout.push_back({"bn" + idx + ".beta", {l.out_channels}});
  }
  const std::size_t features = cfg.conv_layers.back().out_channels;
  layout.push_back({"fc.weight", {cfg.n_classes, features}});
  layout.push_back({"fc.bias", {cfg.n_classes}});
  for (std::size_t i = 0; i < cfg.conv_layers.size(); ++i) {
    const std::string idx = std::to_string(i + 1);
    layout.push_back({"bn" + idx + ".running_mean", {cfg.conv_layers[i].out_channels}});
    layout.push_back({"bn" + idx + ".running_var", {cfg.conv_layers[i].out_channels}});
  }
  return layout;
}

std::size_t learnable_count(const ModelConfig& cfg) { return 4 * cfg.conv_layers.size() + 2; }

}  // namespace

void ModelConfig::validate() const {
  if (conv_layers.empty()) throw Error("model: at least one conv layer is required");
  for (std::size_t i = 0; i < conv_layers.size(); ++i) {
    const auto& l = conv_layers[i];
    const std::string where = "model: conv layer " + std::to_string(i + 1);
    if (l.in_channels == 0 || l.out_channels == 0) throw Error(where + " has a zero channel count");
    if (l.kernel.h == 0 || l.kernel.w == 0 || l.stride.h == 0 || l.stride.w == 0) {
      throw Error(where + " needs positive kernel and stride");
    }
    if (i > 0 && l.in_channels != conv_layers[i - 1].out_channels) {
      throw Error(where + " takes " + std::to_string(l.in_channels) + " channels but the previous layer emits " +
                  std::to_string(conv_layers[i - 1].out_channels));
    }
  }
  if (n_classes < 2) throw Error("model: n_classes must be at least 2");
  if (n_mels == 0) throw Error("model: n_mels must be positive");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) throw Error("model: bn_momentum must lie in (0, 1]");
  if (!(bn_eps > 0.0)) throw Error("model: bn_eps must be positive");
}

std::string ModelConfig::fingerprint() const {
  json layers = json::array();
  for (const auto& l : conv_layers) {
    layers.push_back({{"in", l.in_channels},
                      {"out", l.out_channels},
                      {"kernel", extent_json(l.kernel)},
                      {"stride", extent_json(l.stride)},
                      {"padding", extent_json(l.padding)}});
  }
  json j{{"conv_layers", layers},
         {"n_classes", n_classes},
         {"n_mels", n_mels},
         {"bn_momentum", bn_momentum},
         {"bn_eps", bn_eps}};
  return j.dump();
}

ModelConfig ModelConfig::from_fingerprint(const std::string& text) {
  try {
    const json j = json::parse(text);
    ModelConfig cfg;
    cfg.conv_layers.clear();
    for (const auto& l : j.at("conv_layers")) {
      cfg.conv_layers.push_back({l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>(),
                                 extent_from(l.at("kernel")), extent_from(l.at("stride")),
                                 extent_from(l.at("padding"))});
    }
    cfg.n_classes = j.at("n_classes").get<std::size_t>();
    cfg.n_mels = j.at("n_mels").get<std::size_t>();
    cfg.bn_momentum = j.at("bn_momentum").get<double>();
    cfg.bn_eps = j.at("bn_eps").get<double>();
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model fingerprint is not a valid configuration: ") + e.what());
  }
}

std::vector<Extent2> block_extents(const ModelConfig& config, Extent2 input) {
  std::vector<Extent2> out;
  Extent2 cur = input;
  for (const auto& l : config.conv_layers) {
    cur = {conv_output_extent(cur.h, l.kernel.h, l.stride.h, l.padding.h),
           conv_output_extent(cur.w, l.kernel.w, l.stride.w, l.padding.w)};
    out.push_back(cur);
  }
  return out;
}

Model Model::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelBuilder builder(config);
  Rng rng(seed);
  for (const auto& [name, shape] : builder.layout()) {
    const std::size_t n = shape_numel(shape);
    std::vector<double> values(n, 0.0);
    const bool is_weight = name.ends_with(".weight");
    if (is_weight) {
      std::size_t fan_in = 1;
      for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (auto& v : values) v = stddev * rng.normal();
    } else if (name.ends_with(".gamma") || name.ends_with(".running_var")) {
      values.assign(n, 1.0);
    }
    builder.set(name, shape, std::move(values));
  }
  return builder.finish();
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

const Tensor& Model::parameter(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw Error("model has no parameter '" + name + "'");
}

void Model::check_input(const Tensor& input) const {
  if (input.rank() != 4) throw ShapeError("model input must be [N,C,H,W], got " + shape_string(input.shape()));
  const auto channels = config_.conv_layers.front().in_channels;
  if (input.dim(1) != channels) {
    throw ShapeError("model input has " + std::to_string(input.dim(1)) + " channels, expected " +
                     std::to_string(channels));
  }
  if (input.dim(2) != config_.n_mels) {
    throw ShapeError("model input height is " + std::to_string(input.dim(2)) + " mel bands, expected " +
                     std::to_string(config_.n_mels));
  }
}

Model::Model(const Model& other) : config_(other.config_), bn_stats_(other.bn_stats_) {
  for (const auto& p : other.params_) {
    Tensor t = p.tensor.clone();
    t.set_requires_grad(p.tensor.requires_grad());
    params_.push_back({p.name, std::move(t)});
  }
}

Model& Model::operator=(const Model& other) {
  if (this != &other) *this = Model(other);
  return *this;
}

Tensor Model::run(const Tensor& input, bool track_params, std::vector<BatchNormStats>* train_stats) const {
  check_input(input);
  auto param = [&](std::size_t i) { return track_params ? params_[i].tensor : params_[i].tensor.detach(); };
  Tensor x = input;
  for (std::size_t b = 0; b < config_.conv_layers.size(); ++b) {
    const auto& l = config_.conv_layers[b];
    x = conv2d(x, param(4 * b), param(4 * b + 1), l.stride, l.padding);
    x = relu(x);
    if (train_stats) {
      x = batchnorm2d_train(x, param(4 * b + 2), param(4 * b + 3), (*train_stats)[b], config_.bn_momentum,
                            config_.bn_eps);
    } else {
      x = batchnorm2d_eval(x, param(4 * b + 2), param(4 * b + 3), bn_stats_[b], config_.bn_eps);
    }
  }
  x = global_avg_pool(x);
  const std::size_t head = 4 * config_.conv_layers.size();
  return affine(x, param(head), param(head + 1));
}

Tensor Model::forward(const Tensor& input, Mode mode) {
  return run(input, true, mode == Mode::train ? &bn_stats_ : nullptr);
}

Tensor Model::logits(const Tensor& input) const { return run(input, false, nullptr); }

std::uint64_t Model::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](double v) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof v);
    for (auto b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : params_) {
    for (double v : p.tensor.data()) mix(v);
  }
  for (const auto& s : bn_stats_) {
    for (double v : s.mean) mix(v);
    for (double v : s.var) mix(v);
  }
  return h;
}

ModelBuilder::ModelBuilder(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  layout_ = make_layout(config_);
  values_.resize(layout_.size());
  filled_.assign(layout_.size(), false);
}

void ModelBuilder::set(const std::string& name, const Shape& shape, std::vector<double> values) {
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    if (layout_[i].first != name) continue;
    if (layout_[i].second != shape) {
      throw FormatError("array '" + name + "' has shape " + shape_string(shape) + ", configuration expects " +
                        shape_string(layout_[i].second));
    }
    if (values.size() != shape_numel(shape)) throw FormatError("array '" + name + "' has the wrong element count");
    if (filled_[i]) throw FormatError("array '" + name + "' appears twice");
    values_[i] = std::move(values);
    filled_[i] = true;
    return;
  }
  throw FormatError("array '" + name + "' is not part of this model configuration");
}

Model ModelBuilder::finish() {
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    if (!filled_[i]) throw FormatError("array '" + layout_[i].first + "' is missing");
  }
  Model model;
  model.config_ = config_;
  const std::size_t learnable = learnable_count(config_);
  for (std::size_t i = 0; i < learnable; ++i) {
    Tensor t = Tensor::from(layout_[i].second, std::move(values_[i]));
    t.set_requires_grad(true);
    model.params_.push_back({layout_[i].first, std::move(t)});
  }
  for (std::size_t b = 0; b < config_.conv_layers.size(); ++b) {
    model.bn_stats_.push_back({std::move(values_[learnable + 2 * b]), std::move(values_[learnable + 2 * b + 1])});
  }
  filled_.assign(layout_.size(), false);
  return model;
}

}  // namespace melstorm
