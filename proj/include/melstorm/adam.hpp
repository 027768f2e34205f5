#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "melstorm/tensor.hpp"

namespace melstorm {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct AdamOptions {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment buffers for a fixed, ordered parameter list. Buffers are sized on the
/// first step; later steps must present the same names and shapes.
class AdamState {
 public:
  explicit AdamState(AdamOptions options = {}) : options_(options) {}

  const AdamOptions& options() const { return options_; }
  std::size_t step_count() const { return step_; }
  std::span<const double> first_moment(std::size_t i) const { return m_.at(i); }
  std::span<const double> second_moment(std::size_t i) const { return v_.at(i); }

 private:
  friend void adam_step(std::span<NamedTensor> params, AdamState& state);

  AdamOptions options_;
  std::size_t step_ = 0;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

/// Bias-corrected Adam update of every parameter from its grad slot.
/// Throws naming the first parameter that has no gradient.
void adam_step(std::span<NamedTensor> params, AdamState& state);

}  // namespace melstorm
