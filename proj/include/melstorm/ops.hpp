#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "melstorm/tensor.hpp"

namespace melstorm {

struct Extent2 {
  std::size_t h = 1;
  std::size_t w = 1;
  friend bool operator==(const Extent2&, const Extent2&) = default;
};

/// Output extent of a strided, zero-padded window along one axis.
/// Throws ShapeError when the window does not fit.
std::size_t conv_output_extent(std::size_t input, std::size_t kernel, std::size_t stride, std::size_t padding);

/// 2-D cross-correlation (no kernel flip) with zero padding.
/// input [N,Cin,H,W], weight [Cout,Cin,kh,kw], bias [Cout] -> [N,Cout,H',W'].
///
/// Each output element is accumulated from 0.0 in (ci, ky, kx) order with
/// out-of-bounds taps skipped, then the bias is added.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, Extent2 stride, Extent2 padding);

enum class Mode { train, eval };

struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> var;

  static BatchNormStats identity(std::size_t channels) {
    return {std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
  }
};

/// Batch statistics per channel; updates `running` by exponential moving
/// average (unbiased batch variance). Needs N*H*W >= 2.
Tensor batchnorm2d_train(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormStats& running,
                         double momentum, double eps);

/// Running statistics only; they are constants for the backward rule.
Tensor batchnorm2d_eval(const Tensor& input, const Tensor& gamma, const Tensor& beta, const BatchNormStats& running,
                        double eps);

Tensor relu(const Tensor& input);

/// [N,C,H,W] -> [N,C], spatial mean.
Tensor global_avg_pool(const Tensor& input);

/// input [N,F] * weight[O,F]^T + bias[O] -> [N,O].
Tensor affine(const Tensor& input, const Tensor& weight, const Tensor& bias);

enum class Reduction { mean, sum };

/// Softmax cross-entropy over rows of [N,K] logits.
Tensor cross_entropy_loss(const Tensor& logits, std::span<const std::size_t> labels,
                          Reduction reduction = Reduction::mean);

Tensor sum(const Tensor& input);
Tensor mul(const Tensor& a, const Tensor& b);
/// Sum of input * weights, with constant weights of the same size.
Tensor weighted_sum(const Tensor& input, std::span<const double> weights);

}  // namespace melstorm
