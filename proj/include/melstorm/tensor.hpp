#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace melstorm {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct TensorImpl;

/// Per-input gradient destinations handed to a backward rule. An empty span
/// means that input does not require a gradient and the rule may skip it.
using GradSlots = std::vector<std::span<double>>;
using BackwardFn = std::function<void(std::span<const double> grad_out, GradSlots& grad_in)>;

/// A recorded operation: its inputs and the rule mapping the output gradient
/// onto them. Nodes only reference tensors that existed before the node was
/// created, so the recorded graph is acyclic.
struct TapeNode {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
};

struct TensorImpl {
  Shape shape;
  std::shared_ptr<std::vector<double>> storage;
  std::vector<double> grad;  // empty: no grad slot
  bool requires_grad = false;
  std::shared_ptr<TapeNode> node;  // null for leaves
};

/// Dense row-major float64 tensor with an optional gradient slot.
///
/// Tensor is a handle: copies share storage, as in the usual autograd
/// frameworks. Results of operations on inputs that require gradients carry a
/// TapeNode; `backprop` walks those nodes.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Writable view of the values. Only valid on leaves (parameters, inputs);
  /// mutating a tensor that an existing tape node depends on is an error.
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();
  void clear_grad();

  /// Same storage, no tape history, no gradient.
  Tensor detach() const;
  /// Deep copy of the values as a fresh leaf.
  Tensor clone() const;
  Tensor reshape(Shape shape) const;

  /// Builds an operation result. A TapeNode is recorded only when at least one
  /// input requires a gradient.
  static Tensor make_result(Shape shape, std::vector<double> values, std::string op,
                            std::vector<Tensor> inputs, BackwardFn backward);

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

/// Reverse sweep from a scalar. Every leaf reachable through the tape that
/// requires a gradient gets the gradient added to its grad slot; repeated calls
/// accumulate. Intermediate gradients are not retained.
void backprop(const Tensor& loss);

}  // namespace melstorm
