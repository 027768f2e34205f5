#include "melstorm/tensor.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "melstorm/error.hpp"

namespace melstorm {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace {

void check_shape(const Shape& shape) {
  for (auto extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
  }
}

}  // namespace

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  check_shape(shape);
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  check_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_string(shape) + " holds " + std::to_string(shape_numel(shape)) +
                     " elements, got " + std::to_string(values.size()));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->storage = std::make_shared<std::vector<double>>(std::move(values));
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

const Shape& Tensor::shape() const {
  if (!impl_) throw Error("use of an undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const {
  shape();
  return {impl_->storage->data(), impl_->storage->size()};
}

std::span<double> Tensor::mutable_data() {
  shape();
  return {impl_->storage->data(), impl_->storage->size()};
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on a tensor of shape " + shape_string(shape()));
  return (*impl_->storage)[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  shape();
  if (!flag && impl_->node) throw Error("cannot clear requires_grad on a recorded result; use detach()");
  impl_->requires_grad = flag;
  return *this;
}

bool Tensor::is_leaf() const { return impl_ && !impl_->node; }

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw Error("tensor has no gradient");
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  shape();
  if (impl_->grad.empty()) impl_->grad.assign(impl_->storage->size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_ && !impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::clear_grad() {
  if (impl_) impl_->grad.clear();
}

Tensor Tensor::detach() const {
  shape();
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->storage = impl_->storage;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const { return from(shape(), std::vector<double>(data().begin(), data().end())); }

Tensor Tensor::reshape(Shape new_shape) const {
  if (shape_numel(new_shape) != numel()) {
    throw ShapeError("cannot reshape " + shape_string(shape()) + " to " + shape_string(new_shape));
  }
  const Tensor self = *this;
  return make_result(std::move(new_shape), std::vector<double>(data().begin(), data().end()), "reshape", {self},
                     [](std::span<const double> g, GradSlots& slots) {
                       if (!slots[0].empty()) {
                         for (std::size_t i = 0; i < g.size(); ++i) slots[0][i] += g[i];
                       }
                     });
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::string op, std::vector<Tensor> inputs,
                           BackwardFn backward) {
  Tensor out = from(std::move(shape), std::move(values));
  const bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (needs) {
    auto node = std::make_shared<TapeNode>();
    node->op = std::move(op);
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.impl());
    node->backward = std::move(backward);
    out.impl_->node = std::move(node);
    out.impl_->requires_grad = true;
  }
  return out;
}

void backprop(const Tensor& loss) {
  if (!loss.defined()) throw Error("backprop on an undefined tensor");
  if (loss.numel() != 1) throw Error("backprop needs a scalar loss, got shape " + shape_string(loss.shape()));
  if (!loss.requires_grad()) throw Error("backprop on a detached tensor: nothing requires a gradient");

  // Iterative post-order DFS gives a topological order; reversed, every node
  // is visited after all of its consumers.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(loss.impl().get(), 0);
  seen.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [impl, next_input] = stack.back();
    if (impl->node && next_input < impl->node->inputs.size()) {
      TensorImpl* child = impl->node->inputs[next_input++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(impl);
    stack.pop_back();
  }

  std::unordered_map<TensorImpl*, std::vector<double>> buffers;
  buffers[loss.impl().get()] = std::vector<double>(1, 1.0);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* impl = *it;
    auto found = buffers.find(impl);
    if (found == buffers.end()) continue;
    std::vector<double> grad_out = std::move(found->second);
    buffers.erase(found);

    if (!impl->node) {
      if (impl->grad.empty()) impl->grad.assign(grad_out.size(), 0.0);
      for (std::size_t i = 0; i < grad_out.size(); ++i) impl->grad[i] += grad_out[i];
      continue;
    }
    GradSlots slots;
    slots.reserve(impl->node->inputs.size());
    for (auto& input : impl->node->inputs) {
      if (!input->requires_grad) {
        slots.emplace_back();
        continue;
      }
      auto& buf = buffers[input.get()];
      if (buf.empty()) buf.assign(input->storage->size(), 0.0);
      slots.emplace_back(buf);
    }
    impl->node->backward(grad_out, slots);
  }
}

}  // namespace melstorm
