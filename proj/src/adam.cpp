#include "melstorm/adam.hpp"

#include <cmath>

#include "melstorm/error.hpp"

namespace melstorm {

void adam_step(std::span<NamedTensor> params, AdamState& state) {
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) throw Error("adam_step: parameter '" + p.name + "' has no gradient");
  }
  if (state.names_.empty() && state.step_ == 0) {
    for (const auto& p : params) {
      state.names_.push_back(p.name);
      state.m_.emplace_back(p.tensor.numel(), 0.0);
      state.v_.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  if (state.names_.size() != params.size()) {
    throw Error("adam_step: optimizer tracks " + std::to_string(state.names_.size()) + " parameters, got " +
                std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != state.names_[i] || params[i].tensor.numel() != state.m_[i].size()) {
      throw Error("adam_step: parameter '" + params[i].name + "' does not match optimizer slot '" +
                  state.names_[i] + "'");
    }
  }

  ++state.step_;
  const auto& o = state.options_;
  const double t = static_cast<double>(state.step_);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].tensor.mutable_data();
    const auto g = params[i].tensor.grad();
    auto& m = state.m_[i];
    auto& v = state.v_[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g[j];
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      values[j] -= o.lr * m_hat / (std::sqrt(v_hat) + o.epsilon);
    }
  }
}

}  // namespace melstorm
