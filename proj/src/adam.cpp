#include "mflal/adam.hpp"

#include <cmath>
#include <stdexcept>

#include "mflal/errors.hpp"

namespace mflal {

AdamState make_adam_state(std::span<const Tensor> params, double learning_rate) {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
  AdamState state;
  state.learning_rate = learning_rate;
  for (const Tensor& p : params) {
    state.first_moment.emplace_back(p.size(), 0.0);
    state.second_moment.emplace_back(p.size(), 0.0);
  }
  return state;
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (state.first_moment.size() != params.size()) {
    state.first_moment.resize(params.size());
    state.second_moment.resize(params.size());
  }
  state.param_steps.resize(params.size(), 0);
  ++state.step_count;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) continue;
    const double t = static_cast<double>(++state.param_steps[i]);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const std::size_t n = params[i].size();
    if (m.empty()) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
    }
    if (m.size() != n) {
      throw ShapeError("adam_step: moment buffer " + std::to_string(i) + " has " +
                       std::to_string(m.size()) + " entries for a parameter of " + std::to_string(n));
    }
    // Plain loop: the result of every element must not depend on where
    // the buffers happen to be aligned.
    const auto g = params[i].grad();
    auto w = params[i].mutable_values();
    const double b1 = state.beta1, b2 = state.beta2, lr = state.learning_rate, eps = state.epsilon;
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
    }
  }
}

Adam::Adam(std::vector<Tensor> params, double learning_rate)
    : params_(std::move(params)), state_(make_adam_state(params_, learning_rate)) {}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.clear_grad();
}

void Adam::step() { adam_step(params_, state_); }

}  // namespace mflal
