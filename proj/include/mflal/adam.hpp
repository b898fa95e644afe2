#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mflal/tensor.hpp"

namespace mflal {

struct AdamState {
  std::int64_t step_count = 0;
  std::vector<std::int64_t> param_steps;  // updates applied to each parameter
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

AdamState make_adam_state(std::span<const Tensor> params, double learning_rate);

/// One bias-corrected Adam update of `params` from their accumulated
/// gradients. Parameters without a gradient are skipped and keep their own
/// step count for bias correction. Moment buffers are allocated on first use.
void adam_step(std::span<Tensor> params, AdamState& state);

/// Parameter list bundled with its optimizer state.
class Adam {
 public:
  Adam(std::vector<Tensor> params, double learning_rate);

  void zero_grad();
  void step();
  const AdamState& state() const { return state_; }

 private:
  std::vector<Tensor> params_;
  AdamState state_;
};

}  // namespace mflal
