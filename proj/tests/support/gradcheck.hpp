#pragma once

// Central finite-difference reference used to check the autodiff engine.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mflal/tensor.hpp"

namespace mflal::testing {

/// Max relative error between autodiff gradients of `loss()` and central
/// differences with step h, over every entry of every tensor in `params`.
/// The denominator is max(|numeric|, |analytic|, floor).
inline double max_gradient_error(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                                 double h = 1e-5, double floor = 1e-3) {
  for (auto& p : params) p.zero_grad();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto values = params[t].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss().item();
      values[i] = saved - h;
      const double down = loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[t][i]), floor});
      worst = std::max(worst, std::abs(numeric - analytic[t][i]) / denom);
    }
  }
  return worst;
}

}  // namespace mflal::testing
