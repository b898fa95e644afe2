#pragma once

#include <vector>

#include "mflal/rng.hpp"
#include "mflal/tensor.hpp"

namespace mflal {

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // out
};

/// Fully connected ReLU network; no activation after the final layer.
class Mlp {
 public:
  Mlp() = default;
  /// `widths` lists layer sizes from input to output, e.g. {120, 128, 128, 32}.
  Mlp(const std::vector<std::size_t>& widths, Rng& rng);

  Tensor forward(const Tensor& x) const;
  std::vector<Tensor> parameters() const;
  /// Copy whose weights are constants (no gradient tracking).
  Mlp detached() const;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t depth() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }

 private:
  std::vector<Linear> layers_;
};

}  // namespace mflal
