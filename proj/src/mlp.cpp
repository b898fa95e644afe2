#include "mflal/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "mflal/ops.hpp"

namespace mflal {

Mlp::Mlp(const std::vector<std::size_t>& widths, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l], out = widths[l + 1];
    // Kaiming-uniform weights, zero bias.
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    std::vector<double> w(in * out);
    for (double& v : w) v = (2.0 * rng.uniform() - 1.0) * bound;
    layers_.push_back({Tensor::parameter({in, out}, std::move(w)),
                       Tensor::parameter({out}, std::vector<double>(out, 0.0))});
  }
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = add(matmul(h, layers_[l].weight), layers_[l].bias);
    if (l + 1 < layers_.size()) h = relu(h);
  }
  return h;
}

std::vector<Tensor> Mlp::parameters() const {
  std::vector<Tensor> out;
  for (const auto& layer : layers_) {
    out.push_back(layer.weight);
    out.push_back(layer.bias);
  }
  return out;
}

Mlp Mlp::detached() const {
  Mlp out;
  for (const auto& layer : layers_) out.layers_.push_back({layer.weight.detach(), layer.bias.detach()});
  return out;
}

std::size_t Mlp::input_dim() const { return layers_.front().weight.shape()[0]; }
std::size_t Mlp::output_dim() const { return layers_.back().bias.size(); }

}  // namespace mflal
