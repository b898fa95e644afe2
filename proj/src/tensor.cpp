#include "mflal/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "mflal/errors.hpp"

namespace mflal {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

std::vector<double>& detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

namespace {

std::shared_ptr<detail::Node> make_node(Shape shape, std::vector<double> values) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor: zero-sized dimension in shape " + shape_string(shape));
  }
  if (shape.empty()) shape = {1};
  if (values.size() != shape_size(shape)) {
    throw ShapeError("tensor: " + std::to_string(values.size()) + " values do not fill shape " +
                     shape_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = shape_size(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  return Tensor(make_node(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  auto node = make_node(std::move(shape), std::move(values));
  node->requires_grad = true;
  node->grad.assign(node->value.size(), 0.0);
  return Tensor(std::move(node));
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }

std::size_t Tensor::rows() const {
  return rank() == 1 ? 1 : shape()[0];
}

std::size_t Tensor::cols() const { return shape().back(); }

std::span<const double> Tensor::values() const { return node_->value; }
std::span<double> Tensor::mutable_values() { return node_->value; }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor of shape " + shape_string(shape()) + " is not a scalar");
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

std::span<const double> Tensor::grad() const { return node_->grad_buffer(); }

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

void Tensor::clear_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return from(shape(), node_->value); }

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                           std::function<void(detail::Node&)> backward) {
  auto node = make_node(std::move(shape), std::move(values));
  for (auto& input : inputs) {
    if (input.node_->requires_grad) {
      node->requires_grad = true;
      break;
    }
  }
  if (node->requires_grad) {
    node->parents.reserve(inputs.size());
    for (auto& input : inputs) node->parents.push_back(input.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

void Tensor::backward() const {
  if (size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS; parents are visited in recorded order so the
  // resulting schedule is deterministic.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [current, next_parent] = stack.back();
    if (next_parent < current->parents.size()) {
      detail::Node* parent = current->parents[next_parent++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(current);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order) {
    if (n->backward) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

}  // namespace mflal
