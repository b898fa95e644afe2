#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mflal {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

// One vertex of the reverse-mode graph. `backward` reads this node's grad
// and accumulates into the parents' grads.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Dense row-major float64 tensor with reverse-mode autodiff.
///
/// Tensors are cheap handles; copies share storage. Every operation in
/// ops.hpp that touches a tensor with `requires_grad()` records a node, and
/// `backward()` on a scalar result walks those nodes in reverse topological
/// order. The graph is rebuilt on every forward pass.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  /// Leaf tensor that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double operator[](std::size_t i) const { return values()[i]; }
  double item() const;

  bool requires_grad() const;
  /// Gradient of the last backward pass; all zeros when unreachable.
  std::span<const double> grad() const;
  void zero_grad();
  /// True once backward has reached this tensor since the last clear_grad.
  bool has_grad() const;
  /// Releases the gradient so that optimizers skip the tensor until
  /// backward reaches it again.
  void clear_grad();

  /// Populates gradients of every reachable tensor that requires them.
  void backward() const;

  /// Same values, cut from the graph.
  Tensor detach() const;

  // Used by operation implementations.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> backward);
  detail::Node& node() const { return *node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

}  // namespace mflal
