#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace harkit::ad {

// All graph math runs in 64-bit; oracle and acceptance tolerances assume it.
using Real = double;
using Shape = std::vector<int>;

std::int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // allocated on first use
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // reads this node's grad, accumulates into parents

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), Real{0});
  }
};

}  // namespace detail

// Scoped switch that disables graph construction (inference paths).
// Thread-local, so concurrent evaluation jobs do not interfere.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool grad_enabled();

 private:
  bool prev_;
};

// Shared handle to a graph node. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(Shape shape, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<Real> values, bool requires_grad = false);
  static Tensor zeros(Shape shape);
  static Tensor scalar(Real v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->data.size()); }

  Real* data() { return node_->data.data(); }
  const Real* data() const { return node_->data.data(); }
  std::vector<Real>& values() { return node_->data; }
  const std::vector<Real>& values() const { return node_->data; }

  // Scalar accessor; tensor must hold exactly one value.
  Real value() const;

  bool requires_grad() const { return node_->requires_grad; }
  Real* grad() {
    node_->ensure_grad();
    return node_->grad.data();
  }
  const std::vector<Real>& grad_values() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (node_) node_->grad.assign(node_->data.size(), Real{0});
  }

  // Reverse pass from a scalar root. Accumulates into every reachable
  // leaf with requires_grad set.
  void backward() const;

  bool all_finite() const;

  std::shared_ptr<detail::Node> node() const { return node_; }

  friend Tensor make_node(Shape shape, std::vector<Tensor> parents,
                          std::function<void(detail::Node&)> backprop);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

// Creates an interior node. When gradients are globally disabled or no
// parent needs them, the edge list and closure are dropped.
Tensor make_node(Shape shape, std::vector<Tensor> parents,
                 std::function<void(detail::Node&)> backprop);

}  // namespace harkit::ad
