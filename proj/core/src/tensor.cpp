#include "harkit/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace harkit::ad {

std::int64_t numel_of(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool NoGradGuard::grad_enabled() { return g_grad_enabled; }

Tensor Tensor::leaf(Shape shape, bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  n->data.assign(static_cast<std::size_t>(numel_of(shape)), Real{0});
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from_data(Shape shape, std::vector<Real> values, bool requires_grad) {
  if (static_cast<std::int64_t>(values.size()) != numel_of(shape))
    throw std::invalid_argument("Tensor::from_data: " + std::to_string(values.size()) +
                                " values for shape " + shape_str(shape));
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->data = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape) { return leaf(std::move(shape), false); }

Tensor Tensor::scalar(Real v) { return from_data({1}, {v}, false); }

Real Tensor::value() const {
  if (!node_ || node_->data.size() != 1)
    throw std::invalid_argument("Tensor::value: tensor is not a scalar");
  return node_->data[0];
}

bool Tensor::all_finite() const {
  for (Real v : node_->data)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor make_node(Shape shape, std::vector<Tensor> parents,
                 std::function<void(detail::Node&)> backprop) {
  auto n = std::make_shared<detail::Node>();
  n->data.assign(static_cast<std::size_t>(numel_of(shape)), Real{0});
  n->shape = std::move(shape);
  if (NoGradGuard::grad_enabled()) {
    bool needs = false;
    for (const Tensor& p : parents) needs = needs || p.requires_grad();
    if (needs) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (Tensor& p : parents) n->parents.push_back(p.node());
      n->backprop = std::move(backprop);
    }
  }
  return Tensor(std::move(n));
}

void Tensor::backward() const {
  if (!node_ || node_->data.size() != 1)
    throw std::invalid_argument("backward: root must be a scalar");

  // Iterative post-order topological sort; recursion depth is unbounded for
  // long RNN unrolls.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  struct Frame {
    detail::Node* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({node_.get(), 0});
  visited.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::Node* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += Real{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backprop) {
      for (auto& p : n->parents)
        if (p->requires_grad) p->ensure_grad();
      n->backprop(*n);
    }
  }
}

}  // namespace harkit::ad
