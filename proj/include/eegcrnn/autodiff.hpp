#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "eegcrnn/tensor.hpp"

namespace eegcrnn {

template <std::floating_point T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  std::vector<std::shared_ptr<Node>> parents;
  // Local vector-Jacobian product: reads self.grad, accumulates into parents.
  std::function<void(Node&)> backward;
  bool requires_grad = false;

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

namespace detail {
inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled()) { detail::grad_enabled() = false; }
  ~NoGradGuard() { detail::grad_enabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Handle to a tape node. Copies share the node.
template <std::floating_point T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  // Gradient after backward(); zeros if the node was never reached.
  const Tensor<T>& grad() const { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = Tensor<T>(); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <std::floating_point T>
Var<T> constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  return Var<T>(std::move(node));
}

template <std::floating_point T>
Var<T> parameter(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var<T>(std::move(node));
}

// Builds an op result. The backward rule is only recorded when grad mode is
// on and at least one parent needs a gradient.
template <std::floating_point T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs && detail::grad_enabled()) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.shared());
    node->backward = std::move(backward);
  }
  return Var<T>(std::move(node));
}

// Reverse-mode sweep from a scalar root. Gradients accumulate additively on
// every node reachable from the root, including leaves from earlier sweeps
// unless they are zeroed first.
template <std::floating_point T>
void backward(const Var<T>& root) {
  if (root.size() != 1) {
    throw ShapeError("backward() requires a scalar root, got shape " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

// Fault sites for mutation testing of the gradient-check harness.
enum class FaultSite : std::uint8_t { None, EluBackward, Conv2dBackward, MatmulBackward };

inline FaultSite& injected_fault() {
  static FaultSite site = FaultSite::None;
  return site;
}

class FaultInjection {
 public:
  explicit FaultInjection(FaultSite site) : previous_(injected_fault()) { injected_fault() = site; }
  ~FaultInjection() { injected_fault() = previous_; }
  FaultInjection(const FaultInjection&) = delete;
  FaultInjection& operator=(const FaultInjection&) = delete;

 private:
  FaultSite previous_;
};

}  // namespace eegcrnn
