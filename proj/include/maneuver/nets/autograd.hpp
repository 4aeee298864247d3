#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "maneuver/core/error.hpp"
#include "maneuver/core/tensor.hpp"

namespace maneuver {

// Reverse-mode autodiff over Tensor<T>. Graphs are built eagerly by the ops
// in ops.hpp: each op produces a node holding its value, its parents, and a
// closure that routes the node's gradient into the parents' gradients.
// Everything is single-threaded and runs in a fixed order, so gradients are
// bitwise reproducible run to run.
//
// The scalar type is a template parameter: training runs in float, while
// gradient checks instantiate the same code in double where central finite
// differences are trustworthy.

template <typename T>
struct VarNode {
  Tensor<T> value;
  Tensor<T> grad;  // allocated lazily on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<VarNode>> parents;
  std::function<void(VarNode&)> backward_fn;

  void ensure_grad() {
    if (grad.data.empty() && value.numel() > 0) grad = Tensor<T>::zeros(value.shape);
  }
};

// Graph construction toggle: evaluation paths disable it so no closures or
// parent references are kept alive.
inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool saved;
  NoGradGuard() : saved(grad_enabled_flag()) { grad_enabled_flag() = false; }
  ~NoGradGuard() { grad_enabled_flag() = saved; }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<VarNode<T>> n) : node_(std::move(n)) {}

  static Var leaf(Tensor<T> value, bool requires_grad) {
    auto n = std::make_shared<VarNode<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  Tensor<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::shared_ptr<VarNode<T>>& node() const { return node_; }

  void zero_grad() {
    if (node_) std::fill(node_->grad.data.begin(), node_->grad.data.end(), T(0));
  }

 private:
  std::shared_ptr<VarNode<T>> node_;
};

// Builds an op node. When gradients are globally disabled, or no parent
// needs them, the result is a detached constant and the closure is dropped.
template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(VarNode<T>&)> backward_fn) {
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!grad_enabled_flag() || !any) {
    return Var<T>::leaf(std::move(value), false);
  }
  auto n = std::make_shared<VarNode<T>>();
  n->value = std::move(value);
  n->requires_grad = true;
  for (auto& p : parents) n->parents.push_back(p.node());
  n->backward_fn = std::move(backward_fn);
  return Var<T>(std::move(n));
}

// Accumulates `delta` into a parent's gradient if that parent wants one.
template <typename T>
void accumulate_grad(VarNode<T>& parent, const Tensor<T>& delta) {
  if (!parent.requires_grad) return;
  parent.ensure_grad();
  require(parent.grad.data.size() == delta.data.size(), "gradient shape mismatch");
  for (size_t i = 0; i < delta.data.size(); ++i) parent.grad.data[i] += delta.data[i];
}

// Runs backpropagation from a scalar root. Nodes are visited in reverse
// topological order built by an iterative post-order DFS; parent order is
// the op construction order, so traversal is deterministic.
template <typename T>
void backward(const Var<T>& root) {
  require(root.defined(), "backward on an undefined variable");
  require(root.value().numel() == 1, "backward expects a scalar loss");
  if (!root.requires_grad()) internal_error("backward on a graph built without gradients");

  std::vector<VarNode<T>*> order;
  std::unordered_set<VarNode<T>*> visited;
  // Iterative post-order DFS.
  std::vector<std::pair<VarNode<T>*, size_t>> stack;
  stack.push_back({root.node().get(), 0});
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      VarNode<T>* child = node->parents[next_child].get();
      ++next_child;
      if (child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.push_back({child, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad();
  std::fill(root.node()->grad.data.begin(), root.node()->grad.data.end(), T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    VarNode<T>* node = *it;
    if (node->backward_fn) {
      node->ensure_grad();
      node->backward_fn(*node);
    }
  }
}

}  // namespace maneuver
