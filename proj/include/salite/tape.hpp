#pragma once

#include <cassert>
#include <unordered_set>
#include <vector>

#include "salite/tensor.hpp"

namespace salite {

/// Topologically ordered record of the operations reachable from a root.
/// Every node appears after all of its inputs.
template <Real T>
class Tape {
 public:
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  static Tape record(const Tensor<T>& root) {
    Tape tape;
    tape.root_ = root.node();
    std::unordered_set<const detail::Node<T>*> visited;
    std::unordered_set<const detail::Node<T>*> on_stack;
    // iterative post-order DFS; graphs from deep recurrences overflow the call stack otherwise
    std::vector<std::pair<NodePtr, std::size_t>> stack;
    stack.emplace_back(tape.root_, 0);
    on_stack.insert(tape.root_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        NodePtr child = node->inputs[next++];
        if (!child->requires_grad || visited.count(child.get())) continue;
        assert(!on_stack.count(child.get()) && "cyclic tape");
        on_stack.insert(child.get());
        stack.emplace_back(std::move(child), 0);
      } else {
        visited.insert(node.get());
        on_stack.erase(node.get());
        tape.order_.push_back(node);
        stack.pop_back();
      }
    }
    return tape;
  }

  std::span<const NodePtr> order() const { return order_; }
  std::size_t size() const { return order_.size(); }

  /// Seeds d(root)/d(root) = 1 and runs every gradient rule once, root first.
  /// Intermediate gradient buffers are released as soon as they are consumed.
  void backward() const {
    if (root_->data.size() != 1)
      throw DimensionError("backward requires a scalar root, got " + to_string(root_->shape));
    if (!root_->requires_grad) return;
    auto& seed = root_->ensure_grad();
    seed[0] = root_->is_leaf() ? seed[0] + T(1) : T(1);
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      auto& node = **it;
      if (node.is_leaf() || node.grad.empty()) continue;
      node.backward(node);
      if (&node != root_.get()) std::vector<T>().swap(node.grad);
    }
  }

 private:
  NodePtr root_;
  std::vector<NodePtr> order_;
};

template <Real T>
void backward(const Tensor<T>& root) {
  Tape<T>::record(root).backward();
}

}  // namespace salite
