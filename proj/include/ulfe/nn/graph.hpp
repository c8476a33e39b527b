#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ulfe/core/tensor.hpp"

namespace ulfe {
namespace nn {

// Reverse-mode autodiff over dynamically built graphs. Batch-free by design:
// feature tensors are (C,D,H,W), token matrices are (N,E), losses are scalars.

template <typename S>
struct Node;

template <typename S>
using Var = std::shared_ptr<Node<S>>;

template <typename S>
struct Node {
  Tensor<S> value;
  Tensor<S> grad;
  bool requires_grad = false;
  std::vector<Var<S>> parents;
  std::function<void(Node<S>&)> backprop;
  const char* op = "leaf";

  Tensor<S>& ensure_grad() {
    if (grad.shape() != value.shape()) grad = Tensor<S>(value.shape());
    return grad;
  }
  bool has_grad() const { return grad.shape() == value.shape(); }
  void drop_grad() { grad = Tensor<S>(); }
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

/// Disables graph recording in scope (inference / numeric differentiation).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename S>
Var<S> leaf(Tensor<S> v, bool requires_grad = false) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(v);
  n->requires_grad = requires_grad;
  return n;
}

template <typename S>
Var<S> constant(Tensor<S> v) {
  return leaf(std::move(v), false);
}

template <typename S>
Var<S> make_node(const char* op, Tensor<S> value, std::vector<Var<S>> parents,
                 std::function<void(Node<S>&)> backprop) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  n->op = op;
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  if (grad_mode() && rg) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

/// Stops gradient flow; shares no graph history with the input.
template <typename S>
Var<S> detach(const Var<S>& a) {
  return leaf(a->value, false);
}

template <typename S>
void backward(const Var<S>& root) {
  if (root->value.numel() != 1)
    throw std::invalid_argument("backward: root must be scalar, got " + shape_str(root->value.shape()));
  if (!root->requires_grad) return;

  // iterative post-order DFS -> topological order
  std::vector<Node<S>*> topo;
  std::unordered_set<Node<S>*> seen;
  std::vector<std::pair<Node<S>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<S>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad().fill(S(1));
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node<S>* n = *it;
    if (n->backprop && n->has_grad()) n->backprop(*n);
  }
}

}  // namespace nn
}  // namespace ulfe
