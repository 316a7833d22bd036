// Copyright 2026 The HearNet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Tape-free reverse-mode automatic differentiation. Every Var owns a node;
// ops record their parents and a backward closure, and Backward() walks the
// resulting DAG in reverse topological order.

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hearnet/core/tensor.hpp"

namespace hearnet::ag {

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor<T>& Grad() {
    if (grad.size() != value.size()) grad = Tensor<T>(value.shape());
    return grad;
  }
  bool HasGrad() const { return grad.size() == value.size() && !value.empty(); }
};

namespace detail {
inline bool& GradEnabledFlag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool GradEnabled() { return detail::GradEnabledFlag(); }

// Disables graph recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::GradEnabledFlag()) {
    detail::GradEnabledFlag() = false;
  }
  ~NoGradGuard() { detail::GradEnabledFlag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  size_t dim(size_t i) const { return node_->value.dim(i); }
  size_t rank() const { return node_->value.rank(); }
  size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  // Gradient accumulated by Backward(); zeros if none has flowed here.
  Tensor<T> grad() const {
    if (node_->HasGrad()) return node_->grad;
    return Tensor<T>(value().shape());
  }
  bool has_grad() const { return node_->HasGrad(); }
  void ZeroGrad() { node_->grad = Tensor<T>(); }

  // Same value, cut from the graph.
  Var Detach() const { return Var(value(), false); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

  T item() const {
    Require(size() == 1, "Var::item on non-scalar " + ShapeString(shape()));
    return value()[0];
  }

  // Builds the result of an op. Records parents and the backward closure only
  // when recording is on and some parent needs a gradient.
  static Var MakeResult(Tensor<T> value, std::vector<Var> parents,
                        std::function<void(Node<T>&)> backward) {
    Var out(std::move(value), false);
    if (!GradEnabled()) return out;
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->parents.reserve(parents.size());
    for (auto& p : parents) out.node_->parents.push_back(p.node_);
    out.node_->backward_fn = std::move(backward);
    return out;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Accumulates gradients of `loss` (seeded with `seed`, default ones) into all
// reachable nodes that require them. Intermediate nodes release their
// closures afterwards; leaf gradients keep accumulating across calls.
template <class T>
void Backward(const Var<T>& loss, const Tensor<T>* seed = nullptr) {
  if (!loss.requires_grad()) return;
  // Owning references keep every node alive until the walk finishes, since
  // clearing a node's parents may drop the last other reference to them.
  std::vector<std::shared_ptr<Node<T>>> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<std::shared_ptr<Node<T>>, size_t>> stack;
  stack.push_back({loss.node(), 0});
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      const auto& p = n->parents[i++];
      if (p->requires_grad && !seen.count(p.get())) {
        seen.insert(p.get());
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  Node<T>& root = *loss.node();
  Tensor<T>& g = root.Grad();
  if (seed) {
    Require(seed->shape() == root.value.shape(), "Backward: seed shape");
    for (size_t i = 0; i < g.size(); ++i) g[i] += (*seed)[i];
  } else {
    for (size_t i = 0; i < g.size(); ++i) g[i] += T{1};
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = it->get();
    if (n->backward_fn) {
      if (n->HasGrad()) n->backward_fn(*n);
      n->backward_fn = nullptr;
      n->parents.clear();
      n->grad = Tensor<T>();
    }
  }
}

}  // namespace hearnet::ag
