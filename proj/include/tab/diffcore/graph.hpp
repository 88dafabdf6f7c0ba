/* Copyright 2026 The TAB Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <unordered_map>
#include <utility>

#include "tab/diffcore/param_set.hpp"
#include "tab/diffcore/tensor.hpp"

namespace tab {

template <typename T>
class Graph;

// Handle to a node of a Graph. Cheap to copy; only valid while the graph lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* graph, int id) : graph_(graph), id_(id) {}

  bool valid() const { return graph_ != nullptr && id_ >= 0; }
  int id() const { return id_; }
  Graph<T>* graph() const { return graph_; }

  const Tensor2D<T>& value() const { return graph_->value(id_); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  T scalar() const { return value()(0, 0); }

 private:
  Graph<T>* graph_ = nullptr;
  int id_ = -1;
};

// Tape of operation records in creation order, which is a topological order
// of the computation. Backward walks the tape once in reverse.
template <typename T>
class Graph {
 public:
  using Matrix = Tensor2D<T>;
  using BackwardFn = std::function<void(Graph&, int)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Inference graphs record values only.
  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

  Var<T> constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  // Leaf bound to a trainable parameter. Repeated calls for the same
  // parameter return the same node.
  Var<T> param(Parameter<T>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var<T>(this, it->second);
    Node n;
    n.value = p.value;
    n.requires_grad = grad_enabled_;
    n.param = &p;
    nodes_.push_back(std::move(n));
    const int id = static_cast<int>(nodes_.size()) - 1;
    param_nodes_.emplace(&p, id);
    return Var<T>(this, id);
  }

  Var<T> record(Matrix value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
    bool needs = false;
    for (const auto& v : inputs) {
      check_owned(v);
      needs = needs || nodes_[v.id()].requires_grad;
    }
    return push(std::move(value), needs, std::move(fn));
  }

  template <typename Range>
  Var<T> record_range(Matrix value, const Range& inputs, BackwardFn fn) {
    bool needs = false;
    for (const auto& v : inputs) {
      check_owned(v);
      needs = needs || nodes_[v.id()].requires_grad;
    }
    return push(std::move(value), needs, std::move(fn));
  }

  bool requires_grad(const Var<T>& v) const { return nodes_[v.id()].requires_grad; }

  const Matrix& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }

  // Gradient of a node as seen from inside its own backward function.
  const Matrix& grad(int id) const { return nodes_[id].grad; }

  template <typename Expr>
  void accumulate(const Var<T>& v, const Expr& delta) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = delta;
    } else {
      n.grad += delta;
    }
  }

  // Direct access for ops that scatter into a subset of rows.
  Matrix* grad_buffer(const Var<T>& v) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return nullptr;
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return &n.grad;
  }

  // Fills the gradient buffers of every parameter reached from `loss`.
  // Parameter gradients are accumulated (not overwritten).
  void backward(const Var<T>& loss) {
    if (!loss.valid() || loss.graph() != this || loss.id() >= static_cast<int>(nodes_.size())) {
      throw GraphError("backward: loss node does not belong to a completed forward pass");
    }
    if (backward_done_) throw GraphError("backward: graph has already been differentiated");
    Node& root = nodes_[loss.id()];
    if (root.value.rows() != 1 || root.value.cols() != 1) {
      throw GraphError("backward: root must be scalar, got " + shape_str(root.value));
    }
    backward_done_ = true;
    if (!root.requires_grad) return;
    root.grad = Matrix::Ones(1, 1);
    for (int id = loss.id(); id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, id);
      if (n.param != nullptr) n.param->grad += n.grad;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
    BackwardFn backward;
  };

  void check_owned(const Var<T>& v) const {
    if (!v.valid() || v.graph() != this) throw GraphError("op input belongs to another graph");
  }

  Var<T> push(Matrix value, bool needs, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = needs && grad_enabled_;
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter<T>*, int> param_nodes_;
  bool grad_enabled_ = true;
  bool backward_done_ = false;
};

}  // namespace tab
