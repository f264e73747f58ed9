// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <unordered_map>

#include "clue/tensor.hpp"

namespace clue {

class Graph;

/// Handle to a node recorded on a Graph.
class Var {
 public:
  Var() = default;

  Graph* graph() const noexcept { return graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so walking the
/// tape backwards visits every node after all of its consumers.
class Graph {
 public:
  // Receives the gradient of the node that owns it and accumulates into parents.
  using BackwardFn = std::function<void(Graph&, const Tensor&)>;

  struct Seed {
    Var var;
    const Tensor* grad;
  };

  Graph() = default;
  // With gradients disabled, parameters enter as constants and no backward
  // closures are kept; used for evaluation-mode forwards.
  explicit Graph(bool grad_enabled) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // Leaf that requires a gradient but is not bound to a Parameter.
  Var input(Tensor value);
  // One node per Parameter per graph; gradients flow into Parameter::grad.
  Var parameter(Parameter& param);

  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(Tensor value, std::span<const Var> parents, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  // Gradient buffer of a node, allocated as zeros on first access.
  Tensor& grad(Var v);
  bool has_grad(Var v) const { return nodes_[v.id()].has_grad; }

  void backward(Var root);
  void backward(std::span<const Seed> seeds);

  std::size_t size() const noexcept { return nodes_.size(); }
  bool grad_enabled() const noexcept { return grad_enabled_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
  };

  Var push(Node node);
  void run_backward();

  std::deque<Node> nodes_;
  std::unordered_map<Parameter*, std::size_t> param_nodes_;
  bool backward_done_ = false;
  bool grad_enabled_ = true;
};

}  // namespace clue
