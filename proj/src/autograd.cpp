// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#include "clue/autograd.hpp"

#include "clue/error.hpp"

namespace clue {

const Tensor& Var::value() const {
  if (!graph_) throw Error("Var::value on an unbound variable");
  return graph_->value(*this);
}

Var Graph::push(Node node) {
  if (backward_done_) throw Error("Graph: cannot record after backward");
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  return push(std::move(node));
}

Var Graph::input(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = grad_enabled_;
  return push(std::move(node));
}

Var Graph::parameter(Parameter& param) {
  if (const auto it = param_nodes_.find(&param); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  Node node;
  node.value = param.value;
  if (grad_enabled_) {
    node.param = &param;
    node.requires_grad = true;
  }
  const Var v = push(std::move(node));
  param_nodes_.emplace(&param, v.id());
  return v;
}

Var Graph::record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
}

Var Graph::record(Tensor value, std::span<const Var> parents, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (const Var& p : parents) {
    if (p.graph() != this) throw Error("Graph::record: parent belongs to another graph");
    node.requires_grad = node.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  return push(std::move(node));
}

Tensor& Graph::grad(Var v) {
  Node& node = nodes_[v.id()];
  if (!node.has_grad) {
    node.grad = Tensor(node.value.shape());
    node.has_grad = true;
  }
  return node.grad;
}

void Graph::backward(Var root) {
  if (root.value().size() != 1) {
    throw DimensionError("Graph::backward: root must be a scalar, got " +
                         shape_string(root.shape()));
  }
  const Tensor one(root.shape(), 1.0);
  const Seed seed{root, &one};
  backward(std::span<const Seed>(&seed, 1));
}

void Graph::backward(std::span<const Seed> seeds) {
  if (backward_done_) throw Error("Graph::backward called twice");
  for (const Seed& s : seeds) {
    if (s.var.graph() != this) throw Error("Graph::backward: seed from another graph");
    grad(s.var) += *s.grad;
  }
  run_backward();
}

void Graph::run_backward() {
  backward_done_ = true;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.requires_grad) continue;
    if (node.backward) node.backward(*this, node.grad);
    if (node.param) node.param->grad += node.grad;
  }
}

}  // namespace clue
