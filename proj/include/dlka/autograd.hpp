// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef DLKA_AUTOGRAD_HPP_
#define DLKA_AUTOGRAD_HPP_

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "dlka/tensor.hpp"

namespace dlka {

// Gradient contributions of one node, one entry per input (an empty tensor
// means "no contribution").
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

struct Node {
  Tensor value;
  bool requires_grad = false;
  bool parameter = false;
  std::string op;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
};

// Handle to a recorded value. Leaves are constants, differentiable inputs or
// trainable parameters; every other Var is the output of a recorded op.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  // Leaf that receives a gradient but is not trainable.
  static Var input(Tensor value);
  static Var parameter(Tensor value);

  const Tensor& value() const { return node_->value; }
  // Only leaves may be updated in place (optimizer steps, checkpoint loads).
  Tensor& mutable_value();
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool is_parameter() const { return node_ && node_->parameter; }
  bool is_leaf() const { return node_ && node_->inputs.empty(); }
  explicit operator bool() const { return node_ != nullptr; }
  const Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Records an op. When no input requires a gradient the result is a constant
// and `fn` is dropped.
Var record(std::string op, Tensor value, const std::vector<Var>& inputs,
           BackwardFn fn);

// Same value, cut from the graph.
Var detach(const Var& v);

// While alive, record() on this thread builds no graph (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

class Gradients {
 public:
  const Tensor* find(const Var& v) const;
  // Zero tensor when `v` was not reached from the loss.
  Tensor of(const Var& v) const;
  size_t size() const { return grads_.size(); }
  void set(const Node* node, Tensor g) { grads_[node] = std::move(g); }

 private:
  std::unordered_map<const Node*, Tensor> grads_;
};

// Reverse-mode sweep from a one-element loss. Returns gradients for every
// leaf that requires a gradient; constants are skipped. Contributions from
// fan-out are summed in a fixed topological order.
Gradients backward(const Var& loss);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, real factor);
Var sum(const Var& a);
Var mean(const Var& a);
Var square(const Var& a);
// Reinterprets the extents; element count must match.
Var reshape(const Var& a, Shape shape);

}  // namespace dlka

#endif  // DLKA_AUTOGRAD_HPP_
