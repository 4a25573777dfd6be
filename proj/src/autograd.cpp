// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dlka/autograd.hpp"

#include <algorithm>
#include <unordered_set>

namespace dlka {

namespace {

Var make_leaf(Tensor value, bool requires_grad, bool parameter,
              const char* op) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->parameter = parameter;
  node->op = op;
  return Var(std::move(node));
}

void accumulate(Tensor& into, const Tensor& g) {
  if (into.shape() != g.shape()) {
    throw ShapeError("gradient shape " + shape_str(g.shape()) +
                     " does not match " + shape_str(into.shape()));
  }
  real* p = into.ptr();
  const real* q = g.ptr();
  for (Index i = 0; i < into.numel(); ++i) p[i] += q[i];
}

thread_local bool g_grad_enabled = true;

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var Var::constant(Tensor value) {
  return make_leaf(std::move(value), false, false, "constant");
}

Var Var::input(Tensor value) {
  return make_leaf(std::move(value), true, false, "input");
}

Var Var::parameter(Tensor value) {
  return make_leaf(std::move(value), true, true, "parameter");
}

Tensor& Var::mutable_value() {
  if (!node_ || !node_->inputs.empty()) {
    throw std::logic_error("mutable_value() on a non-leaf Var");
  }
  return node_->value;
}

Var record(std::string op, Tensor value, const std::vector<Var>& inputs,
           BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = std::move(op);
  const bool needs = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                                 [](const Var& v) { return v.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    node->backward = std::move(fn);
    node->inputs.reserve(inputs.size());
    for (const Var& v : inputs) node->inputs.push_back(v.shared());
  }
  return Var(std::move(node));
}

Var detach(const Var& v) { return Var::constant(v.value()); }

const Tensor* Gradients::find(const Var& v) const {
  auto it = grads_.find(v.node());
  return it == grads_.end() ? nullptr : &it->second;
}

Tensor Gradients::of(const Var& v) const {
  if (const Tensor* g = find(v)) return *g;
  return Tensor(v.shape());
}

Gradients backward(const Var& loss) {
  if (!loss) throw std::invalid_argument("backward: empty loss");
  if (loss.value().numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got " +
                     shape_str(loss.shape()));
  }
  Gradients result;
  if (!loss.requires_grad()) return result;

  // Iterative post-order DFS gives a deterministic topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  Node* root = loss.shared().get();
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<Node*, Tensor> grads;
  grads[root] = Tensor::full(loss.shape(), real(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    auto found = grads.find(node);
    if (found == grads.end()) continue;
    if (node->inputs.empty()) {
      result.set(node, std::move(found->second));
      grads.erase(found);
      continue;
    }
    Tensor g = std::move(found->second);
    grads.erase(found);
    std::vector<Tensor> parts = node->backward(g);
    if (parts.size() != node->inputs.size()) {
      throw std::logic_error("backward of '" + node->op +
                             "' returned wrong arity");
    }
    for (size_t i = 0; i < parts.size(); ++i) {
      Node* child = node->inputs[i].get();
      if (!child->requires_grad || parts[i].empty()) continue;
      auto slot = grads.find(child);
      if (slot == grads.end()) {
        if (parts[i].shape() != child->value.shape()) {
          throw ShapeError("backward of '" + node->op + "': gradient " +
                           shape_str(parts[i].shape()) + " for input " +
                           shape_str(child->value.shape()));
        }
        grads.emplace(child, std::move(parts[i]));
      } else {
        accumulate(slot->second, parts[i]);
      }
    }
  }
  return result;
}

Var add(const Var& a, const Var& b) {
  Tensor out = elementwise(a.value(), b.value(), ElementwiseOp::kAdd);
  const Shape bshape = b.shape();
  return record("add", std::move(out), {a, b},
                [bshape](const Tensor& g) -> std::vector<Tensor> {
                  return {g, reduce_to_shape(g, bshape)};
                });
}

Var sub(const Var& a, const Var& b) {
  Tensor out = elementwise(a.value(), b.value(), ElementwiseOp::kSub);
  const Shape bshape = b.shape();
  return record("sub", std::move(out), {a, b},
                [bshape](const Tensor& g) -> std::vector<Tensor> {
                  return {g, reduce_to_shape(scale(g, real(-1)), bshape)};
                });
}

Var mul(const Var& a, const Var& b) {
  Tensor out = elementwise(a.value(), b.value(), ElementwiseOp::kMul);
  auto an = a.shared();
  auto bn = b.shared();
  return record("mul", std::move(out), {a, b},
                [an, bn](const Tensor& g) -> std::vector<Tensor> {
                  std::vector<Tensor> r(2);
                  if (an->requires_grad) {
                    r[0] = elementwise(g, bn->value, ElementwiseOp::kMul);
                  }
                  if (bn->requires_grad) {
                    r[1] = reduce_to_shape(
                        elementwise(g, an->value, ElementwiseOp::kMul),
                        bn->value.shape());
                  }
                  return r;
                });
}

Var scale(const Var& a, real factor) {
  return record("scale", scale(a.value(), factor), {a},
                [factor](const Tensor& g) -> std::vector<Tensor> {
                  return {scale(g, factor)};
                });
}

Var sum(const Var& a) {
  const Shape shape = a.shape();
  return record("sum", Tensor::scalar(sum(a.value())), {a},
                [shape](const Tensor& g) -> std::vector<Tensor> {
                  return {Tensor::full(shape, g.item())};
                });
}

Var mean(const Var& a) {
  const Index n = a.value().numel();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), real(1) / static_cast<real>(n));
}

Var square(const Var& a) {
  Tensor out = elementwise(a.value(), a.value(), ElementwiseOp::kMul);
  auto an = a.shared();
  return record("square", std::move(out), {a},
                [an](const Tensor& g) -> std::vector<Tensor> {
                  Tensor r = elementwise(g, an->value, ElementwiseOp::kMul);
                  return {scale(r, real(2))};
                });
}

Var reshape(const Var& a, Shape shape) {
  const Shape original = a.shape();
  Tensor out = a.value().reshaped(std::move(shape));
  return record("reshape", std::move(out), {a},
                [original](const Tensor& g) -> std::vector<Tensor> {
                  return {g.reshaped(original)};
                });
}

}  // namespace dlka
