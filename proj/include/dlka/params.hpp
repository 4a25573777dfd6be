// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef DLKA_PARAMS_HPP_
#define DLKA_PARAMS_HPP_

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dlka/autograd.hpp"
#include "dlka/conv.hpp"

namespace dlka {

// Named trainable tensors in creation order.
class ParamStore {
 public:
  const Var& add(const std::string& name, Tensor init);
  const Var& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  const std::vector<std::string>& names() const { return names_; }
  size_t size() const { return names_.size(); }
  Index total_elements() const;
  // Elements of all parameters whose name contains `fragment`.
  Index count_matching(std::string_view fragment) const;

  // Replaces the value of an existing parameter (shapes must match).
  void assign(std::string_view name, const Tensor& value);

 private:
  std::vector<std::string> names_;
  std::map<std::string, Var, std::less<>> vars_;
};

// How freshly created layers are initialised.
enum class InitMode {
  // Fan-in uniform weights, zero biases, zero residual-final projections and
  // zero offset networks: every block starts as the identity and every
  // deformable layer as its rigid counterpart.
  kStandard,
  // Everything random (small offset nets included). Used by gradient checks
  // and equivalence tests where zero weights would hide bugs.
  kRandom,
};

// Prefix-scoped view of a ParamStore used while building layers.
class Scope {
 public:
  Scope(ParamStore& store, std::string prefix = {})
      : store_(&store), prefix_(std::move(prefix)) {}

  Scope sub(std::string_view name) const;
  std::string path(std::string_view name) const;
  const Var& operator[](std::string_view name) const;
  bool has(std::string_view name) const;
  ParamStore& store() const { return *store_; }

 private:
  ParamStore* store_;
  std::string prefix_;
};

struct Initializer {
  Rng rng;
  InitMode mode = InitMode::kStandard;

  explicit Initializer(std::uint64_t seed, InitMode m = InitMode::kStandard)
      : rng(seed), mode(m) {}

  // Uniform in +-sqrt(6 / fan_in).
  Tensor fan_in_uniform(const Shape& shape, Index fan_in);
  Tensor zeros_or_random(const Shape& shape, real random_scale);
};

// Creates `weight` (+ `bias` when spec.bias) under `scope`. A `zero_init`
// layer is zero-filled in standard mode (residual-final projections and
// offset networks).
void init_conv(const Scope& scope, const ConvSpec& spec, Initializer& init,
               bool zero_init = false);
// Applies the conv created by init_conv.
Var apply_conv(const Var& x, const Scope& scope, const ConvSpec& spec);

// Transposed convolution layer; weight uses the forward layout of `spec`
// (out_channels x in_channels x k), bias has spec.in_channels entries.
void init_conv_transpose(const Scope& scope, const ConvSpec& spec,
                         Initializer& init);
Var apply_conv_transpose(const Var& y, const Scope& scope, const ConvSpec& spec);

// Per-channel LayerNorm affine (scale 1, shift 0 in standard mode).
void init_layer_norm(const Scope& scope, Index channels, Initializer& init);
Var apply_layer_norm(const Var& x, const Scope& scope);

}  // namespace dlka

#endif  // DLKA_PARAMS_HPP_
