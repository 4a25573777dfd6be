// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dlka/params.hpp"

#include <cmath>

#include "dlka/ops.hpp"

namespace dlka {

const Var& ParamStore::add(const std::string& name, Tensor init) {
  if (vars_.count(name)) {
    throw ValidationError("duplicate parameter '" + name + "'");
  }
  names_.push_back(name);
  return vars_.emplace(name, Var::parameter(std::move(init))).first->second;
}

const Var& ParamStore::get(std::string_view name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) {
    throw ValidationError("unknown parameter '" + std::string(name) + "'");
  }
  return it->second;
}

bool ParamStore::contains(std::string_view name) const {
  return vars_.find(name) != vars_.end();
}

Index ParamStore::total_elements() const {
  Index n = 0;
  for (const auto& [name, v] : vars_) n += v.value().numel();
  return n;
}

Index ParamStore::count_matching(std::string_view fragment) const {
  Index n = 0;
  for (const auto& [name, v] : vars_) {
    if (name.find(fragment) != std::string::npos) n += v.value().numel();
  }
  return n;
}

void ParamStore::assign(std::string_view name, const Tensor& value) {
  auto it = vars_.find(name);
  if (it == vars_.end()) {
    throw ValidationError("unknown parameter '" + std::string(name) + "'");
  }
  Var& v = it->second;
  if (v.value().shape() != value.shape()) {
    throw ShapeError("parameter '" + std::string(name) + "' has shape " +
                     shape_str(v.value().shape()) + ", got " +
                     shape_str(value.shape()));
  }
  v.mutable_value() = value;
}

Scope Scope::sub(std::string_view name) const { return Scope(*store_, path(name)); }

std::string Scope::path(std::string_view name) const {
  if (prefix_.empty()) return std::string(name);
  return prefix_ + "." + std::string(name);
}

const Var& Scope::operator[](std::string_view name) const {
  return store_->get(path(name));
}

bool Scope::has(std::string_view name) const {
  return store_->contains(path(name));
}

Tensor Initializer::fan_in_uniform(const Shape& shape, Index fan_in) {
  const real bound = std::sqrt(real(6) / static_cast<real>(std::max<Index>(fan_in, 1)));
  return Tensor::uniform(shape, -bound, bound, rng);
}

Tensor Initializer::zeros_or_random(const Shape& shape, real random_scale) {
  if (mode == InitMode::kStandard) return Tensor(shape);
  return Tensor::uniform(shape, -random_scale, random_scale, rng);
}

void init_conv(const Scope& scope, const ConvSpec& spec, Initializer& init,
               bool zero_init) {
  spec.validate();
  const Index fan_in = (spec.in_channels / spec.groups) * spec.kernel_volume();
  Tensor w = init.fan_in_uniform(spec.weight_shape(), fan_in);
  if (zero_init) {
    if (init.mode == InitMode::kStandard) {
      w = Tensor(spec.weight_shape());
    } else {
      w = scale(w, real(0.5));
    }
  }
  scope.store().add(scope.path("weight"), std::move(w));
  if (spec.bias) {
    scope.store().add(scope.path("bias"),
                      init.zeros_or_random(spec.bias_shape(), real(0.1)));
  }
}

Var apply_conv(const Var& x, const Scope& scope, const ConvSpec& spec) {
  return conv(x, scope["weight"], spec.bias ? scope["bias"] : Var{}, spec);
}

void init_conv_transpose(const Scope& scope, const ConvSpec& spec,
                         Initializer& init) {
  spec.validate();
  // Each output element receives out_channels * (taps per output) inputs.
  Index taps = 1;
  for (int a = 0; a < spec.rank; ++a) {
    const auto i = static_cast<size_t>(a);
    taps *= std::max<Index>(spec.kernel[i] / spec.stride[i], 1);
  }
  scope.store().add(scope.path("weight"),
                    init.fan_in_uniform(spec.weight_shape(), spec.out_channels * taps));
  if (spec.bias) {
    scope.store().add(scope.path("bias"),
                      init.zeros_or_random(Shape{spec.in_channels}, real(0.1)));
  }
}

Var apply_conv_transpose(const Var& y, const Scope& scope, const ConvSpec& spec) {
  return conv_transpose(y, scope["weight"], spec.bias ? scope["bias"] : Var{}, spec);
}

void init_layer_norm(const Scope& scope, Index channels, Initializer& init) {
  Tensor gamma(Shape{channels}, real(1));
  Tensor beta(Shape{channels});
  if (init.mode == InitMode::kRandom) {
    gamma = Tensor::uniform(Shape{channels}, real(0.5), real(1.5), init.rng);
    beta = Tensor::uniform(Shape{channels}, real(-0.5), real(0.5), init.rng);
  }
  scope.store().add(scope.path("scale"), std::move(gamma));
  scope.store().add(scope.path("shift"), std::move(beta));
}

Var apply_layer_norm(const Var& x, const Scope& scope) {
  return layer_norm(x, scope["scale"], scope["shift"], real(1e-6));
}

}  // namespace dlka
