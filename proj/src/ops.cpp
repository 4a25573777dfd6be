// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dlka/ops.hpp"

#include "dlka/activation.hpp"

namespace dlka {

namespace {

const Tensor* bias_ptr(const Var& b) { return b ? &b.value() : nullptr; }

std::vector<Var> with_optional(std::vector<Var> vars, const Var& bias) {
  if (bias) vars.push_back(bias);
  return vars;
}

}  // namespace

Var conv(const Var& x, const Var& w, const Var& bias, const ConvSpec& spec) {
  const bool depthwise = spec.groups != 1;
  Tensor out = depthwise
                   ? conv_depthwise(x.value(), w.value(), bias_ptr(bias), spec)
                   : conv_dense(x.value(), w.value(), bias_ptr(bias), spec);
  auto xn = x.shared();
  auto wn = w.shared();
  const bool has_bias = static_cast<bool>(bias);
  return record(depthwise ? "conv_depthwise" : "conv_dense", std::move(out),
                with_optional({x, w}, bias),
                [xn, wn, spec, depthwise, has_bias](const Tensor& g) {
                  ConvGrads cg =
                      depthwise
                          ? conv_depthwise_backward(xn->value, wn->value, spec, g)
                          : conv_dense_backward(xn->value, wn->value, spec, g);
                  std::vector<Tensor> r{std::move(cg.input), std::move(cg.weight)};
                  if (has_bias) r.push_back(std::move(cg.bias));
                  return r;
                });
}

Var conv_transpose(const Var& y, const Var& w, const Var& bias,
                   const ConvSpec& spec, const std::vector<Index>& out_spatial) {
  Tensor out =
      conv_transpose(y.value(), w.value(), bias_ptr(bias), spec, out_spatial);
  auto yn = y.shared();
  auto wn = w.shared();
  const bool has_bias = static_cast<bool>(bias);
  return record("conv_transpose", std::move(out), with_optional({y, w}, bias),
                [yn, wn, spec, has_bias](const Tensor& g) {
                  ConvGrads cg = conv_transpose_backward(yn->value, wn->value, spec, g);
                  std::vector<Tensor> r{std::move(cg.input), std::move(cg.weight)};
                  if (has_bias) r.push_back(std::move(cg.bias));
                  return r;
                });
}

Var deform_conv(const Var& x, const Var& w, const Var& bias,
                const Var& offsets, const DeformSpec& spec) {
  const bool dense3d = spec.base.rank == 3;
  const OffsetField field{offsets.value()};
  Tensor out = dense3d ? deform_conv_dense3d(x.value(), w.value(),
                                             bias_ptr(bias), field, spec)
                       : deform_conv_depthwise2d(x.value(), w.value(),
                                                 bias_ptr(bias), field, spec);
  auto xn = x.shared();
  auto wn = w.shared();
  auto on = offsets.shared();
  const bool has_bias = static_cast<bool>(bias);
  std::vector<Var> inputs{x, w, offsets};
  if (has_bias) inputs.push_back(bias);
  return record(dense3d ? "deform_conv_dense3d" : "deform_conv_depthwise2d",
                std::move(out), inputs,
                [xn, wn, on, spec, dense3d, has_bias](const Tensor& g) {
                  const OffsetField f{on->value};
                  DeformGrads dg =
                      dense3d ? deform_conv_dense3d_backward(xn->value, wn->value,
                                                             f, spec, g)
                              : deform_conv_depthwise2d_backward(
                                    xn->value, wn->value, f, spec, g);
                  std::vector<Tensor> r{std::move(dg.input), std::move(dg.weight),
                                        std::move(dg.offsets)};
                  if (has_bias) r.push_back(std::move(dg.bias));
                  return r;
                });
}

Var gelu(const Var& x) {
  auto xn = x.shared();
  return record("gelu", gelu(x.value()), {x},
                [xn](const Tensor& g) -> std::vector<Tensor> {
                  return {gelu_backward(xn->value, g)};
                });
}

Var layer_norm(const Var& x, const Var& scale, const Var& shift, real eps) {
  auto xn = x.shared();
  auto sn = scale.shared();
  return record("layer_norm",
                layer_norm(x.value(), scale.value(), shift.value(), eps),
                {x, scale, shift}, [xn, sn, eps](const Tensor& g) {
                  LayerNormGrads lg = layer_norm_backward(xn->value, sn->value, eps, g);
                  return std::vector<Tensor>{std::move(lg.input), std::move(lg.scale),
                                             std::move(lg.shift)};
                });
}

}  // namespace dlka
