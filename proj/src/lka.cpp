// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dlka/lka.hpp"

#include "dlka/ops.hpp"

namespace dlka {

namespace {

constexpr Index kMlpRatio = 4;

void init_deformable(const Scope& scope, const ConvSpec& base, Initializer& init) {
  init_conv(scope, base, init);
  init_conv(scope.sub("offset"), DeformSpec::follow(base).offset_conv_spec(), init,
            /*zero_init=*/true);
}

Var apply_deformable(const Var& x, const Scope& scope, const ConvSpec& base) {
  const DeformSpec ds = DeformSpec::follow(base);
  Var offsets = apply_conv(x, scope.sub("offset"), ds.offset_conv_spec());
  return deform_conv(x, scope["weight"], base.bias ? scope["bias"] : Var{}, offsets,
                     ds);
}

Var activate(const Var& x, Activation a) {
  return a == Activation::kGelu ? gelu(x) : x;
}

}  // namespace

ConvSpec LkaSpec::proj_in_spec() const {
  return ConvSpec::pointwise(rank, channels, channels);
}

ConvSpec LkaSpec::dw_spec() const {
  return ConvSpec::depthwise(rank, channels, dw_kernel()).with_bias(decomposition_bias);
}

ConvSpec LkaSpec::dwd_spec() const {
  return ConvSpec::depthwise(rank, channels, dwd_kernel(), d)
      .with_bias(decomposition_bias);
}

ConvSpec LkaSpec::layer3d_spec() const {
  return ConvSpec::dense(rank, channels, channels, deform3d_kernel);
}

ConvSpec LkaSpec::attn_spec() const {
  return ConvSpec::pointwise(rank, channels, channels).with_bias(decomposition_bias);
}

ConvSpec LkaSpec::proj_out_spec() const {
  return ConvSpec::pointwise(rank, channels, channels).with_bias(false);
}

void LkaSpec::validate() const {
  if (rank != 2 && rank != 3) throw ValidationError("lka: rank must be 2 or 3");
  if (channels < 1) throw ValidationError("lka: channels must be >= 1");
  if (K < 1) throw ValidationError("lka: K must be >= 1");
  if (d < 1) throw ValidationError("lka: d must be >= 1");
  if (deform3d_kernel < 1) throw ValidationError("lka: deform3d_kernel must be >= 1");
}

void init_lka_attention(const Scope& scope, const LkaSpec& spec,
                        Initializer& init) {
  spec.validate();
  init_conv(scope.sub("proj_in"), spec.proj_in_spec(), init);
  const bool deform2d = spec.rank == 2 && spec.deformable;
  if (deform2d) {
    init_deformable(scope.sub("dw"), spec.dw_spec(), init);
    init_deformable(scope.sub("dwd"), spec.dwd_spec(), init);
  } else {
    init_conv(scope.sub("dw"), spec.dw_spec(), init);
    init_conv(scope.sub("dwd"), spec.dwd_spec(), init);
  }
  if (spec.has_layer3d()) {
    if (spec.deformable) {
      init_deformable(scope.sub("deform"), spec.layer3d_spec(), init);
    } else {
      init_conv(scope.sub("deform"), spec.layer3d_spec(), init);
    }
  }
  init_conv(scope.sub("attn"), spec.attn_spec(), init);
  init_conv(scope.sub("proj_out"), spec.proj_out_spec(), init, /*zero_init=*/true);
}

Var lka_branch(const Var& f, const Scope& scope, const LkaSpec& spec) {
  if (f.shape().size() < 2 || f.shape()[1] != spec.channels) {
    throw ShapeError("lka_attention: expected " + std::to_string(spec.channels) +
                     " channels, got " + shape_str(f.shape()));
  }
  Var fp = activate(apply_conv(f, scope.sub("proj_in"), spec.proj_in_spec()),
                    spec.activation);
  Var a;
  if (spec.rank == 2 && spec.deformable) {
    a = apply_deformable(fp, scope.sub("dw"), spec.dw_spec());
    a = apply_deformable(a, scope.sub("dwd"), spec.dwd_spec());
  } else {
    a = apply_conv(fp, scope.sub("dw"), spec.dw_spec());
    a = apply_conv(a, scope.sub("dwd"), spec.dwd_spec());
  }
  if (spec.has_layer3d()) {
    a = spec.deformable ? apply_deformable(a, scope.sub("deform"), spec.layer3d_spec())
                        : apply_conv(a, scope.sub("deform"), spec.layer3d_spec());
  }
  a = apply_conv(a, scope.sub("attn"), spec.attn_spec());
  return apply_conv(mul(a, fp), scope.sub("proj_out"), spec.proj_out_spec());
}

Var lka_attention(const Var& f, const Scope& scope, const LkaSpec& spec) {
  return add(lka_branch(f, scope, spec), f);
}

void init_dlka_block(const Scope& scope, const LkaSpec& spec, Initializer& init) {
  const Index c = spec.channels;
  init_layer_norm(scope.sub("norm1"), c, init);
  init_lka_attention(scope.sub("attn"), spec, init);
  init_layer_norm(scope.sub("norm2"), c, init);
  if (spec.rank == 2) {
    init_conv(scope.sub("mlp.fc1"), ConvSpec::pointwise(2, c, kMlpRatio * c), init);
    init_conv(scope.sub("mlp.dw"), ConvSpec::depthwise(2, kMlpRatio * c, 3), init);
    init_conv(scope.sub("mlp.fc2"), ConvSpec::pointwise(2, kMlpRatio * c, c), init,
              /*zero_init=*/true);
  } else {
    init_conv(scope.sub("ffn.conv"), ConvSpec::dense(3, c, c, 3), init);
    init_conv(scope.sub("ffn.proj"), ConvSpec::pointwise(3, c, c), init,
              /*zero_init=*/true);
  }
}

Var dlka_block_2d(const Var& x, const Scope& scope, const LkaSpec& spec) {
  if (spec.rank != 2) throw ValidationError("dlka_block_2d: spec rank is not 2");
  const Index c = spec.channels;
  Var x1 = add(lka_branch(apply_layer_norm(x, scope.sub("norm1")), scope.sub("attn"),
                          spec),
               x);
  Var h = apply_conv(apply_layer_norm(x1, scope.sub("norm2")), scope.sub("mlp.fc1"),
                     ConvSpec::pointwise(2, c, kMlpRatio * c));
  h = gelu(apply_conv(h, scope.sub("mlp.dw"), ConvSpec::depthwise(2, kMlpRatio * c, 3)));
  h = apply_conv(h, scope.sub("mlp.fc2"), ConvSpec::pointwise(2, kMlpRatio * c, c));
  return add(h, x1);
}

Var dlka_block_3d(const Var& x, const Scope& scope, const LkaSpec& spec) {
  if (spec.rank != 3) throw ValidationError("dlka_block_3d: spec rank is not 3");
  const Index c = spec.channels;
  Var x1 = add(lka_branch(apply_layer_norm(x, scope.sub("norm1")), scope.sub("attn"),
                          spec),
               x);
  Var h = gelu(apply_conv(x1, scope.sub("ffn.conv"), ConvSpec::dense(3, c, c, 3)));
  h = apply_conv(h, scope.sub("ffn.proj"), ConvSpec::pointwise(3, c, c));
  return add(h, x1);
}

Var dlka_block(const Var& x, const Scope& scope, const LkaSpec& spec) {
  return spec.rank == 2 ? dlka_block_2d(x, scope, spec) : dlka_block_3d(x, scope, spec);
}

}  // namespace dlka
