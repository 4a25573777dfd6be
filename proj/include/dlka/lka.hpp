// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

// Large kernel attention, its deformable variants, and the 2D/3D blocks.
//
// Parameter names below a block scope:
//   norm1.{scale,shift}  attn.proj_in.*  attn.dw.*  attn.dwd.*
//   attn.deform.*        attn.attn.*     attn.proj_out.weight
//   norm2.{scale,shift}  mlp.fc1.* mlp.dw.* mlp.fc2.*   (rank 2)
//                        ffn.conv.* ffn.proj.*          (rank 3)
// Deformable layers add an `offset.{weight,bias}` child.

#ifndef DLKA_LKA_HPP_
#define DLKA_LKA_HPP_

#include "dlka/params.hpp"

namespace dlka {

enum class Activation {
  kGelu,
  // Test-only: makes F' a linear function of F.
  kIdentity,
};

struct LkaSpec {
  int rank = 2;
  Index channels = 1;
  Index K = 21;
  Index d = 3;
  bool deformable = true;
  Index deform3d_kernel = 3;
  // Rank 3 with deformable=false: keep the extra 3x3x3 layer as a plain conv
  // (the rigid twin of the deformable network) instead of dropping it.
  bool rigid3d_layer = false;
  // Biases on DW, DW-D and the attention 1x1.
  bool decomposition_bias = true;
  Activation activation = Activation::kGelu;

  Index dw_kernel() const { return 2 * d - 1; }
  Index dwd_kernel() const { return (K + d - 1) / d; }
  // One-axis support of DW followed by DW-D.
  Index support() const { return dw_kernel() + d * (dwd_kernel() - 1); }
  bool has_layer3d() const { return rank == 3 && (deformable || rigid3d_layer); }

  LkaSpec with_channels(Index c) const {
    LkaSpec s = *this;
    s.channels = c;
    return s;
  }

  ConvSpec proj_in_spec() const;
  ConvSpec dw_spec() const;
  ConvSpec dwd_spec() const;
  ConvSpec layer3d_spec() const;
  ConvSpec attn_spec() const;
  ConvSpec proj_out_spec() const;

  void validate() const;
};

// Attention with its inner residual: proj_out(A * F') + F.
void init_lka_attention(const Scope& scope, const LkaSpec& spec,
                        Initializer& init);
Var lka_attention(const Var& f, const Scope& scope, const LkaSpec& spec);
// proj_out(A * F') alone; the blocks add their own residual.
Var lka_branch(const Var& f, const Scope& scope, const LkaSpec& spec);

void init_dlka_block(const Scope& scope, const LkaSpec& spec, Initializer& init);
// x1 = branch(LN(x)) + x; out = MLP(LN(x1)) + x1.
Var dlka_block_2d(const Var& x, const Scope& scope, const LkaSpec& spec);
// x1 = branch(LN(x)) + x; out = proj(GELU(conv3(x1))) + x1.
Var dlka_block_3d(const Var& x, const Scope& scope, const LkaSpec& spec);
Var dlka_block(const Var& x, const Scope& scope, const LkaSpec& spec);

}  // namespace dlka

#endif  // DLKA_LKA_HPP_
