// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

// The 2D and 3D segmentation networks.
//
// 3D: patch embed (/4,/4,/2) -> 3 stages of D-LKA blocks with k2s2
// downsampling -> bottleneck -> mirrored decoder with transpose-conv
// upsampling and additive 1x1 skips -> transpose conv back to full
// resolution + input-level skip -> 3x3x3 conv, GELU, 1x1x1 to logits.
//
// 2D: conv stem (/4) -> 4 stages of residual conv blocks -> 4 decoder stages
// of D-LKA blocks, each followed by patch expanding and a skip add ->
// full-resolution expansion + input-level skip -> LayerNorm, GELU, 1x1 to
// logits.

#ifndef DLKA_NET_HPP_
#define DLKA_NET_HPP_

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "dlka/lka.hpp"
#include "dlka/params.hpp"

namespace dlka {

struct NetConfig {
  int rank = 3;
  Index in_channels = 1;
  Index num_classes = 3;
  Index base_channels = 16;
  Index encoder_blocks = 3;     // per stage; 2D encoder blocks are conv blocks
  Index decoder_blocks = 3;     // per stage
  Index bottleneck_blocks = 2;  // 3D only
  Index skip_count = 4;         // input-level skip + one per encoder level
  LkaSpec lka{.rank = 3};

  static NetConfig defaults(int rank);

  // Number of encoder resolution levels (4 in 2D, 3 in 3D).
  int stages() const { return rank == 2 ? 4 : 3; }
  Index stage_channels(int stage) const { return base_channels << stage; }
  Index final_channels() const { return std::max<Index>(base_channels / 2, 1); }
  // Per-axis downsampling factor of the patch embedding.
  std::vector<Index> embed_factor() const;
  // Which skips are active: [0] = input-level, [s] = encoder stage s-1.
  bool skip_enabled(int level) const;

  void validate() const;
  // Throws ShapeError when `spatial` does not meet the divisibility rules.
  void check_input(const Shape& spatial) const;
};

ParamStore net_init(const NetConfig& cfg, std::uint64_t seed,
                    InitMode mode = InitMode::kStandard);
void net_init_into(ParamStore& store, const NetConfig& cfg, Initializer& init);

Var net_forward_2d(const Var& x, const ParamStore& params, const NetConfig& cfg);
Var net_forward_3d(const Var& x, const ParamStore& params, const NetConfig& cfg);
Var net_forward(const Var& x, const ParamStore& params, const NetConfig& cfg);

// Stem/patch embedding as its own layer (params under `scope`).
void init_patch_embed(const Scope& scope, int rank, Index in_channels,
                      Index out_channels, Initializer& init);
Var patch_embed(const Var& x, const Scope& scope, int rank, Index in_channels,
                Index out_channels);
// Doubles every spatial extent and halves channels.
void init_patch_expand(const Scope& scope, int rank, Index channels,
                       Initializer& init);
Var patch_expand(const Var& x, const Scope& scope, int rank, Index channels);

struct StageSupport {
  std::string name;
  Index blocks = 0;
  std::vector<Index> stride;     // per axis, relative to the input
  Index taps = 0;                // support on the stage grid
  std::vector<Index> input_extent;  // taps * stride per axis
};
// Analytic support of the stacked attention chains of each decoder/encoder
// D-LKA stage: blocks * (S - 1) + 1 taps with S = (2d-1) + d(ceil(K/d)-1).
std::vector<StageSupport> receptive_field_report(const NetConfig& cfg);

}  // namespace dlka

#endif  // DLKA_NET_HPP_
