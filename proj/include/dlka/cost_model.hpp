// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

// Closed-form parameter and FLOP counts for standard, decomposed and
// deformable-decomposed large-kernel convolutions.

#ifndef DLKA_COST_MODEL_HPP_
#define DLKA_COST_MODEL_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "dlka/lka.hpp"

namespace dlka {

using Count = std::int64_t;

enum class BiasMode {
  kEq3,   // C(ceil(K/d)^r + (2d-1)^r + 3 + C)
  kTable, // same without the +3
};

struct CostQuery {
  int rank = 2;
  Count channels = 32;
  Count K = 21;
  Count d = 3;
  BiasMode bias_mode = BiasMode::kEq3;
  // Offset network kernel sizes for the deformable DW and DW-D layers.
  Count k_dw = 5;
  Count k_dwd = 7;
  // H, W[, D]; empty means unit volume.
  std::vector<Count> spatial;

  Count volume() const;
};

Count ceil_div(Count a, Count b);
Count ipow(Count base, int exp);

Count params_decomposed(const CostQuery& q);
Count params_standard(Count channels, Count K, int rank);
Count params_offset_net(Count in_channels, Count k, int rank);
Count flops(const CostQuery& q);

struct DilationChoice {
  double d_star = 0;
  Count d_int = 1;
};
// Root of 8d - 4 - 2K^2/d^3 on [1, K], and the better neighbouring integer
// under params_decomposed (ties go to the smaller d).
DilationChoice optimal_dilation(Count K, Count channels = 32);

struct CostRow {
  Count channels = 0;
  Count params_std = 0;
  Count params_decomposed = 0;
  Count params_deform_total = 0;
  Count offset_dw = 0;
  Count offset_dwd = 0;
  Count flops_decomposed = 0;
};

struct CostReport {
  CostQuery base;
  std::vector<CostRow> rows;
};

CostReport cost_table(const std::vector<Count>& channels, const CostQuery& base);
std::string format_cost_table(const CostReport& report);
std::string cost_table_csv(const CostReport& report);

// Per-family counts for one attention module built from `spec`, using the
// layer bias conventions of the implementation.
struct AttentionCost {
  Count decomposition = 0;  // DW + DW-D + attention 1x1 (+ biases)
  Count offsets = 0;        // all offset networks
  Count layer3d = 0;        // the extra rank-3 layer (weights + bias)
  Count projections = 0;    // proj_in + proj_out
  Count total() const { return decomposition + offsets + layer3d + projections; }
};
AttentionCost attention_cost(const LkaSpec& spec);

}  // namespace dlka

#endif  // DLKA_COST_MODEL_HPP_
