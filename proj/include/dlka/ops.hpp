// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

// Differentiable wrappers over the convolution, deformable and activation
// kernels. An empty `bias` Var means "no bias".

#ifndef DLKA_OPS_HPP_
#define DLKA_OPS_HPP_

#include <vector>

#include "dlka/autograd.hpp"
#include "dlka/conv.hpp"
#include "dlka/deform.hpp"

namespace dlka {

// Dense or depthwise convolution, selected by spec.groups.
Var conv(const Var& x, const Var& w, const Var& bias, const ConvSpec& spec);

Var conv_transpose(const Var& y, const Var& w, const Var& bias,
                   const ConvSpec& spec,
                   const std::vector<Index>& out_spatial = {});

// Rank-2 depthwise or rank-3 dense deformable convolution, selected by the
// spec; `offsets` is the (differentiable) displacement field.
Var deform_conv(const Var& x, const Var& w, const Var& bias,
                const Var& offsets, const DeformSpec& spec);

Var gelu(const Var& x);
Var layer_norm(const Var& x, const Var& scale, const Var& shift,
               real eps = real(1e-6));

}  // namespace dlka

#endif  // DLKA_OPS_HPP_
