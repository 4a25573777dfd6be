// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef DLKA_ACTIVATION_HPP_
#define DLKA_ACTIVATION_HPP_

#include "dlka/tensor.hpp"

namespace dlka {

// Exact GELU, x * Phi(x).
real gelu(real x);
real gelu_derivative(real x);
Tensor gelu(const Tensor& x);
Tensor gelu_backward(const Tensor& x, const Tensor& grad_out);

inline constexpr real kLayerNormEps = real(1e-6);

// Normalizes over the channel axis (axis 1) independently at every
// (batch, spatial) position, then applies a per-channel affine transform.
Tensor layer_norm(const Tensor& x, const Tensor& scale, const Tensor& shift,
                  real eps = kLayerNormEps);

struct LayerNormGrads {
  Tensor input;
  Tensor scale;
  Tensor shift;
};
LayerNormGrads layer_norm_backward(const Tensor& x, const Tensor& scale,
                                   real eps, const Tensor& grad_out);

}  // namespace dlka

#endif  // DLKA_ACTIVATION_HPP_
