// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef DLKA_DEFORM_HPP_
#define DLKA_DEFORM_HPP_

#include <vector>

#include "dlka/conv.hpp"
#include "dlka/tensor.hpp"

namespace dlka {

// A deformable layer and the dense convolution that predicts its offsets.
// The offset convolution uses the base layer's kernel, dilation, stride and
// padding, so its output grid matches the base layer's output grid.
struct DeformSpec {
  ConvSpec base;
  std::vector<Index> offset_kernel;
  std::vector<Index> offset_dilation;

  static DeformSpec follow(const ConvSpec& base);

  // rank * prod(kernel) displacement channels, ordered (tap, axis) with the
  // axis index fastest: channel = tap * rank + axis.
  Index offset_channels() const;
  ConvSpec offset_conv_spec() const;
  void validate() const;
};

// Offset field tensor shaped (N, rank * taps, out spatial...), in voxels.
struct OffsetField {
  Tensor displacement;
};

// Multilinear interpolation of the 2^r neighbours of `coord` in a single
// channel plane with extents `extent` (rank 2 or 3); out-of-grid neighbours
// contribute zero.
real sample_linear(const real* plane, std::span<const Index> extent,
                   std::span<const real> coord);

// Samples every (batch, channel) plane of `x` at the fractional positions in
// `coords` (shape (P, rank)); returns (N, C, P). NaN coordinates throw.
Tensor grid_sample_linear(const Tensor& x, const Tensor& coords);

// Dense offset-predicting convolution. `w`/`bias` follow
// spec.offset_conv_spec().
OffsetField offset_conv(const Tensor& x, const Tensor& w, const Tensor& bias,
                        const DeformSpec& spec);

struct DeformGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
  Tensor offsets;
};

// Depthwise deformable convolution for rank 2. For output p and tap t the
// sampling point is p * stride - pad + t * dilation + offset(p, t).
Tensor deform_conv_depthwise2d(const Tensor& x, const Tensor& w,
                               const Tensor* bias, const OffsetField& offsets,
                               const DeformSpec& spec);
DeformGrads deform_conv_depthwise2d_backward(const Tensor& x, const Tensor& w,
                                             const OffsetField& offsets,
                                             const DeformSpec& spec,
                                             const Tensor& grad_out);

// Dense (groups == 1) deformable convolution for rank 3 with trilinear
// sampling; one displacement triple per (position, tap), shared by all input
// channels.
Tensor deform_conv_dense3d(const Tensor& x, const Tensor& w,
                           const Tensor* bias, const OffsetField& offsets,
                           const DeformSpec& spec);
DeformGrads deform_conv_dense3d_backward(const Tensor& x, const Tensor& w,
                                         const OffsetField& offsets,
                                         const DeformSpec& spec,
                                         const Tensor& grad_out);

}  // namespace dlka

#endif  // DLKA_DEFORM_HPP_
