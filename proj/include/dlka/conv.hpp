// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef DLKA_CONV_HPP_
#define DLKA_CONV_HPP_

#include <vector>

#include "dlka/tensor.hpp"

namespace dlka {

// Convolution geometry for spatial rank 2 or 3. Weights are laid out as
// (out_channels, in_channels / groups, k_H, k_W[, k_D]); the bias, when
// present, has one entry per output channel.
struct ConvSpec {
  int rank = 2;
  Index in_channels = 1;
  Index out_channels = 1;
  std::vector<Index> kernel;
  std::vector<Index> dilation;
  std::vector<Index> stride;
  std::vector<Pad> padding;
  Index groups = 1;
  bool bias = true;

  // Dense convolution with a cubic kernel, unit stride/dilation and "same"
  // padding.
  static ConvSpec dense(int rank, Index in_channels, Index out_channels,
                        Index kernel, Index dilation = 1);
  // Depthwise (groups == channels) convolution, "same" padding.
  static ConvSpec depthwise(int rank, Index channels, Index kernel,
                            Index dilation = 1);
  static ConvSpec pointwise(int rank, Index in_channels, Index out_channels);

  // Recomputes `padding` so that each axis produces extent in / stride for
  // inputs divisible by the stride. Asymmetric totals put the extra element
  // on the high side.
  ConvSpec& same_padding();
  ConvSpec& with_stride(std::vector<Index> s);
  ConvSpec& with_bias(bool on) {
    bias = on;
    return *this;
  }

  bool is_depthwise() const {
    return groups == in_channels && groups == out_channels && groups > 1;
  }
  // (k - 1) * dilation + 1.
  Index span(int axis) const;
  Index kernel_volume() const;
  Shape weight_shape() const;
  Shape bias_shape() const { return {out_channels}; }
  Index output_extent(int axis, Index in) const;
  Shape output_shape(const Shape& input) const;

  // Throws ValidationError on malformed specs.
  void validate() const;
};

// floor((in + lo + hi - span) / stride) + 1; ShapeError when the kernel span
// exceeds the padded extent.
Index conv_output_extent(Index in, Pad pad, Index kernel, Index dilation,
                         Index stride);

struct ConvGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

// Cross-correlation (no kernel flip). `bias` may be null; it is required to
// be non-null iff spec.bias is set. groups must be 1.
Tensor conv_dense(const Tensor& x, const Tensor& w, const Tensor* bias,
                  const ConvSpec& spec);
ConvGrads conv_dense_backward(const Tensor& x, const Tensor& w,
                              const ConvSpec& spec, const Tensor& grad_out);

// Per-channel convolution (groups == channels, weight (C, 1, k...)).
Tensor conv_depthwise(const Tensor& x, const Tensor& w, const Tensor* bias,
                      const ConvSpec& spec);
ConvGrads conv_depthwise_backward(const Tensor& x, const Tensor& w,
                                  const ConvSpec& spec,
                                  const Tensor& grad_out);

// Adjoint of conv_dense under `spec`: maps tensors shaped like the dense
// output (spec.out_channels) back to the input space (spec.in_channels).
// `w` uses the forward layout; `bias` has spec.in_channels entries.
// `out_spatial` fixes the output extents; when empty they default to
// (in - 1) * stride - lo - hi + span.
Tensor conv_transpose(const Tensor& y, const Tensor& w, const Tensor* bias,
                      const ConvSpec& spec,
                      const std::vector<Index>& out_spatial = {});
ConvGrads conv_transpose_backward(const Tensor& y, const Tensor& w,
                                  const ConvSpec& spec,
                                  const Tensor& grad_out);

}  // namespace dlka

#endif  // DLKA_CONV_HPP_
