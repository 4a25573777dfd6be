// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

// Internal helpers shared by the dense, depthwise and deformable kernels.
// Rank-2 problems are mapped onto rank 3 with a trailing unit axis, which has
// the same memory layout.

#ifndef DLKA_SRC_CONV_GEOMETRY_HPP_
#define DLKA_SRC_CONV_GEOMETRY_HPP_

#include <Eigen/Core>
#include <algorithm>
#include <array>

#include "dlka/conv.hpp"

namespace dlka::detail {

using Vec3 = std::array<Index, 3>;

using MatrixMap =
    Eigen::Map<Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>>;
using ConstMatrixMap =
    Eigen::Map<const Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>;

struct Geometry {
  Index batch = 0;
  Index in_channels = 0;
  Index out_channels = 0;
  Vec3 in{1, 1, 1};
  Vec3 out{1, 1, 1};
  Vec3 kernel{1, 1, 1};
  Vec3 dilation{1, 1, 1};
  Vec3 stride{1, 1, 1};
  Vec3 pad{0, 0, 0};

  Index in_volume() const { return in[0] * in[1] * in[2]; }
  Index out_volume() const { return out[0] * out[1] * out[2]; }
  Index kernel_volume() const { return kernel[0] * kernel[1] * kernel[2]; }
  bool is_pointwise_identity() const {
    return kernel_volume() == 1 && stride == Vec3{1, 1, 1} &&
           pad == Vec3{0, 0, 0};
  }
};

// Geometry for a forward convolution of an input shaped (N, C, spatial...).
Geometry make_geometry(const Shape& input, const ConvSpec& spec);

// Geometry for a convolution whose input extents are `in_spatial` and whose
// output extents are forced to `out_spatial` (used by the transpose path).
Geometry make_geometry_with_output(Index batch, const Vec3& in_spatial,
                                   const Vec3& out_spatial,
                                   const ConvSpec& spec);

Shape spatial_shape(Index n, Index c, const Vec3& ext, int rank);

// Range of output coordinates o in [0, out) for which
// o * stride - pad + tap * dilation falls inside [0, in).
inline void valid_range(Index in, Index out, Index stride, Index pad,
                        Index tap_offset, Index* lo, Index* hi) {
  // i = o*stride + shift, need 0 <= i < in.
  const Index shift = tap_offset - pad;
  Index first = shift >= 0 ? 0 : (-shift + stride - 1) / stride;
  Index last = (in - 1 - shift) < 0 ? -1 : (in - 1 - shift) / stride;
  *lo = std::max<Index>(first, 0);
  *hi = std::min<Index>(last + 1, out);
  if (*hi < *lo) *hi = *lo;
}

// cols is (C * kvol) x out_volume, for a single batch item.
void im2col(const real* x, const Geometry& g, real* cols);
// Accumulates columns back into x (adjoint of im2col).
void col2im(const real* cols, const Geometry& g, real* x);

void check_conv_operands(const Tensor& x, const Tensor& w, const Tensor* bias,
                         const ConvSpec& spec);

}  // namespace dlka::detail

#endif  // DLKA_SRC_CONV_GEOMETRY_HPP_
