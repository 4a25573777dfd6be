// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dlka/conv.hpp"

#include <cstring>
#include <string>

#include "conv_geometry.hpp"

namespace dlka {

namespace {

std::vector<Index> uniform(int rank, Index v) {
  return std::vector<Index>(static_cast<size_t>(rank), v);
}

}  // namespace

ConvSpec ConvSpec::dense(int rank, Index in_channels, Index out_channels,
                         Index kernel, Index dilation) {
  ConvSpec s;
  s.rank = rank;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.kernel = uniform(rank, kernel);
  s.dilation = uniform(rank, dilation);
  s.stride = uniform(rank, 1);
  s.groups = 1;
  s.same_padding();
  return s;
}

ConvSpec ConvSpec::depthwise(int rank, Index channels, Index kernel,
                             Index dilation) {
  ConvSpec s = dense(rank, channels, channels, kernel, dilation);
  s.groups = channels;
  return s;
}

ConvSpec ConvSpec::pointwise(int rank, Index in_channels, Index out_channels) {
  return dense(rank, in_channels, out_channels, 1);
}

ConvSpec& ConvSpec::same_padding() {
  padding.assign(static_cast<size_t>(rank), Pad{});
  for (int a = 0; a < rank; ++a) {
    const Index s = stride.empty() ? 1 : stride[static_cast<size_t>(a)];
    const Index total = std::max<Index>(span(a) - s, 0);
    padding[static_cast<size_t>(a)].lo = total / 2;
    padding[static_cast<size_t>(a)].hi = total - total / 2;
  }
  return *this;
}

ConvSpec& ConvSpec::with_stride(std::vector<Index> s) {
  stride = std::move(s);
  return *this;
}

Index ConvSpec::span(int axis) const {
  const auto a = static_cast<size_t>(axis);
  return (kernel.at(a) - 1) * dilation.at(a) + 1;
}

Index ConvSpec::kernel_volume() const {
  Index v = 1;
  for (Index k : kernel) v *= k;
  return v;
}

Shape ConvSpec::weight_shape() const {
  Shape s{out_channels, in_channels / std::max<Index>(groups, 1)};
  s.insert(s.end(), kernel.begin(), kernel.end());
  return s;
}

Index conv_output_extent(Index in, Pad pad, Index kernel, Index dilation,
                         Index stride) {
  const Index span = (kernel - 1) * dilation + 1;
  const Index padded = in + pad.lo + pad.hi;
  if (span > padded) {
    throw ShapeError("kernel span " + std::to_string(span) +
                     " exceeds padded extent " + std::to_string(padded));
  }
  return (padded - span) / stride + 1;
}

Index ConvSpec::output_extent(int axis, Index in) const {
  const auto a = static_cast<size_t>(axis);
  return conv_output_extent(in, padding.at(a), kernel.at(a), dilation.at(a),
                            stride.at(a));
}

Shape ConvSpec::output_shape(const Shape& input) const {
  if (static_cast<int>(input.size()) != rank + 2) {
    throw ShapeError("conv input " + shape_str(input) + " is not rank " +
                     std::to_string(rank));
  }
  Shape out{input[0], out_channels};
  for (int a = 0; a < rank; ++a) {
    out.push_back(output_extent(a, input[static_cast<size_t>(a) + 2]));
  }
  return out;
}

void ConvSpec::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("ConvSpec: " + m); };
  if (rank != 2 && rank != 3) fail("rank must be 2 or 3");
  const auto r = static_cast<size_t>(rank);
  if (kernel.size() != r || dilation.size() != r || stride.size() != r ||
      padding.size() != r) {
    fail("per-axis lists must have length rank");
  }
  if (in_channels <= 0 || out_channels <= 0) fail("channels must be positive");
  for (size_t a = 0; a < r; ++a) {
    if (kernel[a] < 1) fail("kernel extents must be >= 1");
    if (dilation[a] < 1) fail("dilation must be >= 1");
    if (stride[a] < 1) fail("stride must be >= 1");
    if (padding[a].lo < 0 || padding[a].hi < 0) fail("negative padding");
  }
  if (groups != 1) {
    if (!(groups == in_channels && groups == out_channels)) {
      fail("depthwise requires in_channels == out_channels == groups");
    }
  }
}

namespace detail {

Shape spatial_shape(Index n, Index c, const Vec3& ext, int rank) {
  Shape s{n, c, ext[0], ext[1]};
  if (rank == 3) s.push_back(ext[2]);
  return s;
}

Geometry make_geometry(const Shape& input, const ConvSpec& spec) {
  spec.validate();
  if (static_cast<int>(input.size()) != spec.rank + 2) {
    throw ShapeError("conv input " + shape_str(input) + " is not rank " +
                     std::to_string(spec.rank));
  }
  Geometry g;
  g.batch = input[0];
  g.in_channels = input[1];
  g.out_channels = spec.out_channels;
  for (int a = 0; a < spec.rank; ++a) {
    const auto i = static_cast<size_t>(a);
    g.in[i] = input[i + 2];
    g.kernel[i] = spec.kernel[i];
    g.dilation[i] = spec.dilation[i];
    g.stride[i] = spec.stride[i];
    g.pad[i] = spec.padding[i].lo;
    g.out[i] = spec.output_extent(a, g.in[i]);
  }
  return g;
}

Geometry make_geometry_with_output(Index batch, const Vec3& in_spatial,
                                   const Vec3& out_spatial,
                                   const ConvSpec& spec) {
  spec.validate();
  Geometry g;
  g.batch = batch;
  g.in_channels = spec.in_channels;
  g.out_channels = spec.out_channels;
  for (int a = 0; a < spec.rank; ++a) {
    const auto i = static_cast<size_t>(a);
    g.in[i] = in_spatial[i];
    g.out[i] = out_spatial[i];
    g.kernel[i] = spec.kernel[i];
    g.dilation[i] = spec.dilation[i];
    g.stride[i] = spec.stride[i];
    g.pad[i] = spec.padding[i].lo;
  }
  return g;
}

void im2col(const real* x, const Geometry& g, real* cols) {
  const Index ovol = g.out_volume();
  const Index kvol = g.kernel_volume();
  const Index plane = g.in[1] * g.in[2];
  for (Index c = 0; c < g.in_channels; ++c) {
    const real* xc = x + c * g.in_volume();
    for (Index kh = 0; kh < g.kernel[0]; ++kh) {
      Index h_lo, h_hi;
      valid_range(g.in[0], g.out[0], g.stride[0], g.pad[0],
                  kh * g.dilation[0], &h_lo, &h_hi);
      for (Index kw = 0; kw < g.kernel[1]; ++kw) {
        Index w_lo, w_hi;
        valid_range(g.in[1], g.out[1], g.stride[1], g.pad[1],
                    kw * g.dilation[1], &w_lo, &w_hi);
        for (Index kd = 0; kd < g.kernel[2]; ++kd) {
          Index d_lo, d_hi;
          valid_range(g.in[2], g.out[2], g.stride[2], g.pad[2],
                      kd * g.dilation[2], &d_lo, &d_hi);
          const Index t = (kh * g.kernel[1] + kw) * g.kernel[2] + kd;
          real* row = cols + (c * kvol + t) * ovol;
          std::memset(row, 0, sizeof(real) * static_cast<size_t>(ovol));
          for (Index oh = h_lo; oh < h_hi; ++oh) {
            const Index ih = oh * g.stride[0] - g.pad[0] + kh * g.dilation[0];
            for (Index ow = w_lo; ow < w_hi; ++ow) {
              const Index iw =
                  ow * g.stride[1] - g.pad[1] + kw * g.dilation[1];
              const real* src = xc + ih * plane + iw * g.in[2];
              real* dst = row + (oh * g.out[1] + ow) * g.out[2];
              const Index shift = kd * g.dilation[2] - g.pad[2];
              if (g.stride[2] == 1) {
                for (Index od = d_lo; od < d_hi; ++od) dst[od] = src[od + shift];
              } else {
                for (Index od = d_lo; od < d_hi; ++od) {
                  dst[od] = src[od * g.stride[2] + shift];
                }
              }
            }
          }
        }
      }
    }
  }
}

void col2im(const real* cols, const Geometry& g, real* x) {
  const Index ovol = g.out_volume();
  const Index kvol = g.kernel_volume();
  const Index plane = g.in[1] * g.in[2];
  for (Index c = 0; c < g.in_channels; ++c) {
    real* xc = x + c * g.in_volume();
    for (Index kh = 0; kh < g.kernel[0]; ++kh) {
      Index h_lo, h_hi;
      valid_range(g.in[0], g.out[0], g.stride[0], g.pad[0],
                  kh * g.dilation[0], &h_lo, &h_hi);
      for (Index kw = 0; kw < g.kernel[1]; ++kw) {
        Index w_lo, w_hi;
        valid_range(g.in[1], g.out[1], g.stride[1], g.pad[1],
                    kw * g.dilation[1], &w_lo, &w_hi);
        for (Index kd = 0; kd < g.kernel[2]; ++kd) {
          Index d_lo, d_hi;
          valid_range(g.in[2], g.out[2], g.stride[2], g.pad[2],
                      kd * g.dilation[2], &d_lo, &d_hi);
          const Index t = (kh * g.kernel[1] + kw) * g.kernel[2] + kd;
          const real* row = cols + (c * kvol + t) * ovol;
          const Index shift = kd * g.dilation[2] - g.pad[2];
          for (Index oh = h_lo; oh < h_hi; ++oh) {
            const Index ih = oh * g.stride[0] - g.pad[0] + kh * g.dilation[0];
            for (Index ow = w_lo; ow < w_hi; ++ow) {
              const Index iw =
                  ow * g.stride[1] - g.pad[1] + kw * g.dilation[1];
              real* dst = xc + ih * plane + iw * g.in[2];
              const real* src = row + (oh * g.out[1] + ow) * g.out[2];
              for (Index od = d_lo; od < d_hi; ++od) {
                dst[od * g.stride[2] + shift] += src[od];
              }
            }
          }
        }
      }
    }
  }
}

void check_conv_operands(const Tensor& x, const Tensor& w, const Tensor* bias,
                         const ConvSpec& spec) {
  if (x.rank() != spec.rank + 2) {
    throw ShapeError("conv input " + shape_str(x.shape()) + " is not rank " +
                     std::to_string(spec.rank));
  }
  if (x.dim(1) != spec.in_channels) {
    throw ShapeError("conv input has " + std::to_string(x.dim(1)) +
                     " channels, spec expects " +
                     std::to_string(spec.in_channels));
  }
  if (w.shape() != spec.weight_shape()) {
    throw ShapeError("conv weight " + shape_str(w.shape()) + " != expected " +
                     shape_str(spec.weight_shape()));
  }
  if (bias != nullptr && bias->shape() != spec.bias_shape()) {
    throw ShapeError("conv bias " + shape_str(bias->shape()) +
                     " != expected " + shape_str(spec.bias_shape()));
  }
}

}  // namespace detail

using detail::ConstMatrixMap;
using detail::Geometry;
using detail::MatrixMap;

namespace {

void add_channel_bias(Tensor& out, const Tensor& bias) {
  const Index n = out.dim(0);
  const Index c = out.dim(1);
  const Index vol = c == 0 ? 0 : out.numel() / std::max<Index>(n * c, 1);
  for (Index b = 0; b < n; ++b) {
    for (Index ch = 0; ch < c; ++ch) {
      real* p = out.ptr() + (b * c + ch) * vol;
      const real v = bias[ch];
      for (Index i = 0; i < vol; ++i) p[i] += v;
    }
  }
}

Tensor channel_sums(const Tensor& g) {
  const Index n = g.dim(0);
  const Index c = g.dim(1);
  Tensor out(Shape{c});
  if (n * c == 0) return out;
  const Index vol = g.numel() / (n * c);
  for (Index b = 0; b < n; ++b) {
    for (Index ch = 0; ch < c; ++ch) {
      const real* p = g.ptr() + (b * c + ch) * vol;
      real s = 0;
      for (Index i = 0; i < vol; ++i) s += p[i];
      out[ch] += s;
    }
  }
  return out;
}

// y_n = W * cols(x_n) for every batch item.
void dense_forward_into(const Tensor& x, const Tensor& w, const Geometry& g,
                        real* out) {
  const Index kdim = g.in_channels * g.kernel_volume();
  const Index ovol = g.out_volume();
  ConstMatrixMap wm(w.ptr(), g.out_channels, kdim);
  std::vector<real> cols;
  const bool direct = g.is_pointwise_identity();
  if (!direct) cols.resize(static_cast<size_t>(kdim * ovol));
  for (Index n = 0; n < g.batch; ++n) {
    const real* xn = x.ptr() + n * g.in_channels * g.in_volume();
    const real* src = xn;
    if (!direct) {
      detail::im2col(xn, g, cols.data());
      src = cols.data();
    }
    ConstMatrixMap cm(src, kdim, ovol);
    MatrixMap om(out + n * g.out_channels * ovol, g.out_channels, ovol);
    om.noalias() = wm * cm;
  }
}

// Weight gradient sum_n gy_n * cols(x_n)^T, and optionally the input
// gradient col2im(W^T gy_n).
void dense_backward_into(const Tensor& x, const Tensor& w, const Geometry& g,
                         const real* gy, real* gx, real* gw) {
  const Index kdim = g.in_channels * g.kernel_volume();
  const Index ovol = g.out_volume();
  ConstMatrixMap wm(w.ptr(), g.out_channels, kdim);
  MatrixMap gwm(gw, g.out_channels, kdim);
  const bool direct = g.is_pointwise_identity();
  std::vector<real> cols;
  if (!direct) cols.resize(static_cast<size_t>(kdim * ovol));
  std::vector<real> gcols;
  if (gx != nullptr && !direct) gcols.resize(static_cast<size_t>(kdim * ovol));
  for (Index n = 0; n < g.batch; ++n) {
    const real* xn = x.ptr() + n * g.in_channels * g.in_volume();
    const real* src = xn;
    if (!direct) {
      detail::im2col(xn, g, cols.data());
      src = cols.data();
    }
    ConstMatrixMap cm(src, kdim, ovol);
    ConstMatrixMap gym(gy + n * g.out_channels * ovol, g.out_channels, ovol);
    gwm.noalias() += gym * cm.transpose();
    if (gx != nullptr) {
      real* gxn = gx + n * g.in_channels * g.in_volume();
      if (direct) {
        MatrixMap gxm(gxn, kdim, ovol);
        gxm.noalias() += wm.transpose() * gym;
      } else {
        MatrixMap gcm(gcols.data(), kdim, ovol);
        gcm.noalias() = wm.transpose() * gym;
        detail::col2im(gcols.data(), g, gxn);
      }
    }
  }
}

}  // namespace

Tensor conv_dense(const Tensor& x, const Tensor& w, const Tensor* bias,
                  const ConvSpec& spec) {
  detail::check_conv_operands(x, w, bias, spec);
  if (spec.groups != 1) {
    throw ValidationError("conv_dense requires groups == 1");
  }
  const Geometry g = detail::make_geometry(x.shape(), spec);
  Tensor out(detail::spatial_shape(g.batch, g.out_channels, g.out, spec.rank));
  if (out.empty()) return out;
  dense_forward_into(x, w, g, out.ptr());
  if (bias != nullptr) add_channel_bias(out, *bias);
  return out;
}

ConvGrads conv_dense_backward(const Tensor& x, const Tensor& w,
                              const ConvSpec& spec, const Tensor& grad_out) {
  const Geometry g = detail::make_geometry(x.shape(), spec);
  const Shape out_shape =
      detail::spatial_shape(g.batch, g.out_channels, g.out, spec.rank);
  if (grad_out.shape() != out_shape) {
    throw ShapeError("conv_dense_backward: grad " +
                     shape_str(grad_out.shape()) + " != " +
                     shape_str(out_shape));
  }
  ConvGrads grads{Tensor(x.shape()), Tensor(w.shape()),
                  channel_sums(grad_out)};
  if (grad_out.empty() || x.empty()) return grads;
  dense_backward_into(x, w, g, grad_out.ptr(), grads.input.ptr(),
                      grads.weight.ptr());
  return grads;
}

Tensor conv_depthwise(const Tensor& x, const Tensor& w, const Tensor* bias,
                      const ConvSpec& spec) {
  detail::check_conv_operands(x, w, bias, spec);
  if (spec.groups != spec.in_channels || spec.in_channels != spec.out_channels) {
    throw ValidationError("conv_depthwise requires groups == channels");
  }
  const Geometry g = detail::make_geometry(x.shape(), spec);
  Tensor out(detail::spatial_shape(g.batch, g.out_channels, g.out, spec.rank));
  if (out.empty()) return out;
  const Index kvol = g.kernel_volume();
  const Index ivol = g.in_volume();
  const Index ovol = g.out_volume();
  const Index iplane = g.in[1] * g.in[2];
  const Index oplane = g.out[1] * g.out[2];
  for (Index n = 0; n < g.batch; ++n) {
    for (Index c = 0; c < g.in_channels; ++c) {
      const real* xc = x.ptr() + (n * g.in_channels + c) * ivol;
      real* oc = out.ptr() + (n * g.in_channels + c) * ovol;
      const real* wc = w.ptr() + c * kvol;
      for (Index kh = 0; kh < g.kernel[0]; ++kh) {
        Index h_lo, h_hi;
        detail::valid_range(g.in[0], g.out[0], g.stride[0], g.pad[0],
                            kh * g.dilation[0], &h_lo, &h_hi);
        for (Index kw = 0; kw < g.kernel[1]; ++kw) {
          Index w_lo, w_hi;
          detail::valid_range(g.in[1], g.out[1], g.stride[1], g.pad[1],
                              kw * g.dilation[1], &w_lo, &w_hi);
          for (Index kd = 0; kd < g.kernel[2]; ++kd) {
            Index d_lo, d_hi;
            detail::valid_range(g.in[2], g.out[2], g.stride[2], g.pad[2],
                                kd * g.dilation[2], &d_lo, &d_hi);
            const real wt = wc[(kh * g.kernel[1] + kw) * g.kernel[2] + kd];
            const Index dshift = kd * g.dilation[2] - g.pad[2];
            for (Index oh = h_lo; oh < h_hi; ++oh) {
              const Index ih =
                  oh * g.stride[0] - g.pad[0] + kh * g.dilation[0];
              for (Index ow = w_lo; ow < w_hi; ++ow) {
                const Index iw =
                    ow * g.stride[1] - g.pad[1] + kw * g.dilation[1];
                const real* src = xc + ih * iplane + iw * g.in[2];
                real* dst = oc + oh * oplane + ow * g.out[2];
                for (Index od = d_lo; od < d_hi; ++od) {
                  dst[od] += wt * src[od * g.stride[2] + dshift];
                }
              }
            }
          }
        }
      }
    }
  }
  if (bias != nullptr) add_channel_bias(out, *bias);
  return out;
}

ConvGrads conv_depthwise_backward(const Tensor& x, const Tensor& w,
                                  const ConvSpec& spec,
                                  const Tensor& grad_out) {
  const Geometry g = detail::make_geometry(x.shape(), spec);
  const Shape out_shape =
      detail::spatial_shape(g.batch, g.out_channels, g.out, spec.rank);
  if (grad_out.shape() != out_shape) {
    throw ShapeError("conv_depthwise_backward: grad " +
                     shape_str(grad_out.shape()) + " != " +
                     shape_str(out_shape));
  }
  ConvGrads grads{Tensor(x.shape()), Tensor(w.shape()),
                  channel_sums(grad_out)};
  if (grad_out.empty() || x.empty()) return grads;
  const Index kvol = g.kernel_volume();
  const Index ivol = g.in_volume();
  const Index ovol = g.out_volume();
  const Index iplane = g.in[1] * g.in[2];
  const Index oplane = g.out[1] * g.out[2];
  for (Index n = 0; n < g.batch; ++n) {
    for (Index c = 0; c < g.in_channels; ++c) {
      const real* xc = x.ptr() + (n * g.in_channels + c) * ivol;
      real* gxc = grads.input.ptr() + (n * g.in_channels + c) * ivol;
      const real* gyc = grad_out.ptr() + (n * g.in_channels + c) * ovol;
      const real* wc = w.ptr() + c * kvol;
      real* gwc = grads.weight.ptr() + c * kvol;
      for (Index kh = 0; kh < g.kernel[0]; ++kh) {
        Index h_lo, h_hi;
        detail::valid_range(g.in[0], g.out[0], g.stride[0], g.pad[0],
                            kh * g.dilation[0], &h_lo, &h_hi);
        for (Index kw = 0; kw < g.kernel[1]; ++kw) {
          Index w_lo, w_hi;
          detail::valid_range(g.in[1], g.out[1], g.stride[1], g.pad[1],
                              kw * g.dilation[1], &w_lo, &w_hi);
          for (Index kd = 0; kd < g.kernel[2]; ++kd) {
            Index d_lo, d_hi;
            detail::valid_range(g.in[2], g.out[2], g.stride[2], g.pad[2],
                                kd * g.dilation[2], &d_lo, &d_hi);
            const Index t = (kh * g.kernel[1] + kw) * g.kernel[2] + kd;
            const real wt = wc[t];
            const Index dshift = kd * g.dilation[2] - g.pad[2];
            real acc = 0;
            for (Index oh = h_lo; oh < h_hi; ++oh) {
              const Index ih =
                  oh * g.stride[0] - g.pad[0] + kh * g.dilation[0];
              for (Index ow = w_lo; ow < w_hi; ++ow) {
                const Index iw =
                    ow * g.stride[1] - g.pad[1] + kw * g.dilation[1];
                const Index ibase = ih * iplane + iw * g.in[2];
                const real* gy = gyc + oh * oplane + ow * g.out[2];
                for (Index od = d_lo; od < d_hi; ++od) {
                  const Index i = ibase + od * g.stride[2] + dshift;
                  acc += gy[od] * xc[i];
                  gxc[i] += wt * gy[od];
                }
              }
            }
            gwc[t] += acc;
          }
        }
      }
    }
  }
  return grads;
}

namespace {

detail::Vec3 transpose_output_extents(const Tensor& y, const ConvSpec& spec,
                                      const std::vector<Index>& out_spatial) {
  detail::Vec3 ext{1, 1, 1};
  for (int a = 0; a < spec.rank; ++a) {
    const auto i = static_cast<size_t>(a);
    if (!out_spatial.empty()) {
      ext[i] = out_spatial.at(i);
    } else {
      ext[i] = (y.dim(a + 2) - 1) * spec.stride[i] - spec.padding[i].lo -
               spec.padding[i].hi + spec.span(a);
    }
    if (ext[i] < 0) throw ShapeError("conv_transpose: negative output extent");
    // The forward conv from ext must land on y's extent.
    if (spec.output_extent(a, ext[i]) != y.dim(a + 2)) {
      throw ShapeError("conv_transpose: output extent " +
                       std::to_string(ext[i]) + " inconsistent with input " +
                       shape_str(y.shape()));
    }
  }
  return ext;
}

void check_transpose_operands(const Tensor& y, const Tensor& w,
                              const Tensor* bias, const ConvSpec& spec) {
  spec.validate();
  if (spec.groups != 1) throw ValidationError("conv_transpose requires groups == 1");
  if (y.rank() != spec.rank + 2) {
    throw ShapeError("conv_transpose input " + shape_str(y.shape()) +
                     " is not rank " + std::to_string(spec.rank));
  }
  if (y.dim(1) != spec.out_channels) {
    throw ShapeError("conv_transpose input has " + std::to_string(y.dim(1)) +
                     " channels, spec expects " +
                     std::to_string(spec.out_channels));
  }
  if (w.shape() != spec.weight_shape()) {
    throw ShapeError("conv_transpose weight " + shape_str(w.shape()) +
                     " != expected " + shape_str(spec.weight_shape()));
  }
  if (bias != nullptr && bias->shape() != Shape{spec.in_channels}) {
    throw ShapeError("conv_transpose bias " + shape_str(bias->shape()));
  }
}

}  // namespace

Tensor conv_transpose(const Tensor& y, const Tensor& w, const Tensor* bias,
                      const ConvSpec& spec,
                      const std::vector<Index>& out_spatial) {
  check_transpose_operands(y, w, bias, spec);
  const detail::Vec3 ext = transpose_output_extents(y, spec, out_spatial);
  const Geometry g = detail::make_geometry_with_output(
      y.dim(0), ext,
      {y.dim(2), y.dim(3), spec.rank == 3 ? y.dim(4) : Index{1}}, spec);
  Tensor out(detail::spatial_shape(g.batch, g.in_channels, g.in, spec.rank));
  if (out.empty()) return out;
  // out = col2im(W^T y_n), i.e. the input gradient of the dense forward.
  const Index kdim = g.in_channels * g.kernel_volume();
  const Index ovol = g.out_volume();
  ConstMatrixMap wm(w.ptr(), g.out_channels, kdim);
  const bool direct = g.is_pointwise_identity();
  std::vector<real> gcols(direct ? 0 : static_cast<size_t>(kdim * ovol));
  for (Index n = 0; n < g.batch; ++n) {
    ConstMatrixMap ym(y.ptr() + n * g.out_channels * ovol, g.out_channels, ovol);
    real* on = out.ptr() + n * g.in_channels * g.in_volume();
    if (direct) {
      MatrixMap om(on, kdim, ovol);
      om.noalias() = wm.transpose() * ym;
    } else {
      MatrixMap gcm(gcols.data(), kdim, ovol);
      gcm.noalias() = wm.transpose() * ym;
      detail::col2im(gcols.data(), g, on);
    }
  }
  if (bias != nullptr) add_channel_bias(out, *bias);
  return out;
}

ConvGrads conv_transpose_backward(const Tensor& y, const Tensor& w,
                                  const ConvSpec& spec,
                                  const Tensor& grad_out) {
  check_transpose_operands(y, w, nullptr, spec);
  // grad_out lives in the dense-input space; the dense forward maps it back.
  const Geometry g = detail::make_geometry(grad_out.shape(), spec);
  const Shape y_shape =
      detail::spatial_shape(g.batch, g.out_channels, g.out, spec.rank);
  if (y_shape != y.shape()) {
    throw ShapeError("conv_transpose_backward: grad " +
                     shape_str(grad_out.shape()) + " inconsistent with input " +
                     shape_str(y.shape()));
  }
  ConvGrads grads{Tensor(y.shape()), Tensor(w.shape()), channel_sums(grad_out)};
  if (grad_out.empty() || y.empty()) return grads;
  dense_forward_into(grad_out, w, g, grads.input.ptr());
  // dW[o, i k] = sum_n y_n[o, :] cols(g_n)[i k, :]
  dense_backward_into(grad_out, w, g, y.ptr(), nullptr, grads.weight.ptr());
  return grads;
}

}  // namespace dlka
