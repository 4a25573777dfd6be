// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dlka/deform.hpp"

#include <cmath>
#include <string>

#include "conv_geometry.hpp"

namespace dlka {

using detail::Geometry;
using detail::Vec3;

DeformSpec DeformSpec::follow(const ConvSpec& base) {
  return DeformSpec{base, base.kernel, base.dilation};
}

Index DeformSpec::offset_channels() const {
  return base.rank * base.kernel_volume();
}

ConvSpec DeformSpec::offset_conv_spec() const {
  ConvSpec s = base;
  s.out_channels = offset_channels();
  s.groups = 1;
  s.kernel = offset_kernel;
  s.dilation = offset_dilation;
  s.bias = true;
  return s;
}

void DeformSpec::validate() const {
  base.validate();
  if (offset_kernel != base.kernel || offset_dilation != base.dilation) {
    throw ValidationError(
        "DeformSpec: offset kernel/dilation must follow the base layer");
  }
}

real sample_linear(const real* plane, std::span<const Index> extent,
                   std::span<const real> coord) {
  const size_t r = extent.size();
  if (coord.size() != r || (r != 2 && r != 3)) {
    throw ShapeError("sample_linear: rank mismatch");
  }
  Index base[3] = {0, 0, 0};
  real frac[3] = {0, 0, 0};
  for (size_t a = 0; a < r; ++a) {
    if (std::isnan(coord[a])) throw ValidationError("sample_linear: NaN coordinate");
    if (!(coord[a] > -1 && coord[a] < static_cast<real>(extent[a]))) return 0;
    const real f = std::floor(coord[a]);
    base[a] = static_cast<Index>(f);
    frac[a] = coord[a] - f;
  }
  real value = 0;
  const int corners = 1 << r;
  for (int k = 0; k < corners; ++k) {
    Index lin = 0;
    real weight = 1;
    bool inside = true;
    for (size_t a = 0; a < r; ++a) {
      const int bit = (k >> (r - 1 - a)) & 1;
      const Index pos = base[a] + bit;
      if (pos < 0 || pos >= extent[a]) inside = false;
      lin = lin * extent[a] + pos;
      weight *= bit ? frac[a] : 1 - frac[a];
    }
    if (inside) value += weight * plane[lin];
  }
  return value;
}

Tensor grid_sample_linear(const Tensor& x, const Tensor& coords) {
  if (x.rank() != 4 && x.rank() != 5) {
    throw ShapeError("grid_sample_linear: input must be (N, C, spatial...)");
  }
  const Index r = x.rank() - 2;
  if (coords.rank() != 2 || coords.dim(1) != r) {
    throw ShapeError("grid_sample_linear: coords must be (P, " +
                     std::to_string(r) + ")");
  }
  for (real v : coords.data()) {
    if (std::isnan(v)) throw ValidationError("grid_sample_linear: NaN coordinate");
  }
  const Index n = x.dim(0);
  const Index c = x.dim(1);
  const Index points = coords.dim(0);
  const Shape extent(x.shape().begin() + 2, x.shape().end());
  const Index vol = shape_numel(extent);
  Tensor out(Shape{n, c, points});
  for (Index b = 0; b < n * c; ++b) {
    const real* plane = x.ptr() + b * vol;
    for (Index p = 0; p < points; ++p) {
      out[b * points + p] = sample_linear(
          plane, extent, std::span<const real>(coords.ptr() + p * r,
                                               static_cast<size_t>(r)));
    }
  }
  return out;
}

OffsetField offset_conv(const Tensor& x, const Tensor& w, const Tensor& bias,
                        const DeformSpec& spec) {
  spec.validate();
  return OffsetField{conv_dense(x, w, &bias, spec.offset_conv_spec())};
}

namespace {

// Interpolation corners for every output position of one kernel tap.
// Entries are point-major: corner k of point p lives at p * kCorners + k.
// Out-of-grid corners carry index 0 and zero weight.
template <int R>
struct Corners {
  static constexpr int kCorners = 1 << R;
  std::vector<Index> index;
  std::vector<real> weight;
  std::vector<real> grad[R];
};

template <int R>
void build_corners(const Geometry& g, const real* offsets, Index tap,
                   const Vec3& tap_pos, bool with_grad, Corners<R>& c) {
  constexpr int K = Corners<R>::kCorners;
  const Index points = g.out_volume();
  c.index.assign(static_cast<size_t>(points * K), 0);
  c.weight.assign(static_cast<size_t>(points * K), 0);
  if (with_grad) {
    for (int a = 0; a < R; ++a) c.grad[a].assign(static_cast<size_t>(points * K), 0);
  }
  Index p = 0;
  for (Index oh = 0; oh < g.out[0]; ++oh) {
    for (Index ow = 0; ow < g.out[1]; ++ow) {
      for (Index od = 0; od < g.out[2]; ++od, ++p) {
        const Index o[3] = {oh, ow, od};
        Index base[R];
        real frac[R];
        bool outside = false;
        for (int a = 0; a < R; ++a) {
          const real disp = offsets[(tap * R + a) * points + p];
          if (std::isnan(disp)) {
            throw ValidationError("deformable conv: NaN offset");
          }
          const real coord = static_cast<real>(o[a] * g.stride[a] - g.pad[a] +
                                               tap_pos[a] * g.dilation[a]) +
                             disp;
          if (!(coord > -1 && coord < static_cast<real>(g.in[a]))) {
            outside = true;
            break;
          }
          const real f = std::floor(coord);
          base[a] = static_cast<Index>(f);
          frac[a] = coord - f;
        }
        if (outside) continue;
        for (int k = 0; k < K; ++k) {
          Index lin = 0;
          bool inside = true;
          real f[R];
          for (int a = 0; a < R; ++a) {
            const int bit = (k >> (R - 1 - a)) & 1;
            const Index pos = base[a] + bit;
            if (pos < 0 || pos >= g.in[a]) inside = false;
            lin = lin * g.in[a] + pos;
            f[a] = bit ? frac[a] : 1 - frac[a];
          }
          if (!inside) continue;
          if (R == 2) lin *= g.in[2];
          const size_t e = static_cast<size_t>(p * K + k);
          real w = 1;
          for (int a = 0; a < R; ++a) w *= f[a];
          c.index[e] = lin;
          c.weight[e] = w;
          if (with_grad) {
            for (int a = 0; a < R; ++a) {
              real d = ((k >> (R - 1 - a)) & 1) ? real(1) : real(-1);
              for (int b = 0; b < R; ++b) {
                if (b != a) d *= f[b];
              }
              c.grad[a][e] = d;
            }
          }
        }
      }
    }
  }
}

Vec3 tap_position(const Geometry& g, Index t) {
  return {t / (g.kernel[1] * g.kernel[2]), (t / g.kernel[2]) % g.kernel[1],
          t % g.kernel[2]};
}

void check_offsets(const Geometry& g, const OffsetField& offsets,
                   const DeformSpec& spec) {
  Shape expected =
      detail::spatial_shape(g.batch, spec.offset_channels(), g.out, spec.base.rank);
  if (offsets.displacement.shape() != expected) {
    throw ShapeError("offset field " + shape_str(offsets.displacement.shape()) +
                     " != expected " + shape_str(expected));
  }
}

void add_bias(Tensor& out, const Tensor& bias) {
  const Index n = out.dim(0);
  const Index c = out.dim(1);
  if (n * c == 0) return;
  const Index vol = out.numel() / (n * c);
  for (Index b = 0; b < n; ++b) {
    for (Index ch = 0; ch < c; ++ch) {
      real* p = out.ptr() + (b * c + ch) * vol;
      for (Index i = 0; i < vol; ++i) p[i] += bias[ch];
    }
  }
}

Tensor bias_grad(const Tensor& grad_out) {
  const Index n = grad_out.dim(0);
  const Index c = grad_out.dim(1);
  Tensor gb(Shape{c});
  if (n * c == 0) return gb;
  const Index vol = grad_out.numel() / (n * c);
  for (Index b = 0; b < n; ++b) {
    for (Index ch = 0; ch < c; ++ch) {
      const real* p = grad_out.ptr() + (b * c + ch) * vol;
      for (Index i = 0; i < vol; ++i) gb[ch] += p[i];
    }
  }
  return gb;
}

Geometry depthwise2d_geometry(const Tensor& x, const Tensor& w,
                              const Tensor* bias, const DeformSpec& spec) {
  spec.validate();
  if (spec.base.rank != 2) {
    throw ValidationError("deform_conv_depthwise2d requires rank 2");
  }
  if (spec.base.groups != spec.base.in_channels ||
      spec.base.in_channels != spec.base.out_channels) {
    throw ValidationError("deform_conv_depthwise2d requires groups == channels");
  }
  detail::check_conv_operands(x, w, bias, spec.base);
  return detail::make_geometry(x.shape(), spec.base);
}

Geometry dense3d_geometry(const Tensor& x, const Tensor& w, const Tensor* bias,
                          const DeformSpec& spec) {
  spec.validate();
  if (spec.base.rank != 3) {
    throw ValidationError("deform_conv_dense3d requires rank 3");
  }
  if (spec.base.groups != 1) {
    throw ValidationError("deform_conv_dense3d requires groups == 1");
  }
  detail::check_conv_operands(x, w, bias, spec.base);
  return detail::make_geometry(x.shape(), spec.base);
}

// cols[(c * T + t) * P + p] = sample of channel c at tap t, point p.
void deform_im2col3d(const real* xn, const real* offn, const Geometry& g,
                     real* cols) {
  const Index taps = g.kernel_volume();
  const Index points = g.out_volume();
  const Index ivol = g.in_volume();
  Corners<3> corners;
  for (Index t = 0; t < taps; ++t) {
    build_corners<3>(g, offn, t, tap_position(g, t), false, corners);
    for (Index c = 0; c < g.in_channels; ++c) {
      const real* xc = xn + c * ivol;
      real* row = cols + (c * taps + t) * points;
      for (Index p = 0; p < points; ++p) {
        const Index* idx = corners.index.data() + p * 8;
        const real* wt = corners.weight.data() + p * 8;
        real s = 0;
        for (int k = 0; k < 8; ++k) s += wt[k] * xc[idx[k]];
        row[p] = s;
      }
    }
  }
}

}  // namespace

Tensor deform_conv_depthwise2d(const Tensor& x, const Tensor& w,
                               const Tensor* bias, const OffsetField& offsets,
                               const DeformSpec& spec) {
  const Geometry g = depthwise2d_geometry(x, w, bias, spec);
  check_offsets(g, offsets, spec);
  Tensor out(detail::spatial_shape(g.batch, g.out_channels, g.out, 2));
  if (out.empty()) return out;
  const Index taps = g.kernel_volume();
  const Index points = g.out_volume();
  const Index ivol = g.in_volume();
  const Index channels = g.in_channels;
  Corners<2> corners;
  for (Index n = 0; n < g.batch; ++n) {
    const real* offn =
        offsets.displacement.ptr() + n * spec.offset_channels() * points;
    for (Index t = 0; t < taps; ++t) {
      build_corners<2>(g, offn, t, tap_position(g, t), false, corners);
      for (Index c = 0; c < channels; ++c) {
        const real wt = w[c * taps + t];
        const real* xc = x.ptr() + (n * channels + c) * ivol;
        real* oc = out.ptr() + (n * channels + c) * points;
        for (Index p = 0; p < points; ++p) {
          const Index* idx = corners.index.data() + p * 4;
          const real* cw = corners.weight.data() + p * 4;
          const real s = cw[0] * xc[idx[0]] + cw[1] * xc[idx[1]] +
                         cw[2] * xc[idx[2]] + cw[3] * xc[idx[3]];
          oc[p] += wt * s;
        }
      }
    }
  }
  if (bias != nullptr) add_bias(out, *bias);
  return out;
}

DeformGrads deform_conv_depthwise2d_backward(const Tensor& x, const Tensor& w,
                                             const OffsetField& offsets,
                                             const DeformSpec& spec,
                                             const Tensor& grad_out) {
  const Geometry g = depthwise2d_geometry(x, w, nullptr, spec);
  check_offsets(g, offsets, spec);
  if (grad_out.shape() != detail::spatial_shape(g.batch, g.out_channels, g.out, 2)) {
    throw ShapeError("deform_conv_depthwise2d_backward: bad grad shape " +
                     shape_str(grad_out.shape()));
  }
  DeformGrads grads{Tensor(x.shape()), Tensor(w.shape()), bias_grad(grad_out),
                    Tensor(offsets.displacement.shape())};
  if (grad_out.empty()) return grads;
  const Index taps = g.kernel_volume();
  const Index points = g.out_volume();
  const Index ivol = g.in_volume();
  const Index channels = g.in_channels;
  const Index ochan = spec.offset_channels();
  Corners<2> corners;
  for (Index n = 0; n < g.batch; ++n) {
    const real* offn = offsets.displacement.ptr() + n * ochan * points;
    real* goffn = grads.offsets.ptr() + n * ochan * points;
    for (Index t = 0; t < taps; ++t) {
      build_corners<2>(g, offn, t, tap_position(g, t), true, corners);
      real* goff_y = goffn + (t * 2 + 0) * points;
      real* goff_x = goffn + (t * 2 + 1) * points;
      for (Index c = 0; c < channels; ++c) {
        const real wt = w[c * taps + t];
        const real* xc = x.ptr() + (n * channels + c) * ivol;
        real* gxc = grads.input.ptr() + (n * channels + c) * ivol;
        const real* gyc = grad_out.ptr() + (n * channels + c) * points;
        real gw = 0;
        for (Index p = 0; p < points; ++p) {
          const real gy = gyc[p];
          const size_t e = static_cast<size_t>(p * 4);
          const Index* idx = corners.index.data() + e;
          const real* cw = corners.weight.data() + e;
          const real* dy = corners.grad[0].data() + e;
          const real* dx = corners.grad[1].data() + e;
          const real v0 = xc[idx[0]], v1 = xc[idx[1]], v2 = xc[idx[2]],
                     v3 = xc[idx[3]];
          gw += gy * (cw[0] * v0 + cw[1] * v1 + cw[2] * v2 + cw[3] * v3);
          const real gs = gy * wt;
          gxc[idx[0]] += gs * cw[0];
          gxc[idx[1]] += gs * cw[1];
          gxc[idx[2]] += gs * cw[2];
          gxc[idx[3]] += gs * cw[3];
          goff_y[p] += gs * (dy[0] * v0 + dy[1] * v1 + dy[2] * v2 + dy[3] * v3);
          goff_x[p] += gs * (dx[0] * v0 + dx[1] * v1 + dx[2] * v2 + dx[3] * v3);
        }
        grads.weight[c * taps + t] += gw;
      }
    }
  }
  return grads;
}

Tensor deform_conv_dense3d(const Tensor& x, const Tensor& w,
                           const Tensor* bias, const OffsetField& offsets,
                           const DeformSpec& spec) {
  const Geometry g = dense3d_geometry(x, w, bias, spec);
  check_offsets(g, offsets, spec);
  Tensor out(detail::spatial_shape(g.batch, g.out_channels, g.out, 3));
  if (out.empty()) return out;
  const Index kdim = g.in_channels * g.kernel_volume();
  const Index points = g.out_volume();
  std::vector<real> cols(static_cast<size_t>(kdim * points));
  detail::ConstMatrixMap wm(w.ptr(), g.out_channels, kdim);
  for (Index n = 0; n < g.batch; ++n) {
    deform_im2col3d(x.ptr() + n * g.in_channels * g.in_volume(),
                    offsets.displacement.ptr() +
                        n * spec.offset_channels() * points,
                    g, cols.data());
    detail::ConstMatrixMap cm(cols.data(), kdim, points);
    detail::MatrixMap om(out.ptr() + n * g.out_channels * points,
                         g.out_channels, points);
    om.noalias() = wm * cm;
  }
  if (bias != nullptr) add_bias(out, *bias);
  return out;
}

DeformGrads deform_conv_dense3d_backward(const Tensor& x, const Tensor& w,
                                         const OffsetField& offsets,
                                         const DeformSpec& spec,
                                         const Tensor& grad_out) {
  const Geometry g = dense3d_geometry(x, w, nullptr, spec);
  check_offsets(g, offsets, spec);
  if (grad_out.shape() != detail::spatial_shape(g.batch, g.out_channels, g.out, 3)) {
    throw ShapeError("deform_conv_dense3d_backward: bad grad shape " +
                     shape_str(grad_out.shape()));
  }
  DeformGrads grads{Tensor(x.shape()), Tensor(w.shape()), bias_grad(grad_out),
                    Tensor(offsets.displacement.shape())};
  if (grad_out.empty()) return grads;
  const Index taps = g.kernel_volume();
  const Index kdim = g.in_channels * taps;
  const Index points = g.out_volume();
  const Index ivol = g.in_volume();
  const Index ochan = spec.offset_channels();
  std::vector<real> cols(static_cast<size_t>(kdim * points));
  std::vector<real> gcols(static_cast<size_t>(kdim * points));
  detail::ConstMatrixMap wm(w.ptr(), g.out_channels, kdim);
  detail::MatrixMap gwm(grads.weight.ptr(), g.out_channels, kdim);
  Corners<3> corners;
  for (Index n = 0; n < g.batch; ++n) {
    const real* xn = x.ptr() + n * g.in_channels * ivol;
    const real* offn = offsets.displacement.ptr() + n * ochan * points;
    deform_im2col3d(xn, offn, g, cols.data());
    detail::ConstMatrixMap cm(cols.data(), kdim, points);
    detail::ConstMatrixMap gym(grad_out.ptr() + n * g.out_channels * points,
                               g.out_channels, points);
    gwm.noalias() += gym * cm.transpose();
    detail::MatrixMap gcm(gcols.data(), kdim, points);
    gcm.noalias() = wm.transpose() * gym;

    real* gxn = grads.input.ptr() + n * g.in_channels * ivol;
    real* goffn = grads.offsets.ptr() + n * ochan * points;
    for (Index t = 0; t < taps; ++t) {
      build_corners<3>(g, offn, t, tap_position(g, t), true, corners);
      real* goff[3] = {goffn + (t * 3 + 0) * points, goffn + (t * 3 + 1) * points,
                       goffn + (t * 3 + 2) * points};
      for (Index c = 0; c < g.in_channels; ++c) {
        const real* xc = xn + c * ivol;
        real* gxc = gxn + c * ivol;
        const real* grow = gcols.data() + (c * taps + t) * points;
        for (Index p = 0; p < points; ++p) {
          const real gs = grow[p];
          const size_t e = static_cast<size_t>(p * 8);
          const Index* idx = corners.index.data() + e;
          const real* cw = corners.weight.data() + e;
          real d0 = 0, d1 = 0, d2 = 0;
          for (int k = 0; k < 8; ++k) {
            const real v = xc[idx[k]];
            gxc[idx[k]] += gs * cw[k];
            d0 += corners.grad[0][e + k] * v;
            d1 += corners.grad[1][e + k] * v;
            d2 += corners.grad[2][e + k] * v;
          }
          goff[0][p] += gs * d0;
          goff[1][p] += gs * d1;
          goff[2][p] += gs * d2;
        }
      }
    }
  }
  return grads;
}

}  // namespace dlka
