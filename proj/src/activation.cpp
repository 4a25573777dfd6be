// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dlka/activation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace dlka {

real gelu(real x) {
  return real(0.5) * x * (real(1) + std::erf(x / std::numbers::sqrt2_v<real>));
}

real gelu_derivative(real x) {
  const real cdf = real(0.5) * (real(1) + std::erf(x / std::numbers::sqrt2_v<real>));
  const real pdf = std::exp(real(-0.5) * x * x) /
                   std::sqrt(real(2) * std::numbers::pi_v<real>);
  return cdf + x * pdf;
}

Tensor gelu(const Tensor& x) {
  Tensor out(x.shape());
  for (Index i = 0; i < x.numel(); ++i) out[i] = gelu(x[i]);
  return out;
}

Tensor gelu_backward(const Tensor& x, const Tensor& grad_out) {
  if (!x.same_shape(grad_out)) {
    throw ShapeError("gelu_backward: " + shape_str(x.shape()) + " vs " +
                     shape_str(grad_out.shape()));
  }
  Tensor out(x.shape());
  for (Index i = 0; i < x.numel(); ++i) out[i] = grad_out[i] * gelu_derivative(x[i]);
  return out;
}

namespace {

struct Layout {
  Index batch;
  Index channels;
  Index volume;
};

Layout channel_layout(const Tensor& x, const Tensor& scale, const Tensor& shift) {
  if (x.rank() < 2) throw ShapeError("layer_norm: input needs a channel axis");
  const Index c = x.dim(1);
  if (scale.shape() != Shape{c} || shift.shape() != Shape{c}) {
    throw ShapeError("layer_norm: affine parameters must be (" +
                     std::to_string(c) + ")");
  }
  const Index n = x.dim(0);
  const Index vol = n * c == 0 ? 0 : x.numel() / (n * c);
  return {n, c, vol};
}

// Per-position mean and 1/sqrt(var + eps). Values are shifted by channel 0
// before summing so that constant channel vectors give an exact mean.
void position_stats(const real* xn, const Layout& l, real eps,
                    std::vector<real>& mean, std::vector<real>& inv_std) {
  mean.assign(static_cast<size_t>(l.volume), 0);
  inv_std.assign(static_cast<size_t>(l.volume), 0);
  if (l.channels == 0) return;
  const real* first = xn;
  for (Index c = 0; c < l.channels; ++c) {
    const real* p = xn + c * l.volume;
    for (Index s = 0; s < l.volume; ++s) mean[s] += p[s] - first[s];
  }
  for (Index s = 0; s < l.volume; ++s) mean[s] /= static_cast<real>(l.channels);
  for (Index c = 0; c < l.channels; ++c) {
    const real* p = xn + c * l.volume;
    for (Index s = 0; s < l.volume; ++s) {
      const real d = (p[s] - first[s]) - mean[s];
      inv_std[s] += d * d;
    }
  }
  for (Index s = 0; s < l.volume; ++s) {
    inv_std[s] = real(1) / std::sqrt(inv_std[s] / static_cast<real>(l.channels) + eps);
    mean[s] += first[s];
  }
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& scale, const Tensor& shift,
                  real eps) {
  const Layout l = channel_layout(x, scale, shift);
  Tensor out(x.shape());
  std::vector<real> mean, inv_std;
  for (Index n = 0; n < l.batch; ++n) {
    const real* xn = x.ptr() + n * l.channels * l.volume;
    real* on = out.ptr() + n * l.channels * l.volume;
    position_stats(xn, l, eps, mean, inv_std);
    for (Index c = 0; c < l.channels; ++c) {
      const real* p = xn + c * l.volume;
      real* o = on + c * l.volume;
      for (Index s = 0; s < l.volume; ++s) {
        o[s] = (p[s] - mean[s]) * inv_std[s] * scale[c] + shift[c];
      }
    }
  }
  return out;
}

LayerNormGrads layer_norm_backward(const Tensor& x, const Tensor& scale,
                                   real eps, const Tensor& grad_out) {
  const Layout l = channel_layout(x, scale, scale);
  if (!grad_out.same_shape(x)) {
    throw ShapeError("layer_norm_backward: grad " + shape_str(grad_out.shape()));
  }
  LayerNormGrads grads{Tensor(x.shape()), Tensor(scale.shape()),
                       Tensor(scale.shape())};
  std::vector<real> mean, inv_std;
  std::vector<real> mean_g(static_cast<size_t>(l.volume));
  std::vector<real> mean_gx(static_cast<size_t>(l.volume));
  const real inv_c = real(1) / static_cast<real>(std::max<Index>(l.channels, 1));
  for (Index n = 0; n < l.batch; ++n) {
    const real* xn = x.ptr() + n * l.channels * l.volume;
    const real* gn = grad_out.ptr() + n * l.channels * l.volume;
    real* gxn = grads.input.ptr() + n * l.channels * l.volume;
    position_stats(xn, l, eps, mean, inv_std);
    std::fill(mean_g.begin(), mean_g.end(), real(0));
    std::fill(mean_gx.begin(), mean_gx.end(), real(0));
    for (Index c = 0; c < l.channels; ++c) {
      const real* p = xn + c * l.volume;
      const real* g = gn + c * l.volume;
      real gs = 0;
      real gb = 0;
      for (Index s = 0; s < l.volume; ++s) {
        const real xhat = (p[s] - mean[s]) * inv_std[s];
        gs += g[s] * xhat;
        gb += g[s];
        const real gxhat = g[s] * scale[c];
        mean_g[s] += gxhat;
        mean_gx[s] += gxhat * xhat;
      }
      grads.scale[c] += gs;
      grads.shift[c] += gb;
    }
    for (Index s = 0; s < l.volume; ++s) {
      mean_g[s] *= inv_c;
      mean_gx[s] *= inv_c;
    }
    for (Index c = 0; c < l.channels; ++c) {
      const real* p = xn + c * l.volume;
      const real* g = gn + c * l.volume;
      real* gx = gxn + c * l.volume;
      for (Index s = 0; s < l.volume; ++s) {
        const real xhat = (p[s] - mean[s]) * inv_std[s];
        gx[s] = inv_std[s] * (g[s] * scale[c] - mean_g[s] - xhat * mean_gx[s]);
      }
    }
  }
  return grads;
}

}  // namespace dlka
