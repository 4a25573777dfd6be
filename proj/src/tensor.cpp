// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dlka/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dlka {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) {
    if (e < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

Shape row_major_strides(const Shape& shape) {
  Shape strides(shape.size(), 1);
  for (Index a = static_cast<Index>(shape.size()) - 2; a >= 0; --a) {
    strides[a] = strides[a + 1] * shape[a + 1];
  }
  return strides;
}

Tensor::Tensor(Shape shape, real fill)
    : shape_(std::move(shape)),
      strides_(row_major_strides(shape_)),
      data_(static_cast<size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<real> data)
    : shape_(std::move(shape)),
      strides_(row_major_strides(shape_)),
      data_(std::move(data)) {
  if (static_cast<Index>(data_.size()) != shape_numel(shape_)) {
    throw ShapeError("buffer of " + std::to_string(data_.size()) +
                     " elements does not match shape " + shape_str(shape_));
  }
}

Tensor Tensor::uniform(Shape shape, real lo, real hi, Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (real& v : t.data_) v = static_cast<real>(dist(rng));
  return t;
}

Tensor Tensor::normal(Shape shape, real mean, real stddev, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(mean, stddev);
  for (real& v : t.data_) v = static_cast<real>(dist(rng));
  return t;
}

Index Tensor::dim(Index axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(shape_));
  }
  return shape_[static_cast<size_t>(axis)];
}

Index Tensor::offset(std::span<const Index> index) const {
  if (static_cast<Index>(index.size()) != rank()) {
    throw ShapeError("index rank mismatch for " + shape_str(shape_));
  }
  Index off = 0;
  for (size_t a = 0; a < index.size(); ++a) {
    if (index[a] < 0 || index[a] >= shape_[a]) {
      throw ShapeError("index out of bounds for " + shape_str(shape_));
    }
    off += index[a] * strides_[a];
  }
  return off;
}

real Tensor::at(std::initializer_list<Index> index) const {
  return data_[static_cast<size_t>(offset({index.begin(), index.size()}))];
}

real& Tensor::at(std::initializer_list<Index> index) {
  return data_[static_cast<size_t>(offset({index.begin(), index.size()}))];
}

Tensor Tensor::reshaped(Shape shape) const& {
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::reshaped(Shape shape) && {
  return Tensor(std::move(shape), std::move(data_));
}

real Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  }
  return data_[0];
}

Tensor pad_constant(const Tensor& t, std::span<const Pad> pads, real value) {
  if (static_cast<Index>(pads.size()) != t.rank()) {
    throw ShapeError("pad list length " + std::to_string(pads.size()) +
                     " != rank of " + shape_str(t.shape()));
  }
  Shape out_shape = t.shape();
  for (size_t a = 0; a < pads.size(); ++a) {
    if (pads[a].lo < 0 || pads[a].hi < 0) {
      throw ValidationError("negative padding on axis " + std::to_string(a));
    }
    out_shape[a] += pads[a].lo + pads[a].hi;
  }
  Tensor out(out_shape, value);
  if (t.empty()) return out;
  const Shape& in_shape = t.shape();
  const Shape& os = out.strides();
  std::vector<Index> idx(in_shape.size(), 0);
  for (Index i = 0; i < t.numel(); ++i) {
    Index o = 0;
    for (size_t a = 0; a < idx.size(); ++a) o += (idx[a] + pads[a].lo) * os[a];
    out[o] = t[i];
    for (Index a = static_cast<Index>(idx.size()) - 1; a >= 0; --a) {
      if (++idx[a] < in_shape[a]) break;
      idx[a] = 0;
    }
  }
  return out;
}

Tensor crop(const Tensor& t, std::span<const Index> start,
            std::span<const Index> extent) {
  if (static_cast<Index>(start.size()) != t.rank() ||
      static_cast<Index>(extent.size()) != t.rank()) {
    throw ShapeError("crop window rank mismatch for " + shape_str(t.shape()));
  }
  Shape out_shape(extent.begin(), extent.end());
  for (size_t a = 0; a < start.size(); ++a) {
    if (start[a] < 0 || extent[a] < 0 || start[a] + extent[a] > t.shape()[a]) {
      throw ShapeError("crop window outside " + shape_str(t.shape()));
    }
  }
  Tensor out(out_shape);
  const Shape& is = t.strides();
  std::vector<Index> idx(out_shape.size(), 0);
  for (Index i = 0; i < out.numel(); ++i) {
    Index o = 0;
    for (size_t a = 0; a < idx.size(); ++a) o += (idx[a] + start[a]) * is[a];
    out[i] = t[o];
    for (Index a = static_cast<Index>(idx.size()) - 1; a >= 0; --a) {
      if (++idx[a] < out_shape[a]) break;
      idx[a] = 0;
    }
  }
  return out;
}

bool broadcastable(const Shape& a, const Shape& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (b[i] != a[i] && b[i] != 1) return false;
  }
  return true;
}

namespace {

template <typename F>
Tensor apply_elementwise(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  if (a.same_shape(b)) {
    const real* pa = a.ptr();
    const real* pb = b.ptr();
    real* po = out.ptr();
    for (Index i = 0; i < a.numel(); ++i) po[i] = f(pa[i], pb[i]);
    return out;
  }
  const Shape& as = a.shape();
  Shape bstride = b.strides();
  for (size_t i = 0; i < as.size(); ++i) {
    if (b.shape()[i] == 1) bstride[i] = 0;
  }
  std::vector<Index> idx(as.size(), 0);
  Index boff = 0;
  for (Index i = 0; i < a.numel(); ++i) {
    out[i] = f(a[i], b[boff]);
    for (Index ax = static_cast<Index>(idx.size()) - 1; ax >= 0; --ax) {
      ++idx[ax];
      boff += bstride[ax];
      if (idx[ax] < as[ax]) break;
      boff -= bstride[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return out;
}

}  // namespace

Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseOp op) {
  if (!broadcastable(a.shape(), b.shape())) {
    throw ShapeError("elementwise: " + shape_str(b.shape()) +
                     " is not broadcastable to " + shape_str(a.shape()));
  }
  switch (op) {
    case ElementwiseOp::kAdd:
      return apply_elementwise(a, b, [](real x, real y) { return x + y; });
    case ElementwiseOp::kSub:
      return apply_elementwise(a, b, [](real x, real y) { return x - y; });
    case ElementwiseOp::kMul:
      return apply_elementwise(a, b, [](real x, real y) { return x * y; });
  }
  throw std::logic_error("unknown elementwise op");
}

Tensor reduce_to_shape(const Tensor& t, const Shape& target) {
  if (t.shape() == target) return t;
  if (!broadcastable(t.shape(), target)) {
    throw ShapeError("cannot reduce " + shape_str(t.shape()) + " to " +
                     shape_str(target));
  }
  Tensor out(target);
  Shape ostride = out.strides();
  for (size_t i = 0; i < target.size(); ++i) {
    if (target[i] == 1) ostride[i] = 0;
  }
  const Shape& ts = t.shape();
  std::vector<Index> idx(ts.size(), 0);
  Index ooff = 0;
  for (Index i = 0; i < t.numel(); ++i) {
    out[ooff] += t[i];
    for (Index ax = static_cast<Index>(idx.size()) - 1; ax >= 0; --ax) {
      ++idx[ax];
      ooff += ostride[ax];
      if (idx[ax] < ts[ax]) break;
      ooff -= ostride[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return out;
}

Moments reduce_moments(const Tensor& t, std::span<const Index> axes) {
  if (axes.empty()) throw ValidationError("reduce_moments: empty axis set");
  std::vector<bool> reduced(static_cast<size_t>(t.rank()), false);
  for (Index a : axes) {
    if (a < 0 || a >= t.rank()) {
      throw ShapeError("reduce_moments: axis " + std::to_string(a) +
                       " out of range for " + shape_str(t.shape()));
    }
    reduced[static_cast<size_t>(a)] = true;
  }
  Shape kept = t.shape();
  Index count = 1;
  for (size_t a = 0; a < kept.size(); ++a) {
    if (reduced[a]) {
      count *= kept[a];
      kept[a] = 1;
    }
  }
  Tensor shift(kept);
  Tensor mean(kept);
  Tensor var(kept);
  if (t.empty() || count == 0) return {std::move(mean), std::move(var)};

  // Map every input element to its group offset.
  Shape gstride = mean.strides();
  for (size_t a = 0; a < kept.size(); ++a) {
    if (reduced[a]) gstride[a] = 0;
  }
  std::vector<Index> group(static_cast<size_t>(t.numel()));
  {
    std::vector<Index> idx(kept.size(), 0);
    Index g = 0;
    const Shape& ts = t.shape();
    for (Index i = 0; i < t.numel(); ++i) {
      group[static_cast<size_t>(i)] = g;
      for (Index ax = static_cast<Index>(idx.size()) - 1; ax >= 0; --ax) {
        ++idx[ax];
        g += gstride[ax];
        if (idx[ax] < ts[ax]) break;
        g -= gstride[ax] * idx[ax];
        idx[ax] = 0;
      }
    }
  }
  std::vector<bool> seen(static_cast<size_t>(mean.numel()), false);
  for (Index i = 0; i < t.numel(); ++i) {
    const Index g = group[static_cast<size_t>(i)];
    if (!seen[static_cast<size_t>(g)]) {
      seen[static_cast<size_t>(g)] = true;
      shift[g] = t[i];
    }
  }
  Tensor centered_sum(kept);
  for (Index i = 0; i < t.numel(); ++i) {
    const Index g = group[static_cast<size_t>(i)];
    centered_sum[g] += t[i] - shift[g];
  }
  for (Index g = 0; g < mean.numel(); ++g) {
    centered_sum[g] /= static_cast<real>(count);
    mean[g] = shift[g] + centered_sum[g];
  }
  for (Index i = 0; i < t.numel(); ++i) {
    const Index g = group[static_cast<size_t>(i)];
    const real dev = t[i] - shift[g] - centered_sum[g];
    var[g] += dev * dev;
  }
  for (Index g = 0; g < var.numel(); ++g) var[g] /= static_cast<real>(count);
  return {std::move(mean), std::move(var)};
}

Tensor scale(const Tensor& t, real factor) {
  Tensor out(t.shape());
  for (Index i = 0; i < t.numel(); ++i) out[i] = t[i] * factor;
  return out;
}

real sum(const Tensor& t) {
  real s = 0;
  for (real v : t.data()) s += v;
  return s;
}

real dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw ShapeError("dot: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  real s = 0;
  for (Index i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

real max_abs(const Tensor& t) {
  real m = 0;
  for (real v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

real max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("max_abs_diff: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  real m = 0;
  for (Index i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(),
                     [](real v) { return std::isfinite(v); });
}

Tensor stack_batch(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack_batch: no items");
  Shape shape = items.front().shape();
  if (shape.empty()) throw ShapeError("stack_batch: scalar items");
  std::vector<real> data;
  data.reserve(static_cast<size_t>(items.front().numel() * items.size()));
  Index n = 0;
  for (const Tensor& t : items) {
    Shape s = t.shape();
    if (s.size() != shape.size() ||
        !std::equal(s.begin() + 1, s.end(), shape.begin() + 1)) {
      throw ShapeError("stack_batch: mismatched item " + shape_str(s));
    }
    n += s[0];
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  shape[0] = n;
  return Tensor(shape, std::move(data));
}

Tensor batch_item(const Tensor& t, Index n) {
  if (t.rank() < 1 || n < 0 || n >= t.dim(0)) {
    throw ShapeError("batch_item " + std::to_string(n) + " of " +
                     shape_str(t.shape()));
  }
  Shape shape = t.shape();
  shape[0] = 1;
  const Index per = t.strides()[0];
  std::vector<real> data(t.data().begin() + n * per,
                         t.data().begin() + (n + 1) * per);
  return Tensor(shape, std::move(data));
}

}  // namespace dlka
