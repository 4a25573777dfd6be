// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef DLKA_TENSOR_HPP_
#define DLKA_TENSOR_HPP_

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dlka {

#ifdef DLKA_FLOAT32
using real = float;
#else
using real = double;
#endif

using Index = std::int64_t;
using Shape = std::vector<Index>;
using Rng = std::mt19937_64;

// Raised for rank/extent mismatches between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a value violates a documented precondition (negative pad,
// invalid configuration, out-of-range label, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_str(const Shape& shape);
Index shape_numel(const Shape& shape);

// Dense row-major N-dimensional array. Layout is (N, C, H[, W[, D]]) for
// activations. Strides are element offsets and always describe a contiguous
// buffer; ops never mutate their inputs and allocate fresh outputs.
class Tensor {
 public:
  Tensor() : Tensor(Shape{0}) {}
  explicit Tensor(Shape shape, real fill = real(0));
  Tensor(Shape shape, std::vector<real> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, real value) {
    return Tensor(std::move(shape), value);
  }
  static Tensor scalar(real value) { return Tensor(Shape{}, value); }
  static Tensor uniform(Shape shape, real lo, real hi, Rng& rng);
  static Tensor normal(Shape shape, real mean, real stddev, Rng& rng);

  const Shape& shape() const { return shape_; }
  const Shape& strides() const { return strides_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const;
  Index numel() const { return static_cast<Index>(data_.size()); }
  bool empty() const { return data_.empty(); }

  std::span<const real> data() const { return data_; }
  std::span<real> data() { return data_; }
  const real* ptr() const { return data_.data(); }
  real* ptr() { return data_.data(); }

  real operator[](Index i) const { return data_[static_cast<size_t>(i)]; }
  real& operator[](Index i) { return data_[static_cast<size_t>(i)]; }

  Index offset(std::span<const Index> index) const;
  real at(std::initializer_list<Index> index) const;
  real& at(std::initializer_list<Index> index);

  // Same buffer, new extents; element count must match.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  // Scalar value of a one-element tensor.
  real item() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  Shape shape_;
  Shape strides_;
  std::vector<real> data_;
};

Shape row_major_strides(const Shape& shape);

struct Pad {
  Index lo = 0;
  Index hi = 0;
};

// Pads every axis by (lo, hi) with a constant. `pads.size()` must equal the
// tensor rank.
Tensor pad_constant(const Tensor& t, std::span<const Pad> pads, real value);

// Inverse of pad_constant: keeps `extent[a]` elements starting at `start[a]`.
Tensor crop(const Tensor& t, std::span<const Index> start,
            std::span<const Index> extent);

enum class ElementwiseOp { kAdd, kSub, kMul };

// True when `b` has the same rank as `a` and each extent is 1 or equal.
bool broadcastable(const Shape& a, const Shape& b);

// out[i] = op(a[i], b[i]), with `b` broadcast along its singleton axes.
Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseOp op);

// Sums `t` down to `target` (inverse of broadcasting).
Tensor reduce_to_shape(const Tensor& t, const Shape& target);

struct Moments {
  Tensor mean;
  Tensor variance;
};

// Population mean/variance over `axes`; reduced axes are kept as singletons.
// The data is shifted by the first element of each reduction group before
// the two passes, so a constant group yields a variance of exactly zero.
Moments reduce_moments(const Tensor& t, std::span<const Index> axes);

Tensor scale(const Tensor& t, real factor);
real sum(const Tensor& t);
real dot(const Tensor& a, const Tensor& b);
real max_abs(const Tensor& t);
real max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

// Concatenates equally shaped tensors along axis 0.
Tensor stack_batch(std::span<const Tensor> items);
// Extracts batch item `n` keeping a leading singleton axis.
Tensor batch_item(const Tensor& t, Index n);

}  // namespace dlka

#endif  // DLKA_TENSOR_HPP_
