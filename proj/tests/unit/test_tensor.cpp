#include <array>

#include "doctest.h"
#include "dlka/tensor.hpp"
#include "oracles.hpp"

using namespace dlka;

TEST_CASE("pad_constant centres the original") {
  Tensor t({1, 1, 2, 2}, std::vector<real>{1, 2, 3, 4});
  const std::array<Pad, 4> pads{Pad{}, Pad{}, Pad{1, 1}, Pad{1, 1}};
  Tensor p = pad_constant(t, pads, 0);
  REQUIRE(p.shape() == Shape{1, 1, 4, 4});
  const std::vector<real> want{0, 0, 0, 0, 0, 1, 2, 0, 0, 3, 4, 0, 0, 0, 0, 0};
  for (Index i = 0; i < 16; ++i) CHECK(p[i] == want[static_cast<size_t>(i)]);
}

TEST_CASE("pad_constant with zero pads is the identity") {
  Rng rng(3);
  Tensor t = testing::random_tensor({2, 3, 4, 5}, rng);
  const std::array<Pad, 4> pads{};
  Tensor p = pad_constant(t, pads, 7);
  CHECK(p.shape() == t.shape());
  CHECK(max_abs_diff(p, t) == 0);
}

TEST_CASE("pad_constant one-sided with a fill value") {
  Tensor t({1, 1, 1, 3}, std::vector<real>{5, 6, 7});
  const std::array<Pad, 4> pads{Pad{}, Pad{}, Pad{0, 0}, Pad{2, 0}};
  Tensor p = pad_constant(t, pads, -1);
  REQUIRE(p.shape() == Shape{1, 1, 1, 5});
  const std::vector<real> want{-1, -1, 5, 6, 7};
  for (Index i = 0; i < 5; ++i) CHECK(p[i] == want[static_cast<size_t>(i)]);
}

TEST_CASE("pad then crop round-trips exactly") {
  Rng rng(5);
  for (int rank : {2, 3}) {
    Shape shape{2, 3, 4, 5};
    if (rank == 3) shape.push_back(3);
    Tensor t = testing::random_tensor(shape, rng);
    std::vector<Pad> pads(2);
    std::vector<Index> start{0, 0}, extent{shape[0], shape[1]};
    for (int a = 0; a < rank; ++a) {
      pads.push_back(Pad{a + 1, 2});
      start.push_back(a + 1);
      extent.push_back(shape[static_cast<size_t>(a) + 2]);
    }
    Tensor back = crop(pad_constant(t, pads, 9), start, extent);
    CHECK(back.shape() == t.shape());
    CHECK(max_abs_diff(back, t) == 0);
  }
}

TEST_CASE("elementwise basics") {
  Tensor a({3}, std::vector<real>{1, 2, 3});
  Tensor b({3}, std::vector<real>{4, 5, 6});
  Tensor m = elementwise(a, b, ElementwiseOp::kMul);
  CHECK(m[0] == 4);
  CHECK(m[1] == 10);
  CHECK(m[2] == 18);

  Rng rng(7);
  Tensor x = testing::random_tensor({2, 3, 4, 4}, rng);
  CHECK(max_abs_diff(elementwise(x, Tensor::zeros(x.shape()), ElementwiseOp::kAdd), x) == 0);
  Tensor ones = Tensor::full({1, 3, 1, 1}, 1);
  CHECK(max_abs_diff(elementwise(x, ones, ElementwiseOp::kMul), x) == 0);

  Tensor y = testing::random_tensor(x.shape(), rng);
  CHECK(max_abs_diff(elementwise(x, y, ElementwiseOp::kAdd),
                     elementwise(y, x, ElementwiseOp::kAdd)) == 0);
}

TEST_CASE("broadcast shapes") {
  CHECK(broadcastable({2, 3, 4, 4}, {1, 3, 1, 1}));
  CHECK(broadcastable({2, 3, 4, 4}, {2, 3, 4, 4}));
  CHECK_FALSE(broadcastable({2, 3, 4, 4}, {1, 2, 1, 1}));
  CHECK_THROWS_AS(elementwise(Tensor({2, 3}), Tensor({3, 2}), ElementwiseOp::kAdd),
                  ShapeError);
  Tensor t = Tensor::full({2, 3, 4}, 1);
  Tensor r = reduce_to_shape(t, {1, 3, 1});
  REQUIRE(r.shape() == Shape{1, 3, 1});
  for (Index i = 0; i < 3; ++i) CHECK(r[i] == 8);
}

TEST_CASE("reduce_moments hand values") {
  Tensor t({4}, std::vector<real>{1, 2, 3, 4});
  const std::array<Index, 1> axes{0};
  Moments m = reduce_moments(t, axes);
  CHECK(m.mean.item() == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(m.variance.item() == doctest::Approx(1.25).epsilon(1e-15));

  Tensor c = Tensor::full({3, 7}, real(0.1));
  const std::array<Index, 2> all{0, 1};
  CHECK(reduce_moments(c, all).variance.item() == 0);
}

TEST_CASE("reduce_moments matches two-pass sums") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor t = testing::random_tensor({2, 8}, rng, -5, 5);
    const std::array<Index, 1> axes{1};
    Moments m = reduce_moments(t, axes);
    REQUIRE(m.mean.numel() == 2);
    for (Index r = 0; r < 2; ++r) {
      double s = 0;
      for (Index j = 0; j < 8; ++j) s += t.at({r, j});
      const double mean = s / 8;
      double ss = 0;
      for (Index j = 0; j < 8; ++j) ss += (t.at({r, j}) - mean) * (t.at({r, j}) - mean);
      CHECK(std::abs(m.mean[r] - mean) <= 1e-12);
      CHECK(std::abs(m.variance[r] - ss / 8) <= 1e-12);
      CHECK(m.variance[r] >= 0);
    }
  }
}

TEST_CASE("tensor construction and indexing") {
  Tensor t({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(t.strides() == Shape{12, 4, 1});
  t.at({1, 2, 3}) = 5;
  CHECK(t[23] == 5);
  CHECK(Tensor::scalar(2).item() == 2);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<real>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(t.reshaped({5, 5}), ShapeError);
  CHECK(Tensor({0, 3}).empty());
  CHECK(shape_numel({2, 0, 4}) == 0);
}

TEST_CASE("stack and split batches") {
  Rng rng(13);
  std::vector<Tensor> items{testing::random_tensor({1, 2, 3, 3}, rng),
                            testing::random_tensor({1, 2, 3, 3}, rng)};
  Tensor b = stack_batch(items);
  REQUIRE(b.shape() == Shape{2, 2, 3, 3});
  CHECK(max_abs_diff(batch_item(b, 1), items[1]) == 0);
  CHECK(sum(b) == doctest::Approx(sum(items[0]) + sum(items[1])));
  CHECK(dot(items[0], items[0]) >= 0);
  CHECK(all_finite(b));
}
