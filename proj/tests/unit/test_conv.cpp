#include "doctest.h"
#include "dlka/net.hpp"
#include "dlka/ops.hpp"
#include "dlka/params.hpp"
#include "oracles.hpp"

using namespace dlka;
using testing::random_tensor;

namespace {

Shape input_shape(int rank, Index n, Index c, Index e0, Index e1, Index e2) {
  Shape s{n, c, e0, e1};
  if (rank == 3) s.push_back(e2);
  return s;
}

}  // namespace

TEST_CASE("pointwise permutation matrix permutes channels") {
  Rng rng(1);
  ConvSpec s = ConvSpec::pointwise(2, 3, 3).with_bias(false);
  Tensor w(s.weight_shape());
  const Index perm[3] = {2, 0, 1};
  for (Index o = 0; o < 3; ++o) w.at({o, perm[o], 0, 0}) = 1;
  Tensor x = random_tensor({2, 3, 5, 4}, rng);
  Tensor y = conv_dense(x, w, nullptr, s);
  for (Index n = 0; n < 2; ++n)
    for (Index o = 0; o < 3; ++o)
      for (Index i = 0; i < 5; ++i)
        for (Index j = 0; j < 4; ++j) CHECK(y.at({n, o, i, j}) == x.at({n, perm[o], i, j}));
}

TEST_CASE("all-ones 3x3 on a constant image") {
  ConvSpec s = ConvSpec::dense(2, 1, 1, 3).with_bias(false);
  Tensor y = conv_dense(Tensor::full({1, 1, 6, 6}, 1), Tensor::full(s.weight_shape(), 1),
                        nullptr, s);
  REQUIRE(y.shape() == Shape{1, 1, 6, 6});
  CHECK(y.at({0, 0, 2, 3}) == 9);
  CHECK(y.at({0, 0, 0, 3}) == 6);
  CHECK(y.at({0, 0, 0, 0}) == 4);
}

TEST_CASE("dense convolution matches the loop oracle") {
  Rng rng(2);
  ConvSpec s = ConvSpec::dense(2, 2, 2, 3);
  Tensor x = random_tensor({1, 2, 6, 6}, rng);
  Tensor w = random_tensor(s.weight_shape(), rng);
  Tensor b = random_tensor(s.bias_shape(), rng);
  CHECK(max_abs_diff(conv_dense(x, w, &b, s), testing::naive_conv(x, w, &b, s)) <= 1e-12);

  for (int trial = 0; trial < 24; ++trial) {
    const int rank = 2 + trial % 2;
    const Index k = 1 + trial % 4;
    const Index dil = 1 + (trial / 4) % 3;
    ConvSpec t = ConvSpec::dense(rank, 1 + trial % 3, 2 + trial % 2, k, dil);
    if (trial % 5 == 0) t.with_stride(std::vector<Index>(static_cast<size_t>(rank), 2)).same_padding();
    if (trial % 7 == 3) t.padding[0] = Pad{0, 1};
    Tensor xi = random_tensor(input_shape(rank, 2, t.in_channels, 8, 10, 6), rng);
    Tensor wi = random_tensor(t.weight_shape(), rng);
    Tensor bi = random_tensor(t.bias_shape(), rng);
    INFO("trial " << trial);
    CHECK(max_abs_diff(conv_dense(xi, wi, &bi, t), testing::naive_conv(xi, wi, &bi, t)) <=
          1e-12);
  }
}

TEST_CASE("output extent formula agrees with enumeration") {
  for (Index in = 1; in <= 12; ++in)
    for (Index k = 1; k <= 4; ++k)
      for (Index dil = 1; dil <= 3; ++dil)
        for (Index st = 1; st <= 3; ++st)
          for (Index lo = 0; lo <= 2; ++lo) {
            const Pad pad{lo, 1};
            const Index span = (k - 1) * dil + 1;
            Index count = 0;
            for (Index start = -lo; start + span <= in + pad.hi; start += st) ++count;
            if (span > in + lo + pad.hi) {
              CHECK_THROWS_AS(conv_output_extent(in, pad, k, dil, st), ShapeError);
            } else {
              CHECK(conv_output_extent(in, pad, k, dil, st) == count);
            }
          }
}

TEST_CASE("depthwise delta kernel is the identity") {
  Rng rng(3);
  for (int rank : {2, 3})
    for (Index dil : {1, 2, 3}) {
      ConvSpec s = ConvSpec::depthwise(rank, 3, 5, dil).with_bias(false);
      Tensor w(s.weight_shape());
      const Index vol = s.kernel_volume();
      for (Index c = 0; c < 3; ++c) w[c * vol + vol / 2] = 1;
      Tensor x = random_tensor(input_shape(rank, 1, 3, 9, 7, 5), rng);
      CHECK(max_abs_diff(conv_depthwise(x, w, nullptr, s), x) == 0);
    }
}

TEST_CASE("depthwise equals dense with block-diagonal weights") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const int rank = 2 + trial % 2;
    const Index ch = 1 + trial % 4;
    ConvSpec s = ConvSpec::depthwise(rank, ch, 1 + 2 * (trial % 3), 1 + trial % 3);
    if (trial % 4 == 1) s.with_stride(std::vector<Index>(static_cast<size_t>(rank), 2)).same_padding();
    Tensor x = random_tensor(input_shape(rank, 2, ch, 8, 6, 4), rng);
    Tensor w = random_tensor(s.weight_shape(), rng);
    Tensor b = random_tensor(s.bias_shape(), rng);
    ConvSpec d = s;
    d.groups = 1;
    Tensor wd(d.weight_shape());
    const Index vol = s.kernel_volume();
    for (Index c = 0; c < ch; ++c)
      for (Index t = 0; t < vol; ++t) wd[(c * ch + c) * vol + t] = w[c * vol + t];
    INFO("trial " << trial);
    CHECK(max_abs_diff(conv_depthwise(x, w, &b, s), conv_dense(x, wd, &b, d)) <= 1e-12);
    CHECK(max_abs_diff(conv_depthwise(x, w, &b, s), testing::naive_conv(x, w, &b, s)) <= 1e-12);
  }
}

TEST_CASE("dilated 7x7 depthwise gradient support") {
  Rng rng(5);
  ConvSpec s = ConvSpec::depthwise(2, 1, 7, 3).with_bias(false);
  Var w = Var::parameter(random_tensor(s.weight_shape(), rng, real(0.5), real(1.5)));
  auto f = [&](const Var& x) { return conv(x, w, Var{}, s); };
  Rng rng2(6);
  Var x = Var::input(random_tensor({1, 1, 32, 32}, rng2));
  CHECK(f(x).shape() == Shape{1, 1, 32, 32});
  CHECK(testing::gradient_support(f, {1, 1, 32, 32}) == std::vector<Index>{19, 19});
}

TEST_CASE("translation equivariance in the interior") {
  Rng rng(7);
  ConvSpec s = ConvSpec::dense(2, 2, 3, 3, 2);
  Tensor w = random_tensor(s.weight_shape(), rng);
  Tensor b = random_tensor(s.bias_shape(), rng);
  Tensor x = random_tensor({1, 2, 16, 16}, rng);
  const std::array<Pad, 4> shift{Pad{}, Pad{}, Pad{1, 0}, Pad{2, 0}};
  Tensor xs = pad_constant(x, shift, 0);
  Tensor y = conv_dense(x, w, &b, s);
  Tensor ys = conv_dense(xs, w, &b, s);
  for (Index o = 0; o < 3; ++o)
    for (Index i = 4; i < 12; ++i)
      for (Index j = 4; j < 12; ++j) CHECK(ys.at({0, o, i + 1, j + 2}) == doctest::Approx(y.at({0, o, i, j})).epsilon(1e-13));
}

TEST_CASE("transposed convolution hand cases") {
  ConvSpec s = ConvSpec::pointwise(2, 1, 1).with_bias(false);
  Rng rng(8);
  Tensor y = random_tensor({1, 1, 3, 3}, rng);
  Tensor w = Tensor::full(s.weight_shape(), real(2.5));
  CHECK(max_abs_diff(conv_transpose(y, w, nullptr, s), scale(y, real(2.5))) == 0);

  ConvSpec up = ConvSpec::dense(2, 1, 1, 2).with_stride({2, 2}).same_padding().with_bias(false);
  Tensor c = Tensor::full({1, 1, 1, 1}, real(1.75));
  Tensor out = conv_transpose(c, Tensor::full(up.weight_shape(), 1), nullptr, up);
  REQUIRE(out.shape() == Shape{1, 1, 2, 2});
  for (Index i = 0; i < 4; ++i) CHECK(out[i] == real(1.75));
}

TEST_CASE("transposed convolution is the adjoint") {
  Rng rng(9);
  for (int trial = 0; trial < 12; ++trial) {
    const int rank = 2 + trial % 2;
    ConvSpec s = ConvSpec::dense(rank, 2, 3, 1 + trial % 3, 1 + trial % 2).with_bias(false);
    if (trial % 3 == 0) s.with_stride(std::vector<Index>(static_cast<size_t>(rank), 2)).same_padding();
    Tensor x = random_tensor(input_shape(rank, 2, 2, 8, 6, 4), rng);
    Tensor w = random_tensor(s.weight_shape(), rng);
    Tensor y = random_tensor(s.output_shape(x.shape()), rng);
    std::vector<Index> spatial(x.shape().begin() + 2, x.shape().end());
    Tensor xt = conv_transpose(y, w, nullptr, s, spatial);
    REQUIRE(xt.shape() == x.shape());
    const real lhs = dot(conv_dense(x, w, nullptr, s), y);
    const real rhs = dot(x, xt);
    INFO("trial " << trial);
    CHECK(std::abs(lhs - rhs) <= 1e-10);
  }
}

TEST_CASE("patch embedding shapes and linearity") {
  ParamStore store;
  Initializer init(3);
  Scope s2 = Scope(store).sub("embed2");
  Scope s3 = Scope(store).sub("embed3");
  init_patch_embed(s2, 2, 1, 8, init);
  init_patch_embed(s3, 3, 1, 8, init);
  Rng rng(10);
  Var y2 = patch_embed(Var::constant(random_tensor({1, 1, 64, 64}, rng)), s2, 2, 1, 8);
  CHECK(y2.shape() == Shape{1, 8, 16, 16});
  Var y3 = patch_embed(Var::constant(random_tensor({1, 1, 32, 32, 16}, rng)), s3, 3, 1, 8);
  CHECK(y3.shape() == Shape{1, 8, 8, 8, 8});
  Var z2 = patch_embed(Var::constant(Tensor::zeros({1, 1, 64, 64})), s2, 2, 1, 8);
  Var z3 = patch_embed(Var::constant(Tensor::zeros({1, 1, 32, 32, 16})), s3, 3, 1, 8);
  CHECK(max_abs(z2.value()) == 0);
  CHECK(max_abs(z3.value()) == 0);
  CHECK_THROWS_AS(patch_embed(Var::constant(Tensor::zeros({1, 1, 30, 32, 16})), s3, 3, 1, 8),
                  ShapeError);
}

TEST_CASE("patch expanding shapes and linearity") {
  ParamStore store;
  Initializer init(4);
  Scope s = Scope(store).sub("expand");
  init_patch_expand(s, 2, 64, init);
  Rng rng(11);
  Var y = patch_expand(Var::constant(random_tensor({1, 64, 8, 8}, rng)), s, 2, 64);
  CHECK(y.shape() == Shape{1, 32, 16, 16});
  CHECK(max_abs(patch_expand(Var::constant(Tensor::zeros({1, 64, 8, 8})), s, 2, 64).value()) == 0);

  // Shapes round-trip through a stride-2 downsampling conv.
  ConvSpec down = ConvSpec::dense(2, 32, 64, 2).with_stride({2, 2}).same_padding();
  CHECK(down.output_shape(y.shape()) == Shape{1, 64, 8, 8});

  Scope s3 = Scope(store).sub("expand3");
  init_patch_expand(s3, 3, 16, init);
  CHECK(patch_expand(Var::constant(random_tensor({2, 16, 2, 3, 4}, rng)), s3, 3, 16).shape() ==
        Shape{2, 8, 4, 6, 8});
}

TEST_CASE("spec validation") {
  ConvSpec s = ConvSpec::dense(2, 4, 4, 3);
  s.groups = 3;
  CHECK_THROWS(s.validate());
  ConvSpec r = ConvSpec::dense(2, 1, 1, 3);
  r.dilation = {0, 1};
  CHECK_THROWS(r.validate());
  ConvSpec ok = ConvSpec::dense(3, 2, 2, 3, 2);
  CHECK_NOTHROW(ok.validate());
  Rng rng(12);
  CHECK_THROWS_AS(conv_dense(random_tensor({1, 3, 5, 5}, rng),
                             random_tensor(ok.weight_shape(), rng), nullptr,
                             ConvSpec::dense(2, 2, 2, 3).with_bias(false)),
                  ShapeError);
}
