#include <cmath>

#include "doctest.h"
#include "dlka/activation.hpp"
#include "dlka/lka.hpp"
#include "dlka/ops.hpp"
#include "oracles.hpp"
#include "twins.hpp"

using namespace dlka;
using testing::random_tensor;

namespace {

// Phi(x) from the Maclaurin series of erf.
double phi_series(double x) {
  const double z = x / std::sqrt(2.0);
  double term = z, acc = 0;
  for (int n = 0; n < 60; ++n) {
    acc += term / (2 * n + 1);
    term *= -z * z / (n + 1);
  }
  return 0.5 * (1 + 2 / std::sqrt(M_PI) * acc);
}

Shape shape_for(int rank, Index n, Index c, Index e) {
  Shape s{n, c, e, e + 1};
  if (rank == 3) s.push_back(e - 1);
  return s;
}

}  // namespace

TEST_CASE("gelu values") {
  CHECK(gelu(real(0)) == 0);
  CHECK(std::abs(gelu(real(10)) - 10) <= 1e-6);
  CHECK(std::abs(gelu(real(1)) - phi_series(1)) <= 1e-12);
  CHECK(std::abs(gelu(real(1)) - 0.841345) <= 1e-6);
  for (double x : {-3.0, -0.7, 0.2, 1.9}) CHECK(std::abs(gelu(real(x)) - x * phi_series(x)) <= 1e-12);
  CHECK(std::abs(gelu_derivative(0) - 0.5) <= 1e-15);
}

TEST_CASE("layer norm two-point and constant cases") {
  Tensor x({1, 2, 1, 1}, std::vector<real>{1, 3});
  Tensor one = Tensor::full({2}, 1), zero = Tensor::zeros({2});
  Tensor y = layer_norm(x, one, zero);
  CHECK(std::abs(y[0] + 1) <= 1e-3);
  CHECK(std::abs(y[1] - 1) <= 1e-3);

  Tensor c = Tensor::full({2, 3, 4, 4}, real(2.5));
  Tensor shift({3}, std::vector<real>{0.5, -1, 2});
  Tensor out = layer_norm(c, Tensor::full({3}, real(1.7)), shift);
  for (Index n = 0; n < 2; ++n)
    for (Index ch = 0; ch < 3; ++ch)
      for (Index i = 0; i < 16; ++i) CHECK(out[(n * 3 + ch) * 16 + i] == shift[ch]);
}

TEST_CASE("layer norm matches the moments oracle") {
  Rng rng(1);
  for (int rank : {2, 3}) {
    Tensor x = random_tensor(shape_for(rank, 2, 5, 4), rng, -3, 3);
    Tensor sc = random_tensor({5}, rng), sh = random_tensor({5}, rng);
    const std::array<Index, 1> ch{1};
    Moments m = reduce_moments(x, ch);
    Tensor centred = elementwise(x, m.mean, ElementwiseOp::kSub);
    Tensor inv(m.variance.shape());
    for (Index i = 0; i < inv.numel(); ++i) inv[i] = 1 / std::sqrt(m.variance[i] + kLayerNormEps);
    Shape bshape(x.shape().size(), 1);
    bshape[1] = 5;
    Tensor want = elementwise(
        elementwise(elementwise(centred, inv, ElementwiseOp::kMul), sc.reshaped(bshape),
                    ElementwiseOp::kMul),
        sh.reshaped(bshape), ElementwiseOp::kAdd);
    CHECK(max_abs_diff(layer_norm(x, sc, sh), want) <= 1e-12);
  }
}

TEST_CASE("decomposition kernel sizes") {
  LkaSpec s;
  CHECK(s.dw_kernel() == 5);
  CHECK(s.dwd_kernel() == 7);
  CHECK(s.support() == 23);
  s.K = 13;
  CHECK(s.dwd_kernel() == 5);
  s.K = 1;
  s.d = 1;
  CHECK(s.support() == 1);
  s.d = 0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("attention with zero final projection is the identity") {
  for (int rank : {2, 3}) {
    LkaSpec spec{.rank = rank, .channels = 4, .K = 7, .d = 2};
    ParamStore store;
    Initializer init(3);
    init_lka_attention(Scope(store), spec, init);
    Rng rng(2);
    Var f = Var::constant(random_tensor(shape_for(rank, 2, 4, 6), rng));
    CHECK(max_abs_diff(lka_attention(f, Scope(store), spec).value(), f.value()) == 0);
  }
}

TEST_CASE("deformable attention with zero offsets equals its rigid twin") {
  Rng rng(3);
  for (int trial = 0; trial < 6; ++trial) {
    const int rank = 2 + trial % 2;
    LkaSpec spec{.rank = rank, .channels = 2 + trial % 3, .K = 5 + 2 * (trial % 3),
                 .d = 1 + trial % 3};
    auto twins = testing::attention_twins(spec, 100 + trial, false);
    CHECK(twins.missing == 0);
    Var f = Var::constant(random_tensor(shape_for(rank, 1, spec.channels, 6), rng));
    const real diff = max_abs_diff(lka_attention(f, Scope(twins.deformable), spec).value(),
                                   lka_attention(f, Scope(twins.rigid), testing::rigid_of(spec)).value());
    INFO("trial " << trial);
    CHECK(diff <= 1e-12);
  }
}

TEST_CASE("support of the DW then DW-D chain") {
  struct Case {
    Index K, d;
  };
  for (Case c : {Case{21, 3}, Case{7, 2}, Case{13, 3}, Case{9, 1}, Case{1, 1}}) {
    LkaSpec spec{.rank = 2, .channels = 1, .K = c.K, .d = c.d};
    Rng rng(static_cast<std::uint64_t>(c.K * 10 + c.d));
    ConvSpec dw = spec.dw_spec(), dwd = spec.dwd_spec();
    Var w1 = Var::parameter(random_tensor(dw.weight_shape(), rng, real(0.5), real(1.5)));
    Var w2 = Var::parameter(random_tensor(dwd.weight_shape(), rng, real(0.5), real(1.5)));
    auto chain = [&](const Var& x) { return conv(conv(x, w1, Var{}, dw), w2, Var{}, dwd); };
    const Index s = spec.support();
    INFO("K=" << c.K << " d=" << c.d);
    CHECK(testing::gradient_support(chain, {1, 1, 48, 48}) == std::vector<Index>{s, s});
    if (c.K == 21 && c.d == 3) CHECK(s == 23);
  }
}

TEST_CASE("attention branch is quadratic without biases or activation") {
  for (int rank : {2, 3}) {
    LkaSpec spec{.rank = rank, .channels = 3, .K = 5, .d = 2, .deformable = false,
                 .decomposition_bias = false, .activation = Activation::kIdentity};
    ParamStore store;
    Initializer init(4, InitMode::kRandom);
    init_lka_attention(Scope(store), spec, init);
    store.assign("proj_in.bias", Tensor::zeros({3}));
    Rng rng(5);
    Tensor f = random_tensor(shape_for(rank, 1, 3, 5), rng);
    Tensor y1 = lka_branch(Var::constant(f), Scope(store), spec).value();
    Tensor y2 = lka_branch(Var::constant(scale(f, 2)), Scope(store), spec).value();
    CHECK(max_abs_diff(y2, scale(y1, 4)) <= 1e-12);
  }
}

TEST_CASE("blocks are the identity at init and preserve shape") {
  Rng rng(6);
  for (int rank : {2, 3}) {
    LkaSpec spec{.rank = rank, .channels = 16, .K = 7, .d = 2};
    ParamStore store;
    Initializer init(7);
    init_dlka_block(Scope(store), spec, init);
    Tensor x = random_tensor(rank == 3 ? Shape{1, 16, 8, 8, 4} : Shape{2, 16, 7, 9}, rng);
    Var out = dlka_block(Var::constant(x), Scope(store), spec);
    CHECK(max_abs_diff(out.value(), x) == 0);

    ParamStore rnd;
    Initializer ri(8, InitMode::kRandom);
    init_dlka_block(Scope(rnd), spec, ri);
    Var y = dlka_block(Var::constant(x), Scope(rnd), spec);
    CHECK(y.shape() == x.shape());
    CHECK(max_abs_diff(y.value(), x) > 0);
  }
  LkaSpec s2{.rank = 2, .channels = 4};
  ParamStore st;
  Initializer init(9);
  init_dlka_block(Scope(st), s2, init);
  CHECK_THROWS_AS(dlka_block_3d(Var::constant(Tensor::zeros({1, 4, 4, 4, 4})), Scope(st), s2),
                  ValidationError);
  CHECK_THROWS_AS(dlka_block_2d(Var::constant(Tensor::zeros({1, 3, 8, 8})), Scope(st), s2),
                  ShapeError);
}

TEST_CASE("deformable blocks with zero offsets equal rigid blocks") {
  Rng rng(10);
  for (int rank : {2, 3}) {
    LkaSpec spec{.rank = rank, .channels = 4, .K = 7, .d = 2};
    auto twins = testing::attention_twins(spec, 11, true);
    CHECK(twins.missing == 0);
    Tensor x = random_tensor(shape_for(rank, 1, 4, 6), rng);
    CHECK(max_abs_diff(dlka_block(Var::constant(x), Scope(twins.deformable), spec).value(),
                       dlka_block(Var::constant(x), Scope(twins.rigid), testing::rigid_of(spec))
                           .value()) <= 1e-12);
  }
}

TEST_CASE("parameter names of a deformable block") {
  ParamStore store;
  Initializer init(1);
  init_dlka_block(Scope(store).sub("b"), LkaSpec{.rank = 3, .channels = 4}, init);
  for (const char* n : {"b.norm1.scale", "b.attn.proj_in.weight", "b.attn.dw.weight",
                        "b.attn.dwd.weight", "b.attn.deform.weight",
                        "b.attn.deform.offset.weight", "b.attn.attn.weight",
                        "b.attn.proj_out.weight", "b.ffn.conv.weight", "b.ffn.proj.weight"})
    CHECK_MESSAGE(store.contains(n), n);
  CHECK_FALSE(store.contains("b.attn.proj_out.bias"));
}
