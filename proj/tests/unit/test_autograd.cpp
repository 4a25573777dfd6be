#include <cmath>

#include "doctest.h"
#include "dlka/activation.hpp"
#include "dlka/gradcheck.hpp"
#include "dlka/ops.hpp"
#include "oracles.hpp"

using namespace dlka;

TEST_CASE("linear loss gradient is the fixed factor") {
  Rng rng(1);
  Tensor xv = testing::random_tensor({2, 3, 4}, rng);
  Var w = Var::parameter(testing::random_tensor({2, 3, 4}, rng));
  Gradients g = backward(sum(mul(w, Var::constant(xv))));
  CHECK(max_abs_diff(g.of(w), xv) == 0);
}

TEST_CASE("mean squared error gradient") {
  Rng rng(2);
  Tensor tv = testing::random_tensor({5, 4}, rng);
  Var x = Var::input(testing::random_tensor({5, 4}, rng));
  Gradients g = backward(mean(square(sub(x, Var::constant(tv)))));
  const real n = 20;
  Tensor gx = g.of(x);
  for (Index i = 0; i < 20; ++i)
    CHECK(std::abs(gx[i] - 2 * (x.value()[i] - tv[i]) / n) <= 1e-15);
}

TEST_CASE("gradients accumulate over shared inputs") {
  Var x = Var::input(Tensor({3}, std::vector<real>{1, 2, 3}));
  Gradients g = backward(sum(add(mul(x, x), scale(x, 3))));
  for (Index i = 0; i < 3; ++i) CHECK(g.of(x)[i] == 2 * x.value()[i] + 3);
}

TEST_CASE("no-grad guard records nothing") {
  Var x = Var::input(Tensor({2}, real(1)));
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    Var y = mul(x, x);
    CHECK(y.is_leaf());
  }
  CHECK(grad_enabled());
  CHECK_FALSE(mul(x, x).is_leaf());
}

TEST_CASE("constants get no gradient") {
  Var c = Var::constant(Tensor({2}, real(4)));
  Var x = Var::input(Tensor({2}, real(1)));
  Gradients g = backward(sum(mul(c, x)));
  CHECK(g.find(c) == nullptr);
  CHECK(g.of(x)[0] == 4);
}

TEST_CASE("finite_diff examples") {
  Tensor x({2}, std::vector<real>{1, 2});
  Tensor sq = finite_diff([](const Tensor& t) { return dot(t, t); }, x);
  CHECK(std::abs(sq[0] - 2) <= 1e-8);
  CHECK(std::abs(sq[1] - 4) <= 1e-8);

  Tensor lin = finite_diff([](const Tensor& t) { return 3 * t[0] - 7 * t[1]; }, x);
  CHECK(std::abs(lin[0] - 3) <= 1e-10);
  CHECK(std::abs(lin[1] + 7) <= 1e-10);

  Tensor z = Tensor::zeros({4});
  Tensor gz = finite_diff(
      [](const Tensor& t) {
        real s = 0;
        for (Index i = 0; i < t.numel(); ++i) s += gelu(t[i]);
        return s;
      },
      z);
  for (Index i = 0; i < 4; ++i) CHECK(std::abs(gz[i] - 0.5) <= 1e-7);

  CHECK_THROWS_AS(finite_diff([](const Tensor&) { return std::nan(""); }, x),
                  ValidationError);
}

TEST_CASE("relative error definition") {
  CHECK(relative_error(1, 1) == 0);
  CHECK(relative_error(0, 0) == 0);
  CHECK(relative_error(1, 3) == doctest::Approx(2.0 / (4 + 1e-8)));
}

TEST_CASE("gradcheck flags a wrong backward") {
  Rng rng(3);
  Var x = Var::input(testing::random_tensor({3, 3}, rng));
  auto wrong = [&] {
    Tensor v = elementwise(x.value(), x.value(), ElementwiseOp::kMul);
    auto xn = x.shared();
    return record("wrong_square", v, {x}, [xn](const Tensor& g) {
      return std::vector<Tensor>{elementwise(g, xn->value, ElementwiseOp::kMul)};
    });
  };
  GradReport r = gradcheck("wrong_square", wrong, {{"x", x}}, 1);
  CHECK_FALSE(r.pass);
  auto right = [&] { return mul(x, x); };
  CHECK(gradcheck("square", right, {{"x", x}}, 1).pass);
}

TEST_CASE("every registered gradcheck case passes for one seed") {
  const auto& cases = gradcheck_cases();
  REQUIRE(cases.size() >= 20);
  bool saw_conv = false, saw_deform = false, saw_block2 = false, saw_block3 = false;
  for (const GradCase& c : cases) {
    saw_conv |= c.name == "conv_dense_2d";
    saw_deform |= c.name == "deform_conv_depthwise2d";
    saw_block2 |= c.name == "dlka_block_2d";
    saw_block3 |= c.name == "dlka_block_3d";
    GradReport r = c.run(7, GradCheckOptions{});
    INFO(c.name << " max rel err " << r.max_rel_err);
    CHECK(r.pass);
    CHECK(r.max_rel_err < 1e-4);
  }
  CHECK(saw_conv);
  CHECK(saw_deform);
  CHECK(saw_block2);
  CHECK(saw_block3);
}

TEST_CASE("gradcheck CSV") {
  GradReport r;
  r.op = "gelu";
  r.seed = 3;
  r.entries.push_back({"x", real(1e-9), 4, 0});
  r.pass = true;
  CHECK(gradreport_csv_header() == "op,seed,tensor,checked,retried,max_rel_err,pass");
  const std::string rows = gradreport_csv_rows(r);
  CHECK(rows.rfind("gelu,3,x,4,0,", 0) == 0);
}
