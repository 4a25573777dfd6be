#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "dlka/gradcheck.hpp"
#include "dlka/net.hpp"
#include "dlka/train.hpp"
#include "oracles.hpp"

using namespace dlka;
using testing::random_tensor;

namespace {

LabelMap labels_of(Shape shape, std::vector<std::uint8_t> data) {
  return LabelMap{std::move(shape), std::move(data)};
}

NetConfig tiny2d() {
  NetConfig c = NetConfig::defaults(2);
  c.base_channels = 4;
  c.encoder_blocks = 1;
  c.decoder_blocks = 1;
  c.lka.K = 7;
  c.lka.d = 2;
  return c;
}

// All-pairs symmetric surface distance percentile over 4-connected
// boundaries.
double hd95_brute(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b,
                  Index h, Index w) {
  auto boundary = [&](const std::vector<std::uint8_t>& m) {
    std::vector<std::pair<Index, Index>> pts;
    auto on = [&](Index i, Index j) {
      return i >= 0 && i < h && j >= 0 && j < w && m[static_cast<size_t>(i * w + j)];
    };
    for (Index i = 0; i < h; ++i)
      for (Index j = 0; j < w; ++j)
        if (on(i, j) && (!on(i - 1, j) || !on(i + 1, j) || !on(i, j - 1) || !on(i, j + 1)))
          pts.emplace_back(i, j);
    return pts;
  };
  const auto pa = boundary(a), pb = boundary(b);
  std::vector<double> d;
  auto directed = [&](const auto& from, const auto& to) {
    for (auto [i, j] : from) {
      double best = 1e300;
      for (auto [k, l] : to)
        best = std::min(best, std::hypot(double(i - k), double(j - l)));
      d.push_back(best);
    }
  };
  directed(pa, pb);
  directed(pb, pa);
  std::sort(d.begin(), d.end());
  const double pos = 0.95 * double(d.size() - 1);
  const auto lo = static_cast<size_t>(pos);
  const size_t hi = std::min(lo + 1, d.size() - 1);
  return d[lo] + (pos - double(lo)) * (d[hi] - d[lo]);
}

std::vector<std::uint8_t> square_mask(Index h, Index w, Index top, Index left, Index size) {
  std::vector<std::uint8_t> m(static_cast<size_t>(h * w), 0);
  for (Index i = top; i < top + size; ++i)
    for (Index j = left; j < left + size; ++j) m[static_cast<size_t>(i * w + j)] = 1;
  return m;
}

}  // namespace

TEST_CASE("loss closed form for uniform logits") {
  Tensor logits = Tensor::zeros({1, 2, 2, 2});
  LabelMap labels = labels_of({1, 2, 2}, {0, 1, 1, 0});
  LossParts parts = dice_ce_parts(logits, labels);
  CHECK(std::abs(parts.ce - std::log(2.0)) <= 1e-12);
  CHECK(std::abs(parts.dice - 0.5) <= 1e-5);
  const double want = 0.6 * 0.5 + 0.4 * std::log(2.0);
  // Soft Dice carries a small smoothing constant.
  CHECK(std::abs(parts.total - want) <= 1e-5);
  CHECK(std::abs(dice_ce_loss(Var::constant(logits), labels).value().item() - parts.total) <=
        1e-15);
}

TEST_CASE("loss saturates on confident correct logits") {
  LabelMap labels = labels_of({1, 2, 2}, {0, 1, 2, 1});
  Tensor logits = Tensor::zeros({1, 3, 2, 2});
  for (Index v = 0; v < 4; ++v) logits[labels.data[static_cast<size_t>(v)] * 4 + v] = 20;
  CHECK(dice_ce_parts(logits, labels).total < 1e-4);
  CHECK_THROWS_AS(dice_ce_parts(Tensor::zeros({1, 3, 2, 3}), labels), ShapeError);
  LabelMap bad = labels_of({1, 2, 2}, {0, 1, 3, 1});
  CHECK_THROWS(dice_ce_parts(logits, bad));
}

TEST_CASE("loss gradient") {
  Rng rng(1);
  Var logits = Var::input(random_tensor({2, 3, 3, 2}, rng, -2, 2));
  LabelMap labels = labels_of({2, 3, 2}, {0, 1, 2, 2, 1, 0, 1, 1, 0, 2, 2, 0});
  GradReport r = gradcheck("loss", [&] { return dice_ce_loss(logits, labels); },
                           {{"logits", logits}}, 1);
  CHECK(r.pass);
}

TEST_CASE("sgd arithmetic") {
  ParamStore p;
  const Var& w = p.add("w", Tensor::full({1}, 1));
  OptimState s;
  s.lr = real(0.1);
  s.momentum = real(0.9);
  s.weight_decay = 0;
  Gradients g;
  g.set(w.node(), Tensor::full({1}, 1));
  sgd_step(p, g, s);
  CHECK(s.velocity["w"][0] == 1);
  CHECK(std::abs(p.get("w").value()[0] - 0.9) <= 1e-15);

  sgd_step(p, g, s);
  // lr * (1 + (1 + mu)) * g in total.
  CHECK(std::abs(p.get("w").value()[0] - (1 - 0.1 * (1 + 1.9))) <= 1e-15);

  Gradients none;
  const real before = p.get("w").value()[0];
  const real v = s.velocity["w"][0];
  sgd_step(p, none, s);
  CHECK(std::abs(s.velocity["w"][0] - 0.9 * v) <= 1e-15);
  CHECK(p.get("w").value()[0] == doctest::Approx(before - 0.1 * 0.9 * v).epsilon(1e-14));

  ParamStore q;
  const Var& z = q.add("z", Tensor::full({2}, 3));
  OptimState frozen;
  frozen.weight_decay = 0;
  Gradients zero;
  zero.set(z.node(), Tensor::zeros({2}));
  sgd_step(q, zero, frozen);
  CHECK(q.get("z").value()[0] == 3);

  ParamStore r;
  r.add("r", Tensor::full({1}, 2));
  OptimState decay;
  decay.lr = real(0.5);
  decay.weight_decay = real(0.1);
  sgd_step(r, Gradients{}, decay);
  CHECK(std::abs(r.get("r").value()[0] - (2 - 0.5 * 0.2)) <= 1e-15);
}

TEST_CASE("dice metric") {
  const std::vector<std::uint8_t> a{1, 1, 0, 0, 1, 0};
  CHECK(dice_metric(a, a, 1) == 1);
  const std::vector<std::uint8_t> b{0, 0, 1, 1, 0, 1};
  CHECK(dice_metric(a, b, 1) == 0);
  const std::vector<std::uint8_t> g{1, 1, 1, 1, 0, 0};
  const std::vector<std::uint8_t> p{1, 1, 0, 0, 0, 0};
  CHECK(dice_metric(p, g, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  const std::vector<std::uint8_t> empty(6, 0);
  CHECK(dice_metric(empty, empty, 2) == 1);
}

TEST_CASE("hd95 metric") {
  const Index h = 12, w = 12;
  const auto a = square_mask(h, w, 3, 3, 5);
  const auto b = square_mask(h, w, 3, 4, 5);
  CHECK(hd95_metric(a, a, {h, w}).value() == 0);
  CHECK(std::abs(hd95_brute(a, b, h, w) - 1.0) <= 1e-12);
  CHECK(std::abs(hd95_metric(a, b, {h, w}).value() - 1.0) <= 1e-12);

  const auto c = square_mask(h, w, 0, 0, 4);
  const auto d = square_mask(h, w, 5, 6, 6);
  CHECK(std::abs(hd95_metric(c, d, {h, w}).value() - hd95_brute(c, d, h, w)) <= 1e-12);

  const std::vector<std::uint8_t> none(static_cast<size_t>(h * w), 0);
  CHECK_FALSE(hd95_metric(none, a, {h, w}).has_value());
  CHECK(hd95_metric(a, b, {h, w}, {2.0, 1.0}).value() >= 1.0);
}

TEST_CASE("synthetic data") {
  auto a = synth_generate(3, 3, {32, 32, 16}, 3, 9);
  auto b = synth_generate(3, 3, {32, 32, 16}, 3, 9);
  REQUIRE(a.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(max_abs_diff(a[i].image, b[i].image) == 0);
    CHECK(a[i].label.data == b[i].label.data);
    CHECK(a[i].image.shape() == Shape{1, 1, 32, 32, 16});
    CHECK(a[i].label.shape == Shape{1, 32, 32, 16});
  }
  CHECK(synth_generate(2, 0, {64, 64}, 3, 1).empty());
  CHECK_THROWS(synth_generate(2, 1, {64, 64, 2}, 3, 1));
}

TEST_CASE("synthetic foreground fraction band") {
  for (int rank : {2, 3}) {
    const Shape dims = rank == 3 ? Shape{32, 32, 16} : Shape{64, 64};
    double lo = 1, hi = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      auto s = synth_generate(rank, 1, dims, 3, seed);
      const auto& l = s[0].label.data;
      const double fg = double(std::count_if(l.begin(), l.end(), [](auto v) { return v != 0; })) /
                        double(l.size());
      lo = std::min(lo, fg);
      hi = std::max(hi, fg);
    }
    INFO("rank " << rank << " min " << lo << " max " << hi);
    CHECK(lo >= 0.01);
    CHECK(hi <= 0.60);
  }
}

TEST_CASE("dataset split") {
  Split a = split_dataset(64, real(0.2), 3);
  Split b = split_dataset(64, real(0.2), 3);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.val.size() == 13);
  std::set<Index> all(a.train.begin(), a.train.end());
  all.insert(a.val.begin(), a.val.end());
  CHECK(all.size() == 64);
  CHECK(split_dataset(10, 0, 1).val.empty());
  CHECK_THROWS(split_dataset(10, 1, 1));
}

TEST_CASE("metric CSV") {
  CHECK(metric_csv_header(3) == "epoch,loss,dice_mean,dice_c1,dice_c2,hd95_mean");
  EpochLog log;
  log.epoch = 2;
  log.loss = 0.5;
  log.dice_mean = 0.75;
  log.dice = {0.5, 1};
  const std::string row = metric_csv_row(log);
  CHECK(row.rfind("2,0.5,0.75,0.5,1,", 0) == 0);
}

TEST_CASE("one epoch on one sample lowers the loss") {
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    NetConfig c = tiny2d();
    TrainConfig t = TrainConfig::defaults(2);
    t.seed = seed;
    t.val_fraction = 0;
    t.hd95 = false;
    auto data = synth_generate(2, 1, {32, 32}, c.num_classes, seed);
    TrainState st = train_init(c, t);
    const Var x = Var::constant(data[0].image);
    const double before = dice_ce_loss(net_forward(x, st.params, c), data[0].label).value().item();
    train_loop(st, data, 1);
    const double after = dice_ce_loss(net_forward(x, st.params, c), data[0].label).value().item();
    wins += after < before;
  }
  CHECK(wins >= 3);
}

TEST_CASE("resumed training reproduces the trajectory") {
  NetConfig c = tiny2d();
  TrainConfig t = TrainConfig::defaults(2);
  t.seed = 4;
  t.hd95 = false;
  auto data = synth_generate(2, 6, {32, 32}, c.num_classes, 4);
  TrainState full = train_init(c, t);
  auto logs = train_loop(full, data, 4);
  TrainState part = train_init(c, t);
  auto first = train_loop(part, data, 2);
  auto second = train_loop(part, data, 2);
  REQUIRE(logs.size() == 4);
  CHECK(first[1].loss == logs[1].loss);
  CHECK(second[0].epoch == 3);
  CHECK(second[1].loss == logs[3].loss);
  CHECK(second[1].dice_mean == logs[3].dice_mean);
}

TEST_CASE("target dice stops early") {
  NetConfig c = tiny2d();
  TrainConfig t = TrainConfig::defaults(2);
  t.hd95 = false;
  t.target_dice = -1.0;
  auto data = synth_generate(2, 4, {32, 32}, c.num_classes, 2);
  TrainState st = train_init(c, t);
  CHECK(train_loop(st, data, 5).size() == 1);
  CHECK(st.epoch == 1);
}

TEST_CASE("divergence is reported") {
  NetConfig c = tiny2d();
  TrainConfig t = TrainConfig::defaults(2);
  t.lr = real(1e12);
  t.hd95 = false;
  auto data = synth_generate(2, 4, {32, 32}, c.num_classes, 2);
  TrainState st = train_init(c, t);
  CHECK_THROWS_AS(train_loop(st, data, 5), DivergenceError);
  TrainState empty = train_init(c, t);
  CHECK_THROWS_AS(train_loop(empty, {}, 1), ValidationError);
}

TEST_CASE("evaluation reports per-class dice") {
  NetConfig c = tiny2d();
  auto data = synth_generate(2, 3, {32, 32}, c.num_classes, 5);
  ParamStore p = net_init(c, 1);
  const std::vector<Index> idx{0, 1, 2};
  EvalResult r = evaluate(p, c, data, idx, true);
  CHECK(r.dice.size() == 2);
  CHECK(r.dice_mean == doctest::Approx((r.dice[0] + r.dice[1]) / 2));
  LabelMap am = argmax_labels(Tensor::zeros({1, 3, 2, 2}));
  CHECK(am.shape == Shape{1, 2, 2});
  CHECK(am.data == std::vector<std::uint8_t>(4, 0));
}
