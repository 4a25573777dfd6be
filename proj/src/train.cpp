// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dlka/train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace dlka {

namespace {

bool params_finite(const ParamStore& params) {
  for (const std::string& n : params.names())
    for (real v : params.get(n).value().data())
      if (!std::isfinite(v)) return false;
  return true;
}

struct LossLayout {
  Index batch;
  Index classes;
  Index volume;
};

LossLayout check_loss_operands(const Tensor& logits, const LabelMap& labels) {
  if (logits.rank() < 3) throw ShapeError("dice_ce_loss: logits need (N, K, spatial...)");
  const Index n = logits.dim(0);
  const Index k = logits.dim(1);
  Shape expect{n};
  expect.insert(expect.end(), logits.shape().begin() + 2, logits.shape().end());
  if (labels.shape != expect || labels.numel() != shape_numel(expect)) {
    throw ShapeError("dice_ce_loss: labels " + shape_str(labels.shape) +
                     " do not match logits " + shape_str(logits.shape()));
  }
  for (std::uint8_t v : labels.data) {
    if (v >= k) {
      throw ValidationError("dice_ce_loss: label " + std::to_string(v) +
                            " out of range for " + std::to_string(k) + " classes");
    }
  }
  return {n, k, n * k == 0 ? 0 : logits.numel() / (n * k)};
}

// Softmax probabilities (same layout as logits) and summed -log p_label.
Tensor softmax_channels(const Tensor& logits, const LossLayout& l, const LabelMap& labels,
                        real* nll_sum) {
  Tensor p(logits.shape());
  real nll = 0;
  for (Index n = 0; n < l.batch; ++n) {
    const real* z = logits.ptr() + n * l.classes * l.volume;
    real* q = p.ptr() + n * l.classes * l.volume;
    for (Index v = 0; v < l.volume; ++v) {
      real m = z[v];
      for (Index c = 1; c < l.classes; ++c) m = std::max(m, z[c * l.volume + v]);
      real s = 0;
      for (Index c = 0; c < l.classes; ++c) {
        const real e = std::exp(z[c * l.volume + v] - m);
        q[c * l.volume + v] = e;
        s += e;
      }
      for (Index c = 0; c < l.classes; ++c) q[c * l.volume + v] /= s;
      const Index y = labels.data[static_cast<size_t>(n * l.volume + v)];
      nll += std::log(s) + m - z[y * l.volume + v];
    }
  }
  *nll_sum = nll;
  return p;
}

struct DiceSums {
  std::vector<real> inter;
  std::vector<real> denom;
};

DiceSums dice_sums(const Tensor& p, const LossLayout& l, const LabelMap& labels) {
  DiceSums s{std::vector<real>(static_cast<size_t>(l.classes), 0),
             std::vector<real>(static_cast<size_t>(l.classes), 0)};
  for (Index n = 0; n < l.batch; ++n) {
    const real* q = p.ptr() + n * l.classes * l.volume;
    const std::uint8_t* y = labels.data.data() + n * l.volume;
    for (Index c = 0; c < l.classes; ++c) {
      real inter = 0;
      real sum_p = 0;
      Index count = 0;
      for (Index v = 0; v < l.volume; ++v) {
        const real pv = q[c * l.volume + v];
        sum_p += pv;
        if (y[v] == c) {
          inter += pv;
          ++count;
        }
      }
      s.inter[static_cast<size_t>(c)] += inter;
      s.denom[static_cast<size_t>(c)] += sum_p + static_cast<real>(count);
    }
  }
  return s;
}

real dice_term(const DiceSums& s, Index classes) {
  real mean = 0;
  for (Index c = 0; c < classes; ++c) {
    const auto i = static_cast<size_t>(c);
    mean += (2 * s.inter[i] + kSoftDiceEps) / (s.denom[i] + kSoftDiceEps);
  }
  return real(1) - mean / static_cast<real>(classes);
}

}  // namespace

LossParts dice_ce_parts(const Tensor& logits, const LabelMap& labels, real w_dice,
                        real w_ce) {
  const LossLayout l = check_loss_operands(logits, labels);
  real nll = 0;
  const Tensor p = softmax_channels(logits, l, labels, &nll);
  LossParts out;
  const Index voxels = l.batch * l.volume;
  out.ce = voxels ? nll / static_cast<real>(voxels) : real(0);
  out.dice = dice_term(dice_sums(p, l, labels), l.classes);
  out.total = w_dice * out.dice + w_ce * out.ce;
  return out;
}

Var dice_ce_loss(const Var& logits, const LabelMap& labels, real w_dice, real w_ce) {
  const LossParts parts = dice_ce_parts(logits.value(), labels, w_dice, w_ce);
  auto node = logits.shared();
  return record(
      "dice_ce_loss", Tensor::scalar(parts.total), {logits},
      [node, labels, w_dice, w_ce](const Tensor& g) -> std::vector<Tensor> {
        const Tensor& z = node->value;
        const LossLayout l = check_loss_operands(z, labels);
        real nll = 0;
        const Tensor p = softmax_channels(z, l, labels, &nll);
        const DiceSums s = dice_sums(p, l, labels);
        const real go = g.item();
        const real ce_scale = (l.batch * l.volume) != 0
                                  ? w_ce / static_cast<real>(l.batch * l.volume)
                                  : real(0);
        const real dice_scale = w_dice / static_cast<real>(l.classes);
        // dL/dp for the Dice term, split into a per-class constant and a
        // label-dependent part.
        std::vector<real> dp_const(static_cast<size_t>(l.classes));
        std::vector<real> dp_label(static_cast<size_t>(l.classes));
        for (Index c = 0; c < l.classes; ++c) {
          const auto i = static_cast<size_t>(c);
          const real den = s.denom[i] + kSoftDiceEps;
          dp_const[i] = dice_scale * (2 * s.inter[i] + kSoftDiceEps) / (den * den);
          dp_label[i] = -dice_scale * 2 / den;
        }
        Tensor gz(z.shape());
        std::vector<real> dp(static_cast<size_t>(l.classes));
        for (Index n = 0; n < l.batch; ++n) {
          const real* q = p.ptr() + n * l.classes * l.volume;
          real* o = gz.ptr() + n * l.classes * l.volume;
          const std::uint8_t* y = labels.data.data() + n * l.volume;
          for (Index v = 0; v < l.volume; ++v) {
            real dot_pd = 0;
            for (Index c = 0; c < l.classes; ++c) {
              const auto i = static_cast<size_t>(c);
              dp[i] = dp_const[i] + (y[v] == c ? dp_label[i] : real(0));
              dot_pd += q[c * l.volume + v] * dp[i];
            }
            for (Index c = 0; c < l.classes; ++c) {
              const real pv = q[c * l.volume + v];
              const real dice_grad = pv * (dp[static_cast<size_t>(c)] - dot_pd);
              const real ce_grad = ce_scale * (pv - (y[v] == c ? real(1) : real(0)));
              o[c * l.volume + v] = go * (dice_grad + ce_grad);
            }
          }
        }
        return {std::move(gz)};
      });
}

void sgd_step(ParamStore& params, const Gradients& grads, OptimState& state) {
  for (const std::string& name : params.names()) {
    const Var& p = params.get(name);
    const Tensor* g = grads.find(p);
    auto [it, fresh] = state.velocity.try_emplace(name, Tensor(p.shape()));
    Tensor& v = it->second;
    if (!v.same_shape(p.value())) {
      throw ShapeError("sgd_step: velocity for '" + name + "' has shape " +
                       shape_str(v.shape()));
    }
    Tensor value = p.value();
    for (Index i = 0; i < value.numel(); ++i) {
      const real gi = (g ? (*g)[i] : real(0)) + state.weight_decay * value[i];
      v[i] = state.momentum * v[i] + gi;
      value[i] -= state.lr * v[i];
    }
    params.assign(name, value);
  }
}

LabelMap argmax_labels(const Tensor& logits) {
  if (logits.rank() < 3) throw ShapeError("argmax_labels: logits need (N, K, spatial...)");
  const Index n = logits.dim(0);
  const Index k = logits.dim(1);
  const Index vol = n * k == 0 ? 0 : logits.numel() / (n * k);
  LabelMap out;
  out.shape = {n};
  out.shape.insert(out.shape.end(), logits.shape().begin() + 2, logits.shape().end());
  out.data.resize(static_cast<size_t>(n * vol));
  for (Index b = 0; b < n; ++b) {
    const real* z = logits.ptr() + b * k * vol;
    for (Index v = 0; v < vol; ++v) {
      Index best = 0;
      for (Index c = 1; c < k; ++c) {
        if (z[c * vol + v] > z[best * vol + v]) best = c;
      }
      out.data[static_cast<size_t>(b * vol + v)] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

double dice_metric(std::span<const std::uint8_t> pred,
                   std::span<const std::uint8_t> truth, int cls) {
  if (pred.size() != truth.size()) throw ShapeError("dice_metric: size mismatch");
  std::int64_t inter = 0;
  std::int64_t np = 0;
  std::int64_t ng = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred[i] == cls;
    const bool b = truth[i] == cls;
    np += a;
    ng += b;
    inter += a && b;
  }
  if (np + ng == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

namespace {

std::vector<std::array<double, 3>> boundary_points(std::span<const std::uint8_t> mask,
                                                   const Shape& spatial,
                                                   const std::vector<double>& spacing) {
  const size_t r = spatial.size();
  const Shape strides = row_major_strides(spatial);
  std::vector<std::array<double, 3>> pts;
  std::vector<Index> idx(r, 0);
  for (Index flat = 0; flat < static_cast<Index>(mask.size()); ++flat) {
    Index rem = flat;
    for (size_t a = 0; a < r; ++a) {
      idx[a] = rem / strides[a];
      rem %= strides[a];
    }
    if (!mask[static_cast<size_t>(flat)]) continue;
    bool edge = false;
    for (size_t a = 0; a < r && !edge; ++a) {
      if (idx[a] == 0 || idx[a] + 1 == spatial[a] ||
          !mask[static_cast<size_t>(flat - strides[a])] ||
          !mask[static_cast<size_t>(flat + strides[a])]) {
        edge = true;
      }
    }
    if (!edge) continue;
    std::array<double, 3> p{0, 0, 0};
    for (size_t a = 0; a < r; ++a) {
      p[a] = static_cast<double>(idx[a]) * (spacing.empty() ? 1.0 : spacing[a]);
    }
    pts.push_back(p);
  }
  return pts;
}

void directed_distances(const std::vector<std::array<double, 3>>& from,
                        const std::vector<std::array<double, 3>>& to,
                        std::vector<double>& out) {
  for (const auto& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to) {
      const double dx = p[0] - q[0];
      const double dy = p[1] - q[1];
      const double dz = p[2] - q[2];
      best = std::min(best, dx * dx + dy * dy + dz * dz);
    }
    out.push_back(std::sqrt(best));
  }
}

}  // namespace

std::optional<double> hd95_metric(std::span<const std::uint8_t> pred_mask,
                                  std::span<const std::uint8_t> true_mask,
                                  const Shape& spatial,
                                  const std::vector<double>& spacing) {
  if (spatial.empty() || spatial.size() > 3) {
    throw ShapeError("hd95_metric: spatial rank must be 1..3");
  }
  if (pred_mask.size() != true_mask.size() ||
      static_cast<Index>(pred_mask.size()) != shape_numel(spatial)) {
    throw ShapeError("hd95_metric: mask sizes do not match " + shape_str(spatial));
  }
  if (!spacing.empty() && spacing.size() != spatial.size()) {
    throw ShapeError("hd95_metric: spacing rank mismatch");
  }
  const auto a = boundary_points(pred_mask, spatial, spacing);
  const auto b = boundary_points(true_mask, spatial, spacing);
  if (a.empty() || b.empty()) return std::nullopt;
  std::vector<double> d;
  d.reserve(a.size() + b.size());
  directed_distances(a, b, d);
  directed_distances(b, a, d);
  std::sort(d.begin(), d.end());
  const double pos = 0.95 * static_cast<double>(d.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, d.size() - 1);
  return d[lo] + (pos - static_cast<double>(lo)) * (d[hi] - d[lo]);
}

std::vector<Sample> synth_generate(int rank, Index n, const Shape& dims,
                                   Index num_classes, std::uint64_t seed) {
  if (rank != 2 && rank != 3) throw ValidationError("synth: rank must be 2 or 3");
  if (static_cast<int>(dims.size()) != rank) {
    throw ShapeError("synth: expected " + std::to_string(rank) + " dims, got " +
                     shape_str(dims));
  }
  if (num_classes < 2 || num_classes > 255) {
    throw ValidationError("synth: num_classes must be in [2, 255]");
  }
  for (Index e : dims) {
    if (e < 1) throw ShapeError("synth: extents must be positive");
  }
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(std::max<Index>(n, 0)));
  const Index vol = shape_numel(dims);
  const Shape strides = row_major_strides(dims);
  for (Index i = 0; i < n; ++i) {
    Sample s;
    s.seed = seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(i + 1));
    Rng rng(s.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.1);
    s.label.shape = {1};
    s.label.shape.insert(s.label.shape.end(), dims.begin(), dims.end());
    s.label.data.assign(static_cast<size_t>(vol), 0);
    for (Index c = 1; c < num_classes; ++c) {
      const bool box = unit(rng) < 0.5;
      double centre[3] = {0, 0, 0};
      double radius[3] = {1, 1, 1};
      for (int a = 0; a < rank; ++a) {
        const double ext = static_cast<double>(dims[static_cast<size_t>(a)]);
        radius[a] = (0.15 + 0.1 * unit(rng)) * ext;
        centre[a] = radius[a] + unit(rng) * (ext - 2 * radius[a]);
      }
      for (Index flat = 0; flat < vol; ++flat) {
        Index rem = flat;
        double acc = 0;
        bool inside = true;
        for (int a = 0; a < rank; ++a) {
          const Index coord = rem / strides[static_cast<size_t>(a)];
          rem %= strides[static_cast<size_t>(a)];
          const double u = (static_cast<double>(coord) + 0.5 - centre[a]) / radius[a];
          if (box) {
            inside = inside && std::abs(u) <= 1.0;
          } else {
            acc += u * u;
          }
        }
        if (!box) inside = acc <= 1.0;
        if (inside) s.label.data[static_cast<size_t>(flat)] = static_cast<std::uint8_t>(c);
      }
    }
    Shape img_shape{1, 1};
    img_shape.insert(img_shape.end(), dims.begin(), dims.end());
    s.image = Tensor(img_shape);
    const double inv = 1.0 / static_cast<double>(num_classes - 1);
    for (Index v = 0; v < vol; ++v) {
      s.image[v] = static_cast<real>(s.label.data[static_cast<size_t>(v)] * inv + noise(rng));
    }
    out.push_back(std::move(s));
  }
  return out;
}

TrainConfig TrainConfig::defaults(int rank) {
  TrainConfig t;
  if (rank == 2) {
    t.epochs = 40;
    t.batch = 4;
    t.lr = real(0.05);
    t.weight_decay = real(1e-4);
  }
  return t;
}

std::string metric_csv_header(Index num_classes) {
  std::string h = "epoch,loss,dice_mean";
  for (Index c = 1; c < num_classes; ++c) h += ",dice_c" + std::to_string(c);
  return h + ",hd95_mean";
}

std::string metric_csv_row(const EpochLog& log) {
  std::ostringstream os;
  os.precision(17);
  os << log.epoch << ',' << log.loss << ',' << log.dice_mean;
  for (double d : log.dice) os << ',' << d;
  os << ',';
  if (log.hd95_mean) {
    os << *log.hd95_mean;
  } else {
    os << "nan";
  }
  return os.str();
}

Split split_dataset(Index n, real val_fraction, std::uint64_t seed) {
  if (val_fraction < 0 || val_fraction >= 1) {
    throw ValidationError("split: val_fraction must be in [0, 1)");
  }
  std::vector<Index> order(static_cast<size_t>(std::max<Index>(n, 0)));
  std::iota(order.begin(), order.end(), Index{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x5b117u};
  Rng rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val =
      static_cast<size_t>(std::llround(static_cast<double>(n) * static_cast<double>(val_fraction)));
  Split s;
  s.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(s.val.begin(), s.val.end());
  return s;
}

Tensor batch_images(const std::vector<Sample>& data, std::span<const Index> idx) {
  std::vector<Tensor> items;
  items.reserve(idx.size());
  for (Index i : idx) items.push_back(data.at(static_cast<size_t>(i)).image);
  return stack_batch(items);
}

LabelMap batch_labels(const std::vector<Sample>& data, std::span<const Index> idx) {
  LabelMap out;
  for (Index i : idx) {
    const LabelMap& l = data.at(static_cast<size_t>(i)).label;
    if (out.shape.empty()) {
      out.shape = l.shape;
      out.shape[0] = 0;
    }
    out.shape[0] += l.shape[0];
    out.data.insert(out.data.end(), l.data.begin(), l.data.end());
  }
  return out;
}

EvalResult evaluate(const ParamStore& params, const NetConfig& cfg,
                    const std::vector<Sample>& data, std::span<const Index> indices,
                    bool with_hd95) {
  NoGradGuard no_grad;
  const Index fg = cfg.num_classes - 1;
  EvalResult r;
  r.dice.assign(static_cast<size_t>(fg), 0.0);
  if (indices.empty()) {
    r.dice_mean = std::numeric_limits<double>::quiet_NaN();
    std::fill(r.dice.begin(), r.dice.end(), r.dice_mean);
    return r;
  }
  double hd_sum = 0;
  Index hd_count = 0;
  for (Index i : indices) {
    const Sample& s = data.at(static_cast<size_t>(i));
    const Tensor logits = net_forward(Var::constant(s.image), params, cfg).value();
    const LabelMap pred = argmax_labels(logits);
    const Shape spatial(s.label.shape.begin() + 1, s.label.shape.end());
    for (Index c = 1; c <= fg; ++c) {
      r.dice[static_cast<size_t>(c - 1)] +=
          dice_metric(pred.data, s.label.data, static_cast<int>(c));
      if (with_hd95) {
        std::vector<std::uint8_t> pm(pred.data.size());
        std::vector<std::uint8_t> tm(pred.data.size());
        for (size_t v = 0; v < pm.size(); ++v) {
          pm[v] = pred.data[v] == c;
          tm[v] = s.label.data[v] == c;
        }
        if (auto h = hd95_metric(pm, tm, spatial)) {
          hd_sum += *h;
          ++hd_count;
        }
      }
    }
  }
  double mean = 0;
  for (double& d : r.dice) {
    d /= static_cast<double>(indices.size());
    mean += d;
  }
  r.dice_mean = fg ? mean / static_cast<double>(fg) : 1.0;
  if (hd_count) r.hd95_mean = hd_sum / static_cast<double>(hd_count);
  return r;
}

TrainState train_init(const NetConfig& net, const TrainConfig& train) {
  TrainState s;
  s.net = net;
  s.train = train;
  s.params = net_init(net, train.seed);
  s.optim.lr = train.lr;
  s.optim.momentum = train.momentum;
  s.optim.weight_decay = train.weight_decay;
  return s;
}

std::vector<EpochLog> train_loop(TrainState& state, const std::vector<Sample>& data,
                                 Index epochs, const EpochCallback& on_epoch) {
  if (data.empty()) throw ValidationError("train: empty dataset");
  if (state.train.batch < 1) throw ValidationError("train: batch must be >= 1");
  const Split split = split_dataset(static_cast<Index>(data.size()),
                                    state.train.val_fraction, state.train.seed);
  if (split.train.empty()) throw ValidationError("train: no training samples after split");
  std::vector<EpochLog> logs;
  const Index stop = state.epoch + epochs;
  for (Index e = state.epoch; e < stop; ++e) {
    std::vector<Index> order = split.train;
    std::seed_seq seq{static_cast<std::uint32_t>(state.train.seed),
                      static_cast<std::uint32_t>(state.train.seed >> 32),
                      static_cast<std::uint32_t>(e), 0xe90cu};
    Rng rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    Index batches = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(state.train.batch)) {
      const size_t end =
          std::min(order.size(), start + static_cast<size_t>(state.train.batch));
      const std::span<const Index> idx(order.data() + start, end - start);
      const Var x = Var::constant(batch_images(data, idx));
      const Var loss = dice_ce_loss(net_forward(x, state.params, state.net),
                                    batch_labels(data, idx));
      const real value = loss.value().item();
      if (!std::isfinite(value)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(e + 1) +
                              ", batch " + std::to_string(batches + 1));
      }
      const Gradients grads = backward(loss);
      sgd_step(state.params, grads, state.optim);
      if (!params_finite(state.params)) {
        throw DivergenceError("non-finite parameters after epoch " + std::to_string(e + 1) +
                              ", batch " + std::to_string(batches + 1));
      }
      loss_sum += value;
      ++batches;
    }
    EpochLog log;
    log.epoch = e + 1;
    log.loss = loss_sum / static_cast<double>(batches);
    const EvalResult ev =
        evaluate(state.params, state.net, data, split.val, state.train.hd95);
    log.dice_mean = ev.dice_mean;
    log.dice = ev.dice;
    log.hd95_mean = ev.hd95_mean;
    state.epoch = e + 1;
    logs.push_back(log);
    if (on_epoch) on_epoch(log);
    if (state.train.target_dice && log.dice_mean > *state.train.target_dice) break;
  }
  return logs;
}

}  // namespace dlka
