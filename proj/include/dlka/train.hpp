// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

// Loss, optimizer, metrics, synthetic data and the training loop.

#ifndef DLKA_TRAIN_HPP_
#define DLKA_TRAIN_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlka/net.hpp"

namespace dlka {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Integer class map, shape (N, spatial...).
struct LabelMap {
  Shape shape;
  std::vector<std::uint8_t> data;

  Index numel() const { return static_cast<Index>(data.size()); }
};

struct LossParts {
  real total = 0;
  real dice = 0;
  real ce = 0;
};

constexpr real kDiceWeight = real(0.6);
constexpr real kCeWeight = real(0.4);
constexpr real kSoftDiceEps = real(1e-5);

// w_dice * (1 - mean_c soft Dice_c) + w_ce * mean softmax cross-entropy.
// Soft Dice sums over batch and voxels; the mean runs over all classes.
LossParts dice_ce_parts(const Tensor& logits, const LabelMap& labels,
                        real w_dice = kDiceWeight, real w_ce = kCeWeight);
Var dice_ce_loss(const Var& logits, const LabelMap& labels, real w_dice = kDiceWeight,
                 real w_ce = kCeWeight);

struct OptimState {
  real lr = real(0.01);
  real momentum = real(0.9);
  real weight_decay = real(3e-5);
  std::map<std::string, Tensor> velocity;
};

// v = mu v + (g + wd p); p -= lr v. Missing gradients count as zero.
void sgd_step(ParamStore& params, const Gradients& grads, OptimState& state);

LabelMap argmax_labels(const Tensor& logits);

// 2|P&G| / (|P| + |G|) for class `cls`; 1 when both are empty.
double dice_metric(std::span<const std::uint8_t> pred,
                   std::span<const std::uint8_t> truth, int cls);

// 95th percentile (linear interpolation) of the symmetric boundary-distance
// multiset. nullopt when either mask is empty.
std::optional<double> hd95_metric(std::span<const std::uint8_t> pred_mask,
                                  std::span<const std::uint8_t> true_mask,
                                  const Shape& spatial,
                                  const std::vector<double>& spacing = {});

struct Sample {
  Tensor image;     // (1, 1, spatial...)
  LabelMap label;   // (1, spatial...)
  std::uint64_t seed = 0;
};

// Random ellipsoids/boxes, one per foreground class, painted in class order;
// intensity c/(K-1) + N(0, 0.1).
std::vector<Sample> synth_generate(int rank, Index n, const Shape& dims,
                                   Index num_classes, std::uint64_t seed);

struct TrainConfig {
  Index epochs = 60;
  Index batch = 2;
  real lr = real(0.01);
  real momentum = real(0.9);
  real weight_decay = real(3e-5);
  std::uint64_t seed = 0;
  real val_fraction = real(0.2);
  // Stop once the validation foreground Dice exceeds this value.
  std::optional<double> target_dice;
  bool hd95 = true;

  static TrainConfig defaults(int rank);
};

struct EpochLog {
  Index epoch = 0;
  double loss = 0;
  double dice_mean = 0;
  std::vector<double> dice;  // foreground classes 1..K-1
  std::optional<double> hd95_mean;
};

std::string metric_csv_header(Index num_classes);
std::string metric_csv_row(const EpochLog& log);

struct Split {
  std::vector<Index> train;
  std::vector<Index> val;
};
Split split_dataset(Index n, real val_fraction, std::uint64_t seed);

struct EvalResult {
  double dice_mean = 0;
  std::vector<double> dice;
  std::optional<double> hd95_mean;
};
EvalResult evaluate(const ParamStore& params, const NetConfig& cfg,
                    const std::vector<Sample>& data, std::span<const Index> indices,
                    bool with_hd95 = true);

struct TrainState {
  NetConfig net;
  TrainConfig train;
  ParamStore params;
  OptimState optim;
  Index epoch = 0;  // completed epochs
};

TrainState train_init(const NetConfig& net, const TrainConfig& train);

using EpochCallback = std::function<void(const EpochLog&)>;

// Runs `epochs` more epochs from state.epoch. Throws DivergenceError on a
// non-finite loss.
std::vector<EpochLog> train_loop(TrainState& state, const std::vector<Sample>& data,
                                 Index epochs, const EpochCallback& on_epoch = {});

Tensor batch_images(const std::vector<Sample>& data, std::span<const Index> idx);
LabelMap batch_labels(const std::vector<Sample>& data, std::span<const Index> idx);

}  // namespace dlka

#endif  // DLKA_TRAIN_HPP_
