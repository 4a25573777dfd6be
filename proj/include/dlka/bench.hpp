// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

// Inference timing, deformable layers on vs. off.

#ifndef DLKA_BENCH_HPP_
#define DLKA_BENCH_HPP_

#include <optional>
#include <string>
#include <vector>

#include "dlka/net.hpp"

namespace dlka {

struct BenchOptions {
  std::vector<Index> batch_sizes{1};
  Index warmup = 50;
  Index repetitions = 1000;
  int threads = 1;
  std::uint64_t seed = 0;
  Shape dims;  // spatial extents of the random input
};

// Times are per image: batch wall time / batch size.
struct BenchRow {
  Index batch = 0;
  bool deformable = false;
  Index params = 0;
  Index repetitions = 0;
  double batch_mean_ms = 0;  // whole batch
  double mean_ms = 0;
  double median_ms = 0;
  double p95_ms = 0;
};

// Rows for every batch size, deformable on then off. Empty when
// repetitions == 0.
std::vector<BenchRow> bench_run(const NetConfig& cfg, const BenchOptions& opts);

std::string bench_csv_header();
std::string bench_csv_row(const BenchRow& row);

// `flag` when set, else DLKA_THREADS, else 1.
int resolve_threads(std::optional<int> flag);

// Linear-interpolation percentile, q in [0, 1]; values need not be sorted.
double percentile(std::vector<double> values, double q);

}  // namespace dlka

#endif  // DLKA_BENCH_HPP_
