// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dlka/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <thread>

#include "dlka/autograd.hpp"

namespace dlka {

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<size_t>(pos);
  const size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

int resolve_threads(std::optional<int> flag) {
  int n = 1;
  if (flag) {
    n = *flag;
  } else if (const char* env = std::getenv("DLKA_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0') throw ValidationError("DLKA_THREADS is not an integer");
    n = static_cast<int>(v);
  }
  if (n < 1) throw ValidationError("thread count must be >= 1");
  return n;
}

namespace {

// One batch split into contiguous per-thread slices.
void run_batch(const std::vector<Tensor>& slices, const ParamStore& params,
               const NetConfig& cfg) {
  auto one = [&](const Tensor& x) {
    NoGradGuard guard;
    net_forward(Var::constant(x), params, cfg);
  };
  if (slices.size() == 1) {
    one(slices[0]);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(slices.size());
  for (const Tensor& s : slices) pool.emplace_back(one, std::cref(s));
  for (auto& t : pool) t.join();
}

std::vector<Tensor> make_slices(Index batch, int threads, const NetConfig& cfg,
                                const Shape& dims, Rng& rng) {
  std::vector<Tensor> out;
  const Index parts = std::min<Index>(threads, batch);
  for (Index p = 0; p < parts; ++p) {
    const Index n = batch / parts + (p < batch % parts ? 1 : 0);
    Shape s{n, cfg.in_channels};
    s.insert(s.end(), dims.begin(), dims.end());
    out.push_back(Tensor::uniform(s, 0, 1, rng));
  }
  return out;
}

}  // namespace

std::vector<BenchRow> bench_run(const NetConfig& cfg, const BenchOptions& opts) {
  cfg.validate();
  cfg.check_input(opts.dims);
  if (opts.threads < 1) throw ValidationError("bench: threads must be >= 1");
  for (Index b : opts.batch_sizes) {
    if (b < 1) throw ValidationError("bench: batch sizes must be >= 1");
  }
  std::vector<BenchRow> rows;
  if (opts.repetitions <= 0) return rows;
  Rng rng(opts.seed);
  for (Index batch : opts.batch_sizes) {
    for (bool deformable : {true, false}) {
      NetConfig c = cfg;
      c.lka.deformable = deformable;
      const ParamStore params = net_init(c, opts.seed);
      const auto slices = make_slices(batch, opts.threads, c, opts.dims, rng);
      for (Index i = 0; i < opts.warmup; ++i) run_batch(slices, params, c);
      std::vector<double> per_image;
      per_image.reserve(static_cast<size_t>(opts.repetitions));
      double batch_total = 0;
      for (Index i = 0; i < opts.repetitions; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        run_batch(slices, params, c);
        const std::chrono::duration<double, std::milli> dt =
            std::chrono::steady_clock::now() - t0;
        batch_total += dt.count();
        per_image.push_back(dt.count() / static_cast<double>(batch));
      }
      BenchRow r;
      r.batch = batch;
      r.deformable = deformable;
      r.params = params.total_elements();
      r.repetitions = opts.repetitions;
      r.mean_ms = std::accumulate(per_image.begin(), per_image.end(), 0.0) /
                  static_cast<double>(per_image.size());
      r.batch_mean_ms = batch_total / static_cast<double>(per_image.size());
      r.median_ms = percentile(per_image, 0.5);
      r.p95_ms = percentile(per_image, 0.95);
      rows.push_back(r);
    }
  }
  return rows;
}

std::string bench_csv_header() {
  return "batch,deformable,params,repetitions,batch_mean_ms,mean_ms,median_ms,p95_ms";
}

std::string bench_csv_row(const BenchRow& r) {
  std::ostringstream os;
  os.precision(6);
  os << r.batch << ',' << (r.deformable ? 1 : 0) << ',' << r.params << ','
     << r.repetitions << ',' << r.batch_mean_ms << ',' << r.mean_ms << ',' << r.median_ms << ',' << r.p95_ms;
  return os.str();
}

}  // namespace dlka
