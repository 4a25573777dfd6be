// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

// Central-difference verification of the analytic gradients.

#ifndef DLKA_GRADCHECK_HPP_
#define DLKA_GRADCHECK_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dlka/autograd.hpp"

namespace dlka {

struct GradCheckOptions {
  real h = real(1e-5);
  real threshold = real(1e-4);
  // Elements checked per leaf; larger leaves are sampled at random.
  Index max_elements = 256;
  // Re-evaluations when an element fails: at a nudged point (sampling kinks
  // crossed by the stencil), then with step h/10, then with 100h.
  int retries = 3;
};

// (fn(x + h e_i) - fn(x - h e_i)) / 2h for every element. Throws
// ValidationError when fn returns a non-finite value.
Tensor finite_diff(const std::function<real(const Tensor&)>& fn, const Tensor& x,
                   real h = real(1e-5));

// |a - n| / (|a| + |n| + 1e-8)
real relative_error(real analytic, real numeric);

struct GradEntry {
  std::string name;
  real max_rel_err = 0;
  Index checked = 0;
  Index retried = 0;
};

struct GradReport {
  std::string op;
  std::uint64_t seed = 0;
  std::vector<GradEntry> entries;
  real max_rel_err = 0;
  bool pass = false;
};

using NamedLeaf = std::pair<std::string, Var>;

// Checks d/dleaf of sum(forward() * R) for a fixed random R. `forward` must
// rebuild the graph from the current leaf values on every call.
GradReport gradcheck(const std::string& op, const std::function<Var()>& forward,
                     const std::vector<NamedLeaf>& leaves, std::uint64_t seed,
                     const GradCheckOptions& opts = {});

struct GradCase {
  std::string name;
  std::function<GradReport(std::uint64_t seed, const GradCheckOptions& opts)> run;
};

// Every differentiable operator plus both full blocks.
const std::vector<GradCase>& gradcheck_cases();

std::string gradreport_csv_header();
std::string gradreport_csv_rows(const GradReport& report);

}  // namespace dlka

#endif  // DLKA_GRADCHECK_HPP_
