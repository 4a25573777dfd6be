// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dlka/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iterator>
#include <sstream>

namespace dlka {

Count CostQuery::volume() const {
  Count v = 1;
  for (Count s : spatial) v *= s;
  return v;
}

Count ceil_div(Count a, Count b) { return (a + b - 1) / b; }

Count ipow(Count base, int exp) {
  Count r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

Count params_decomposed(const CostQuery& q) {
  const Count kernels = ipow(ceil_div(q.K, q.d), q.rank) + ipow(2 * q.d - 1, q.rank);
  const Count bias = q.bias_mode == BiasMode::kEq3 ? 3 : 0;
  return q.channels * (kernels + bias + q.channels);
}

Count params_standard(Count channels, Count K, int rank) {
  return channels * channels * ipow(K, rank);
}

Count params_offset_net(Count in_channels, Count k, int rank) {
  const Count taps = ipow(k, rank);
  return in_channels * (rank * taps) * taps + rank * taps;
}

Count flops(const CostQuery& q) { return params_decomposed(q) * q.volume(); }

DilationChoice optimal_dilation(Count K, Count channels) {
  if (K < 2) throw ValidationError("optimal_dilation: K must be >= 2");
  const double k2 = static_cast<double>(K) * static_cast<double>(K);
  auto g = [k2](double d) { return 8 * d - 4 - 2 * k2 / (d * d * d); };
  double lo = 1;
  double hi = static_cast<double>(K);
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) < 0 ? lo : hi) = mid;
  }
  DilationChoice out;
  out.d_star = 0.5 * (lo + hi);
  CostQuery q;
  q.channels = channels;
  q.K = K;
  const Count down = std::max<Count>(1, static_cast<Count>(std::floor(out.d_star)));
  const Count up = std::max<Count>(1, static_cast<Count>(std::ceil(out.d_star)));
  q.d = down;
  const Count p_down = params_decomposed(q);
  q.d = up;
  const Count p_up = params_decomposed(q);
  out.d_int = p_up < p_down ? up : down;
  return out;
}

CostReport cost_table(const std::vector<Count>& channels, const CostQuery& base) {
  CostReport report{base, {}};
  for (Count c : channels) {
    CostQuery q = base;
    q.channels = c;
    CostRow row;
    row.channels = c;
    row.params_std = params_standard(c, q.K, q.rank);
    row.params_decomposed = params_decomposed(q);
    row.offset_dw = params_offset_net(c, q.k_dw, q.rank);
    row.offset_dwd = params_offset_net(c, q.k_dwd, q.rank);
    row.params_deform_total = row.params_decomposed + row.offset_dw + row.offset_dwd;
    row.flops_decomposed = flops(q);
    report.rows.push_back(row);
  }
  return report;
}

namespace {

const char* const kColumns[] = {"C",          "std_conv",   "decomp_conv",
                                "deform_decomp", "offset_ddw", "offset_ddwd",
                                "flops"};

std::vector<Count> row_values(const CostRow& r) {
  return {r.channels,  r.params_std, r.params_decomposed, r.params_deform_total,
          r.offset_dw, r.offset_dwd, r.flops_decomposed};
}

std::string grouped(Count v) {
  std::string digits = std::to_string(v < 0 ? -v : v);
  for (auto i = static_cast<std::ptrdiff_t>(digits.size()) - 3; i > 0; i -= 3)
    digits.insert(static_cast<size_t>(i), ",");
  return v < 0 ? "-" + digits : digits;
}

}  // namespace

std::string format_cost_table(const CostReport& report) {
  std::ostringstream os;
  os << "K=" << report.base.K << " d=" << report.base.d << " rank=" << report.base.rank
     << " bias=" << (report.base.bias_mode == BiasMode::kEq3 ? "eq3" : "table")
     << " offset kernels=(" << report.base.k_dw << "," << report.base.k_dwd << ")\n";
  for (const char* c : kColumns) os << std::setw(15) << c;
  os << '\n';
  for (const CostRow& r : report.rows) {
    for (Count v : row_values(r)) os << std::setw(15) << grouped(v);
    os << '\n';
  }
  return os.str();
}

std::string cost_table_csv(const CostReport& report) {
  std::ostringstream os;
  for (size_t i = 0; i < std::size(kColumns); ++i) os << (i ? "," : "") << kColumns[i];
  os << '\n';
  for (const CostRow& r : report.rows) {
    const auto v = row_values(r);
    for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    os << '\n';
  }
  return os.str();
}

AttentionCost attention_cost(const LkaSpec& spec) {
  AttentionCost c;
  const Count ch = spec.channels;
  const int r = spec.rank;
  CostQuery q;
  q.rank = r;
  q.channels = ch;
  q.K = spec.K;
  q.d = spec.d;
  q.bias_mode = spec.decomposition_bias ? BiasMode::kEq3 : BiasMode::kTable;
  c.decomposition = params_decomposed(q);
  if (r == 2 && spec.deformable) {
    c.offsets = params_offset_net(ch, spec.dw_kernel(), 2) +
                params_offset_net(ch, spec.dwd_kernel(), 2);
  }
  if (spec.has_layer3d()) {
    c.layer3d = params_standard(ch, spec.deform3d_kernel, 3) + ch;
    if (spec.deformable) c.offsets = params_offset_net(ch, spec.deform3d_kernel, 3);
  }
  // proj_in carries a bias, proj_out does not.
  c.projections = 2 * ch * ch + ch;
  return c;
}

}  // namespace dlka
