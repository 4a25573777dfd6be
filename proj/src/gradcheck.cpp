// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dlka/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dlka/lka.hpp"
#include "dlka/net.hpp"
#include "dlka/ops.hpp"
#include "dlka/train.hpp"

namespace dlka {

Tensor finite_diff(const std::function<real(const Tensor&)>& fn, const Tensor& x,
                   real h) {
  if (!(h > 0)) throw ValidationError("finite_diff: step must be positive");
  Tensor probe = x;
  Tensor out(x.shape());
  for (Index i = 0; i < x.numel(); ++i) {
    const real v = probe[i];
    probe[i] = v + h;
    const real fp = fn(probe);
    probe[i] = v - h;
    const real fm = fn(probe);
    probe[i] = v;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw ValidationError("finite_diff: function returned a non-finite value");
    }
    out[i] = (fp - fm) / (2 * h);
  }
  return out;
}

real relative_error(real analytic, real numeric) {
  return std::abs(analytic - numeric) /
         (std::abs(analytic) + std::abs(numeric) + real(1e-8));
}

namespace {

struct Projection {
  Tensor r;

  real loss(const Var& out) const { return dot(out.value(), r); }
};

std::vector<Index> pick_elements(Index numel, Index max_elements, Rng& rng) {
  std::vector<Index> idx(static_cast<size_t>(numel));
  std::iota(idx.begin(), idx.end(), Index{0});
  if (numel > max_elements) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<size_t>(max_elements));
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

}  // namespace

GradReport gradcheck(const std::string& op, const std::function<Var()>& forward,
                     const std::vector<NamedLeaf>& leaves, std::uint64_t seed,
                     const GradCheckOptions& opts) {
  GradReport report;
  report.op = op;
  report.seed = seed;
  Rng rng(seed ^ 0x6a09e667f3bcc909ULL);
  Projection proj;
  {
    const Var out = forward();
    proj.r = Tensor::uniform(out.shape(), -1, 1, rng);
  }
  auto analytic = [&]() {
    const Var out = forward();
    const Var loss = sum(mul(out, Var::constant(proj.r)));
    return backward(loss);
  };
  auto numeric = [&](Var leaf, Index i, real h) {
    Tensor& v = leaf.mutable_value();
    const real x0 = v[i];
    v[i] = x0 + h;
    const real fp = proj.loss(forward());
    v[i] = x0 - h;
    const real fm = proj.loss(forward());
    v[i] = x0;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw ValidationError("gradcheck: non-finite loss in " + op);
    }
    return (fp - fm) / (2 * h);
  };
  const Gradients base = analytic();
  for (const auto& [name, leaf_in] : leaves) {
    Var leaf = leaf_in;
    GradEntry entry;
    entry.name = name;
    const Tensor g = base.of(leaf);
    for (Index i : pick_elements(leaf.value().numel(), opts.max_elements, rng)) {
      real err = relative_error(g[i], numeric(leaf, i, opts.h));
      // Retries first move the stencil off a possible kink, then shrink the
      // step (high curvature), then widen it (roundoff on tiny gradients).
      for (int attempt = 0; attempt < opts.retries && err >= opts.threshold;
           ++attempt) {
        Tensor& v = leaf.mutable_value();
        const real x0 = v[i];
        real h = opts.h;
        real a = g[i];
        switch (attempt % 3) {
          case 0: {
            std::uniform_real_distribution<real> nudge(3, 9);
            v[i] = x0 + nudge(rng) * opts.h;
            a = analytic().of(leaf)[i];
            break;
          }
          case 1: h = opts.h / 10; break;
          default: h = opts.h * 100; break;
        }
        const real n = numeric(leaf, i, h);
        v[i] = x0;
        err = std::min(err, relative_error(a, n));
        ++entry.retried;
      }
      entry.max_rel_err = std::max(entry.max_rel_err, err);
      ++entry.checked;
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  report.pass = report.max_rel_err < opts.threshold;
  return report;
}

namespace {

Tensor rand(const Shape& s, Rng& rng, real lo = -1, real hi = 1) {
  return Tensor::uniform(s, lo, hi, rng);
}

// Offsets whose sampling coordinates sit at fractional parts in [0.25, 0.75].
Tensor jittered_offsets(const Shape& s, Rng& rng) {
  Tensor t(s);
  std::uniform_int_distribution<int> whole(-2, 1);
  std::uniform_real_distribution<real> frac(real(0.25), real(0.75));
  for (Index i = 0; i < t.numel(); ++i) t[i] = static_cast<real>(whole(rng)) + frac(rng);
  return t;
}

std::vector<NamedLeaf> store_leaves(const ParamStore& store) {
  std::vector<NamedLeaf> out;
  for (const std::string& n : store.names()) out.emplace_back(n, store.get(n));
  return out;
}

GradReport conv_case(const std::string& name, const ConvSpec& spec, const Shape& xs,
                     std::uint64_t seed, const GradCheckOptions& opts) {
  Rng rng(seed);
  Var x = Var::input(rand(xs, rng));
  Var w = Var::parameter(rand(spec.weight_shape(), rng));
  Var b = Var::parameter(rand(spec.bias_shape(), rng));
  return gradcheck(name, [&] { return conv(x, w, b, spec); },
                   {{"x", x}, {"weight", w}, {"bias", b}}, seed, opts);
}

GradReport conv_transpose_case(const std::string& name, const ConvSpec& spec,
                               const Shape& in_shape, std::uint64_t seed,
                               const GradCheckOptions& opts) {
  Rng rng(seed);
  Var y = Var::input(rand(spec.output_shape(in_shape), rng));
  Var w = Var::parameter(rand(spec.weight_shape(), rng));
  Var b = Var::parameter(rand(Shape{spec.in_channels}, rng));
  const std::vector<Index> out_spatial(in_shape.begin() + 2, in_shape.end());
  return gradcheck(name, [&] { return conv_transpose(y, w, b, spec, out_spatial); },
                   {{"y", y}, {"weight", w}, {"bias", b}}, seed, opts);
}

GradReport deform_case(const std::string& name, const ConvSpec& base, const Shape& xs,
                       std::uint64_t seed, const GradCheckOptions& opts) {
  Rng rng(seed);
  const DeformSpec ds = DeformSpec::follow(base);
  Var x = Var::input(rand(xs, rng));
  Var w = Var::parameter(rand(base.weight_shape(), rng));
  Var b = Var::parameter(rand(base.bias_shape(), rng));
  Shape os = base.output_shape(xs);
  os[1] = ds.offset_channels();
  Var off = Var::input(jittered_offsets(os, rng));
  return gradcheck(name, [&] { return deform_conv(x, w, b, off, ds); },
                   {{"x", x}, {"weight", w}, {"bias", b}, {"offsets", off}}, seed, opts);
}

GradReport deform_layer_case(std::uint64_t seed, const GradCheckOptions& opts) {
  Rng rng(seed);
  const ConvSpec base = ConvSpec::depthwise(2, 2, 3, 2);
  const DeformSpec ds = DeformSpec::follow(base);
  const ConvSpec os = ds.offset_conv_spec();
  Var x = Var::input(rand({1, 2, 6, 6}, rng));
  Var w = Var::parameter(rand(base.weight_shape(), rng));
  Var ow = Var::parameter(rand(os.weight_shape(), rng, real(-0.3), real(0.3)));
  Var ob = Var::parameter(jittered_offsets(os.bias_shape(), rng));
  return gradcheck(
      "offset_conv+deform_conv_depthwise2d",
      [&] { return deform_conv(x, w, Var{}, conv(x, ow, ob, os), ds); },
      {{"x", x}, {"weight", w}, {"offset.weight", ow}, {"offset.bias", ob}}, seed, opts);
}

LkaSpec small_lka(int rank, Index channels) {
  LkaSpec s;
  s.rank = rank;
  s.channels = channels;
  s.K = 5;
  s.d = 2;
  s.deformable = true;
  return s;
}

GradReport module_case(const std::string& name, const Shape& xs, std::uint64_t seed,
                       const GradCheckOptions& opts,
                       const std::function<void(const Scope&, Initializer&)>& init,
                       const std::function<Var(const Var&, const Scope&)>& apply) {
  Initializer ini(seed, InitMode::kRandom);
  ParamStore store;
  const Scope scope(store);
  init(scope, ini);
  Var x = Var::input(rand(xs, ini.rng));
  auto leaves = store_leaves(store);
  leaves.insert(leaves.begin(), NamedLeaf{"x", x});
  return gradcheck(name, [&] { return apply(x, scope); }, leaves, seed, opts);
}

std::vector<GradCase> build_cases() {
  std::vector<GradCase> c;
  c.push_back({"conv_dense_2d", [](std::uint64_t s, const GradCheckOptions& o) {
                 return conv_case("conv_dense_2d",
                                  ConvSpec::dense(2, 3, 4, 3).with_stride({2, 1}).same_padding(),
                                  {2, 3, 6, 5}, s, o);
               }});
  c.push_back({"conv_dense_3d", [](std::uint64_t s, const GradCheckOptions& o) {
                 return conv_case("conv_dense_3d", ConvSpec::dense(3, 2, 3, 3, 2),
                                  {1, 2, 5, 4, 4}, s, o);
               }});
  c.push_back({"conv_pointwise", [](std::uint64_t s, const GradCheckOptions& o) {
                 return conv_case("conv_pointwise", ConvSpec::pointwise(2, 3, 2),
                                  {2, 3, 4, 4}, s, o);
               }});
  c.push_back({"conv_depthwise_2d", [](std::uint64_t s, const GradCheckOptions& o) {
                 return conv_case("conv_depthwise_2d", ConvSpec::depthwise(2, 3, 3, 2),
                                  {2, 3, 7, 7}, s, o);
               }});
  c.push_back({"conv_depthwise_3d", [](std::uint64_t s, const GradCheckOptions& o) {
                 return conv_case("conv_depthwise_3d", ConvSpec::depthwise(3, 2, 3),
                                  {1, 2, 5, 5, 4}, s, o);
               }});
  c.push_back({"conv_transpose_2d", [](std::uint64_t s, const GradCheckOptions& o) {
                 ConvSpec spec = ConvSpec::dense(2, 3, 4, 2).with_stride({2, 2});
                 spec.same_padding();
                 return conv_transpose_case("conv_transpose_2d", spec, {1, 3, 6, 6}, s, o);
               }});
  c.push_back({"conv_transpose_3d", [](std::uint64_t s, const GradCheckOptions& o) {
                 ConvSpec spec = ConvSpec::dense(3, 2, 3, 3).with_stride({2, 2, 2});
                 spec.same_padding();
                 return conv_transpose_case("conv_transpose_3d", spec, {1, 2, 4, 4, 4}, s,
                                            o);
               }});
  c.push_back({"deform_conv_depthwise2d", [](std::uint64_t s, const GradCheckOptions& o) {
                 return deform_case("deform_conv_depthwise2d",
                                    ConvSpec::depthwise(2, 3, 3, 2), {2, 3, 6, 6}, s, o);
               }});
  c.push_back({"deform_conv_dense3d", [](std::uint64_t s, const GradCheckOptions& o) {
                 return deform_case("deform_conv_dense3d", ConvSpec::dense(3, 2, 2, 3),
                                    {1, 2, 4, 4, 3}, s, o);
               }});
  c.push_back({"offset_conv+deform_conv_depthwise2d", deform_layer_case});
  c.push_back({"gelu", [](std::uint64_t s, const GradCheckOptions& o) {
                 Rng rng(s);
                 Var x = Var::input(rand({2, 3, 4, 4}, rng, -3, 3));
                 return gradcheck("gelu", [&] { return gelu(x); }, {{"x", x}}, s, o);
               }});
  c.push_back({"layer_norm", [](std::uint64_t s, const GradCheckOptions& o) {
                 Rng rng(s);
                 Var x = Var::input(rand({2, 5, 3, 3}, rng, -2, 2));
                 Var g = Var::parameter(rand({5}, rng, real(0.5), real(1.5)));
                 Var b = Var::parameter(rand({5}, rng));
                 return gradcheck("layer_norm", [&] { return layer_norm(x, g, b); },
                                  {{"x", x}, {"scale", g}, {"shift", b}}, s, o);
               }});
  c.push_back({"elementwise", [](std::uint64_t s, const GradCheckOptions& o) {
                 Rng rng(s);
                 Var a = Var::input(rand({2, 3, 4}, rng));
                 Var b = Var::input(rand({2, 3, 4}, rng));
                 Var m = Var::input(rand({1, 3, 1}, rng));
                 return gradcheck("elementwise",
                                  [&] { return mul(sub(add(a, b), mul(a, b)), m); },
                                  {{"a", a}, {"b", b}, {"m", m}}, s, o);
               }});
  c.push_back({"reductions", [](std::uint64_t s, const GradCheckOptions& o) {
                 Rng rng(s);
                 Var x = Var::input(rand({2, 3, 4}, rng));
                 return gradcheck("reductions",
                                  [&] {
                                    Var r = reshape(square(x), {6, 4});
                                    return add(scale(sum(r), real(0.5)), mean(x));
                                  },
                                  {{"x", x}}, s, o);
               }});
  c.push_back({"dice_ce_loss", [](std::uint64_t s, const GradCheckOptions& o) {
                 Rng rng(s);
                 Var z = Var::input(rand({2, 3, 4, 4}, rng, -2, 2));
                 LabelMap labels{{2, 4, 4}, std::vector<std::uint8_t>(32)};
                 std::uniform_int_distribution<int> cls(0, 2);
                 for (auto& v : labels.data) v = static_cast<std::uint8_t>(cls(rng));
                 return gradcheck("dice_ce_loss", [&] { return dice_ce_loss(z, labels); },
                                  {{"logits", z}}, s, o);
               }});
  c.push_back({"lka_attention_2d", [](std::uint64_t s, const GradCheckOptions& o) {
                 const LkaSpec spec = small_lka(2, 3);
                 return module_case(
                     "lka_attention_2d", {1, 3, 6, 6}, s, o,
                     [&](const Scope& sc, Initializer& in) { init_lka_attention(sc, spec, in); },
                     [&](const Var& x, const Scope& sc) { return lka_attention(x, sc, spec); });
               }});
  c.push_back({"lka_attention_3d", [](std::uint64_t s, const GradCheckOptions& o) {
                 const LkaSpec spec = small_lka(3, 2);
                 return module_case(
                     "lka_attention_3d", {1, 2, 4, 4, 3}, s, o,
                     [&](const Scope& sc, Initializer& in) { init_lka_attention(sc, spec, in); },
                     [&](const Var& x, const Scope& sc) { return lka_attention(x, sc, spec); });
               }});
  c.push_back({"dlka_block_2d", [](std::uint64_t s, const GradCheckOptions& o) {
                 const LkaSpec spec = small_lka(2, 3);
                 return module_case(
                     "dlka_block_2d", {1, 3, 6, 6}, s, o,
                     [&](const Scope& sc, Initializer& in) { init_dlka_block(sc, spec, in); },
                     [&](const Var& x, const Scope& sc) { return dlka_block_2d(x, sc, spec); });
               }});
  c.push_back({"dlka_block_3d", [](std::uint64_t s, const GradCheckOptions& o) {
                 const LkaSpec spec = small_lka(3, 2);
                 return module_case(
                     "dlka_block_3d", {1, 2, 4, 4, 3}, s, o,
                     [&](const Scope& sc, Initializer& in) { init_dlka_block(sc, spec, in); },
                     [&](const Var& x, const Scope& sc) { return dlka_block_3d(x, sc, spec); });
               }});
  c.push_back({"patch_embed_3d", [](std::uint64_t s, const GradCheckOptions& o) {
                 return module_case(
                     "patch_embed_3d", {1, 1, 8, 8, 4}, s, o,
                     [](const Scope& sc, Initializer& in) { init_patch_embed(sc, 3, 1, 2, in); },
                     [](const Var& x, const Scope& sc) { return patch_embed(x, sc, 3, 1, 2); });
               }});
  c.push_back({"patch_expand_2d", [](std::uint64_t s, const GradCheckOptions& o) {
                 return module_case(
                     "patch_expand_2d", {1, 4, 3, 3}, s, o,
                     [](const Scope& sc, Initializer& in) { init_patch_expand(sc, 2, 4, in); },
                     [](const Var& x, const Scope& sc) { return patch_expand(x, sc, 2, 4); });
               }});
  return c;
}

}  // namespace

const std::vector<GradCase>& gradcheck_cases() {
  static const std::vector<GradCase> cases = build_cases();
  return cases;
}

std::string gradreport_csv_header() {
  return "op,seed,tensor,checked,retried,max_rel_err,pass";
}

std::string gradreport_csv_rows(const GradReport& report) {
  std::ostringstream os;
  os.precision(6);
  for (const GradEntry& e : report.entries) {
    os << report.op << ',' << report.seed << ',' << e.name << ',' << e.checked << ','
       << e.retried << ',' << e.max_rel_err << ','
       << (report.pass ? "pass" : "fail") << '\n';
  }
  return os.str();
}

}  // namespace dlka
