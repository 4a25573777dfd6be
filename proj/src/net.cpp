// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dlka/net.hpp"

#include <algorithm>

#include "dlka/ops.hpp"

namespace dlka {

namespace {

std::string indexed(const char* name, Index i) { return name + std::to_string(i); }

// Convolution whose kernel equals its stride (no overlap, no padding).
ConvSpec patchify(int rank, Index cin, Index cout, std::vector<Index> k) {
  ConvSpec s = ConvSpec::dense(rank, cin, cout, 1);
  s.kernel = k;
  s.stride = std::move(k);
  s.same_padding();
  return s;
}

ConvSpec downsample_spec(int rank, Index cin) {
  return patchify(rank, cin, 2 * cin, std::vector<Index>(static_cast<size_t>(rank), 2));
}

// Transposed spec taking `cin` channels up to `cout` at stride 2.
ConvSpec upsample_spec(int rank, Index cin, Index cout) {
  return patchify(rank, cout, cin, std::vector<Index>(static_cast<size_t>(rank), 2));
}

ConvSpec embed_spec(int rank, Index cin, Index cout, int step) {
  std::vector<Index> stride(static_cast<size_t>(rank), 2);
  if (rank == 3 && step == 0) stride[2] = 1;
  return ConvSpec::dense(rank, cin, cout, 3).with_stride(stride).same_padding().with_bias(
      false);
}

ConvSpec final_up_spec(const NetConfig& cfg) {
  return patchify(cfg.rank, cfg.final_channels(), cfg.base_channels, cfg.embed_factor());
}

ConvSpec input_skip_spec(const NetConfig& cfg) {
  return ConvSpec::dense(cfg.rank, cfg.in_channels, cfg.final_channels(), 3);
}

ConvSpec stage_skip_spec(const NetConfig& cfg, int stage) {
  const Index c = cfg.stage_channels(stage);
  return ConvSpec::pointwise(cfg.rank, c, c);
}

void init_conv_block(const Scope& scope, Index c, Initializer& init) {
  init_layer_norm(scope.sub("norm"), c, init);
  init_conv(scope.sub("conv1"), ConvSpec::dense(2, c, c, 3), init);
  init_conv(scope.sub("conv2"), ConvSpec::dense(2, c, c, 3), init, /*zero_init=*/true);
}

Var conv_block(const Var& x, const Scope& scope, Index c) {
  Var h = apply_layer_norm(x, scope.sub("norm"));
  h = gelu(apply_conv(h, scope.sub("conv1"), ConvSpec::dense(2, c, c, 3)));
  h = apply_conv(h, scope.sub("conv2"), ConvSpec::dense(2, c, c, 3));
  return add(h, x);
}

void init_lka_stage(const Scope& scope, const NetConfig& cfg, Index channels,
                    Index blocks, Initializer& init) {
  const LkaSpec spec = cfg.lka.with_channels(channels);
  for (Index b = 0; b < blocks; ++b) init_dlka_block(scope.sub(indexed("block", b)), spec, init);
}

Var lka_stage(Var x, const Scope& scope, const NetConfig& cfg, Index channels,
              Index blocks) {
  const LkaSpec spec = cfg.lka.with_channels(channels);
  for (Index b = 0; b < blocks; ++b) x = dlka_block(x, scope.sub(indexed("block", b)), spec);
  return x;
}

Shape spatial_of(const Shape& s) { return Shape(s.begin() + 2, s.end()); }

Var head(const Var& x, const Scope& root, const NetConfig& cfg) {
  const Index cf = cfg.final_channels();
  Var h = x;
  if (cfg.rank == 3) {
    h = gelu(apply_conv(h, root.sub("head.conv"), ConvSpec::dense(3, cf, cf, 3)));
  } else {
    h = gelu(apply_layer_norm(h, root.sub("head.norm")));
  }
  return apply_conv(h, root.sub("head.out"),
                    ConvSpec::pointwise(cfg.rank, cf, cfg.num_classes));
}

}  // namespace

NetConfig NetConfig::defaults(int rank) {
  NetConfig c;
  c.rank = rank;
  c.lka.rank = rank;
  if (rank == 2) {
    c.num_classes = 3;
    c.encoder_blocks = 1;
    c.decoder_blocks = 2;
    c.bottleneck_blocks = 0;
  }
  return c;
}

std::vector<Index> NetConfig::embed_factor() const {
  if (rank == 2) return {4, 4};
  return {4, 4, 2};
}

bool NetConfig::skip_enabled(int level) const { return level < skip_count; }

void NetConfig::validate() const {
  if (rank != 2 && rank != 3) throw ValidationError("net: rank must be 2 or 3");
  if (lka.rank != rank) throw ValidationError("net: lka rank differs from net rank");
  if (in_channels < 1) throw ValidationError("net: in_channels must be >= 1");
  if (num_classes < 2) throw ValidationError("net: num_classes must be >= 2");
  if (base_channels < 2 || base_channels % 2) {
    throw ValidationError("net: base_channels must be even and >= 2");
  }
  if (encoder_blocks < 0 || decoder_blocks < 0 || bottleneck_blocks < 0) {
    throw ValidationError("net: block counts must be >= 0");
  }
  if (skip_count < 0 || skip_count > stages() + (rank == 2 ? 0 : 1)) {
    throw ValidationError("net: skip_count must be in [0, " +
                          std::to_string(stages() + (rank == 2 ? 0 : 1)) + "]");
  }
  LkaSpec probe = lka;
  probe.channels = base_channels;
  probe.validate();
}

void NetConfig::check_input(const Shape& spatial) const {
  if (static_cast<int>(spatial.size()) != rank) {
    throw ShapeError("net: expected " + std::to_string(rank) + " spatial axes, got " +
                     shape_str(spatial));
  }
  const auto f = embed_factor();
  const Index levels = Index{1} << 3;
  for (size_t a = 0; a < spatial.size(); ++a) {
    const Index m = f[a] * levels;
    if (spatial[a] < m || spatial[a] % m) {
      throw ShapeError("net: spatial axis " + std::to_string(a) + " (" +
                       std::to_string(spatial[a]) + ") must be a positive multiple of " +
                       std::to_string(m));
    }
  }
}

void init_patch_embed(const Scope& scope, int rank, Index in_channels,
                      Index out_channels, Initializer& init) {
  init_conv(scope.sub("conv1"), embed_spec(rank, in_channels, out_channels, 0), init);
  init_conv(scope.sub("conv2"), embed_spec(rank, out_channels, out_channels, 1), init);
}

Var patch_embed(const Var& x, const Scope& scope, int rank, Index in_channels,
                Index out_channels) {
  const Shape sp = spatial_of(x.shape());
  for (size_t a = 0; a < sp.size(); ++a) {
    const Index f = (rank == 3 && a == 2) ? 2 : 4;
    if (sp[a] % f) {
      throw ShapeError("patch_embed: axis " + std::to_string(a) + " extent " +
                       std::to_string(sp[a]) + " not divisible by " + std::to_string(f));
    }
  }
  Var h = gelu(apply_conv(x, scope.sub("conv1"), embed_spec(rank, in_channels, out_channels, 0)));
  return apply_conv(h, scope.sub("conv2"), embed_spec(rank, out_channels, out_channels, 1));
}

void init_patch_expand(const Scope& scope, int rank, Index channels,
                       Initializer& init) {
  if (channels % 2) throw ValidationError("patch_expand: channel count must be even");
  init_conv_transpose(scope.sub("up"), upsample_spec(rank, channels, channels), init);
  init_conv(scope.sub("proj"), ConvSpec::pointwise(rank, channels, channels / 2), init);
}

Var patch_expand(const Var& x, const Scope& scope, int rank, Index channels) {
  if (channels % 2) throw ValidationError("patch_expand: channel count must be even");
  Var h = apply_conv_transpose(x, scope.sub("up"), upsample_spec(rank, channels, channels));
  return apply_conv(h, scope.sub("proj"), ConvSpec::pointwise(rank, channels, channels / 2));
}

void net_init_into(ParamStore& store, const NetConfig& cfg, Initializer& init) {
  cfg.validate();
  const Scope root(store);
  const int r = cfg.rank;
  const int stages = cfg.stages();
  init_patch_embed(root.sub("embed"), r, cfg.in_channels, cfg.base_channels, init);
  for (int s = 0; s < stages; ++s) {
    const Index c = cfg.stage_channels(s);
    const Scope st = root.sub(indexed("enc", s));
    if (r == 2) {
      for (Index b = 0; b < cfg.encoder_blocks; ++b) {
        init_conv_block(st.sub(indexed("block", b)), c, init);
      }
    } else {
      init_lka_stage(st, cfg, c, cfg.encoder_blocks, init);
    }
    if (r == 3 || s + 1 < stages) {
      init_conv(root.sub(indexed("down", s)), downsample_spec(r, c), init);
    }
  }
  if (r == 3) {
    init_lka_stage(root.sub("bottleneck"), cfg, cfg.stage_channels(stages),
                   cfg.bottleneck_blocks, init);
    for (int s = stages - 1; s >= 0; --s) {
      const Index c = cfg.stage_channels(s);
      init_conv_transpose(root.sub(indexed("up", s)), upsample_spec(r, 2 * c, c), init);
      if (cfg.skip_enabled(s + 1)) {
        init_conv(root.sub(indexed("skip", s + 1)), stage_skip_spec(cfg, s), init);
      }
      init_lka_stage(root.sub(indexed("dec", s)), cfg, c, cfg.decoder_blocks, init);
    }
  } else {
    for (int s = stages - 1; s >= 0; --s) {
      const Index c = cfg.stage_channels(s);
      init_lka_stage(root.sub(indexed("dec", s)), cfg, c, cfg.decoder_blocks, init);
      if (s > 0) {
        init_patch_expand(root.sub(indexed("expand", s)), r, c, init);
        if (cfg.skip_enabled(s)) {
          init_conv(root.sub(indexed("skip", s)), stage_skip_spec(cfg, s - 1), init);
        }
      }
    }
  }
  init_conv_transpose(root.sub("final_up"), final_up_spec(cfg), init);
  if (cfg.skip_enabled(0)) init_conv(root.sub("skip0"), input_skip_spec(cfg), init);
  const Index cf = cfg.final_channels();
  if (r == 3) {
    init_conv(root.sub("head.conv"), ConvSpec::dense(3, cf, cf, 3), init);
  } else {
    init_layer_norm(root.sub("head.norm"), cf, init);
  }
  init_conv(root.sub("head.out"), ConvSpec::pointwise(r, cf, cfg.num_classes), init,
            /*zero_init=*/true);
}

ParamStore net_init(const NetConfig& cfg, std::uint64_t seed, InitMode mode) {
  ParamStore store;
  Initializer init(seed, mode);
  net_init_into(store, cfg, init);
  return store;
}

Var net_forward_3d(const Var& x, const ParamStore& params, const NetConfig& cfg) {
  if (cfg.rank != 3) throw ValidationError("net_forward_3d: config rank is not 3");
  if (x.shape().size() != 5 || x.shape()[1] != cfg.in_channels) {
    throw ShapeError("net_forward_3d: expected (N, " + std::to_string(cfg.in_channels) +
                     ", H, W, D), got " + shape_str(x.shape()));
  }
  cfg.check_input(spatial_of(x.shape()));
  const Scope root(const_cast<ParamStore&>(params));
  const int stages = cfg.stages();
  Var h = patch_embed(x, root.sub("embed"), 3, cfg.in_channels, cfg.base_channels);
  std::vector<Var> skips;
  for (int s = 0; s < stages; ++s) {
    const Index c = cfg.stage_channels(s);
    h = lka_stage(h, root.sub(indexed("enc", s)), cfg, c, cfg.encoder_blocks);
    skips.push_back(h);
    h = apply_conv(h, root.sub(indexed("down", s)), downsample_spec(3, c));
  }
  h = lka_stage(h, root.sub("bottleneck"), cfg, cfg.stage_channels(stages),
                cfg.bottleneck_blocks);
  for (int s = stages - 1; s >= 0; --s) {
    const Index c = cfg.stage_channels(s);
    h = apply_conv_transpose(h, root.sub(indexed("up", s)), upsample_spec(3, 2 * c, c));
    if (cfg.skip_enabled(s + 1)) {
      h = add(h, apply_conv(skips[static_cast<size_t>(s)], root.sub(indexed("skip", s + 1)),
                            stage_skip_spec(cfg, s)));
    }
    h = lka_stage(h, root.sub(indexed("dec", s)), cfg, c, cfg.decoder_blocks);
  }
  h = apply_conv_transpose(h, root.sub("final_up"), final_up_spec(cfg));
  if (cfg.skip_enabled(0)) h = add(h, apply_conv(x, root.sub("skip0"), input_skip_spec(cfg)));
  return head(h, root, cfg);
}

Var net_forward_2d(const Var& x, const ParamStore& params, const NetConfig& cfg) {
  if (cfg.rank != 2) throw ValidationError("net_forward_2d: config rank is not 2");
  if (x.shape().size() != 4 || x.shape()[1] != cfg.in_channels) {
    throw ShapeError("net_forward_2d: expected (N, " + std::to_string(cfg.in_channels) +
                     ", H, W), got " + shape_str(x.shape()));
  }
  cfg.check_input(spatial_of(x.shape()));
  const Scope root(const_cast<ParamStore&>(params));
  const int stages = cfg.stages();
  Var h = patch_embed(x, root.sub("embed"), 2, cfg.in_channels, cfg.base_channels);
  std::vector<Var> skips;
  for (int s = 0; s < stages; ++s) {
    const Index c = cfg.stage_channels(s);
    const Scope st = root.sub(indexed("enc", s));
    for (Index b = 0; b < cfg.encoder_blocks; ++b) {
      h = conv_block(h, st.sub(indexed("block", b)), c);
    }
    skips.push_back(h);
    if (s + 1 < stages) h = apply_conv(h, root.sub(indexed("down", s)), downsample_spec(2, c));
  }
  for (int s = stages - 1; s >= 0; --s) {
    const Index c = cfg.stage_channels(s);
    h = lka_stage(h, root.sub(indexed("dec", s)), cfg, c, cfg.decoder_blocks);
    if (s > 0) {
      h = patch_expand(h, root.sub(indexed("expand", s)), 2, c);
      if (cfg.skip_enabled(s)) {
        h = add(h, apply_conv(skips[static_cast<size_t>(s - 1)], root.sub(indexed("skip", s)),
                              stage_skip_spec(cfg, s - 1)));
      }
    }
  }
  h = apply_conv_transpose(h, root.sub("final_up"), final_up_spec(cfg));
  if (cfg.skip_enabled(0)) h = add(h, apply_conv(x, root.sub("skip0"), input_skip_spec(cfg)));
  return head(h, root, cfg);
}

Var net_forward(const Var& x, const ParamStore& params, const NetConfig& cfg) {
  return cfg.rank == 2 ? net_forward_2d(x, params, cfg) : net_forward_3d(x, params, cfg);
}

std::vector<StageSupport> receptive_field_report(const NetConfig& cfg) {
  cfg.validate();
  const Index s_taps = cfg.lka.support();
  std::vector<StageSupport> out;
  auto push = [&](std::string name, Index blocks, int level) {
    if (blocks == 0) return;
    StageSupport st;
    st.name = std::move(name);
    st.blocks = blocks;
    st.taps = blocks * (s_taps - 1) + 1;
    for (Index f : cfg.embed_factor()) {
      st.stride.push_back(f << level);
      st.input_extent.push_back(st.taps * (f << level));
    }
    out.push_back(std::move(st));
  };
  const int stages = cfg.stages();
  if (cfg.rank == 3) {
    for (int s = 0; s < stages; ++s) push(indexed("enc", s), cfg.encoder_blocks, s);
    push("bottleneck", cfg.bottleneck_blocks, stages);
  }
  for (int s = stages - 1; s >= 0; --s) push(indexed("dec", s), cfg.decoder_blocks, s);
  return out;
}

}  // namespace dlka
