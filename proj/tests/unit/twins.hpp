// Deformable modules with zeroed offset networks and their rigid twins.

#ifndef DLKA_TESTS_TWINS_HPP_
#define DLKA_TESTS_TWINS_HPP_

#include <string>

#include "dlka/lka.hpp"
#include "dlka/net.hpp"
#include "dlka/params.hpp"

namespace dlka::testing {

inline LkaSpec rigid_of(LkaSpec s) {
  s.deformable = false;
  s.rigid3d_layer = true;
  return s;
}

inline void zero_offsets(ParamStore& store) {
  for (const std::string& name : store.names()) {
    if (name.find("offset.") != std::string::npos) {
      store.assign(name, Tensor::zeros(store.get(name).shape()));
    }
  }
}

// Copies every parameter of `to` from the same name in `from`. Returns the
// number of names missing in `from`.
inline int copy_shared(const ParamStore& from, ParamStore& to) {
  int missing = 0;
  for (const std::string& name : to.names()) {
    if (from.contains(name)) {
      to.assign(name, from.get(name).value());
    } else {
      ++missing;
    }
  }
  return missing;
}

struct AttentionTwins {
  ParamStore deformable;
  ParamStore rigid;
  int missing = 0;
};

// Random weights everywhere except the offset networks, which are zero.
inline AttentionTwins attention_twins(const LkaSpec& spec, std::uint64_t seed,
                                      bool block) {
  AttentionTwins t;
  Initializer a(seed, InitMode::kRandom), b(seed + 1, InitMode::kRandom);
  if (block) {
    init_dlka_block(Scope(t.deformable), spec, a);
    init_dlka_block(Scope(t.rigid), rigid_of(spec), b);
  } else {
    init_lka_attention(Scope(t.deformable), spec, a);
    init_lka_attention(Scope(t.rigid), rigid_of(spec), b);
  }
  zero_offsets(t.deformable);
  t.missing = copy_shared(t.deformable, t.rigid);
  return t;
}

struct NetTwins {
  NetConfig rigid_cfg;
  ParamStore deformable;
  ParamStore rigid;
  int missing = 0;
};

inline NetTwins net_twins(const NetConfig& cfg, std::uint64_t seed) {
  NetTwins t;
  t.rigid_cfg = cfg;
  t.rigid_cfg.lka = rigid_of(cfg.lka);
  t.deformable = net_init(cfg, seed, InitMode::kRandom);
  t.rigid = net_init(t.rigid_cfg, seed + 1, InitMode::kRandom);
  zero_offsets(t.deformable);
  t.missing = copy_shared(t.deformable, t.rigid);
  return t;
}

}  // namespace dlka::testing

#endif  // DLKA_TESTS_TWINS_HPP_
