#pragma once

// Full restoration network: shallow 3×3 conv, a stack of residual groups of
// residual blocks (each block a VMM plus conv), global residual producing the
// deep feature, and one of two reconstruction heads.

#include <functional>
#include <string>
#include <vector>

#include "mair/mairm.hpp"
#include "mair/ops.hpp"

namespace mair {

enum class Head { SR, Restore };

inline const char* to_string(Head h) { return h == Head::SR ? "sr" : "restore"; }

inline Head head_from_string(const std::string& s) {
  if (s == "sr") return Head::SR;
  if (s == "restore") return Head::Restore;
  throw std::invalid_argument("unknown head '" + s + "'");
}

struct ModelConfig {
  int channels = 16;
  int n_groups = 2;
  int n_blocks = 2;  // blocks per group
  int stripe_width = 4;
  int ssm_state = 8;
  int expansion = 2;
  Head head = Head::Restore;
  int sr_scale = 2;
  int in_channels = 3;
  SsaNorm ssa_norm = SsaNorm::Softmax;
  Aggregation aggregation = Aggregation::SSA;
  ScanStrategy strategy = ScanStrategy::NSS;
  bool shift_stripes = true;  // alternate shifted stripes on odd-depth blocks

  void validate() const {
    if (channels < 1 || n_groups < 1 || n_blocks < 1 || stripe_width < 1 || ssm_state < 1 ||
        expansion < 1 || in_channels < 1)
      throw std::invalid_argument("model config: all counts must be >= 1");
    if (head == Head::SR && (sr_scale < 2 || sr_scale > 4))
      throw std::invalid_argument("model config: sr scale must be 2, 3 or 4");
  }

  // Stripe shift only alternates when the width is even (a half-width shift
  // of an odd stripe is not representable on the cell grid).
  MairmConfig block_mairm(int depth) const {
    MairmConfig m;
    m.channels = channels * expansion;
    m.stripe_width = stripe_width;
    m.shifted = shift_stripes && stripe_width % 2 == 0 && depth % 2 == 1;
    m.ssm_state = ssm_state;
    m.norm = ssa_norm;
    m.aggregation = aggregation;
    m.strategy = strategy;
    return m;
  }
};

enum class FeatureRole { Input, Shallow, Deep, Output };

template <typename T>
struct FeatureMap {
  Tensor<T> map;
  FeatureRole role = FeatureRole::Input;
};

template <typename T>
struct RmbParams {
  VmmParams<T> vmm;
  Tensor<T> conv_w, conv_b;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    vmm.visit(prefix + ".vmm", f);
    f(prefix + ".conv_w", conv_w);
    f(prefix + ".conv_b", conv_b);
  }
};

template <typename T>
struct RmgParams {
  std::vector<RmbParams<T>> blocks;
  Tensor<T> conv_w, conv_b;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].visit(prefix + ".b" + std::to_string(i), f);
    f(prefix + ".conv_w", conv_w);
    f(prefix + ".conv_b", conv_b);
  }
};

template <typename T>
struct Model {
  ModelConfig cfg;
  Tensor<T> shallow_w, shallow_b;
  std::vector<RmgParams<T>> groups;
  Tensor<T> body_w, body_b;
  // SR head: expand conv + pixel shuffle + output conv; Restore head: output conv
  Tensor<T> up_w, up_b;
  Tensor<T> out_w, out_b;

  template <typename F>
  void visit(F&& f) {
    f("shallow_w", shallow_w);
    f("shallow_b", shallow_b);
    for (std::size_t g = 0; g < groups.size(); ++g) groups[g].visit("g" + std::to_string(g), f);
    f("body_w", body_w);
    f("body_b", body_b);
    if (cfg.head == Head::SR) {
      f("up_w", up_w);
      f("up_b", up_b);
    }
    f("out_w", out_w);
    f("out_b", out_b);
  }

  long long param_count() {
    long long n = 0;
    visit([&n](const std::string&, Tensor<T>& t) { n += static_cast<long long>(t.numel()); });
    return n;
  }

  // Zeros the deep-extraction stage only (groups + final body conv); with
  // the residual chain this collapses F_D to F_S.
  void zero_deep_body() {
    visit([](const std::string& name, Tensor<T>& t) {
      if (name.rfind("g", 0) == 0 || name.rfind("body_", 0) == 0)
        for (auto& v : t.data) v = T(0);
    });
  }

  void zero_all() {
    visit([](const std::string&, Tensor<T>& t) {
      for (auto& v : t.data) v = T(0);
    });
  }
};

namespace detail {

template <typename T>
Tensor<T> conv_init(Rng& rng, int co, int ci, int k) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(ci) * k * k);
  return rng.uniform_tensor<T>({co, ci, k, k}, -bound, bound);
}

}  // namespace detail

template <typename T>
Model<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model<T> m;
  m.cfg = cfg;
  Rng rng(Rng::derive(seed, 0x6d6f64656c));  // "model" stream
  const int C = cfg.channels;
  m.shallow_w = detail::conv_init<T>(rng, C, cfg.in_channels, 3);
  m.shallow_b = Tensor<T>({C});
  int depth = 0;
  for (int g = 0; g < cfg.n_groups; ++g) {
    RmgParams<T> grp;
    for (int b = 0; b < cfg.n_blocks; ++b) {
      RmbParams<T> blk;
      blk.vmm = VmmParams<T>::init(C, cfg.block_mairm(depth), rng);
      blk.conv_w = detail::conv_init<T>(rng, C, C, 3);
      blk.conv_b = Tensor<T>({C});
      grp.blocks.push_back(std::move(blk));
      ++depth;
    }
    grp.conv_w = detail::conv_init<T>(rng, C, C, 3);
    grp.conv_b = Tensor<T>({C});
    m.groups.push_back(std::move(grp));
  }
  m.body_w = detail::conv_init<T>(rng, C, C, 3);
  m.body_b = Tensor<T>({C});
  if (cfg.head == Head::SR) {
    const int r = cfg.sr_scale;
    m.up_w = detail::conv_init<T>(rng, C * r * r, C, 3);
    m.up_b = Tensor<T>({C * r * r});
    m.out_w = detail::conv_init<T>(rng, 3, C, 3);
    m.out_b = Tensor<T>({3});
  } else {
    m.out_w = detail::conv_init<T>(rng, 3, C, 3);
    m.out_b = Tensor<T>({3});
  }
  return m;
}

// Per-tape binding of every parameter, in visit order. The registry pairs
// each parameter tensor with its leaf so the optimizer can read gradients.
template <typename T>
struct BoundModel {
  std::vector<std::pair<Tensor<T>*, Var<T>>> reg;
  std::vector<Var<T>> vars;  // same order as reg
};

template <typename T>
struct ModelVars {
  Var<T> shallow_w, shallow_b;
  struct Rmb {
    VmmVars<T> vmm;
    Var<T> conv_w, conv_b;
  };
  struct Rmg {
    std::vector<Rmb> blocks;
    Var<T> conv_w, conv_b;
  };
  std::vector<Rmg> groups;
  Var<T> body_w, body_b;
  Var<T> up_w, up_b, out_w, out_b;
};

// Binds every parameter through `leaf`, in the same order as visit().
template <typename T, typename LeafFn>
ModelVars<T> bind_model_fn(Model<T>& m, LeafFn&& leaf) {
  ModelVars<T> mv;
  mv.shallow_w = leaf(m.shallow_w);
  mv.shallow_b = leaf(m.shallow_b);
  for (auto& g : m.groups) {
    typename ModelVars<T>::Rmg gv;
    for (auto& b : g.blocks) {
      typename ModelVars<T>::Rmb bv;
      bv.vmm = bind(b.vmm, leaf);
      bv.conv_w = leaf(b.conv_w);
      bv.conv_b = leaf(b.conv_b);
      gv.blocks.push_back(std::move(bv));
    }
    gv.conv_w = leaf(g.conv_w);
    gv.conv_b = leaf(g.conv_b);
    mv.groups.push_back(std::move(gv));
  }
  mv.body_w = leaf(m.body_w);
  mv.body_b = leaf(m.body_b);
  if (m.cfg.head == Head::SR) {
    mv.up_w = leaf(m.up_w);
    mv.up_b = leaf(m.up_b);
  }
  mv.out_w = leaf(m.out_w);
  mv.out_b = leaf(m.out_b);
  return mv;
}

template <typename T>
ModelVars<T> bind_model(Model<T>& m, Tape<T>& tape, BoundModel<T>* reg = nullptr) {
  return bind_model_fn(m, [&tape, reg](Tensor<T>& t) {
    Var<T> v = tape.leaf(t);
    if (reg) reg->reg.emplace_back(&t, v);
    return v;
  });
}

// Shallow + deep features; the residual chain makes F_D collapse to F_S when
// the body weights are zero.
template <typename T>
struct BodyFeatures {
  Var<T> shallow;
  Var<T> deep;
};

template <typename T>
BodyFeatures<T> forward_body(const ModelConfig& cfg, const ModelVars<T>& mv, Var<T> x) {
  Var<T> fs = conv2d(x, mv.shallow_w, mv.shallow_b, 1);
  Var<T> t = fs;
  int depth = 0;
  for (const auto& g : mv.groups) {
    Var<T> gin = t;
    for (const auto& b : g.blocks) {
      Var<T> u = vmm_forward(t, cfg.block_mairm(depth), b.vmm);
      t = add(t, conv2d(u, b.conv_w, b.conv_b, 1));
      ++depth;
    }
    t = add(gin, conv2d(t, g.conv_w, g.conv_b, 1));
  }
  Var<T> fd = add(fs, conv2d(t, mv.body_w, mv.body_b, 1));
  return {fs, fd};
}

// Head dispatch on an already-bound parameter set; lets one binding serve
// several inputs on the same tape.
template <typename T>
Var<T> forward_bound(const ModelConfig& cfg, const ModelVars<T>& mv, Var<T> xv) {
  auto feats = forward_body(cfg, mv, xv);
  Var<T> fused = add(feats.shallow, feats.deep);
  if (cfg.head == Head::SR) {
    Var<T> up = pixel_shuffle(conv2d(fused, mv.up_w, mv.up_b, 1), cfg.sr_scale);
    return conv2d(up, mv.out_w, mv.out_b, 1);
  }
  return add(conv2d(fused, mv.out_w, mv.out_b, 1), xv);
}

// y' = Conv3x3(PixelShuffle(Conv3x3(F_S + F_D)))
template <typename T>
Var<T> forward_sr(Model<T>& model, Tape<T>& tape, const Tensor<T>& x, BoundModel<T>* reg = nullptr) {
  if (model.cfg.head != Head::SR)
    throw std::invalid_argument("forward_sr: model head is '" + std::string(to_string(model.cfg.head)) +
                                "', expected 'sr'");
  ModelVars<T> mv = bind_model(model, tape, reg);
  return forward_bound(model.cfg, mv, tape.leaf(x));
}

// y' = Conv3x3(F_S + F_D) + x
template <typename T>
Var<T> forward_restore(Model<T>& model, Tape<T>& tape, const Tensor<T>& x, BoundModel<T>* reg = nullptr) {
  if (model.cfg.head != Head::Restore)
    throw std::invalid_argument("forward_restore: model head is '" +
                                std::string(to_string(model.cfg.head)) + "', expected 'restore'");
  ModelVars<T> mv = bind_model(model, tape, reg);
  return forward_bound(model.cfg, mv, tape.leaf(x));
}

// Head dispatch used by the trainer and the CLI.
template <typename T>
Var<T> forward_model(Model<T>& model, Tape<T>& tape, const Tensor<T>& x, BoundModel<T>* reg = nullptr) {
  return model.cfg.head == Head::SR ? forward_sr(model, tape, x, reg)
                                    : forward_restore(model, tape, x, reg);
}

// Inference convenience: run the forward on a scratch tape.
template <typename T>
Tensor<T> infer(Model<T>& model, const Tensor<T>& x) {
  Tape<T> tape;
  return forward_model(model, tape, x).val();
}

// Shallow/deep features as tagged maps (inspection and tests).
template <typename T>
std::pair<FeatureMap<T>, FeatureMap<T>> extract_features(Model<T>& model, const Tensor<T>& x) {
  Tape<T> tape;
  ModelVars<T> mv = bind_model(model, tape);
  auto feats = forward_body(model.cfg, mv, tape.leaf(x));
  return {FeatureMap<T>{feats.shallow.val(), FeatureRole::Shallow},
          FeatureMap<T>{feats.deep.val(), FeatureRole::Deep}};
}

}  // namespace mair
