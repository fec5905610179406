#pragma once

// MaIR module: flatten the feature map along four scan directions, run the
// selective scan on each sequence, fold the results back to 2D and aggregate.
// The hosting Visual Mamba Module wraps it in a gated residual block.

#include <array>
#include <memory>
#include <vector>

#include "mair/aggregators.hpp"
#include "mair/ops.hpp"
#include "mair/scan.hpp"
#include "mair/ssm.hpp"

namespace mair {

struct MairmConfig {
  int channels = 32;  // inner width D
  int stripe_width = 4;
  bool shifted = false;
  int ssm_state = 8;
  SsaNorm norm = SsaNorm::Softmax;
  Aggregation aggregation = Aggregation::SSA;
  ScanStrategy strategy = ScanStrategy::NSS;

  // Effective spec for a given grid: stripes never exceed the width (tiny
  // inference inputs degrade to fewer/narrower stripes instead of failing),
  // and a clamp to odd width turns the half-stripe shift off.
  ScanSpec scan_spec(int grid_w) const {
    ScanSpec s;
    s.strategy = strategy;
    s.stripe_width = strategy == ScanStrategy::NSS ? std::min(stripe_width, grid_w) : stripe_width;
    s.shifted = shifted && strategy == ScanStrategy::NSS && s.stripe_width % 2 == 0;
    return s;
  }
};

template <typename T>
struct MairmParams {
  std::array<SsmParams<T>, 4> ssm;  // one parameter set per scan direction
  AggParams<T> agg;

  static MairmParams init(const MairmConfig& cfg, Rng& rng) {
    MairmParams p;
    for (auto& s : p.ssm) s = SsmParams<T>::init(cfg.channels, cfg.ssm_state, rng);
    p.agg = AggParams<T>::init(cfg.aggregation, cfg.channels, 4, rng);
    return p;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < 4; ++i) ssm[i].visit(prefix + ".ssm" + std::to_string(i), f);
    agg.visit(prefix + ".agg", f);
  }
};

template <typename T>
struct MairmVars {
  std::array<SsmVars<T>, 4> ssm;
  AggVars<T> agg;
};

template <typename T, typename Binder>
MairmVars<T> bind(MairmParams<T>& p, Binder&& leaf) {
  MairmVars<T> v;
  for (std::size_t i = 0; i < 4; ++i) v.ssm[i] = bind(p.ssm[i], leaf);
  v.agg = bind(p.agg, leaf);
  return v;
}

// F: D×H×W -> D×H×W. Permutations come from the process-wide cache, so new
// spatial sizes at inference time are built once and reused.
template <typename T>
Var<T> mairm_forward(Var<T> f, const MairmConfig& cfg, const MairmVars<T>& params) {
  const Tensor<T>& fv = f.val();
  if (fv.rank() != 3) throw std::invalid_argument("mairm_forward: input must be D×H×W");
  const int D = fv.shape[0], H = fv.shape[1], W = fv.shape[2];
  const int L = H * W;

  ScanSpec spec = cfg.scan_spec(W);
  Var<T> seq2d = reshape(f, {D, L});
  std::array<Var<T>, 4> branches;
  for (int dir = 0; dir < 4; ++dir) {
    spec.direction = dir;
    auto perm = PermutationCache::instance().get(spec, H, W);
    auto order = std::make_shared<const std::vector<int>>(perm->order);
    auto inv = std::make_shared<const std::vector<int>>(perm->inverse());
    Var<T> seq = permute_last(seq2d, order);                       // apply scan
    Var<T> y = s6_forward(seq, params.ssm[static_cast<std::size_t>(dir)]);
    Var<T> back = reshape(permute_last(y, inv), {D, H, W});        // inverse scan
    branches[static_cast<std::size_t>(dir)] = back;
  }
  DirectionalSequences<T> dirs(std::move(branches));
  return aggregate_directions(dirs.as_vector(), params.agg, cfg.norm);
}

// ---- Visual Mamba Module -----------------------------------------------------

// Gated block hosting the MaIR module:
//   X + scale ⊙ Proj( SiLU(Lin_b(LN(X))) ⊙ LN2(MaIRM(SiLU(DWConv(Lin_a(LN(X)))))) )
// with inner width D = expansion · C.
template <typename T>
struct VmmParams {
  Tensor<T> ln1_g, ln1_b;      // over C
  Tensor<T> lin_a_w, lin_a_b;  // 1×1 conv C -> D
  Tensor<T> dw_w, dw_b;        // depthwise 3×3 on D
  MairmParams<T> mairm;
  Tensor<T> ln2_g, ln2_b;      // over D
  Tensor<T> lin_b_w, lin_b_b;  // 1×1 conv C -> D (gate branch)
  Tensor<T> proj_w, proj_b;    // 1×1 conv D -> C
  Tensor<T> scale;             // {C}, residual scale

  static VmmParams init(int C, const MairmConfig& mcfg, Rng& rng) {
    const int D = mcfg.channels;
    VmmParams p;
    p.ln1_g = Tensor<T>::full({C}, T(1));
    p.ln1_b = Tensor<T>({C});
    const double ba = 1.0 / std::sqrt(static_cast<double>(C));
    p.lin_a_w = rng.uniform_tensor<T>({D, C, 1, 1}, -ba, ba);
    p.lin_a_b = Tensor<T>({D});
    const double bd = 1.0 / 3.0;  // fan-in 9
    p.dw_w = rng.uniform_tensor<T>({D, 3, 3}, -bd, bd);
    p.dw_b = Tensor<T>({D});
    p.mairm = MairmParams<T>::init(mcfg, rng);
    p.ln2_g = Tensor<T>::full({D}, T(1));
    p.ln2_b = Tensor<T>({D});
    p.lin_b_w = rng.uniform_tensor<T>({D, C, 1, 1}, -ba, ba);
    p.lin_b_b = Tensor<T>({D});
    const double bp = 1.0 / std::sqrt(static_cast<double>(D));
    p.proj_w = rng.uniform_tensor<T>({C, D, 1, 1}, -bp, bp);
    p.proj_b = Tensor<T>({C});
    p.scale = Tensor<T>::full({C}, T(1));
    return p;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".ln1_g", ln1_g);
    f(prefix + ".ln1_b", ln1_b);
    f(prefix + ".lin_a_w", lin_a_w);
    f(prefix + ".lin_a_b", lin_a_b);
    f(prefix + ".dw_w", dw_w);
    f(prefix + ".dw_b", dw_b);
    mairm.visit(prefix + ".mairm", f);
    f(prefix + ".ln2_g", ln2_g);
    f(prefix + ".ln2_b", ln2_b);
    f(prefix + ".lin_b_w", lin_b_w);
    f(prefix + ".lin_b_b", lin_b_b);
    f(prefix + ".proj_w", proj_w);
    f(prefix + ".proj_b", proj_b);
    f(prefix + ".scale", scale);
  }
};

template <typename T>
struct VmmVars {
  Var<T> ln1_g, ln1_b, lin_a_w, lin_a_b, dw_w, dw_b;
  MairmVars<T> mairm;
  Var<T> ln2_g, ln2_b, lin_b_w, lin_b_b, proj_w, proj_b, scale;
};

template <typename T, typename Binder>
VmmVars<T> bind(VmmParams<T>& p, Binder&& leaf) {
  VmmVars<T> v;
  v.ln1_g = leaf(p.ln1_g);
  v.ln1_b = leaf(p.ln1_b);
  v.lin_a_w = leaf(p.lin_a_w);
  v.lin_a_b = leaf(p.lin_a_b);
  v.dw_w = leaf(p.dw_w);
  v.dw_b = leaf(p.dw_b);
  v.mairm = bind(p.mairm, leaf);
  v.ln2_g = leaf(p.ln2_g);
  v.ln2_b = leaf(p.ln2_b);
  v.lin_b_w = leaf(p.lin_b_w);
  v.lin_b_b = leaf(p.lin_b_b);
  v.proj_w = leaf(p.proj_w);
  v.proj_b = leaf(p.proj_b);
  v.scale = leaf(p.scale);
  return v;
}

template <typename T>
Var<T> vmm_forward(Var<T> x, const MairmConfig& mcfg, const VmmVars<T>& p) {
  Var<T> u = layer_norm_channels(x, p.ln1_g, p.ln1_b);
  Var<T> a = silu(dwconv2d(conv2d(u, p.lin_a_w, p.lin_a_b, 0), p.dw_w, p.dw_b, 1));
  Var<T> m = layer_norm_channels(mairm_forward(a, mcfg, p.mairm), p.ln2_g, p.ln2_b);
  Var<T> gate = silu(conv2d(u, p.lin_b_w, p.lin_b_b, 0));
  Var<T> fused = conv2d(mul(gate, m), p.proj_w, p.proj_b, 0);
  return add(x, scale_channels(fused, p.scale));
}

}  // namespace mair
