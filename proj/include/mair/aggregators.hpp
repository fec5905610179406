#pragma once

// Direction-aggregation baselines for the ablation harness. SSA proper lives
// in ssa.hpp; everything here exists to be swapped in against it.

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "mair/ops.hpp"
#include "mair/rng.hpp"
#include "mair/ssa.hpp"

namespace mair {

enum class Aggregation { SSA, Add, SeqGate, ChannelGate, DensePixelGate, DwPixelGate };

inline const char* to_string(Aggregation a) {
  switch (a) {
    case Aggregation::SSA: return "ssa";
    case Aggregation::Add: return "add";
    case Aggregation::SeqGate: return "seq-gate";
    case Aggregation::ChannelGate: return "channel-gate";
    case Aggregation::DensePixelGate: return "dense-pixel-gate";
    case Aggregation::DwPixelGate: return "dw-pixel-gate";
  }
  return "?";
}

inline Aggregation aggregation_from_string(const std::string& s) {
  if (s == "ssa") return Aggregation::SSA;
  if (s == "add") return Aggregation::Add;
  if (s == "seq-gate") return Aggregation::SeqGate;
  if (s == "channel-gate") return Aggregation::ChannelGate;
  if (s == "dense-pixel-gate") return Aggregation::DensePixelGate;
  if (s == "dw-pixel-gate") return Aggregation::DwPixelGate;
  throw std::invalid_argument("unknown aggregation '" + s + "'");
}

// Parameters for whichever aggregator a module was built with; only the
// fields of the active kind are allocated.
template <typename T>
struct AggParams {
  Aggregation kind = Aggregation::SSA;
  SsaParams<T> ssa;
  Tensor<T> seq_u, seq_c;          // seq-gate: score_i = u·pool_i + c_i, softmax over i
  Tensor<T> chan_w, chan_b;        // channel-gate: W^i = sigmoid(M·pool_i + b)
  Tensor<T> pix_w, pix_b;          // dense-pixel-gate: 1×1 conv K·D -> K, softmax over K
  std::array<Tensor<T>, 4> dw_w;   // dw-pixel-gate: per-direction depthwise 3×3
  std::array<Tensor<T>, 4> dw_b;

  static AggParams init(Aggregation kind, int D, int K, Rng& rng) {
    AggParams p;
    p.kind = kind;
    switch (kind) {
      case Aggregation::SSA:
        p.ssa = SsaParams<T>::init(D, K);
        break;
      case Aggregation::Add:
        break;
      case Aggregation::SeqGate:
        p.seq_u = rng.normal_tensor<T>({D}, 0.02);
        p.seq_c = Tensor<T>({K});
        break;
      case Aggregation::ChannelGate:
        p.chan_w = rng.normal_tensor<T>({D, D}, 0.02);
        p.chan_b = Tensor<T>({D});
        break;
      case Aggregation::DensePixelGate:
        p.pix_w = rng.normal_tensor<T>({K, K * D, 1, 1}, 0.02);
        p.pix_b = Tensor<T>({K});
        break;
      case Aggregation::DwPixelGate:
        for (int i = 0; i < K; ++i) {
          p.dw_w[static_cast<std::size_t>(i)] = rng.normal_tensor<T>({D, 3, 3}, 0.02);
          p.dw_b[static_cast<std::size_t>(i)] = Tensor<T>({D});
        }
        break;
    }
    return p;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    switch (kind) {
      case Aggregation::SSA:
        ssa.visit(prefix + ".ssa", f);
        break;
      case Aggregation::Add:
        break;
      case Aggregation::SeqGate:
        f(prefix + ".seq_u", seq_u);
        f(prefix + ".seq_c", seq_c);
        break;
      case Aggregation::ChannelGate:
        f(prefix + ".chan_w", chan_w);
        f(prefix + ".chan_b", chan_b);
        break;
      case Aggregation::DensePixelGate:
        f(prefix + ".pix_w", pix_w);
        f(prefix + ".pix_b", pix_b);
        break;
      case Aggregation::DwPixelGate:
        for (std::size_t i = 0; i < 4; ++i) {
          f(prefix + ".dw_w" + std::to_string(i), dw_w[i]);
          f(prefix + ".dw_b" + std::to_string(i), dw_b[i]);
        }
        break;
    }
  }
};

template <typename T>
struct AggVars {
  Aggregation kind = Aggregation::SSA;
  SsaVars<T> ssa;
  Var<T> seq_u, seq_c;
  Var<T> chan_w, chan_b;
  Var<T> pix_w, pix_b;
  std::array<Var<T>, 4> dw_w;
  std::array<Var<T>, 4> dw_b;
};

template <typename T, typename Binder>
AggVars<T> bind(AggParams<T>& p, Binder&& leaf) {
  AggVars<T> v;
  v.kind = p.kind;
  switch (p.kind) {
    case Aggregation::SSA:
      v.ssa = bind(p.ssa, leaf);
      break;
    case Aggregation::Add:
      break;
    case Aggregation::SeqGate:
      v.seq_u = leaf(p.seq_u);
      v.seq_c = leaf(p.seq_c);
      break;
    case Aggregation::ChannelGate:
      v.chan_w = leaf(p.chan_w);
      v.chan_b = leaf(p.chan_b);
      break;
    case Aggregation::DensePixelGate:
      v.pix_w = leaf(p.pix_w);
      v.pix_b = leaf(p.pix_b);
      break;
    case Aggregation::DwPixelGate:
      for (std::size_t i = 0; i < 4; ++i) {
        v.dw_w[i] = leaf(p.dw_w[i]);
        v.dw_b[i] = leaf(p.dw_b[i]);
      }
      break;
  }
  return v;
}

template <typename T>
Var<T> aggregate_directions(const std::vector<Var<T>>& inputs, const AggVars<T>& p, SsaNorm norm) {
  const int K = static_cast<int>(inputs.size());
  const int D = inputs[0].val().shape[0];
  switch (p.kind) {
    case Aggregation::SSA:
      return ssa_aggregate(inputs, p.ssa, norm);

    case Aggregation::Add: {
      Var<T> acc = inputs[0];
      for (int i = 1; i < K; ++i) acc = add(acc, inputs[static_cast<std::size_t>(i)]);
      return acc;
    }

    case Aggregation::SeqGate: {
      // one scalar weight per direction, softmax-normalized
      std::vector<Var<T>> scores;
      for (int i = 0; i < K; ++i) {
        Var<T> pool = reshape(spatial_mean(inputs[static_cast<std::size_t>(i)]), {1, D});
        Var<T> u = reshape(p.seq_u, {D, 1});
        scores.push_back(reshape(matmul(pool, u), {1}));
      }
      Var<T> s = add(concat_flat(scores), p.seq_c);
      Var<T> w = softmax(s, 0);
      Var<T> acc;
      for (int i = 0; i < K; ++i) {
        Var<T> wi = slice_flat(w, i, 1);
        Var<T> term = scale_by(inputs[static_cast<std::size_t>(i)], wi);
        acc = i == 0 ? term : add(acc, term);
      }
      return acc;
    }

    case Aggregation::ChannelGate: {
      // per-direction sigmoid channel gates from a shared D×D map
      Var<T> acc;
      for (int i = 0; i < K; ++i) {
        Var<T> pool = reshape(spatial_mean(inputs[static_cast<std::size_t>(i)]), {D, 1});
        Var<T> gate = sigmoid(reshape(add_bias_rows(matmul(p.chan_w, pool), p.chan_b), {D}));
        Var<T> term = scale_channels(inputs[static_cast<std::size_t>(i)], gate);
        acc = i == 0 ? term : add(acc, term);
      }
      return acc;
    }

    case Aggregation::DensePixelGate: {
      // per-pixel softmax gate over directions from a 1×1 conv on the concat
      Var<T> cat = concat_channels(inputs);
      Var<T> gates = conv2d(cat, p.pix_w, p.pix_b, 0);  // K×H×W
      Var<T> gn = softmax(gates, 0);
      const int H = inputs[0].val().shape[1], W = inputs[0].val().shape[2];
      Var<T> acc;
      for (int i = 0; i < K; ++i) {
        Var<T> gi = reshape(slice_rows(reshape(gn, {K, H * W}), i, 1), {H, W});
        Var<T> term = mul_site(inputs[static_cast<std::size_t>(i)], gi);
        acc = i == 0 ? term : add(acc, term);
      }
      return acc;
    }

    case Aggregation::DwPixelGate: {
      // per-direction per-pixel sigmoid gates from depthwise convs
      Var<T> acc;
      for (int i = 0; i < K; ++i) {
        const auto ii = static_cast<std::size_t>(i);
        Var<T> gate = sigmoid(dwconv2d(inputs[ii], p.dw_w[ii], p.dw_b[ii], 1));
        Var<T> term = mul(inputs[ii], gate);
        acc = i == 0 ? term : add(acc, term);
      }
      return acc;
    }
  }
  throw std::invalid_argument("aggregate_directions: unknown aggregation");
}

// Extra parameters an aggregation kind adds on top of plain addition.
inline long long aggregation_param_count(Aggregation kind, int D, int K) {
  switch (kind) {
    case Aggregation::SSA: return static_cast<long long>(D) * K * K + static_cast<long long>(D) * K;
    case Aggregation::Add: return 0;
    case Aggregation::SeqGate: return D + K;
    case Aggregation::ChannelGate: return static_cast<long long>(D) * D + D;
    case Aggregation::DensePixelGate: return static_cast<long long>(K) * K * D + K;
    case Aggregation::DwPixelGate: return static_cast<long long>(K) * (D * 9 + D);
  }
  return 0;
}

}  // namespace mair
