#pragma once

// Sequence Shuffle Attention: pool the K direction-wise maps, interleave the
// pooled channels so each channel's K entries sit together, run a per-channel
// K×K affine map (grouped convolution), undo the interleave, normalize, and
// reweight the maps channel-wise.

#include <array>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "mair/ops.hpp"
#include "mair/rng.hpp"

namespace mair {

enum class SsaNorm { Softmax, Sigmoid, Identity };

inline const char* to_string(SsaNorm n) {
  switch (n) {
    case SsaNorm::Softmax: return "softmax";
    case SsaNorm::Sigmoid: return "sigmoid";
    case SsaNorm::Identity: return "identity";
  }
  return "?";
}

inline SsaNorm ssa_norm_from_string(const std::string& s) {
  if (s == "softmax") return SsaNorm::Softmax;
  if (s == "sigmoid") return SsaNorm::Sigmoid;
  if (s == "identity") return SsaNorm::Identity;
  throw std::invalid_argument("unknown ssa normalization '" + s + "'");
}

struct ShuffleLayout {
  int k = 0;
  int d = 0;
  int length() const { return k * d; }
};

// shuffle sends source position k·D+d to d·K+k; unshuffle is the inverse.
inline std::vector<int> shuffle_gather_order(ShuffleLayout lay) {
  std::vector<int> order(static_cast<std::size_t>(lay.length()));
  for (int d = 0; d < lay.d; ++d)
    for (int k = 0; k < lay.k; ++k) order[static_cast<std::size_t>(d) * lay.k + k] = k * lay.d + d;
  return order;
}

inline std::vector<int> unshuffle_gather_order(ShuffleLayout lay) {
  std::vector<int> order(static_cast<std::size_t>(lay.length()));
  for (int k = 0; k < lay.k; ++k)
    for (int d = 0; d < lay.d; ++d) order[static_cast<std::size_t>(k) * lay.d + d] = d * lay.k + k;
  return order;
}

// Plain-vector forms used by tests and oracles.
template <typename T>
std::vector<T> sequence_shuffle(const std::vector<T>& v, int K) {
  if (K < 1 || v.size() % static_cast<std::size_t>(K) != 0)
    throw std::invalid_argument("sequence_shuffle: length " + std::to_string(v.size()) +
                                " not divisible by K=" + std::to_string(K));
  const ShuffleLayout lay{K, static_cast<int>(v.size()) / K};
  const auto order = shuffle_gather_order(lay);
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[static_cast<std::size_t>(order[i])];
  return out;
}

template <typename T>
std::vector<T> sequence_unshuffle(const std::vector<T>& v, int K) {
  if (K < 1 || v.size() % static_cast<std::size_t>(K) != 0)
    throw std::invalid_argument("sequence_unshuffle: length not divisible by K");
  const ShuffleLayout lay{K, static_cast<int>(v.size()) / K};
  const auto order = unshuffle_gather_order(lay);
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[static_cast<std::size_t>(order[i])];
  return out;
}

// Grouped affine map on the shuffled vector: entry group d (K contiguous
// values) is mapped by its own K×K matrix plus bias.
// v: {D·K}, w: {D,K,K}, b: {D,K}.
template <typename T>
Var<T> group_excite(Var<T> v, Var<T> w, Var<T> b) {
  detail::check_same_tape(v, w, "group_excite");
  detail::check_same_tape(v, b, "group_excite");
  const Tensor<T>& vv = v.val();
  const Tensor<T>& wv = w.val();
  if (vv.rank() != 1) throw std::invalid_argument("group_excite: input must be rank-1");
  if (wv.rank() != 3 || wv.shape[1] != wv.shape[2])
    throw std::invalid_argument("group_excite: weights must be D×K×K, got " + shape_str(wv.shape));
  const int D = wv.shape[0], K = wv.shape[1];
  if (vv.numel() != static_cast<std::size_t>(D) * K)
    throw std::invalid_argument("group_excite: weight count " + std::to_string(wv.numel()) +
                                " does not cover input length " + std::to_string(vv.numel()));
  if (b.val().numel() != vv.numel())
    throw std::invalid_argument("group_excite: bias length must equal input length");

  Tensor<T> out({D * K});
  for (int d = 0; d < D; ++d)
    for (int i = 0; i < K; ++i) {
      T acc = b.val().data[static_cast<std::size_t>(d) * K + i];
      for (int j = 0; j < K; ++j)
        acc += wv.data[(static_cast<std::size_t>(d) * K + i) * K + j] *
               vv.data[static_cast<std::size_t>(d) * K + j];
      out.data[static_cast<std::size_t>(d) * K + i] = acc;
    }

  const int pv = v.id, pw = w.id, pb = b.id;
  return v.tape->record(std::move(out), [pv, pw, pb, D, K](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& vv2 = t.value(pv);
    const Tensor<T>& wv2 = t.value(pw);
    Tensor<T>& gv = t.grad_buf(pv);
    Tensor<T>& gw = t.grad_buf(pw);
    Tensor<T>& gb = t.grad_buf(pb);
    for (int d = 0; d < D; ++d)
      for (int i = 0; i < K; ++i) {
        const T gi = g.data[static_cast<std::size_t>(d) * K + i];
        gb.data[static_cast<std::size_t>(d) * K + i] += gi;
        for (int j = 0; j < K; ++j) {
          gw.data[(static_cast<std::size_t>(d) * K + i) * K + j] +=
              gi * vv2.data[static_cast<std::size_t>(d) * K + j];
          gv.data[static_cast<std::size_t>(d) * K + j] +=
              gi * wv2.data[(static_cast<std::size_t>(d) * K + i) * K + j];
        }
      }
  });
}

template <typename T>
struct SsaParams {
  Tensor<T> group_w;  // D×K×K
  Tensor<T> group_b;  // D×K

  // identity/K weights make the initial aggregation close to a plain mean
  static SsaParams init(int D, int K) {
    SsaParams p;
    p.group_w = Tensor<T>({D, K, K});
    for (int d = 0; d < D; ++d)
      for (int i = 0; i < K; ++i)
        p.group_w.data[(static_cast<std::size_t>(d) * K + i) * K + i] = T(1) / static_cast<T>(K);
    p.group_b = Tensor<T>({D, K});
    return p;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".group_w", group_w);
    f(prefix + ".group_b", group_b);
  }
};

template <typename T>
struct SsaVars {
  Var<T> group_w, group_b;
};

template <typename T, typename Binder>
SsaVars<T> bind(SsaParams<T>& p, Binder&& leaf) {
  return SsaVars<T>{leaf(p.group_w), leaf(p.group_b)};
}

// Normalized per-channel attention weights for the K maps, as a K×D matrix.
template <typename T>
Var<T> ssa_weights(const std::vector<Var<T>>& pooled, const SsaVars<T>& p, SsaNorm norm) {
  const int K = static_cast<int>(pooled.size());
  const int D = static_cast<int>(pooled[0].val().numel());
  const ShuffleLayout lay{K, D};
  Var<T> cat = concat_flat(pooled);
  Var<T> shuf = permute_last(cat, std::make_shared<const std::vector<int>>(shuffle_gather_order(lay)));
  Var<T> exc = group_excite(shuf, p.group_w, p.group_b);
  Var<T> unshuf = permute_last(exc, std::make_shared<const std::vector<int>>(unshuffle_gather_order(lay)));
  Var<T> wmat = reshape(unshuf, {K, D});
  switch (norm) {
    case SsaNorm::Softmax: return softmax(wmat, 0);
    case SsaNorm::Sigmoid: return sigmoid(wmat);
    case SsaNorm::Identity: return wmat;
  }
  throw std::invalid_argument("ssa_weights: unknown normalization");
}

// The four direction-wise maps entering aggregation; all must share shape.
template <typename T>
struct DirectionalSequences {
  std::array<Var<T>, 4> maps;

  explicit DirectionalSequences(std::array<Var<T>, 4> m) : maps(std::move(m)) {
    for (const auto& v : maps) check_same_shape(v.val(), maps[0].val(), "directional sequences");
  }

  std::vector<Var<T>> as_vector() const { return {maps.begin(), maps.end()}; }
};

// inputs: K maps D×H×W (equal shapes) -> Y = Σ_i W^i ⊙ X^i with W^i D-wise.
template <typename T>
Var<T> ssa_aggregate(const std::vector<Var<T>>& inputs, const SsaVars<T>& p, SsaNorm norm) {
  if (inputs.empty()) throw std::invalid_argument("ssa_aggregate: no inputs");
  const int K = static_cast<int>(inputs.size());
  const Tensor<T>& first = inputs[0].val();
  if (first.rank() != 3) throw std::invalid_argument("ssa_aggregate: inputs must be D×H×W");
  for (const auto& in : inputs) check_same_shape(in.val(), first, "ssa_aggregate");
  const int D = first.shape[0];

  std::vector<Var<T>> pooled;
  pooled.reserve(static_cast<std::size_t>(K));
  for (const auto& in : inputs) pooled.push_back(spatial_mean(in));
  Var<T> wmat = ssa_weights(pooled, p, norm);

  Var<T> acc;
  for (int i = 0; i < K; ++i) {
    Var<T> wi = reshape(slice_rows(wmat, i, 1), {D});
    Var<T> term = scale_channels(inputs[static_cast<std::size_t>(i)], wi);
    acc = i == 0 ? term : add(acc, term);
  }
  return acc;
}

template <typename T>
Var<T> ssa_aggregate(const DirectionalSequences<T>& inputs, const SsaVars<T>& p, SsaNorm norm) {
  return ssa_aggregate(inputs.as_vector(), p, norm);
}

}  // namespace mair
