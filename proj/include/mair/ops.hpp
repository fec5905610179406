#pragma once

// Differentiable primitives recorded on the tape: elementwise math,
// reductions, softmax, layer norm, matmul, convolutions, pixel shuffle,
// sequence permutation and slicing. Backward passes are written by hand
// and checked against central finite differences in the test suite.

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "mair/autograd.hpp"

namespace mair {

namespace detail {

// reductions accumulate one precision level up; keeps mean() of a constant
// tensor bit-exact at the sizes used here
template <typename T>
struct accum {
  using type = long double;
};
template <>
struct accum<float> {
  using type = double;
};

template <typename T>
void check_same_tape(Var<T> a, Var<T> b, const char* what) {
  if (a.tape != b.tape) throw std::invalid_argument(std::string(what) + ": variables on different tapes");
}

template <typename T>
inline T sigmoid_scalar(T x) {
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
inline T softplus_scalar(T x) {
  if (x > T(30)) return x;
  if (x < T(-30)) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::check_same_tape(a, b, "add");
  check_same_shape(a.val(), b.val(), "add");
  Tensor<T> out = a.val();
  const Tensor<T>& bv = b.val();
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += bv.data[i];
  const int pa = a.id, pb = b.id;
  return a.tape->record(std::move(out), [pa, pb](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& ga = t.grad_buf(pa);
    Tensor<T>& gb = t.grad_buf(pb);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga.data[i] += g.data[i];
      gb.data[i] += g.data[i];
    }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::check_same_tape(a, b, "sub");
  check_same_shape(a.val(), b.val(), "sub");
  Tensor<T> out = a.val();
  const Tensor<T>& bv = b.val();
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= bv.data[i];
  const int pa = a.id, pb = b.id;
  return a.tape->record(std::move(out), [pa, pb](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& ga = t.grad_buf(pa);
    Tensor<T>& gb = t.grad_buf(pb);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga.data[i] += g.data[i];
      gb.data[i] -= g.data[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::check_same_tape(a, b, "mul");
  check_same_shape(a.val(), b.val(), "mul");
  Tensor<T> out = a.val();
  const Tensor<T>& bv = b.val();
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= bv.data[i];
  const int pa = a.id, pb = b.id;
  return a.tape->record(std::move(out), [pa, pb](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& av = t.value(pa);
    const Tensor<T>& bv2 = t.value(pb);
    Tensor<T>& ga = t.grad_buf(pa);
    Tensor<T>& gb = t.grad_buf(pb);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga.data[i] += g.data[i] * bv2.data[i];
      gb.data[i] += g.data[i] * av.data[i];
    }
  });
}

template <typename T>
Var<T> scale_const(Var<T> a, T c) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v *= c;
  const int pa = a.id;
  return a.tape->record(std::move(out), [pa, c](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i] * c;
  });
}

template <typename T>
Var<T> neg(Var<T> a) {
  return scale_const(a, T(-1));
}

// multiply a tensor by a scalar (shape {1}) variable
template <typename T>
Var<T> scale_by(Var<T> a, Var<T> s) {
  detail::check_same_tape(a, s, "scale_by");
  if (s.val().numel() != 1) throw std::invalid_argument("scale_by: scale must be a scalar");
  const T sv = s.val().data[0];
  Tensor<T> out = a.val();
  for (auto& v : out.data) v *= sv;
  const int pa = a.id, ps = s.id;
  return a.tape->record(std::move(out), [pa, ps](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& av = t.value(pa);
    const T sv2 = t.value(ps).data[0];
    Tensor<T>& ga = t.grad_buf(pa);
    Tensor<T>& gs = t.grad_buf(ps);
    T acc = T(0);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga.data[i] += g.data[i] * sv2;
      acc += g.data[i] * av.data[i];
    }
    gs.data[0] += acc;
  });
}

// ---- unary nonlinearities --------------------------------------------------

template <typename T>
Var<T> exp_op(Var<T> a) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v = std::exp(v);
  const int pa = a.id;
  return a.tape->record(std::move(out), [pa](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& y = t.value(self);
    Tensor<T>& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i] * y.data[i];
  });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v = detail::sigmoid_scalar(v);
  const int pa = a.id;
  return a.tape->record(std::move(out), [pa](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& y = t.value(self);
    Tensor<T>& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < g.numel(); ++i)
      ga.data[i] += g.data[i] * y.data[i] * (T(1) - y.data[i]);
  });
}

template <typename T>
Var<T> silu(Var<T> a) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v = v * detail::sigmoid_scalar(v);
  const int pa = a.id;
  return a.tape->record(std::move(out), [pa](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& x = t.value(pa);
    Tensor<T>& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const T s = detail::sigmoid_scalar(x.data[i]);
      ga.data[i] += g.data[i] * (s + x.data[i] * s * (T(1) - s));
    }
  });
}

template <typename T>
Var<T> softplus(Var<T> a) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v = detail::softplus_scalar(v);
  const int pa = a.id;
  return a.tape->record(std::move(out), [pa](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& x = t.value(pa);
    Tensor<T>& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < g.numel(); ++i)
      ga.data[i] += g.data[i] * detail::sigmoid_scalar(x.data[i]);
  });
}

template <typename T>
Var<T> relu(Var<T> a) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v = v > T(0) ? v : T(0);
  const int pa = a.id;
  return a.tape->record(std::move(out), [pa](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& x = t.value(pa);
    Tensor<T>& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (x.data[i] > T(0)) ga.data[i] += g.data[i];
  });
}

template <typename T>
Var<T> abs_op(Var<T> a) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v = std::abs(v);
  const int pa = a.id;
  return a.tape->record(std::move(out), [pa](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& x = t.value(pa);
    Tensor<T>& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const T s = x.data[i] > T(0) ? T(1) : (x.data[i] < T(0) ? T(-1) : T(0));
      ga.data[i] += g.data[i] * s;
    }
  });
}

// sqrt(x^2 + eps^2), elementwise
template <typename T>
Var<T> charbonnier_elem(Var<T> a, T eps) {
  const T e2 = eps * eps;
  Tensor<T> out = a.val();
  for (auto& v : out.data) v = std::sqrt(v * v + e2);
  const int pa = a.id;
  return a.tape->record(std::move(out), [pa, e2](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& x = t.value(pa);
    Tensor<T>& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < g.numel(); ++i)
      ga.data[i] += g.data[i] * x.data[i] / std::sqrt(x.data[i] * x.data[i] + e2);
  });
}

// ---- reductions ------------------------------------------------------------

template <typename T>
Var<T> sum(Var<T> a) {
  typename detail::accum<T>::type acc = 0;
  for (const T& v : a.val().data) acc += v;
  const int pa = a.id;
  return a.tape->record(Tensor<T>::scalar(static_cast<T>(acc)), [pa](Tape<T>& t, int self) {
    const T g = t.grad(self).data[0];
    Tensor<T>& ga = t.grad_buf(pa);
    for (auto& v : ga.data) v += g;
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  const std::size_t n = a.val().numel();
  if (n == 0) throw std::invalid_argument("mean: empty tensor");
  typename detail::accum<T>::type acc = 0;
  for (const T& v : a.val().data) acc += v;
  acc /= static_cast<typename detail::accum<T>::type>(n);
  const int pa = a.id;
  return a.tape->record(Tensor<T>::scalar(static_cast<T>(acc)), [pa, n](Tape<T>& t, int self) {
    const T g = t.grad(self).data[0] / static_cast<T>(n);
    Tensor<T>& ga = t.grad_buf(pa);
    for (auto& v : ga.data) v += g;
  });
}

// ---- softmax ----------------------------------------------------------------

template <typename T>
Var<T> softmax(Var<T> a, int axis) {
  const Tensor<T>& x = a.val();
  if (axis < 0 || axis >= x.rank())
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " out of range for shape " +
                                shape_str(x.shape));
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(x.shape[i]);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= static_cast<std::size_t>(x.shape[i]);
  const std::size_t m = static_cast<std::size_t>(x.shape[axis]);

  Tensor<T> out = x;
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      T mx = x.data[o * m * inner + i];
      for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, x.data[(o * m + j) * inner + i]);
      T z = T(0);
      for (std::size_t j = 0; j < m; ++j) {
        T& v = out.data[(o * m + j) * inner + i];
        v = std::exp(v - mx);
        z += v;
      }
      for (std::size_t j = 0; j < m; ++j) out.data[(o * m + j) * inner + i] /= z;
    }

  const int pa = a.id;
  return a.tape->record(std::move(out), [pa, outer, inner, m](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& y = t.value(self);
    Tensor<T>& ga = t.grad_buf(pa);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) {
        T dot = T(0);
        for (std::size_t j = 0; j < m; ++j) {
          const std::size_t idx = (o * m + j) * inner + i;
          dot += g.data[idx] * y.data[idx];
        }
        for (std::size_t j = 0; j < m; ++j) {
          const std::size_t idx = (o * m + j) * inner + i;
          ga.data[idx] += y.data[idx] * (g.data[idx] - dot);
        }
      }
  });
}

// ---- layer norm over the channel axis ---------------------------------------

// x: C×H×W, gamma/beta: {C}; normalizes over C at every spatial site.
// Loops sweep channel planes row-wise with per-site accumulators so the
// strided channel axis never drives the memory access pattern.
template <typename T>
Var<T> layer_norm_channels(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-6)) {
  detail::check_same_tape(x, gamma, "layer_norm");
  detail::check_same_tape(x, beta, "layer_norm");
  const Tensor<T>& xv = x.val();
  if (xv.rank() != 3) throw std::invalid_argument("layer_norm: expected C×H×W, got " + shape_str(xv.shape));
  const int C = xv.shape[0], H = xv.shape[1], W = xv.shape[2];
  if (gamma.val().numel() != static_cast<std::size_t>(C) || beta.val().numel() != static_cast<std::size_t>(C))
    throw std::invalid_argument("layer_norm: gamma/beta must have C=" + std::to_string(C) + " entries");

  const std::size_t sites = static_cast<std::size_t>(H) * W;
  const T invc = T(1) / static_cast<T>(C);
  Tensor<T> out(xv.shape);
  std::vector<T> mu(sites, T(0)), inv(sites, T(0));
  for (int c = 0; c < C; ++c) {
    const T* __restrict__ plane = &xv.data[static_cast<std::size_t>(c) * sites];
    T* __restrict__ m = mu.data();
    for (std::size_t s = 0; s < sites; ++s) m[s] += plane[s];
  }
  for (std::size_t s = 0; s < sites; ++s) mu[s] *= invc;
  for (int c = 0; c < C; ++c) {
    const T* __restrict__ plane = &xv.data[static_cast<std::size_t>(c) * sites];
    const T* __restrict__ m = mu.data();
    T* __restrict__ v = inv.data();
    for (std::size_t s = 0; s < sites; ++s) {
      const T d = plane[s] - m[s];
      v[s] += d * d;
    }
  }
  for (std::size_t s = 0; s < sites; ++s) inv[s] = T(1) / std::sqrt(inv[s] * invc + eps);
  for (int c = 0; c < C; ++c) {
    const T gc = gamma.val().data[static_cast<std::size_t>(c)];
    const T bc = beta.val().data[static_cast<std::size_t>(c)];
    const T* __restrict__ plane = &xv.data[static_cast<std::size_t>(c) * sites];
    T* __restrict__ orow = &out.data[static_cast<std::size_t>(c) * sites];
    const T* __restrict__ m = mu.data();
    const T* __restrict__ v = inv.data();
    for (std::size_t s = 0; s < sites; ++s) orow[s] = (plane[s] - m[s]) * v[s] * gc + bc;
  }

  const int px = x.id, pg = gamma.id, pb = beta.id;
  return x.tape->record(std::move(out), [px, pg, pb, C, sites, eps, invc](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& xv2 = t.value(px);
    const Tensor<T>& gm2 = t.value(pg);
    Tensor<T>& gx = t.grad_buf(px);
    Tensor<T>& gg = t.grad_buf(pg);
    Tensor<T>& gb = t.grad_buf(pb);
    std::vector<T> mu(sites, T(0)), inv(sites, T(0)), m1(sites, T(0)), m2(sites, T(0));
    for (int c = 0; c < C; ++c) {
      const T* __restrict__ plane = &xv2.data[static_cast<std::size_t>(c) * sites];
      T* __restrict__ m = mu.data();
      for (std::size_t s = 0; s < sites; ++s) m[s] += plane[s];
    }
    for (std::size_t s = 0; s < sites; ++s) mu[s] *= invc;
    for (int c = 0; c < C; ++c) {
      const T* __restrict__ plane = &xv2.data[static_cast<std::size_t>(c) * sites];
      const T* __restrict__ m = mu.data();
      T* __restrict__ v = inv.data();
      for (std::size_t s = 0; s < sites; ++s) {
        const T d = plane[s] - m[s];
        v[s] += d * d;
      }
    }
    for (std::size_t s = 0; s < sites; ++s) inv[s] = T(1) / std::sqrt(inv[s] * invc + eps);
    for (int c = 0; c < C; ++c) {
      const T gamc = gm2.data[static_cast<std::size_t>(c)];
      const T* __restrict__ plane = &xv2.data[static_cast<std::size_t>(c) * sites];
      const T* __restrict__ grow = &g.data[static_cast<std::size_t>(c) * sites];
      const T* __restrict__ m = mu.data();
      const T* __restrict__ v = inv.data();
      T* __restrict__ a1 = m1.data();
      T* __restrict__ a2 = m2.data();
      T gg_acc = T(0), gb_acc = T(0);
      for (std::size_t s = 0; s < sites; ++s) {
        const T xh = (plane[s] - m[s]) * v[s];
        const T gc = grow[s] * gamc;
        a1[s] += gc;
        a2[s] += gc * xh;
        gg_acc += grow[s] * xh;
        gb_acc += grow[s];
      }
      gg.data[static_cast<std::size_t>(c)] += gg_acc;
      gb.data[static_cast<std::size_t>(c)] += gb_acc;
    }
    for (std::size_t s = 0; s < sites; ++s) {
      m1[s] *= invc;
      m2[s] *= invc;
    }
    for (int c = 0; c < C; ++c) {
      const T gamc = gm2.data[static_cast<std::size_t>(c)];
      const T* __restrict__ plane = &xv2.data[static_cast<std::size_t>(c) * sites];
      const T* __restrict__ grow = &g.data[static_cast<std::size_t>(c) * sites];
      T* __restrict__ gxrow = &gx.data[static_cast<std::size_t>(c) * sites];
      const T* __restrict__ m = mu.data();
      const T* __restrict__ v = inv.data();
      const T* __restrict__ a1 = m1.data();
      const T* __restrict__ a2 = m2.data();
      for (std::size_t s = 0; s < sites; ++s) {
        const T xh = (plane[s] - m[s]) * v[s];
        gxrow[s] += (grow[s] * gamc - a1[s] - xh * a2[s]) * v[s];
      }
    }
  });
}

// ---- linear algebra ----------------------------------------------------------

// A: m×k, B: k×n -> m×n
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::check_same_tape(a, b, "matmul");
  const Tensor<T>& av = a.val();
  const Tensor<T>& bv = b.val();
  if (av.rank() != 2 || bv.rank() != 2)
    throw std::invalid_argument("matmul: expected rank-2 operands, got " + shape_str(av.shape) + " and " +
                                shape_str(bv.shape));
  if (av.shape[1] != bv.shape[0])
    throw std::invalid_argument("matmul: inner extents differ, " + shape_str(av.shape) + " vs " +
                                shape_str(bv.shape));
  const int m = av.shape[0], k = av.shape[1], n = bv.shape[1];
  Tensor<T> out({m, n});
  for (int i = 0; i < m; ++i)
    for (int l = 0; l < k; ++l) {
      const T ail = av.data[static_cast<std::size_t>(i) * k + l];
      if (ail == T(0)) continue;
      const T* __restrict__ brow = &bv.data[static_cast<std::size_t>(l) * n];
      T* __restrict__ orow = &out.data[static_cast<std::size_t>(i) * n];
      for (int j = 0; j < n; ++j) orow[j] += ail * brow[j];
    }
  const int pa = a.id, pb = b.id;
  return a.tape->record(std::move(out), [pa, pb, m, k, n](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& av2 = t.value(pa);
    const Tensor<T>& bv2 = t.value(pb);
    Tensor<T>& ga = t.grad_buf(pa);
    Tensor<T>& gb = t.grad_buf(pb);
    // dA = G · B^T
    for (int i = 0; i < m; ++i)
      for (int l = 0; l < k; ++l) {
        const T* __restrict__ grow = &g.data[static_cast<std::size_t>(i) * n];
        const T* __restrict__ brow = &bv2.data[static_cast<std::size_t>(l) * n];
        T acc = T(0);
        for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
        ga.data[static_cast<std::size_t>(i) * k + l] += acc;
      }
    // dB = A^T · G
    for (int i = 0; i < m; ++i)
      for (int l = 0; l < k; ++l) {
        const T ail = av2.data[static_cast<std::size_t>(i) * k + l];
        if (ail == T(0)) continue;
        const T* __restrict__ grow = &g.data[static_cast<std::size_t>(i) * n];
        T* __restrict__ gbrow = &gb.data[static_cast<std::size_t>(l) * n];
        for (int j = 0; j < n; ++j) gbrow[j] += ail * grow[j];
      }
  });
}

// X: R×Cols, b: {R}; adds b[r] to every column of row r
template <typename T>
Var<T> add_bias_rows(Var<T> x, Var<T> b) {
  detail::check_same_tape(x, b, "add_bias_rows");
  const Tensor<T>& xv = x.val();
  if (xv.rank() != 2) throw std::invalid_argument("add_bias_rows: expected rank-2 input");
  const int r = xv.shape[0], n = xv.shape[1];
  if (b.val().numel() != static_cast<std::size_t>(r))
    throw std::invalid_argument("add_bias_rows: bias length " + std::to_string(b.val().numel()) +
                                " != rows " + std::to_string(r));
  Tensor<T> out = xv;
  for (int i = 0; i < r; ++i) {
    const T bi = b.val().data[i];
    T* row = &out.data[static_cast<std::size_t>(i) * n];
    for (int j = 0; j < n; ++j) row[j] += bi;
  }
  const int px = x.id, pb = b.id;
  return x.tape->record(std::move(out), [px, pb, r, n](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad_buf(px);
    Tensor<T>& gb = t.grad_buf(pb);
    for (int i = 0; i < r; ++i) {
      const T* grow = &g.data[static_cast<std::size_t>(i) * n];
      T acc = T(0);
      for (int j = 0; j < n; ++j) {
        gx.data[static_cast<std::size_t>(i) * n + j] += grow[j];
        acc += grow[j];
      }
      gb.data[i] += acc;
    }
  });
}

// ---- convolutions ------------------------------------------------------------

// input: C_in×H×W; weight: C_out×C_in×k×k; bias: {C_out}; same-size padding.
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int padding) {
  detail::check_same_tape(x, w, "conv2d");
  detail::check_same_tape(x, b, "conv2d");
  const Tensor<T>& xv = x.val();
  const Tensor<T>& wv = w.val();
  if (xv.rank() != 3) throw std::invalid_argument("conv2d: input must be C×H×W, got " + shape_str(xv.shape));
  if (wv.rank() != 4)
    throw std::invalid_argument("conv2d: weight must be C_out×C_in×k×k, got " + shape_str(wv.shape));
  const int ci = xv.shape[0], H = xv.shape[1], W = xv.shape[2];
  const int co = wv.shape[0], k = wv.shape[2];
  if (wv.shape[1] != ci)
    throw std::invalid_argument("conv2d: weight C_in axis is " + std::to_string(wv.shape[1]) +
                                " but input has " + std::to_string(ci) + " channels");
  if (wv.shape[3] != k) throw std::invalid_argument("conv2d: kernel must be square, got " + shape_str(wv.shape));
  if (k % 2 == 0) throw std::invalid_argument("conv2d: kernel size must be odd, got " + std::to_string(k));
  if (padding != (k - 1) / 2)
    throw std::invalid_argument("conv2d: padding " + std::to_string(padding) +
                                " does not preserve size for k=" + std::to_string(k));
  if (b.val().numel() != static_cast<std::size_t>(co))
    throw std::invalid_argument("conv2d: bias length " + std::to_string(b.val().numel()) + " != C_out " +
                                std::to_string(co));

  const int p = padding;
  Tensor<T> out({co, H, W});
  for (int oc = 0; oc < co; ++oc) {
    const T bias = b.val().data[oc];
    T* oplane = &out.data[static_cast<std::size_t>(oc) * H * W];
    for (int i = 0; i < H * W; ++i) oplane[i] = bias;
    for (int icn = 0; icn < ci; ++icn) {
      const T* iplane = &xv.data[static_cast<std::size_t>(icn) * H * W];
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const T wgt = wv.data[((static_cast<std::size_t>(oc) * ci + icn) * k + ky) * k + kx];
          if (wgt == T(0)) continue;
          const int y0 = std::max(0, p - ky), y1 = std::min(H, H + p - ky);
          const int x0 = std::max(0, p - kx), x1 = std::min(W, W + p - kx);
          for (int oy = y0; oy < y1; ++oy) {
            const T* __restrict__ irow = iplane + static_cast<std::size_t>(oy + ky - p) * W + (kx - p);
            T* __restrict__ orow = oplane + static_cast<std::size_t>(oy) * W;
            for (int ox = x0; ox < x1; ++ox) orow[ox] += wgt * irow[ox];
          }
        }
    }
  }

  const int px = x.id, pw = w.id, pb = b.id;
  return x.tape->record(std::move(out), [px, pw, pb, ci, co, H, W, k, p](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& xv2 = t.value(px);
    const Tensor<T>& wv2 = t.value(pw);
    Tensor<T>& gx = t.grad_buf(px);
    Tensor<T>& gw = t.grad_buf(pw);
    Tensor<T>& gb = t.grad_buf(pb);
    for (int oc = 0; oc < co; ++oc) {
      const T* gplane = &g.data[static_cast<std::size_t>(oc) * H * W];
      T bacc = T(0);
      for (int i = 0; i < H * W; ++i) bacc += gplane[i];
      gb.data[oc] += bacc;
      for (int icn = 0; icn < ci; ++icn) {
        const T* iplane = &xv2.data[static_cast<std::size_t>(icn) * H * W];
        T* gxplane = &gx.data[static_cast<std::size_t>(icn) * H * W];
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const std::size_t widx = ((static_cast<std::size_t>(oc) * ci + icn) * k + ky) * k + kx;
            const T wgt = wv2.data[widx];
            const int y0 = std::max(0, p - ky), y1 = std::min(H, H + p - ky);
            const int x0 = std::max(0, p - kx), x1 = std::min(W, W + p - kx);
            T wacc = T(0);
            for (int oy = y0; oy < y1; ++oy) {
              const T* __restrict__ grow = gplane + static_cast<std::size_t>(oy) * W;
              const T* __restrict__ irow = iplane + static_cast<std::size_t>(oy + ky - p) * W + (kx - p);
              T* __restrict__ gxrow = gxplane + static_cast<std::size_t>(oy + ky - p) * W + (kx - p);
              for (int ox = x0; ox < x1; ++ox) {
                wacc += grow[ox] * irow[ox];
                gxrow[ox] += wgt * grow[ox];
              }
            }
            gw.data[widx] += wacc;
          }
      }
    }
  });
}

// depthwise conv: input C×H×W, weight C×k×k, bias {C}
template <typename T>
Var<T> dwconv2d(Var<T> x, Var<T> w, Var<T> b, int padding) {
  detail::check_same_tape(x, w, "dwconv2d");
  detail::check_same_tape(x, b, "dwconv2d");
  const Tensor<T>& xv = x.val();
  const Tensor<T>& wv = w.val();
  if (xv.rank() != 3) throw std::invalid_argument("dwconv2d: input must be C×H×W");
  if (wv.rank() != 3 || wv.shape[0] != xv.shape[0] || wv.shape[1] != wv.shape[2])
    throw std::invalid_argument("dwconv2d: weight must be C×k×k with C matching input, got " +
                                shape_str(wv.shape));
  const int C = xv.shape[0], H = xv.shape[1], W = xv.shape[2], k = wv.shape[1];
  if (k % 2 == 0) throw std::invalid_argument("dwconv2d: kernel size must be odd");
  if (padding != (k - 1) / 2) throw std::invalid_argument("dwconv2d: padding does not preserve size");
  if (b.val().numel() != static_cast<std::size_t>(C)) throw std::invalid_argument("dwconv2d: bias length != C");

  const int p = padding;
  Tensor<T> out({C, H, W});
  for (int c = 0; c < C; ++c) {
    const T* iplane = &xv.data[static_cast<std::size_t>(c) * H * W];
    T* oplane = &out.data[static_cast<std::size_t>(c) * H * W];
    const T bias = b.val().data[c];
    for (int i = 0; i < H * W; ++i) oplane[i] = bias;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T wgt = wv.data[(static_cast<std::size_t>(c) * k + ky) * k + kx];
        const int y0 = std::max(0, p - ky), y1 = std::min(H, H + p - ky);
        const int x0 = std::max(0, p - kx), x1 = std::min(W, W + p - kx);
        for (int oy = y0; oy < y1; ++oy) {
          const T* __restrict__ irow = iplane + static_cast<std::size_t>(oy + ky - p) * W + (kx - p);
          T* __restrict__ orow = oplane + static_cast<std::size_t>(oy) * W;
          for (int ox = x0; ox < x1; ++ox) orow[ox] += wgt * irow[ox];
        }
      }
  }

  const int px = x.id, pw = w.id, pb = b.id;
  return x.tape->record(std::move(out), [px, pw, pb, C, H, W, k, p](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& xv2 = t.value(px);
    const Tensor<T>& wv2 = t.value(pw);
    Tensor<T>& gx = t.grad_buf(px);
    Tensor<T>& gw = t.grad_buf(pw);
    Tensor<T>& gb = t.grad_buf(pb);
    for (int c = 0; c < C; ++c) {
      const T* gplane = &g.data[static_cast<std::size_t>(c) * H * W];
      const T* iplane = &xv2.data[static_cast<std::size_t>(c) * H * W];
      T* gxplane = &gx.data[static_cast<std::size_t>(c) * H * W];
      T bacc = T(0);
      for (int i = 0; i < H * W; ++i) bacc += gplane[i];
      gb.data[c] += bacc;
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const std::size_t widx = (static_cast<std::size_t>(c) * k + ky) * k + kx;
          const T wgt = wv2.data[widx];
          const int y0 = std::max(0, p - ky), y1 = std::min(H, H + p - ky);
          const int x0 = std::max(0, p - kx), x1 = std::min(W, W + p - kx);
          T wacc = T(0);
          for (int oy = y0; oy < y1; ++oy) {
            const T* __restrict__ grow = gplane + static_cast<std::size_t>(oy) * W;
            const T* __restrict__ irow = iplane + static_cast<std::size_t>(oy + ky - p) * W + (kx - p);
            T* __restrict__ gxrow = gxplane + static_cast<std::size_t>(oy + ky - p) * W + (kx - p);
            for (int ox = x0; ox < x1; ++ox) {
              wacc += grow[ox] * irow[ox];
              gxrow[ox] += wgt * grow[ox];
            }
          }
          gw.data[widx] += wacc;
        }
    }
  });
}

// ---- pixel shuffle -------------------------------------------------------------

// (C·r²)×H×W -> C×(rH)×(rW); out[c][h·r+i][w·r+j] = in[c·r²+i·r+j][h][w]
template <typename T>
Var<T> pixel_shuffle(Var<T> x, int r) {
  const Tensor<T>& xv = x.val();
  if (xv.rank() != 3) throw std::invalid_argument("pixel_shuffle: input must be C×H×W");
  if (r < 1) throw std::invalid_argument("pixel_shuffle: upscale factor must be >= 1");
  const int cin = xv.shape[0], H = xv.shape[1], W = xv.shape[2];
  if (cin % (r * r) != 0)
    throw std::invalid_argument("pixel_shuffle: channel count " + std::to_string(cin) +
                                " not divisible by r^2=" + std::to_string(r * r));
  const int C = cin / (r * r);
  Tensor<T> out({C, H * r, W * r});
  const int Ho = H * r, Wo = W * r;
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j) {
        const T* iplane = &xv.data[static_cast<std::size_t>(c * r * r + i * r + j) * H * W];
        for (int h = 0; h < H; ++h) {
          T* orow = &out.data[(static_cast<std::size_t>(c) * Ho + (h * r + i)) * Wo];
          const T* irow = iplane + static_cast<std::size_t>(h) * W;
          for (int w = 0; w < W; ++w) orow[w * r + j] = irow[w];
        }
      }
  const int px = x.id;
  return x.tape->record(std::move(out), [px, C, H, W, r](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad_buf(px);
    const int Ho = H * r, Wo = W * r;
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) {
          T* gplane = &gx.data[static_cast<std::size_t>(c * r * r + i * r + j) * H * W];
          for (int h = 0; h < H; ++h) {
            const T* grow = &g.data[(static_cast<std::size_t>(c) * Ho + (h * r + i)) * Wo];
            T* gxrow = gplane + static_cast<std::size_t>(h) * W;
            for (int w = 0; w < W; ++w) gxrow[w] += grow[w * r + j];
          }
        }
  });
}

// ---- sequence permutation, concat, slicing --------------------------------------

// Gathers along the last axis: out[..., t] = x[..., order[t]].
// `order` must be a bijection on the last-axis extent; backward scatters.
template <typename T>
Var<T> permute_last(Var<T> x, std::shared_ptr<const std::vector<int>> order) {
  const Tensor<T>& xv = x.val();
  if (xv.rank() < 1) throw std::invalid_argument("permute_last: rank-0 input");
  const int L = xv.shape[xv.rank() - 1];
  if (static_cast<int>(order->size()) != L)
    throw std::invalid_argument("permute_last: order length " + std::to_string(order->size()) +
                                " != last axis extent " + std::to_string(L));
  const std::size_t rows = xv.numel() / static_cast<std::size_t>(L);
  Tensor<T> out(xv.shape);
  const int* ord = order->data();
  for (std::size_t rr = 0; rr < rows; ++rr) {
    const T* irow = &xv.data[rr * L];
    T* orow = &out.data[rr * L];
    for (int t = 0; t < L; ++t) orow[t] = irow[ord[t]];
  }
  const int px = x.id;
  return x.tape->record(std::move(out), [px, order, rows, L](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad_buf(px);
    const int* ord = order->data();
    for (std::size_t rr = 0; rr < rows; ++rr) {
      const T* grow = &g.data[rr * L];
      T* gxrow = &gx.data[rr * L];
      for (int tt = 0; tt < L; ++tt) gxrow[ord[tt]] += grow[tt];
    }
  });
}

template <typename T>
Var<T> concat_flat(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_flat: no inputs");
  Tape<T>* tape = parts[0].tape;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.tape != tape) throw std::invalid_argument("concat_flat: variables on different tapes");
    if (p.val().rank() != 1) throw std::invalid_argument("concat_flat: inputs must be rank-1");
    total += p.val().numel();
  }
  Tensor<T> out({static_cast<int>(total)});
  std::vector<int> ids;
  std::vector<std::size_t> offs;
  std::size_t off = 0;
  for (const auto& p : parts) {
    ids.push_back(p.id);
    offs.push_back(off);
    for (std::size_t i = 0; i < p.val().numel(); ++i) out.data[off + i] = p.val().data[i];
    off += p.val().numel();
  }
  return tape->record(std::move(out), [ids, offs](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Tensor<T>& gp = t.grad_buf(ids[k]);
      for (std::size_t i = 0; i < gp.numel(); ++i) gp.data[i] += g.data[offs[k] + i];
    }
  });
}

template <typename T>
Var<T> slice_flat(Var<T> x, int offset, int len) {
  const Tensor<T>& xv = x.val();
  if (xv.rank() != 1) throw std::invalid_argument("slice_flat: input must be rank-1");
  if (offset < 0 || len < 0 || offset + len > xv.shape[0])
    throw std::invalid_argument("slice_flat: range [" + std::to_string(offset) + "," +
                                std::to_string(offset + len) + ") outside length " +
                                std::to_string(xv.shape[0]));
  Tensor<T> out({len});
  for (int i = 0; i < len; ++i) out.data[i] = xv.data[offset + i];
  const int px = x.id;
  return x.tape->record(std::move(out), [px, offset, len](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad_buf(px);
    for (int i = 0; i < len; ++i) gx.data[offset + i] += g.data[i];
  });
}

// stacks rank-3 maps along the channel axis; spatial extents must agree
template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  Tape<T>* tape = parts[0].tape;
  const Tensor<T>& first = parts[0].val();
  if (first.rank() != 3) throw std::invalid_argument("concat_channels: inputs must be C×H×W");
  const int H = first.shape[1], W = first.shape[2];
  int ctotal = 0;
  for (const auto& p : parts) {
    if (p.tape != tape) throw std::invalid_argument("concat_channels: variables on different tapes");
    if (p.val().rank() != 3 || p.val().shape[1] != H || p.val().shape[2] != W)
      throw std::invalid_argument("concat_channels: spatial mismatch " + shape_str(p.val().shape));
    ctotal += p.val().shape[0];
  }
  Tensor<T> out({ctotal, H, W});
  std::vector<int> ids;
  std::vector<std::size_t> offs;
  std::size_t off = 0;
  for (const auto& p : parts) {
    ids.push_back(p.id);
    offs.push_back(off);
    for (std::size_t i = 0; i < p.val().numel(); ++i) out.data[off + i] = p.val().data[i];
    off += p.val().numel();
  }
  return tape->record(std::move(out), [ids, offs](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Tensor<T>& gp = t.grad_buf(ids[k]);
      for (std::size_t i = 0; i < gp.numel(); ++i) gp.data[i] += g.data[offs[k] + i];
    }
  });
}

// out[c][h][w] = x[c][h][w] * gate[h][w]
template <typename T>
Var<T> mul_site(Var<T> x, Var<T> gate) {
  detail::check_same_tape(x, gate, "mul_site");
  const Tensor<T>& xv = x.val();
  const Tensor<T>& gv = gate.val();
  if (xv.rank() != 3) throw std::invalid_argument("mul_site: input must be C×H×W");
  if (gv.rank() != 2 || gv.shape[0] != xv.shape[1] || gv.shape[1] != xv.shape[2])
    throw std::invalid_argument("mul_site: gate must be H×W matching input, got " + shape_str(gv.shape));
  const int C = xv.shape[0];
  const std::size_t sites = gv.numel();
  Tensor<T> out = xv;
  for (int c = 0; c < C; ++c) {
    T* plane = &out.data[static_cast<std::size_t>(c) * sites];
    for (std::size_t i = 0; i < sites; ++i) plane[i] *= gv.data[i];
  }
  const int px = x.id, pg = gate.id;
  return x.tape->record(std::move(out), [px, pg, C, sites](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& xv2 = t.value(px);
    const Tensor<T>& gv2 = t.value(pg);
    Tensor<T>& gx = t.grad_buf(px);
    Tensor<T>& gg = t.grad_buf(pg);
    for (int c = 0; c < C; ++c) {
      const std::size_t base = static_cast<std::size_t>(c) * sites;
      for (std::size_t i = 0; i < sites; ++i) {
        gx.data[base + i] += g.data[base + i] * gv2.data[i];
        gg.data[i] += g.data[base + i] * xv2.data[base + i];
      }
    }
  });
}

// rows [r0, r0+rows) of a rank-2 tensor
template <typename T>
Var<T> slice_rows(Var<T> x, int r0, int rows) {
  const Tensor<T>& xv = x.val();
  if (xv.rank() != 2) throw std::invalid_argument("slice_rows: input must be rank-2");
  const int R = xv.shape[0], N = xv.shape[1];
  if (r0 < 0 || rows < 0 || r0 + rows > R)
    throw std::invalid_argument("slice_rows: rows [" + std::to_string(r0) + "," + std::to_string(r0 + rows) +
                                ") outside " + std::to_string(R));
  Tensor<T> out({rows, N});
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = xv.data[static_cast<std::size_t>(r0) * N + i];
  const int px = x.id;
  return x.tape->record(std::move(out), [px, r0, N](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad_buf(px);
    for (std::size_t i = 0; i < g.numel(); ++i) gx.data[static_cast<std::size_t>(r0) * N + i] += g.data[i];
  });
}

template <typename T>
Var<T> reshape(Var<T> x, std::vector<int> new_shape) {
  const Tensor<T>& xv = x.val();
  if (Tensor<T>::numel_of(new_shape) != xv.numel())
    throw std::invalid_argument("reshape: " + shape_str(xv.shape) + " -> " + shape_str(new_shape) +
                                " changes element count");
  Tensor<T> out(new_shape, xv.data);
  const int px = x.id;
  return x.tape->record(std::move(out), [px](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad_buf(px);
    for (std::size_t i = 0; i < g.numel(); ++i) gx.data[i] += g.data[i];
  });
}

// ---- spatial pooling / channel scaling ------------------------------------------

// C×H×W -> {C}, mean over the spatial sites
template <typename T>
Var<T> spatial_mean(Var<T> x) {
  const Tensor<T>& xv = x.val();
  if (xv.rank() != 3) throw std::invalid_argument("spatial_mean: input must be C×H×W");
  const int C = xv.shape[0];
  const std::size_t sites = xv.numel() / static_cast<std::size_t>(C);
  if (sites == 0) throw std::invalid_argument("spatial_mean: empty spatial extent");
  Tensor<T> out({C});
  for (int c = 0; c < C; ++c) {
    T acc = T(0);
    const T* plane = &xv.data[static_cast<std::size_t>(c) * sites];
    for (std::size_t i = 0; i < sites; ++i) acc += plane[i];
    out.data[c] = acc / static_cast<T>(sites);
  }
  const int px = x.id;
  return x.tape->record(std::move(out), [px, C, sites](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad_buf(px);
    for (int c = 0; c < C; ++c) {
      const T gc = g.data[c] / static_cast<T>(sites);
      T* plane = &gx.data[static_cast<std::size_t>(c) * sites];
      for (std::size_t i = 0; i < sites; ++i) plane[i] += gc;
    }
  });
}

// out[c][h][w] = x[c][h][w] * s[c]
template <typename T>
Var<T> scale_channels(Var<T> x, Var<T> s) {
  detail::check_same_tape(x, s, "scale_channels");
  const Tensor<T>& xv = x.val();
  if (xv.rank() != 3) throw std::invalid_argument("scale_channels: input must be C×H×W");
  const int C = xv.shape[0];
  if (s.val().numel() != static_cast<std::size_t>(C))
    throw std::invalid_argument("scale_channels: scale length " + std::to_string(s.val().numel()) +
                                " != channels " + std::to_string(C));
  const std::size_t sites = xv.numel() / static_cast<std::size_t>(C);
  Tensor<T> out = xv;
  for (int c = 0; c < C; ++c) {
    const T sc = s.val().data[c];
    T* plane = &out.data[static_cast<std::size_t>(c) * sites];
    for (std::size_t i = 0; i < sites; ++i) plane[i] *= sc;
  }
  const int px = x.id, ps = s.id;
  return x.tape->record(std::move(out), [px, ps, C, sites](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& xv2 = t.value(px);
    const Tensor<T>& sv = t.value(ps);
    Tensor<T>& gx = t.grad_buf(px);
    Tensor<T>& gs = t.grad_buf(ps);
    for (int c = 0; c < C; ++c) {
      const T sc = sv.data[c];
      const std::size_t base = static_cast<std::size_t>(c) * sites;
      T acc = T(0);
      for (std::size_t i = 0; i < sites; ++i) {
        gx.data[base + i] += g.data[base + i] * sc;
        acc += g.data[base + i] * xv2.data[base + i];
      }
      gs.data[c] += acc;
    }
  });
}

// ---- losses ----------------------------------------------------------------------

template <typename T>
Var<T> loss_l1(Var<T> pred, Var<T> target) {
  detail::check_same_tape(pred, target, "loss_l1");
  check_same_shape(pred.val(), target.val(), "loss_l1");
  return mean(abs_op(sub(pred, target)));
}

template <typename T>
Var<T> loss_charbonnier(Var<T> pred, Var<T> target, T eps = T(1e-3)) {
  detail::check_same_tape(pred, target, "loss_charbonnier");
  check_same_shape(pred.val(), target.val(), "loss_charbonnier");
  if (!(eps > T(0))) throw std::invalid_argument("loss_charbonnier: eps must be positive");
  return mean(charbonnier_elem(sub(pred, target), eps));
}

}  // namespace mair
