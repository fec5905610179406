#pragma once

// Dense row-major tensor. Channel-first layout (C,H,W) throughout; the
// scalar type is a template parameter so training runs in float and
// gradient checks in double.

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mair {

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;

  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(numel_of(shape), T(0));
  }

  Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel_of(shape) != data.size())
      throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match " +
                                  std::to_string(data.size()) + " values");
  }

  static std::size_t numel_of(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int e : s) {
      if (e < 0) throw std::invalid_argument("tensor: negative extent in shape " + shape_str(s));
      n *= static_cast<std::size_t>(e);
    }
    return n;
  }

  static Tensor full(std::vector<int> s, T v) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }

  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  std::size_t numel() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }

  int dim(int axis) const {
    if (axis < 0 || axis >= rank())
      throw std::invalid_argument("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                                  shape_str(shape));
    return shape[static_cast<std::size_t>(axis)];
  }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  // rank-3 (C,H,W) accessors; used by the spatial ops
  T& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  const T& at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
  }

  // rank-2 accessors
  T& at(int r, int c) { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
  const T& at(int r, int c) const { return data[static_cast<std::size_t>(r) * shape[1] + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.reserve(data.size());
    for (const T& v : data) out.data.push_back(static_cast<U>(v));
    return out;
  }
};

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                                shape_str(b.shape));
}

// Plain (untracked) arithmetic used by data synthesis and metrics.

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "add");
  Tensor<T> out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += b.data[i];
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "sub");
  Tensor<T> out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= b.data[i];
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  Tensor<T> out = a;
  for (auto& v : out.data) v *= s;
  return out;
}

template <typename T>
Tensor<T> clamp01(const Tensor<T>& a) {
  Tensor<T> out = a;
  for (auto& v : out.data) v = v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
  return out;
}

template <typename T>
double mse(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    acc += d * d;
  }
  return a.numel() ? acc / static_cast<double>(a.numel()) : 0.0;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
  return m;
}

}  // namespace mair
