#pragma once

// PSNR and single-scale SSIM (11×11 gaussian window, sigma 1.5, K1=0.01,
// K2=0.03), computed per channel and averaged.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mair/tensor.hpp"

namespace mair {

// 10·log10(max²/MSE), capped at 100 dB for near-identical inputs.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double max_val = 1.0) {
  check_same_shape(a, b, "psnr");
  const double m = mse(a, b);
  if (m < 1e-10) return 100.0;
  return 10.0 * std::log10(max_val * max_val / m);
}

namespace detail {

inline std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const int half = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - half;
    k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (auto& v : k) v /= sum;
  return k;
}

}  // namespace detail

// Mean local-statistics SSIM over the valid region (window fully inside the
// image); falls back to a smaller window on tiny inputs.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, double max_val = 1.0) {
  check_same_shape(a, b, "ssim");
  if (a.rank() != 3) throw std::invalid_argument("ssim: expected C×H×W, got " + shape_str(a.shape));
  const int C = a.shape[0], H = a.shape[1], W = a.shape[2];
  int win = std::min(11, std::min(H, W));
  if (win % 2 == 0) --win;
  if (win < 1) throw std::invalid_argument("ssim: image too small");
  const auto kern = detail::gaussian_kernel(win, 1.5);
  const double c1 = (0.01 * max_val) * (0.01 * max_val);
  const double c2 = (0.03 * max_val) * (0.03 * max_val);

  double total = 0.0;
  for (int c = 0; c < C; ++c) {
    const T* pa = &a.data[static_cast<std::size_t>(c) * H * W];
    const T* pb = &b.data[static_cast<std::size_t>(c) * H * W];
    // separable gaussian filtering of a, b, a², b², a·b
    const int Hv = H - win + 1, Wv = W - win + 1;
    std::vector<double> rows[5];
    for (auto& r : rows) r.assign(static_cast<std::size_t>(H) * Wv, 0.0);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < Wv; ++x) {
        double s[5] = {0, 0, 0, 0, 0};
        for (int i = 0; i < win; ++i) {
          const double va = pa[y * W + x + i], vb = pb[y * W + x + i];
          const double k = kern[static_cast<std::size_t>(i)];
          s[0] += k * va;
          s[1] += k * vb;
          s[2] += k * va * va;
          s[3] += k * vb * vb;
          s[4] += k * va * vb;
        }
        for (int j = 0; j < 5; ++j) rows[j][static_cast<std::size_t>(y) * Wv + x] = s[j];
      }
    double acc = 0.0;
    for (int y = 0; y < Hv; ++y)
      for (int x = 0; x < Wv; ++x) {
        double s[5] = {0, 0, 0, 0, 0};
        for (int i = 0; i < win; ++i) {
          const double k = kern[static_cast<std::size_t>(i)];
          for (int j = 0; j < 5; ++j) s[j] += k * rows[j][static_cast<std::size_t>(y + i) * Wv + x];
        }
        const double mu_a = s[0], mu_b = s[1];
        const double var_a = s[2] - mu_a * mu_a;
        const double var_b = s[3] - mu_b * mu_b;
        const double cov = s[4] - mu_a * mu_b;
        const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
        const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
        acc += num / den;
      }
    total += acc / (static_cast<double>(Hv) * Wv);
  }
  return total / C;
}

}  // namespace mair
