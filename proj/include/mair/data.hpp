#pragma once

// Desk-scale data: procedural clean images (sinusoid gratings, filled
// polygons and gradient fields) and the degradations under test. Everything
// is a pure function of the seed.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mair/rng.hpp"
#include "mair/tensor.hpp"

namespace mair {

enum class Task { Denoise, SR };

inline const char* to_string(Task t) { return t == Task::Denoise ? "denoise" : "sr"; }

inline Task task_from_string(const std::string& s) {
  if (s == "denoise") return Task::Denoise;
  if (s == "sr") return Task::SR;
  throw std::invalid_argument("unknown task '" + s + "'");
}

struct DegradationSpec {
  Task task = Task::Denoise;
  double sigma = 25.0 / 255.0;  // gaussian noise std on the [0,1] scale
  int sr_scale = 2;
  std::uint64_t seed = 0;

  void validate() const {
    if (sigma < 0.0) throw std::invalid_argument("degradation: sigma must be >= 0");
    if (task == Task::SR && sr_scale < 1) throw std::invalid_argument("degradation: scale must be >= 1");
  }
};

namespace detail {

template <typename T>
Tensor<T> synth_one(int H, int W, Rng& rng) {
  Tensor<T> img({3, H, W});
  // gradient field base, random direction per channel
  for (int c = 0; c < 3; ++c) {
    const double gx = rng.uniform(-1.0, 1.0), gy = rng.uniform(-1.0, 1.0);
    const double off = rng.uniform(0.2, 0.8);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        img.at(c, y, x) = static_cast<T>(off + 0.25 * (gx * x / W + gy * y / H));
  }
  // sinusoid gratings shared across channels with per-channel amplitude
  const int n_waves = 2 + static_cast<int>(rng.index(3));
  for (int w = 0; w < n_waves; ++w) {
    const double theta = rng.uniform(0.0, M_PI);
    const double freq = rng.uniform(2.0, 10.0) * 2.0 * M_PI;
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    const double fx = std::cos(theta) * freq / W, fy = std::sin(theta) * freq / H;
    double amp[3];
    for (double& a : amp) a = rng.uniform(0.03, 0.15);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double s = std::sin(fx * x + fy * y + phase);
        for (int c = 0; c < 3; ++c) img.at(c, y, x) += static_cast<T>(amp[c] * s);
      }
  }
  // a few filled convex quads with constant color, alpha blended
  const int n_polys = 1 + static_cast<int>(rng.index(3));
  for (int ply = 0; ply < n_polys; ++ply) {
    const double cx = rng.uniform(0.1, 0.9) * W, cy = rng.uniform(0.1, 0.9) * H;
    const double rad = rng.uniform(0.1, 0.3) * std::min(H, W);
    double vx[4], vy[4];
    for (int v = 0; v < 4; ++v) {
      const double ang = (v + rng.uniform(0.0, 0.6)) * M_PI / 2.0;
      vx[v] = cx + rad * std::cos(ang);
      vy[v] = cy + rad * std::sin(ang);
    }
    double col[3], alpha = rng.uniform(0.4, 0.9);
    for (double& cv : col) cv = rng.uniform(0.0, 1.0);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        bool inside = true;  // convex by construction (vertices in angular order)
        for (int v = 0; v < 4 && inside; ++v) {
          const int u = (v + 1) % 4;
          const double cross = (vx[u] - vx[v]) * (y - vy[v]) - (vy[u] - vy[v]) * (x - vx[v]);
          inside = cross >= 0.0;
        }
        if (inside)
          for (int c = 0; c < 3; ++c)
            img.at(c, y, x) = static_cast<T>((1.0 - alpha) * img.at(c, y, x) + alpha * col[c]);
      }
  }
  return clamp01(img);
}

}  // namespace detail

// Deterministic procedural textures in [0,1]; a fixed seed gives a
// bit-identical set.
template <typename T>
std::vector<Tensor<T>> synth_images(int count, int H, int W, std::uint64_t seed) {
  if (H < 16 || W < 16) throw std::invalid_argument("synth_images: H and W must be >= 16");
  if (count < 0) throw std::invalid_argument("synth_images: negative count");
  std::vector<Tensor<T>> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(Rng::derive(seed, 0x73796e7468 + static_cast<std::uint64_t>(i)));
    out.push_back(detail::synth_one<T>(H, W, rng));
  }
  return out;
}

// Additive seeded gaussian noise; values are left unclamped so the noise
// statistics stay exactly gaussian.
template <typename T>
Tensor<T> add_noise(const Tensor<T>& clean, double sigma, std::uint64_t seed) {
  Rng rng(Rng::derive(seed, 0x6e6f697365));
  Tensor<T> out = clean;
  if (sigma > 0.0)
    for (auto& v : out.data) v += static_cast<T>(sigma * rng.normal());
  return out;
}

// Box downsampling by an integer factor (spatial dims must divide).
template <typename T>
Tensor<T> box_downsample(const Tensor<T>& x, int r) {
  if (x.rank() != 3) throw std::invalid_argument("box_downsample: expected C×H×W");
  if (r < 1) throw std::invalid_argument("box_downsample: factor must be >= 1");
  const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
  if (H % r != 0 || W % r != 0)
    throw std::invalid_argument("box_downsample: " + std::to_string(H) + "×" + std::to_string(W) +
                                " not divisible by " + std::to_string(r));
  Tensor<T> out({C, H / r, W / r});
  const T inv = T(1) / static_cast<T>(r * r);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H / r; ++y)
      for (int x2 = 0; x2 < W / r; ++x2) {
        T acc = T(0);
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < r; ++j) acc += x.at(c, y * r + i, x2 * r + j);
        out.at(c, y, x2) = acc * inv;
      }
  return out;
}

// Nearest-neighbour upsample; the reference baseline for SR metrics.
template <typename T>
Tensor<T> replicate_upsample(const Tensor<T>& x, int r) {
  if (x.rank() != 3) throw std::invalid_argument("replicate_upsample: expected C×H×W");
  const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
  Tensor<T> out({C, H * r, W * r});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H * r; ++y)
      for (int x2 = 0; x2 < W * r; ++x2) out.at(c, y, x2) = x.at(c, y / r, x2 / r);
  return out;
}

template <typename T>
Tensor<T> degrade(const Tensor<T>& clean, const DegradationSpec& spec) {
  spec.validate();
  switch (spec.task) {
    case Task::Denoise: return add_noise(clean, spec.sigma, spec.seed);
    case Task::SR: return box_downsample(clean, spec.sr_scale);
  }
  throw std::invalid_argument("degrade: unknown task");
}

}  // namespace mair
