#pragma once

// Seeded RNG. The engine is std::mt19937_64 (bit-stable by the standard);
// the uniform/normal transforms are written out here because the standard
// library distributions are implementation-defined and would break
// bit-reproducibility across toolchains.

#include <cmath>
#include <cstdint>
#include <random>

#include "mair/tensor.hpp"

namespace mair {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // uniform in [0,1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; one value per call, no cached spare
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // integer in [0, n)
  std::uint64_t index(std::uint64_t n) { return n ? eng_() % n : 0; }

  // derive an independent stream; splitmix64 over (seed, stream id)
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  template <typename T>
  Tensor<T> normal_tensor(std::vector<int> shape, double stddev = 1.0, double mean = 0.0) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<T>(mean + stddev * normal());
    return t;
  }

  template <typename T>
  Tensor<T> uniform_tensor(std::vector<int> shape, double lo = 0.0, double hi = 1.0) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<T>(uniform(lo, hi));
    return t;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace mair
