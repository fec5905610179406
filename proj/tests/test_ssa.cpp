#include <catch2/catch_amalgamated.hpp>

#include "mair/gradcheck.hpp"
#include "mair/ssa.hpp"

using namespace mair;

TEST_CASE("spatial average pooling", "[ssa]") {
  Tape<double> tape;
  SECTION("constant map") {
    auto y = spatial_mean(tape.leaf(Tensor<double>::full({3, 4, 5}, 2.5)));
    for (double v : y.val().data) REQUIRE(v == 2.5);
  }
  SECTION("1x2x2 arithmetic mean") {
    auto y = spatial_mean(tape.leaf(Tensor<double>({1, 2, 2}, {1, 2, 3, 4})));
    REQUIRE(y.val().data[0] == 2.5);
  }
  SECTION("1x1 spatial extent is the identity on channels") {
    Tensor<double> x({4, 1, 1}, {7, 8, 9, 10});
    auto y = spatial_mean(tape.leaf(x));
    REQUIRE(y.val().data == x.data);
  }
}

TEST_CASE("sequence shuffle definition and inverse", "[ssa]") {
  SECTION("K=2, D=2 interleave") {
    std::vector<double> v{1.0, 2.0, 10.0, 20.0};  // [a1,a2,b1,b2]
    REQUIRE(sequence_shuffle(v, 2) == std::vector<double>{1.0, 10.0, 2.0, 20.0});
  }
  SECTION("round trip at K=4, D=8") {
    Rng rng(5);
    std::vector<double> v(32);
    for (auto& x : v) x = rng.normal();
    REQUIRE(sequence_unshuffle(sequence_shuffle(v, 4), 4) == v);
  }
  SECTION("K=1 and D=1 are identities") {
    std::vector<double> v{3.0, 1.0, 4.0};
    REQUIRE(sequence_shuffle(v, 1) == v);
    REQUIRE(sequence_shuffle(std::vector<double>{5.0, 6.0}, 2) == std::vector<double>{5.0, 6.0});
  }
  SECTION("length not divisible by K") {
    REQUIRE_THROWS_AS(sequence_shuffle(std::vector<double>{1, 2, 3}, 2), std::invalid_argument);
  }
  SECTION("mutual inverses for all (K, D) in 1..4 × 1..16") {
    for (int k = 1; k <= 4; ++k)
      for (int d = 1; d <= 16; ++d) {
        ShuffleLayout lay{k, d};
        const auto s = shuffle_gather_order(lay);
        const auto u = unshuffle_gather_order(lay);
        for (int i = 0; i < lay.length(); ++i)
          REQUIRE(s[static_cast<std::size_t>(u[static_cast<std::size_t>(i)])] == i);
      }
  }
}

TEST_CASE("group excite", "[ssa]") {
  Tape<double> tape;
  const int D = 3, K = 4;
  SECTION("identity maps leave the input unchanged") {
    Rng rng(8);
    Tensor<double> v = rng.normal_tensor<double>({D * K});
    Tensor<double> w({D, K, K});
    for (int d = 0; d < D; ++d)
      for (int i = 0; i < K; ++i) w.data[(static_cast<std::size_t>(d) * K + i) * K + i] = 1.0;
    auto y = group_excite(tape.leaf(v), tape.leaf(w), tape.leaf(Tensor<double>({D, K})));
    REQUIRE(y.val().data == v.data);
  }
  SECTION("swap matrix on a single group") {
    Tensor<double> w({1, 2, 2}, {0, 1, 1, 0});
    auto y = group_excite(tape.leaf(Tensor<double>({2}, {3.0, 7.0})), tape.leaf(w),
                          tape.leaf(Tensor<double>({1, 2})));
    REQUIRE(y.val().data == std::vector<double>{7.0, 3.0});
  }
  SECTION("matches a dense block-diagonal oracle") {
    Rng rng(9);
    Tensor<double> v = rng.normal_tensor<double>({D * K});
    Tensor<double> w = rng.normal_tensor<double>({D, K, K});
    Tensor<double> b = rng.normal_tensor<double>({D, K});
    auto y = group_excite(tape.leaf(v), tape.leaf(w), tape.leaf(b));
    // dense L×L matrix with the K×K blocks on the diagonal
    const int L = D * K;
    std::vector<double> dense(static_cast<std::size_t>(L) * L, 0.0);
    for (int d = 0; d < D; ++d)
      for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j)
          dense[static_cast<std::size_t>(d * K + i) * L + d * K + j] =
              w.data[(static_cast<std::size_t>(d) * K + i) * K + j];
    for (int i = 0; i < L; ++i) {
      double acc = b.data[static_cast<std::size_t>(i)];
      for (int j = 0; j < L; ++j) acc += dense[static_cast<std::size_t>(i) * L + j] * v.data[static_cast<std::size_t>(j)];
      REQUIRE(y.val().data[static_cast<std::size_t>(i)] == Catch::Approx(acc).epsilon(1e-6));
    }
  }
  SECTION("wrong weight count rejected") {
    auto v = tape.leaf(Tensor<double>({8}));
    auto w = tape.leaf(Tensor<double>({3, 4, 4}));  // covers 12, not 8
    REQUIRE_THROWS_AS(group_excite(v, w, tape.leaf(Tensor<double>({8}))), std::invalid_argument);
  }
}

namespace {

std::vector<Var<double>> leaf_maps(Tape<double>& tape, const std::vector<Tensor<double>>& maps) {
  std::vector<Var<double>> out;
  for (const auto& m : maps) out.push_back(tape.leaf(m));
  return out;
}

}  // namespace

TEST_CASE("ssa_aggregate", "[ssa]") {
  const int D = 2, K = 4, H = 2, W = 2;
  Rng rng(10);
  std::vector<Tensor<double>> maps;
  for (int i = 0; i < K; ++i) maps.push_back(rng.normal_tensor<double>({D, H, W}));

  SECTION("zero group maps with softmax give the 4-way mean") {
    Tape<double> tape;
    SsaVars<double> sv{tape.leaf(Tensor<double>({D, K, K})), tape.leaf(Tensor<double>({D, K}))};
    auto y = ssa_aggregate(leaf_maps(tape, maps), sv, SsaNorm::Softmax);
    for (std::size_t i = 0; i < y.val().numel(); ++i) {
      double m = 0;
      for (const auto& in : maps) m += in.data[i];
      REQUIRE(y.val().data[i] == Catch::Approx(m / 4.0).epsilon(1e-12));
    }
  }
  SECTION("identical inputs with weights summing to one reproduce the input") {
    Tape<double> tape;
    Rng r2(11);
    SsaParams<double> p = SsaParams<double>::init(D, K);
    p.group_w = r2.normal_tensor<double>({D, K, K});  // arbitrary; softmax renormalizes
    p.group_b = r2.normal_tensor<double>({D, K});
    auto sv = bind(p, [&tape](Tensor<double>& t) { return tape.leaf(t); });
    std::vector<Tensor<double>> same(4, maps[0]);
    auto y = ssa_aggregate(leaf_maps(tape, same), sv, SsaNorm::Softmax);
    REQUIRE(max_abs_diff(y.val(), maps[0]) <= 1e-12);
  }
  SECTION("matches the straight-line pipeline oracle") {
    Tape<double> tape;
    Rng r2(12);
    Tensor<double> w = r2.normal_tensor<double>({D, K, K});
    Tensor<double> b = r2.normal_tensor<double>({D, K});
    SsaVars<double> sv{tape.leaf(w), tape.leaf(b)};
    auto y = ssa_aggregate(leaf_maps(tape, maps), sv, SsaNorm::Softmax);

    // oracle: pool → concat → shuffle → dense per-group map → unshuffle →
    // chunk → softmax over K → weighted sum, all on plain vectors
    std::vector<double> cat;
    for (const auto& m : maps)
      for (int d = 0; d < D; ++d) {
        double acc = 0;
        for (int s = 0; s < H * W; ++s) acc += m.data[static_cast<std::size_t>(d) * H * W + s];
        cat.push_back(acc / (H * W));
      }
    auto shuf = sequence_shuffle(cat, K);
    std::vector<double> exc(shuf.size());
    for (int d = 0; d < D; ++d)
      for (int i = 0; i < K; ++i) {
        double acc = b.data[static_cast<std::size_t>(d) * K + i];
        for (int j = 0; j < K; ++j)
          acc += w.data[(static_cast<std::size_t>(d) * K + i) * K + j] * shuf[static_cast<std::size_t>(d) * K + j];
        exc[static_cast<std::size_t>(d) * K + i] = acc;
      }
    auto unshuf = sequence_unshuffle(exc, K);
    for (int d = 0; d < D; ++d) {
      double z = 0;
      std::vector<double> e(static_cast<std::size_t>(K));
      for (int k = 0; k < K; ++k) {
        e[static_cast<std::size_t>(k)] = std::exp(unshuf[static_cast<std::size_t>(k) * D + d]);
        z += e[static_cast<std::size_t>(k)];
      }
      for (int k = 0; k < K; ++k) e[static_cast<std::size_t>(k)] /= z;
      for (int s = 0; s < H * W; ++s) {
        double acc = 0;
        for (int k = 0; k < K; ++k)
          acc += e[static_cast<std::size_t>(k)] *
                 maps[static_cast<std::size_t>(k)].data[static_cast<std::size_t>(d) * H * W + s];
        REQUIRE(y.val().data[static_cast<std::size_t>(d) * H * W + s] ==
                Catch::Approx(acc).epsilon(1e-6));
      }
    }
  }
  SECTION("softmax weights sum to one per channel") {
    Tape<double> tape;
    Rng r2(13);
    std::vector<Var<double>> pooled;
    for (int k = 0; k < K; ++k) pooled.push_back(spatial_mean(tape.leaf(maps[static_cast<std::size_t>(k)])));
    SsaVars<double> sv{tape.leaf(r2.normal_tensor<double>({D, K, K})),
                       tape.leaf(r2.normal_tensor<double>({D, K}))};
    auto wmat = ssa_weights(pooled, sv, SsaNorm::Softmax);
    for (int d = 0; d < D; ++d) {
      double s = 0;
      for (int k = 0; k < K; ++k) s += wmat.val().at(k, d);
      REQUIRE(std::abs(s - 1.0) <= 1e-6);
    }
  }
  SECTION("shape mismatch rejected") {
    Tape<double> tape;
    SsaVars<double> sv{tape.leaf(Tensor<double>({D, K, K})), tape.leaf(Tensor<double>({D, K}))};
    std::vector<Tensor<double>> bad = maps;
    bad[2] = Tensor<double>({D, H, W + 1});
    REQUIRE_THROWS_AS(ssa_aggregate(leaf_maps(tape, bad), sv, SsaNorm::Softmax), std::invalid_argument);
  }
}

TEST_CASE("permuting inputs together with their group-weight columns permutes the weights", "[ssa]") {
  const int D = 2, K = 4, H = 2, W = 2;
  Rng rng(14);
  std::vector<Tensor<double>> maps;
  for (int i = 0; i < K; ++i) maps.push_back(rng.normal_tensor<double>({D, H, W}));
  Tensor<double> w = rng.normal_tensor<double>({D, K, K});
  Tensor<double> b = rng.normal_tensor<double>({D, K});

  const int perm[K] = {2, 0, 3, 1};
  // permute the inputs, both weight axes, and the bias rows consistently
  std::vector<Tensor<double>> pmaps(K, Tensor<double>({D, H, W}));
  Tensor<double> pw({D, K, K}), pb({D, K});
  for (int k = 0; k < K; ++k) pmaps[static_cast<std::size_t>(k)] = maps[static_cast<std::size_t>(perm[k])];
  for (int d = 0; d < D; ++d)
    for (int i = 0; i < K; ++i) {
      pb.data[static_cast<std::size_t>(d) * K + i] = b.data[static_cast<std::size_t>(d) * K + perm[i]];
      for (int j = 0; j < K; ++j)
        pw.data[(static_cast<std::size_t>(d) * K + i) * K + j] =
            w.data[(static_cast<std::size_t>(d) * K + perm[i]) * K + perm[j]];
    }

  auto weights_of = [&](const std::vector<Tensor<double>>& ms, const Tensor<double>& ww,
                        const Tensor<double>& bb) {
    Tape<double> tape;
    std::vector<Var<double>> pooled;
    for (const auto& m : ms) pooled.push_back(spatial_mean(tape.leaf(m)));
    SsaVars<double> sv{tape.leaf(const_cast<Tensor<double>&>(ww)), tape.leaf(const_cast<Tensor<double>&>(bb))};
    return ssa_weights(pooled, sv, SsaNorm::Softmax).val();
  };
  const auto w0 = weights_of(maps, w, b);
  const auto w1 = weights_of(pmaps, pw, pb);
  for (int d = 0; d < D; ++d)
    for (int k = 0; k < K; ++k)
      REQUIRE(w1.at(k, d) == Catch::Approx(w0.at(perm[k], d)).epsilon(1e-9));
}

TEST_CASE("ssa gradients match finite differences", "[ssa][grad]") {
  for (const auto& e : gradcheck_ssa(21, 4)) {
    INFO(e.op);
    REQUIRE(e.worst_rel <= 1e-4);
  }
}
