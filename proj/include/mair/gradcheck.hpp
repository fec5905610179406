#pragma once

// Central finite-difference oracle for the reverse-mode gradients, plus the
// named per-module check suites behind `gradcheck` in the CLI. The oracle
// only ever calls the forward path: f(θ±h) with h = 1e-5·max(1,|θ|).

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mair/mairm.hpp"
#include "mair/net.hpp"
#include "mair/ops.hpp"
#include "mair/rng.hpp"
#include "mair/ssa.hpp"
#include "mair/ssm.hpp"

namespace mair {

using GradBuildFn = std::function<Var<double>(Tape<double>&, std::vector<Var<double>>&)>;

// Worst relative error between tape gradients and central differences over
// the first `n_check` inputs. Coordinates are sampled when a tensor has more
// than `max_coords` entries. rel = |ad−fd| / max(|ad|,|fd|,1e-3).
inline double fd_worst_rel_err(std::vector<Tensor<double>> inputs, const GradBuildFn& build,
                               int n_check = -1, int max_coords = -1, std::uint64_t seed = 1) {
  if (n_check < 0) n_check = static_cast<int>(inputs.size());
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    leaves.reserve(inputs.size());
    for (auto& t : inputs) leaves.push_back(tape.leaf(t));
    Var<double> loss = build(tape, leaves);
    tape.backward(loss);
    for (int i = 0; i < n_check; ++i) analytic.push_back(tape.grad(leaves[static_cast<std::size_t>(i)].id));
  }

  auto eval_loss = [&](const std::vector<Tensor<double>>& xs) {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    leaves.reserve(xs.size());
    for (const auto& t : xs) leaves.push_back(tape.leaf(t));
    return build(tape, leaves).val().data[0];
  };

  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < n_check; ++i) {
    const std::size_t n = inputs[static_cast<std::size_t>(i)].numel();
    std::vector<std::size_t> coords;
    if (max_coords < 0 || n <= static_cast<std::size_t>(max_coords)) {
      for (std::size_t j = 0; j < n; ++j) coords.push_back(j);
    } else {
      for (int j = 0; j < max_coords; ++j) coords.push_back(rng.index(n));
    }
    for (std::size_t j : coords) {
      double& slot = inputs[static_cast<std::size_t>(i)].data[j];
      const double orig = slot;
      const double h = 1e-5 * std::max(1.0, std::abs(orig));
      slot = orig + h;
      const double lp = eval_loss(inputs);
      slot = orig - h;
      const double lm = eval_loss(inputs);
      slot = orig;
      const double fd = (lp - lm) / (2.0 * h);
      const double ad = analytic[static_cast<std::size_t>(i)].data[j];
      const double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-3});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

struct GradSuiteEntry {
  std::string module;
  std::string op;
  double worst_rel = 0.0;
};

namespace detail {

// random linear functional of the op output makes the scalar loss sensitive
// to every output coordinate
inline Var<double> dot_loss(Tape<double>& tape, Var<double> y, Rng& rng) {
  Tensor<double> r(y.val().shape);
  for (auto& v : r.data) v = rng.uniform(0.5, 1.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  return sum(mul(y, tape.leaf(r)));
}

}  // namespace detail

// Every differentiable primitive on randomized small shapes.
inline std::vector<GradSuiteEntry> gradcheck_tensor_core(std::uint64_t seed, int cases) {
  std::vector<GradSuiteEntry> out;
  auto run = [&](const char* op, auto&& make_inputs, auto&& build_op, int n_check = -1) {
    double worst = 0.0;
    for (int c = 0; c < cases; ++c) {
      Rng rng(Rng::derive(seed, std::hash<std::string>{}(op) + static_cast<std::uint64_t>(c)));
      auto inputs = make_inputs(rng);
      auto rloss = std::make_shared<Rng>(Rng::derive(seed, 0xd07 + static_cast<std::uint64_t>(c)));
      GradBuildFn fn = [&build_op, rloss](Tape<double>& t, std::vector<Var<double>>& ls) {
        Rng r2 = *rloss;  // same functional for every FD evaluation
        return detail::dot_loss(t, build_op(t, ls), r2);
      };
      worst = std::max(worst, fd_worst_rel_err(std::move(inputs), fn, n_check, -1,
                                               Rng::derive(seed, static_cast<std::uint64_t>(c))));
    }
    out.push_back({"tensor-core", op, worst});
  };

  run("add", [](Rng& r) {
    return std::vector<Tensor<double>>{r.normal_tensor<double>({3, 4}), r.normal_tensor<double>({3, 4})};
  }, [](Tape<double>&, std::vector<Var<double>>& l) { return add(l[0], l[1]); });

  run("sub", [](Rng& r) {
    return std::vector<Tensor<double>>{r.normal_tensor<double>({3, 4}), r.normal_tensor<double>({3, 4})};
  }, [](Tape<double>&, std::vector<Var<double>>& l) { return sub(l[0], l[1]); });

  run("mul", [](Rng& r) {
    return std::vector<Tensor<double>>{r.normal_tensor<double>({3, 4}), r.normal_tensor<double>({3, 4})};
  }, [](Tape<double>&, std::vector<Var<double>>& l) { return mul(l[0], l[1]); });

  run("scale_by", [](Rng& r) {
    return std::vector<Tensor<double>>{r.normal_tensor<double>({2, 3}), r.normal_tensor<double>({1})};
  }, [](Tape<double>&, std::vector<Var<double>>& l) { return scale_by(l[0], l[1]); });

  // kinked ops checked away from the kink
  auto offset_signed = [](Rng& r, std::vector<int> shape) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data) v = r.uniform(0.1, 2.0) * (r.uniform() < 0.5 ? -1.0 : 1.0);
    return t;
  };
  run("relu", [&offset_signed](Rng& r) {
    return std::vector<Tensor<double>>{offset_signed(r, {2, 5})};
  }, [](Tape<double>&, std::vector<Var<double>>& l) { return relu(l[0]); });

  run("abs", [&offset_signed](Rng& r) {
    return std::vector<Tensor<double>>{offset_signed(r, {2, 5})};
  }, [](Tape<double>&, std::vector<Var<double>>& l) { return abs_op(l[0]); });

  run("silu", [](Rng& r) { return std::vector<Tensor<double>>{r.normal_tensor<double>({2, 5})}; },
      [](Tape<double>&, std::vector<Var<double>>& l) { return silu(l[0]); });

  run("sigmoid", [](Rng& r) { return std::vector<Tensor<double>>{r.normal_tensor<double>({2, 5})}; },
      [](Tape<double>&, std::vector<Var<double>>& l) { return sigmoid(l[0]); });

  run("softplus", [](Rng& r) { return std::vector<Tensor<double>>{r.normal_tensor<double>({2, 5})}; },
      [](Tape<double>&, std::vector<Var<double>>& l) { return softplus(l[0]); });

  run("exp", [](Rng& r) { return std::vector<Tensor<double>>{r.normal_tensor<double>({2, 5})}; },
      [](Tape<double>&, std::vector<Var<double>>& l) { return exp_op(l[0]); });

  run("softmax", [](Rng& r) { return std::vector<Tensor<double>>{r.normal_tensor<double>({4, 3, 2})}; },
      [](Tape<double>&, std::vector<Var<double>>& l) { return softmax(l[0], 1); });

  run("layer_norm", [](Rng& r) {
    return std::vector<Tensor<double>>{r.normal_tensor<double>({4, 3, 3}),
                                       r.normal_tensor<double>({4}, 0.3, 1.0),
                                       r.normal_tensor<double>({4}, 0.3)};
  }, [](Tape<double>&, std::vector<Var<double>>& l) { return layer_norm_channels(l[0], l[1], l[2]); });

  run("matmul", [](Rng& r) {
    return std::vector<Tensor<double>>{r.normal_tensor<double>({3, 4}), r.normal_tensor<double>({4, 5})};
  }, [](Tape<double>&, std::vector<Var<double>>& l) { return matmul(l[0], l[1]); });

  run("add_bias_rows", [](Rng& r) {
    return std::vector<Tensor<double>>{r.normal_tensor<double>({3, 5}), r.normal_tensor<double>({3})};
  }, [](Tape<double>&, std::vector<Var<double>>& l) { return add_bias_rows(l[0], l[1]); });

  run("concat_flat+slice", [](Rng& r) {
    return std::vector<Tensor<double>>{r.normal_tensor<double>({4}), r.normal_tensor<double>({3})};
  }, [](Tape<double>&, std::vector<Var<double>>& l) {
    return slice_flat(concat_flat(std::vector<Var<double>>{l[0], l[1]}), 2, 4);
  });

  run("concat_channels", [](Rng& r) {
    return std::vector<Tensor<double>>{r.normal_tensor<double>({2, 3, 2}), r.normal_tensor<double>({1, 3, 2})};
  }, [](Tape<double>&, std::vector<Var<double>>& l) {
    return concat_channels(std::vector<Var<double>>{l[0], l[1]});
  });

  run("reshape+slice_rows", [](Rng& r) {
    return std::vector<Tensor<double>>{r.normal_tensor<double>({12})};
  }, [](Tape<double>&, std::vector<Var<double>>& l) {
    return slice_rows(reshape(l[0], {4, 3}), 1, 2);
  });

  run("conv2d", [](Rng& r) {
    return std::vector<Tensor<double>>{r.normal_tensor<double>({2, 5, 4}),
                                       r.normal_tensor<double>({3, 2, 3, 3}),
                                       r.normal_tensor<double>({3})};
  }, [](Tape<double>&, std::vector<Var<double>>& l) { return conv2d(l[0], l[1], l[2], 1); });

  run("dwconv2d", [](Rng& r) {
    return std::vector<Tensor<double>>{r.normal_tensor<double>({3, 4, 5}),
                                       r.normal_tensor<double>({3, 3, 3}),
                                       r.normal_tensor<double>({3})};
  }, [](Tape<double>&, std::vector<Var<double>>& l) { return dwconv2d(l[0], l[1], l[2], 1); });

  run("pixel_shuffle", [](Rng& r) { return std::vector<Tensor<double>>{r.normal_tensor<double>({8, 3, 2})}; },
      [](Tape<double>&, std::vector<Var<double>>& l) { return pixel_shuffle(l[0], 2); });

  run("permute_last", [](Rng& r) { return std::vector<Tensor<double>>{r.normal_tensor<double>({3, 6})}; },
      [](Tape<double>&, std::vector<Var<double>>& l) {
        auto ord = std::make_shared<const std::vector<int>>(std::vector<int>{3, 0, 4, 1, 5, 2});
        return permute_last(l[0], ord);
      });

  run("spatial_mean", [](Rng& r) { return std::vector<Tensor<double>>{r.normal_tensor<double>({3, 4, 4})}; },
      [](Tape<double>&, std::vector<Var<double>>& l) { return spatial_mean(l[0]); });

  run("scale_channels", [](Rng& r) {
    return std::vector<Tensor<double>>{r.normal_tensor<double>({3, 4, 4}), r.normal_tensor<double>({3})};
  }, [](Tape<double>&, std::vector<Var<double>>& l) { return scale_channels(l[0], l[1]); });

  run("mul_site", [](Rng& r) {
    return std::vector<Tensor<double>>{r.normal_tensor<double>({3, 4, 4}), r.normal_tensor<double>({4, 4})};
  }, [](Tape<double>&, std::vector<Var<double>>& l) { return mul_site(l[0], l[1]); });

  run("loss_l1_offset", [](Rng& r) {
    return std::vector<Tensor<double>>{r.normal_tensor<double>({3, 4}, 0.2, 2.0),
                                       r.normal_tensor<double>({3, 4}, 0.2)};
  }, [](Tape<double>&, std::vector<Var<double>>& l) { return loss_l1(l[0], l[1]); });

  run("loss_charbonnier", [](Rng& r) {
    return std::vector<Tensor<double>>{r.normal_tensor<double>({3, 4}), r.normal_tensor<double>({3, 4})};
  }, [](Tape<double>&, std::vector<Var<double>>& l) { return loss_charbonnier(l[0], l[1], 1e-3); });

  return out;
}

inline std::vector<GradSuiteEntry> gradcheck_ssm(std::uint64_t seed, int cases) {
  std::vector<GradSuiteEntry> out;
  double worst_scan = 0.0, worst_s6 = 0.0;
  for (int c = 0; c < cases; ++c) {
    Rng rng(Rng::derive(seed, 0x55a + static_cast<std::uint64_t>(c)));
    const int D = 2, L = 5, N = 2;
    {
      std::vector<Tensor<double>> inputs{rng.normal_tensor<double>({D, L}),
                                         rng.uniform_tensor<double>({D, L}, 0.05, 0.8),
                                         rng.uniform_tensor<double>({D, N}, -1.5, -0.2),
                                         rng.normal_tensor<double>({N, L}),
                                         rng.normal_tensor<double>({N, L}),
                                         rng.normal_tensor<double>({D})};
      Rng rl(Rng::derive(seed, 0x10c + static_cast<std::uint64_t>(c)));
      Tensor<double> r({D, L});
      for (auto& v : r.data) v = rl.uniform(0.5, 1.5);
      GradBuildFn fn = [&r](Tape<double>& t, std::vector<Var<double>>& l) {
        return sum(mul(selective_scan(l[0], l[1], l[2], l[3], l[4], l[5]), t.leaf(r)));
      };
      worst_scan = std::max(worst_scan, fd_worst_rel_err(std::move(inputs), fn, -1, -1, seed + c));
    }
    {
      SsmParams<double> p = SsmParams<double>::init(D, N, rng);
      std::vector<Tensor<double>> inputs{rng.normal_tensor<double>({D, L}), p.a_log, p.w_dbc,
                                         p.w_dt, p.dt_bias, p.skip};
      Rng rl(Rng::derive(seed, 0x20c + static_cast<std::uint64_t>(c)));
      Tensor<double> r({D, L});
      for (auto& v : r.data) v = rl.uniform(0.5, 1.5);
      const int R = p.dt_rank;
      GradBuildFn fn = [&r, N, R](Tape<double>& t, std::vector<Var<double>>& l) {
        SsmVars<double> v{l[1], l[2], l[3], l[4], l[5], N, R};
        return sum(mul(s6_forward(l[0], v), t.leaf(r)));
      };
      worst_s6 = std::max(worst_s6, fd_worst_rel_err(std::move(inputs), fn, -1, -1, seed + c));
    }
  }
  out.push_back({"ssm", "selective_scan", worst_scan});
  out.push_back({"ssm", "s6_forward", worst_s6});
  return out;
}

inline std::vector<GradSuiteEntry> gradcheck_ssa(std::uint64_t seed, int cases) {
  double worst = 0.0, worst_ge = 0.0;
  for (int c = 0; c < cases; ++c) {
    Rng rng(Rng::derive(seed, 0x55a0 + static_cast<std::uint64_t>(c)));
    const int D = 3, K = 4, H = 2, W = 3;
    {
      std::vector<Tensor<double>> inputs;
      for (int i = 0; i < K; ++i) inputs.push_back(rng.normal_tensor<double>({D, H, W}));
      inputs.push_back(rng.normal_tensor<double>({D, K, K}, 0.5));
      inputs.push_back(rng.normal_tensor<double>({D, K}, 0.2));
      Rng rl(Rng::derive(seed, 0x30c + static_cast<std::uint64_t>(c)));
      Tensor<double> r({D, H, W});
      for (auto& v : r.data) v = rl.uniform(0.5, 1.5);
      GradBuildFn fn = [&r, K](Tape<double>& t, std::vector<Var<double>>& l) {
        std::vector<Var<double>> maps(l.begin(), l.begin() + K);
        SsaVars<double> sv{l[static_cast<std::size_t>(K)], l[static_cast<std::size_t>(K) + 1]};
        return sum(mul(ssa_aggregate(maps, sv, SsaNorm::Softmax), t.leaf(r)));
      };
      worst = std::max(worst, fd_worst_rel_err(std::move(inputs), fn, -1, -1, seed + c));
    }
    {
      std::vector<Tensor<double>> inputs{rng.normal_tensor<double>({D * K}),
                                         rng.normal_tensor<double>({D, K, K}, 0.5),
                                         rng.normal_tensor<double>({D, K}, 0.2)};
      Rng rl(Rng::derive(seed, 0x40c + static_cast<std::uint64_t>(c)));
      Tensor<double> r({D * K});
      for (auto& v : r.data) v = rl.uniform(0.5, 1.5);
      GradBuildFn fn = [&r](Tape<double>& t, std::vector<Var<double>>& l) {
        return sum(mul(group_excite(l[0], l[1], l[2]), t.leaf(r)));
      };
      worst_ge = std::max(worst_ge, fd_worst_rel_err(std::move(inputs), fn, -1, -1, seed + c));
    }
  }
  return {{"ssa", "group_excite", worst_ge}, {"ssa", "ssa_aggregate", worst}};
}

// Binding structures from a pre-made leaf list relies on bind order matching
// visit order; test_net pins that correspondence.

inline std::vector<GradSuiteEntry> gradcheck_mairm(std::uint64_t seed, int cases) {
  double worst_mairm = 0.0, worst_vmm = 0.0;
  MairmConfig mcfg;
  mcfg.channels = 2;
  mcfg.stripe_width = 2;
  mcfg.ssm_state = 2;
  for (int c = 0; c < cases; ++c) {
    Rng rng(Rng::derive(seed, 0x3a13 + static_cast<std::uint64_t>(c)));
    {
      MairmParams<double> p = MairmParams<double>::init(mcfg, rng);
      std::vector<Tensor<double>> inputs;
      p.visit("", [&inputs](const std::string&, Tensor<double>& t) { inputs.push_back(t); });
      inputs.push_back(rng.normal_tensor<double>({mcfg.channels, 4, 4}));
      Rng rl(Rng::derive(seed, 0x50c + static_cast<std::uint64_t>(c)));
      Tensor<double> r({mcfg.channels, 4, 4});
      for (auto& v : r.data) v = rl.uniform(0.5, 1.5);
      GradBuildFn fn = [&p, &r, &mcfg](Tape<double>& t, std::vector<Var<double>>& l) {
        std::size_t idx = 0;
        auto supplier = [&l, &idx](Tensor<double>&) { return l[idx++]; };
        MairmVars<double> mv = bind(p, supplier);
        return sum(mul(mairm_forward(l.back(), mcfg, mv), t.leaf(r)));
      };
      worst_mairm = std::max(worst_mairm, fd_worst_rel_err(std::move(inputs), fn, -1, 24, seed + c));
    }
    {
      const int C = 4;
      MairmConfig vcfg = mcfg;
      vcfg.channels = 8;  // expansion 2
      VmmParams<double> p = VmmParams<double>::init(C, vcfg, rng);
      std::vector<Tensor<double>> inputs;
      p.visit("", [&inputs](const std::string&, Tensor<double>& t) { inputs.push_back(t); });
      inputs.push_back(rng.normal_tensor<double>({C, 4, 4}));
      Rng rl(Rng::derive(seed, 0x60c + static_cast<std::uint64_t>(c)));
      Tensor<double> r({C, 4, 4});
      for (auto& v : r.data) v = rl.uniform(0.5, 1.5);
      GradBuildFn fn = [&p, &r, &vcfg](Tape<double>& t, std::vector<Var<double>>& l) {
        std::size_t idx = 0;
        auto supplier = [&l, &idx](Tensor<double>&) { return l[idx++]; };
        VmmVars<double> mv = bind(p, supplier);
        return sum(mul(vmm_forward(l.back(), vcfg, mv), t.leaf(r)));
      };
      worst_vmm = std::max(worst_vmm, fd_worst_rel_err(std::move(inputs), fn, -1, 16, seed + c));
    }
  }
  return {{"mairm", "mairm_forward", worst_mairm}, {"mairm", "vmm_forward", worst_vmm}};
}

inline std::vector<GradSuiteEntry> gradcheck_net(std::uint64_t seed, int cases) {
  double worst_restore = 0.0, worst_sr = 0.0;
  ModelConfig base;
  base.channels = 4;
  base.n_groups = 1;
  base.n_blocks = 1;
  base.stripe_width = 2;
  base.ssm_state = 2;
  base.expansion = 2;
  for (int c = 0; c < cases; ++c) {
    for (Head head : {Head::Restore, Head::SR}) {
      ModelConfig cfg = base;
      cfg.head = head;
      cfg.sr_scale = 2;
      Model<double> model = build_model<double>(cfg, Rng::derive(seed, 0x6e30 + c));
      std::vector<Tensor<double>> inputs;
      model.visit([&inputs](const std::string&, Tensor<double>& t) { inputs.push_back(t); });
      Rng rng(Rng::derive(seed, 0x6e31 + static_cast<std::uint64_t>(c)));
      inputs.push_back(rng.uniform_tensor<double>({3, 8, 8}, 0.0, 1.0));
      const int out_side = head == Head::SR ? 16 : 8;
      Rng rl(Rng::derive(seed, 0x70c + static_cast<std::uint64_t>(c)));
      Tensor<double> r({3, out_side, out_side});
      for (auto& v : r.data) v = rl.uniform(0.5, 1.5);
      GradBuildFn fn = [&model, &r, &cfg](Tape<double>& t, std::vector<Var<double>>& l) {
        std::size_t idx = 0;
        ModelVars<double> mv = bind_model_fn(model, [&l, &idx](Tensor<double>&) { return l[idx++]; });
        return sum(mul(forward_bound(cfg, mv, l[idx]), t.leaf(r)));
      };
      const double worst = fd_worst_rel_err(std::move(inputs), fn, -1, 10, seed + c);
      (head == Head::SR ? worst_sr : worst_restore) =
          std::max(head == Head::SR ? worst_sr : worst_restore, worst);
    }
  }
  return {{"net", "forward_restore", worst_restore}, {"net", "forward_sr", worst_sr}};
}

inline std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed, int cases) {
  std::vector<GradSuiteEntry> all;
  for (auto&& v : {gradcheck_tensor_core(seed, cases), gradcheck_ssm(seed, cases),
                   gradcheck_ssa(seed, cases), gradcheck_mairm(seed, cases), gradcheck_net(seed, cases)})
    all.insert(all.end(), v.begin(), v.end());
  return all;
}

}  // namespace mair
