// Acceptance suite: runs every criterion at its stated tolerance and prints
// one PASS/FAIL line each. Exit status is the number of failed criteria.
// argv[1] (optional): path to the CLI binary, used by the ablation check.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mair/gradcheck.hpp"
#include "mair/mairm.hpp"
#include "mair/net.hpp"
#include "mair/scan.hpp"
#include "mair/serialize.hpp"
#include "mair/ssa.hpp"
#include "mair/ssm.hpp"
#include "mair/train.hpp"

using namespace mair;

namespace {

int g_failures = 0;

void report(int idx, bool pass, const std::string& what) {
  std::printf("criterion %d %s: %s\n", idx, pass ? "PASS" : "FAIL", what.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int stripe_of(const std::vector<int>& widths, int col) {
  int s = 0, edge = widths[0];
  while (col >= edge) edge += widths[static_cast<std::size_t>(++s)];
  return s;
}

// ---- 1: permutation suite ------------------------------------------------------

void criterion_permutations() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::string why;
  for (ScanStrategy st : {ScanStrategy::NSS, ScanStrategy::Z, ScanStrategy::S,
                          ScanStrategy::LOCAL_WINDOW, ScanStrategy::HILBERT})
    for (int h = 1; h <= 9 && ok; ++h)
      for (int w = 1; w <= 9 && ok; ++w)
        for (int ws : {1, 2, 4})
          for (int shifted = 0; shifted < 2 && ok; ++shifted) {
            if (st == ScanStrategy::NSS && ws > w) continue;
            if (shifted && (st != ScanStrategy::NSS || ws % 2 != 0)) continue;
            for (int dir = 0; dir < 4 && ok; ++dir) {
              ScanSpec s;
              s.strategy = st;
              s.stripe_width = ws;
              s.shifted = shifted != 0;
              s.direction = dir;
              Permutation p = build_permutation(s, h, w);
              if (!p.is_bijection()) {
                ok = false;
                why = "bijectivity failed for " + std::string(to_string(st));
                break;
              }
              if (st == ScanStrategy::NSS) {
                const auto widths = shifted ? shifted_stripe_bounds(w, ws).widths
                                            : unshifted_stripe_bounds(w, ws);
                for (int t = 0; t + 1 < p.length(); ++t) {
                  int a = p.order[static_cast<std::size_t>(t)], b = p.order[static_cast<std::size_t>(t) + 1];
                  if (dir == 2 || dir == 3) {  // map back to the unmirrored frame
                    a = (a / w) * w + (w - 1 - a % w);
                    b = (b / w) * w + (w - 1 - b % w);
                  }
                  const int dist = std::abs(a / w - b / w) + std::abs(a % w - b % w);
                  if (stripe_of(widths, a % w) == stripe_of(widths, b % w)) {
                    if (dist != 1) {
                      ok = false;
                      why = "within-stripe pair not 4-adjacent";
                      break;
                    }
                  } else if (dist > ws) {
                    ok = false;
                    why = "cross-stripe jump exceeds stripe width";
                    break;
                  }
                }
              }
            }
          }
  // exact continuity values
  if (ok) {
    ScanSpec s;
    s.strategy = ScanStrategy::S;
    for (int h = 1; h <= 9 && ok; ++h)
      for (int w = 1; w <= 9 && ok; ++w) {
        if (h * w < 2) continue;
        if (continuity_score(build_permutation(s, h, w)) != 1.0) {
          ok = false;
          why = "s-scan continuity not 1.0";
        }
      }
    ScanSpec hb;
    hb.strategy = ScanStrategy::HILBERT;
    for (int side : {2, 4, 8})
      if (ok && continuity_score(build_permutation(hb, side, side)) != 1.0) {
        ok = false;
        why = "hilbert continuity not 1.0 on power-of-two square";
      }
    ScanSpec z;
    z.strategy = ScanStrategy::Z;
    if (ok && continuity_score(build_permutation(z, 4, 4)) != 0.8) {
      ok = false;
      why = "z-scan 4x4 continuity not exactly 0.8";
    }
  }
  const double dt = seconds_since(t0);
  if (ok && dt >= 10.0) {
    ok = false;
    why = "runtime over 10 s";
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "permutation suite (bijectivity, adjacency, jump bound, continuity) in %.2f s%s%s", dt,
                ok ? "" : "; ", why.c_str());
  report(1, ok, buf);
}

// ---- 2: shift-stripe coverage ----------------------------------------------------

void criterion_shift_coverage() {
  bool ok = true;
  for (int W : {8, 12, 16}) {
    const int ws = 4;
    const auto shifted = shifted_stripe_bounds(W, ws).widths;
    std::vector<int> starts{0};
    for (int w : shifted) starts.push_back(starts.back() + w);
    for (int boundary = ws; boundary < W; boundary += ws) {
      bool interior = false;
      for (std::size_t i = 0; i + 1 < starts.size(); ++i)
        if (starts[i] < boundary && boundary < starts[i + 1]) interior = true;
      ok = ok && interior;
    }
  }
  report(2, ok, "shift-stripe layout covers every unshifted stripe boundary");
}

// ---- 3: SSA algebra ---------------------------------------------------------------

void criterion_ssa_algebra() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::string why;
  for (int k = 1; k <= 4 && ok; ++k)
    for (int d = 1; d <= 16 && ok; ++d) {
      ShuffleLayout lay{k, d};
      const auto s = shuffle_gather_order(lay);
      const auto u = unshuffle_gather_order(lay);
      for (int i = 0; i < lay.length(); ++i)
        if (s[static_cast<std::size_t>(u[static_cast<std::size_t>(i)])] != i ||
            u[static_cast<std::size_t>(s[static_cast<std::size_t>(i)])] != i) {
          ok = false;
          why = "shuffle/unshuffle not mutually inverse";
        }
    }
  if (ok) {
    const int D = 5, K = 4;
    Rng rng(2718);
    Tape<double> tape;
    std::vector<Var<double>> pooled;
    for (int i = 0; i < K; ++i) pooled.push_back(tape.leaf(rng.normal_tensor<double>({D})));
    SsaVars<double> sv{tape.leaf(rng.normal_tensor<double>({D, K, K})),
                       tape.leaf(rng.normal_tensor<double>({D, K}))};
    auto wmat = ssa_weights(pooled, sv, SsaNorm::Softmax);
    for (int d = 0; d < D; ++d) {
      double sum = 0;
      for (int kk = 0; kk < K; ++kk) sum += wmat.val().at(kk, d);
      if (std::abs(sum - 1.0) > 1e-6) {
        ok = false;
        why = "softmax weights do not sum to 1";
      }
    }
  }
  if (ok) {
    const int D = 3, K = 4, H = 3, W = 2;
    Rng rng(577);
    std::vector<Tensor<double>> maps;
    for (int i = 0; i < K; ++i) maps.push_back(rng.normal_tensor<double>({D, H, W}));
    Tape<double> tape;
    SsaVars<double> sv{tape.leaf(Tensor<double>({D, K, K})), tape.leaf(Tensor<double>({D, K}))};
    std::vector<Var<double>> vars;
    for (const auto& m : maps) vars.push_back(tape.leaf(m));
    auto y = ssa_aggregate(vars, sv, SsaNorm::Softmax);
    for (std::size_t i = 0; i < y.val().numel(); ++i) {
      double mean4 = 0;
      for (const auto& m : maps) mean4 += m.data[i];
      mean4 /= 4.0;
      if (std::abs(y.val().data[i] - mean4) > 1e-12) {
        ok = false;
        why = "zero group maps did not give the exact 4-way mean";
      }
    }
  }
  const double dt = seconds_since(t0);
  if (ok && dt >= 5.0) {
    ok = false;
    why = "runtime over 5 s";
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "SSA algebra (inverse shuffle, weight normalization, mean) in %.2f s%s%s",
                dt, ok ? "" : "; ", why.c_str());
  report(3, ok, buf);
}

// ---- 4: selective-scan oracle ------------------------------------------------------

void criterion_selective_scan() {
  bool ok = true;
  std::string why;
  auto run1 = [](const std::vector<double>& x, double a, double delta, double b, double c, double skip) {
    Tape<double> tape;
    const int L = static_cast<int>(x.size());
    return selective_scan(tape.leaf(Tensor<double>({1, L}, x)),
                          tape.leaf(Tensor<double>::full({1, L}, delta)),
                          tape.leaf(Tensor<double>({1, 1}, {a})),
                          tape.leaf(Tensor<double>::full({1, L}, b)),
                          tape.leaf(Tensor<double>::full({1, L}, c)),
                          tape.leaf(Tensor<double>({1}, {skip})))
        .val();
  };
  {
    auto y = run1({1, 2, 3}, 0.0, 1.0, 1.0, 1.0, 0.0);
    const double expect[3] = {1.0, 3.0, 6.0};
    for (int i = 0; i < 3; ++i)
      if (std::abs(y.data[static_cast<std::size_t>(i)] - expect[i]) > 1e-9) {
        ok = false;
        why = "cumulative-sum case";
      }
  }
  {
    auto y = run1({1, 0, 0}, -std::log(2.0), 1.0, 1.0, 1.0, 0.0);
    const double expect[3] = {1.0, 0.5, 0.25};
    for (int i = 0; i < 3; ++i)
      if (std::abs(y.data[static_cast<std::size_t>(i)] - expect[i]) > 1e-9) {
        ok = false;
        why = "decay-1/2 case";
      }
  }
  if (ok) {  // causality, bit-exact prefix
    Rng rng(99);
    const int D = 2, L = 16, N = 4, cut = 7;
    Tensor<double> x = rng.normal_tensor<double>({D, L});
    Tensor<double> delta = rng.uniform_tensor<double>({D, L}, 0.1, 0.9);
    Tensor<double> a = rng.uniform_tensor<double>({D, N}, -2.0, -0.1);
    Tensor<double> b = rng.normal_tensor<double>({N, L});
    Tensor<double> c = rng.normal_tensor<double>({N, L});
    Tensor<double> skip = rng.normal_tensor<double>({D});
    Tape<double> t1;
    auto y1 = selective_scan(t1.leaf(x), t1.leaf(delta), t1.leaf(a), t1.leaf(b), t1.leaf(c), t1.leaf(skip));
    Tensor<double> x2 = x;
    for (int d = 0; d < D; ++d)
      for (int t = cut + 1; t < L; ++t) x2.data[static_cast<std::size_t>(d) * L + t] += 10.0;
    Tape<double> t2;
    auto y2 = selective_scan(t2.leaf(x2), t2.leaf(delta), t2.leaf(a), t2.leaf(b), t2.leaf(c), t2.leaf(skip));
    for (int d = 0; d < D; ++d)
      for (int t = 0; t <= cut; ++t)
        if (y1.val().data[static_cast<std::size_t>(d) * L + t] !=
            y2.val().data[static_cast<std::size_t>(d) * L + t]) {
          ok = false;
          why = "causality prefix not bit-identical";
        }
  }
  if (ok) {  // L=4096 stability against the closed-form bound
    const int L = 4096;
    const double a = -0.3, delta = 0.9, b = 1.2, x = 0.7;
    auto y = run1(std::vector<double>(L, x), a, delta, b, 1.0, 0.0);
    const double bound = std::abs(delta * b * x) / (1.0 - std::exp(delta * a)) + 1e-12;
    for (double v : y.data)
      if (std::abs(v) > bound) {
        ok = false;
        why = "L=4096 constant input exceeded the closed-form bound";
      }
  }
  report(4, ok, ok ? "selective-scan oracle (cumsum, decay, causality, stability)" : why);
}

// ---- 5: gradient suite --------------------------------------------------------------

void criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto suite = run_gradient_suite(20260810, 20);
  double worst = 0.0;
  std::string worst_op;
  for (const auto& e : suite)
    if (e.worst_rel > worst) {
      worst = e.worst_rel;
      worst_op = e.module + "/" + e.op;
    }
  const double dt = seconds_since(t0);
  bool ok = worst <= 1e-4;
  std::string why;
  if (ok && dt >= 120.0) {
    ok = false;
    why = "runtime over 2 min";
  }
  char buf[200];
  std::snprintf(buf, sizeof(buf), "gradients vs central differences, 20 seeds: worst %.3e (%s) in %.1f s%s%s",
                worst, worst_op.c_str(), dt, why.empty() ? "" : "; ", why.c_str());
  report(5, ok, buf);
}

// ---- 6: residual identities -----------------------------------------------------------

void criterion_residuals() {
  bool ok = true;
  std::string why;
  {
    ModelConfig c;
    c.channels = 16;
    c.n_groups = 2;
    c.n_blocks = 2;
    Model<float> m = build_model<float>(c, 5);
    m.zero_all();
    Rng rng(6);
    Tensor<float> x = rng.uniform_tensor<float>({3, 12, 10});
    if (infer(m, x).data != x.data) {
      ok = false;
      why = "all-zero-body restore is not the exact identity";
    }
  }
  if (ok) {
    Tape<float> tf;
    auto lf = loss_charbonnier(tf.leaf(Tensor<float>({3, 32, 32})), tf.leaf(Tensor<float>({3, 32, 32})),
                               1e-3f);
    Tape<double> td;
    auto ld = loss_charbonnier(td.leaf(Tensor<double>({3, 32, 32})), td.leaf(Tensor<double>({3, 32, 32})),
                               1e-3);
    auto ld2 = loss_charbonnier(td.leaf(Tensor<double>({1, 4, 4})), td.leaf(Tensor<double>({1, 4, 4})), 1e-3);
    if (lf.val().data[0] != 1e-3f || ld.val().data[0] != 1e-3 || ld2.val().data[0] != 1e-3) {
      ok = false;
      why = "charbonnier at zero residual is not exactly 1e-3";
    }
  }
  report(6, ok, ok ? "residual identities (identity restore, charbonnier eps)" : why);
}

// ---- 7: toy training ---------------------------------------------------------------------

void criterion_training() {
  TrainOptions opts;  // default config: C=16, 2 groups × 2 blocks, N=8, E=2, w_s=4
  opts.task = Task::Denoise;
  opts.sigma = 25.0 / 255.0;
  opts.patch = 32;
  opts.steps = 2000;
  opts.seed = 2026;
  opts.adam.lr = 2e-3;

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult r1 = run_training(opts);
  const double train_seconds = seconds_since(t0);
  TrainResult r2 = run_training(opts);

  const double gain = r1.final_psnr - r1.baseline_psnr;
  const bool reproduced = metric_log_csv(r1.log) == metric_log_csv(r2.log);
  bool ok = gain >= 1.0 && reproduced;
  std::string why;
  if (train_seconds > 900.0) {
    ok = false;
    why = "; runtime over 15 min";
  }
  char buf[240];
  std::snprintf(buf, sizeof(buf),
                "toy denoise training: baseline %.2f dB, final %.2f dB (%+.2f dB, need >= +1.0), "
                "rerun bit-identical=%s, %.0f s%s",
                r1.baseline_psnr, r1.final_psnr, gain, reproduced ? "yes" : "NO", train_seconds,
                why.c_str());
  report(7, ok, buf);
}

// ---- 8: ablation harness smoke --------------------------------------------------------------

void criterion_ablation(const char* cli_path) {
  bool ok = true;
  std::string why;
  std::vector<std::vector<std::string>> rows;
  const std::string csv_path =
      (std::filesystem::temp_directory_path() / "mair_acceptance_ablation.csv").string();

  if (cli_path != nullptr) {
    const std::string cmd = std::string("\"") + cli_path +
                            "\" ablate --axis scan_strategy --budget 500 --seed 11 --csv \"" + csv_path +
                            "\" > /dev/null";
    const int rc = std::system(cmd.c_str());
    if (rc != 0) {
      ok = false;
      why = "cmd_ablate exited with status " + std::to_string(rc);
    }
  } else {
    auto report_obj = run_ablation(AblationAxis::ScanStrategy, 500, 11);
    std::ofstream(csv_path) << ablation_csv(report_obj);
  }
  if (ok) {
    std::ifstream f(csv_path);
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
      std::vector<std::string> cells;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (cells.size() >= 7) rows.push_back(cells);
    }
    const std::vector<std::string> expect{"nss", "nss-no-shift", "z", "s", "local_window", "hilbert"};
    if (rows.size() != expect.size()) {
      ok = false;
      why = "expected 6 variant rows, got " + std::to_string(rows.size());
    } else {
      long long pmin = 0, pmax = 0;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i][0] != expect[i]) {
          ok = false;
          why = "variant order mismatch at row " + std::to_string(i);
        }
        const long long params = std::atoll(rows[i][1].c_str());
        pmin = i == 0 ? params : std::min(pmin, params);
        pmax = i == 0 ? params : std::max(pmax, params);
        const std::string& flag = rows[i][6];
        if (flag != "yes" && flag != "no") {
          ok = false;
          why = "missing converged flag";
        }
      }
      if (ok && static_cast<double>(pmax - pmin) > 0.05 * static_cast<double>(pmax)) {
        ok = false;
        why = "parameter counts differ by more than 5%";
      }
    }
  }
  std::filesystem::remove(csv_path);
  char buf[200];
  std::snprintf(buf, sizeof(buf), "ablation smoke over scan strategies (%zu rows, deltas reported)%s%s",
                rows.size(), ok ? "" : "; ", why.c_str());
  report(8, ok, buf);
}

// ---- 9: serialization -------------------------------------------------------------------------

void criterion_serialization() {
  ModelConfig c;
  c.channels = 16;
  c.n_groups = 2;
  c.n_blocks = 2;
  Model<float> m = build_model<float>(c, 31415);
  Rng rng(8);
  Tensor<float> x = rng.uniform_tensor<float>({3, 16, 16});
  Tensor<float> y_before = infer(m, x);

  const std::string b1 = serialize_model(m);
  Model<float> loaded = deserialize_model<float>(b1);
  const std::string b2 = serialize_model(loaded);
  const bool bytes_ok = b1 == b2;
  const bool output_ok = infer(loaded, x).data == y_before.data;
  report(9, bytes_ok && output_ok,
         std::string("serialization (byte-identical resave=") + (bytes_ok ? "yes" : "NO") +
             ", bit-exact outputs=" + (output_ok ? "yes" : "NO") + ")");
}

}  // namespace

int main(int argc, char** argv) {
  const char* cli = argc > 1 ? argv[1] : nullptr;
  std::printf("== acceptance suite ==\n");
  criterion_permutations();
  criterion_shift_coverage();
  criterion_ssa_algebra();
  criterion_selective_scan();
  criterion_gradients();
  criterion_residuals();
  criterion_training();
  criterion_ablation(cli);
  criterion_serialization();
  std::printf("== %d criterion(s) failed ==\n", g_failures);
  return g_failures;
}
