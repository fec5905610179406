#pragma once

// Toy training/eval harness: seeded synthetic data, Adam over the model
// parameters, periodic held-out metrics, and the ablation sweeps (scan
// strategy, aggregation, stripe width) on matched budgets.

#include <chrono>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mair/data.hpp"
#include "mair/metrics.hpp"
#include "mair/net.hpp"
#include "mair/optim.hpp"
#include "mair/serialize.hpp"

namespace mair {

struct TrainOptions {
  ModelConfig model;
  Task task = Task::Denoise;
  double sigma = 25.0 / 255.0;  // [0,1] scale
  int sr_scale = 2;
  int steps = 2000;
  int batch = 1;
  int patch = 32;  // model-input patch side (LR side for SR)
  int train_images = 48;
  int val_images = 6;
  int eval_every = 250;
  AdamConfig adam{};
  std::uint64_t seed = 0;

  void validate() const {
    model.validate();
    if (steps < 1 || batch < 1 || train_images < 1 || val_images < 1 || eval_every < 1)
      throw std::invalid_argument("train options: counts must be >= 1");
    if (patch < 16) throw std::invalid_argument("train options: patch must be >= 16");
  }
};

struct LogEntry {
  int step = 0;  // 0 = before the first update
  double loss = 0.0;
  double psnr_db = 0.0;
  double ssim_val = 0.0;
};

struct TrainResult {
  Model<float> model{};
  std::vector<LogEntry> log;
  double baseline_psnr = 0.0;  // degraded-input PSNR on the held-out set
  double final_psnr = 0.0;
  double final_ssim = 0.0;
  double wall_seconds = 0.0;
  bool converged = false;
};

namespace detail {

struct EvalPair {
  Tensor<float> input;   // what the model sees
  Tensor<float> target;  // clean reference
};

inline double eval_psnr(Model<float>& m, const std::vector<EvalPair>& pairs, double* ssim_out) {
  double ps = 0.0, ss = 0.0;
  for (const auto& pr : pairs) {
    Tensor<float> y = clamp01(infer(m, pr.input));
    ps += psnr(y, pr.target);
    ss += ssim(y, pr.target);
  }
  if (ssim_out) *ssim_out = ss / static_cast<double>(pairs.size());
  return ps / static_cast<double>(pairs.size());
}

}  // namespace detail

inline TrainResult run_training(const TrainOptions& opts) {
  opts.validate();
  const auto t0 = std::chrono::steady_clock::now();

  ModelConfig mc = opts.model;
  if (opts.task == Task::SR) {
    mc.head = Head::SR;
    mc.sr_scale = opts.sr_scale;
  } else {
    mc.head = Head::Restore;
  }

  TrainResult res;
  res.model = build_model<float>(mc, opts.seed);

  const int hr_patch = opts.task == Task::SR ? opts.patch * opts.sr_scale : opts.patch;
  const auto train_set = synth_images<float>(opts.train_images, hr_patch, hr_patch,
                                             Rng::derive(opts.seed, 0x747261696e));
  const auto val_clean = synth_images<float>(opts.val_images, hr_patch, hr_patch,
                                             Rng::derive(opts.seed, 0x76616c));

  // Held-out pairs use fixed per-image degradations; metrics stay comparable
  // across evals and against the degraded-input baseline.
  std::vector<detail::EvalPair> val_pairs;
  double base_ps = 0.0, base_ss = 0.0;
  for (std::size_t i = 0; i < val_clean.size(); ++i) {
    detail::EvalPair pr;
    pr.target = val_clean[i];
    if (opts.task == Task::Denoise) {
      pr.input = add_noise(val_clean[i], opts.sigma, Rng::derive(opts.seed, 0x76616c6e + i));
      base_ps += psnr(clamp01(pr.input), pr.target);
      base_ss += ssim(clamp01(pr.input), pr.target);
    } else {
      pr.input = box_downsample(val_clean[i], opts.sr_scale);
      Tensor<float> up = replicate_upsample(pr.input, opts.sr_scale);
      base_ps += psnr(up, pr.target);
      base_ss += ssim(up, pr.target);
    }
    val_pairs.push_back(std::move(pr));
  }
  res.baseline_psnr = base_ps / static_cast<double>(val_pairs.size());

  Rng pick(Rng::derive(opts.seed, 0x7069636b));
  AdamState<float> adam;
  double step_loss = 0.0;
  double first_loss = 0.0;

  for (int step = 0; step < opts.steps; ++step) {
    Tape<float> tape;
    BoundModel<float> bound;
    ModelVars<float> mv = bind_model(res.model, tape, &bound);
    Var<float> loss;
    for (int b = 0; b < opts.batch; ++b) {
      const auto& clean = train_set[pick.index(train_set.size())];
      Tensor<float> input, target;
      if (opts.task == Task::Denoise) {
        target = clean;
        input = add_noise(clean, opts.sigma,
                          Rng::derive(opts.seed, 0x626e + static_cast<std::uint64_t>(step) * 131 + b));
      } else {
        target = clean;
        input = box_downsample(clean, opts.sr_scale);
      }
      Var<float> pred = forward_bound(res.model.cfg, mv, tape.leaf(input));
      Var<float> target_leaf = tape.leaf(target);
      Var<float> li = opts.task == Task::Denoise ? loss_charbonnier(pred, target_leaf)
                                                 : loss_l1(pred, target_leaf);
      loss = b == 0 ? li : add(loss, li);
    }
    if (opts.batch > 1) loss = scale_const(loss, 1.0f / static_cast<float>(opts.batch));
    tape.backward(loss);
    step_loss = static_cast<double>(loss.val().data[0]);
    if (step == 0) {
      first_loss = step_loss;
      double ss = 0.0;
      const double ps = detail::eval_psnr(res.model, val_pairs, &ss);
      res.log.push_back({0, step_loss, ps, ss});
    }

    std::vector<Tensor<float>*> params;
    std::vector<const Tensor<float>*> grads;
    params.reserve(bound.reg.size());
    grads.reserve(bound.reg.size());
    for (auto& [tensor, var] : bound.reg) {
      params.push_back(tensor);
      grads.push_back(&tape.grad(var.id));
    }
    adam_step(params, grads, adam, opts.adam);

    if ((step + 1) % opts.eval_every == 0 || step + 1 == opts.steps) {
      double ss = 0.0;
      const double ps = detail::eval_psnr(res.model, val_pairs, &ss);
      res.log.push_back({step + 1, step_loss, ps, ss});
    }
  }

  res.final_psnr = res.log.back().psnr_db;
  res.final_ssim = res.log.back().ssim_val;
  res.converged = res.log.back().loss < first_loss && res.final_psnr > res.baseline_psnr;
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (std::size_t i = 1; i < res.log.size(); ++i)
    if (res.log[i].step <= res.log[i - 1].step) throw std::logic_error("metric log not monotone in step");
  return res;
}

inline std::string metric_log_csv(const std::vector<LogEntry>& log) {
  std::string out = "step,loss,psnr_db,ssim\n";
  char buf[160];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", e.step, e.loss, e.psnr_db, e.ssim_val);
    out += buf;
  }
  return out;
}

// ---- ablation harness ---------------------------------------------------------

enum class AblationAxis { ScanStrategy, Aggregation, StripeWidth };

inline AblationAxis ablation_axis_from_string(const std::string& s) {
  if (s == "scan_strategy") return AblationAxis::ScanStrategy;
  if (s == "aggregation") return AblationAxis::Aggregation;
  if (s == "stripe_width") return AblationAxis::StripeWidth;
  throw std::invalid_argument("unknown ablation axis '" + s + "' (scan_strategy|aggregation|stripe_width)");
}

struct AblationRow {
  std::string variant;
  long long params = 0;
  int steps = 0;
  double psnr_db = 0.0;
  double ssim_val = 0.0;
  double wall_seconds = 0.0;
  bool converged = false;
};

struct AblationReport {
  AblationAxis axis;
  std::vector<AblationRow> rows;
  nlohmann::json manifest;
};

// Matched toy models per variant, trained on identical data and seeds on a
// lightweight ×2 super-resolution task.
inline AblationReport run_ablation(AblationAxis axis, int budget, std::uint64_t seed,
                                   int patch = 16) {
  if (budget < 1) throw std::invalid_argument("run_ablation: budget must be >= 1");
  TrainOptions base;
  base.task = Task::SR;
  base.sr_scale = 2;
  base.steps = budget;
  base.patch = patch;
  base.train_images = 24;
  base.val_images = 4;
  base.eval_every = std::max(1, budget / 4);
  base.seed = seed;
  base.model.channels = 16;
  base.model.n_groups = 1;
  base.model.n_blocks = 2;

  struct Variant {
    std::string name;
    TrainOptions opts;
  };
  std::vector<Variant> variants;
  auto push = [&variants](const std::string& name, TrainOptions o) {
    variants.push_back({name, std::move(o)});
  };

  switch (axis) {
    case AblationAxis::ScanStrategy: {
      TrainOptions o = base;
      o.model.strategy = ScanStrategy::NSS;
      o.model.shift_stripes = true;
      push("nss", o);
      o.model.shift_stripes = false;
      push("nss-no-shift", o);
      o.model.shift_stripes = true;
      o.model.strategy = ScanStrategy::Z;
      push("z", o);
      o.model.strategy = ScanStrategy::S;
      push("s", o);
      o.model.strategy = ScanStrategy::LOCAL_WINDOW;
      push("local_window", o);
      o.model.strategy = ScanStrategy::HILBERT;
      push("hilbert", o);
      break;
    }
    case AblationAxis::Aggregation: {
      for (Aggregation a : {Aggregation::SSA, Aggregation::Add, Aggregation::SeqGate,
                            Aggregation::ChannelGate, Aggregation::DensePixelGate,
                            Aggregation::DwPixelGate}) {
        TrainOptions o = base;
        o.model.aggregation = a;
        push(to_string(a), o);
      }
      break;
    }
    case AblationAxis::StripeWidth: {
      for (int ws : {2, 4, 8, 16, 32}) {
        TrainOptions o = base;
        o.model.stripe_width = ws;
        if (o.patch < ws) o.patch = ws;  // NSS needs w_s <= W
        push("w" + std::to_string(ws), o);
      }
      break;
    }
  }

  AblationReport report;
  report.axis = axis;
  for (auto& v : variants) {
    TrainResult r = run_training(v.opts);
    AblationRow row;
    row.variant = v.name;
    row.params = r.model.param_count();
    row.steps = v.opts.steps;
    row.psnr_db = r.final_psnr;
    row.ssim_val = r.final_ssim;
    row.wall_seconds = r.wall_seconds;
    row.converged = r.converged;
    report.rows.push_back(std::move(row));
  }
  report.manifest = nlohmann::json{
      {"axis", axis == AblationAxis::ScanStrategy
                   ? "scan_strategy"
                   : (axis == AblationAxis::Aggregation ? "aggregation" : "stripe_width")},
      {"budget", budget},
      {"seed", seed},
      {"task", to_string(base.task)},
      {"sr_scale", base.sr_scale},
      {"patch", patch},
      {"base_config", config_to_json(base.model)}};
  return report;
}

inline std::string ablation_csv(const AblationReport& report) {
  std::string out = "variant,params,steps,psnr_db,ssim,wall_seconds,converged\n";
  char buf[256];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%lld,%d,%.6f,%.6f,%.3f,%s\n", r.variant.c_str(), r.params,
                  r.steps, r.psnr_db, r.ssim_val, r.wall_seconds, r.converged ? "yes" : "no");
    out += buf;
  }
  return out;
}

}  // namespace mair
