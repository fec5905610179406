// Command-line surface: scan inspection, gradient verification, training,
// restoration and evaluation. Exit codes: 0 success, 1 runtime failure,
// 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mair/data.hpp"
#include "mair/gradcheck.hpp"
#include "mair/image_io.hpp"
#include "mair/metrics.hpp"
#include "mair/net.hpp"
#include "mair/scan.hpp"
#include "mair/scan_io.hpp"
#include "mair/serialize.hpp"
#include "mair/train.hpp"

namespace {

struct ScanArgs {
  std::string strategy = "nss";
  int height = 8;
  int width = 8;
  int stripe = 4;
  int direction = 0;
  bool shift = false;
  std::string json_path;
  std::string svg_path;
};

int cmd_scan(const ScanArgs& a) {
  mair::ScanSpec spec;
  spec.strategy = mair::scan_strategy_from_string(a.strategy);
  spec.stripe_width = a.stripe;
  spec.shifted = a.shift;
  spec.direction = a.direction;
  std::printf("scan: strategy=%s height=%d width=%d stripe=%d shift=%s direction=%d\n",
              mair::to_string(spec.strategy), a.height, a.width, a.stripe, a.shift ? "on" : "off",
              a.direction);
  const mair::Permutation perm = mair::build_permutation(spec, a.height, a.width);
  if (perm.length() >= 2) {
    std::printf("continuity %.4f\n", mair::continuity_score(perm));
  } else {
    std::printf("continuity n/a (single cell)\n");
  }
  const long long ws = a.stripe;
  for (long long n : {4ll, ws * ws, 2 * ws * ws}) {
    const int nn = static_cast<int>(std::min<long long>(std::max(1ll, n), perm.length()));
    std::printf("locality n=%d: %lld\n", nn, mair::locality_profile(perm, nn));
  }
  if (!a.json_path.empty()) {
    mair::write_text_file(a.json_path, mair::permutation_to_json(spec, perm).dump(2) + "\n");
    std::printf("wrote %s\n", a.json_path.c_str());
  }
  if (!a.svg_path.empty()) {
    mair::write_text_file(a.svg_path, mair::render_scan_svg(spec, a.height, a.width));
    std::printf("wrote %s\n", a.svg_path.c_str());
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, int cases) {
  std::printf("gradcheck: seed=%llu cases=%d tolerance=1e-4\n",
              static_cast<unsigned long long>(seed), cases);
  const auto suite = mair::run_gradient_suite(seed, cases);
  double worst = 0.0;
  std::string worst_name;
  std::string module;
  double module_worst = 0.0;
  auto flush_module = [&]() {
    if (!module.empty()) std::printf("  module %-12s worst rel err %.3e\n", module.c_str(), module_worst);
  };
  for (const auto& e : suite) {
    if (e.module != module) {
      flush_module();
      module = e.module;
      module_worst = 0.0;
    }
    module_worst = std::max(module_worst, e.worst_rel);
    std::printf("  %-12s %-18s %.3e\n", e.module.c_str(), e.op.c_str(), e.worst_rel);
    if (e.worst_rel > worst) {
      worst = e.worst_rel;
      worst_name = e.module + "/" + e.op;
    }
  }
  flush_module();
  const bool pass = worst <= 1e-4;
  std::printf("gradcheck %s: worst %.3e (%s)\n", pass ? "PASS" : "FAIL", worst, worst_name.c_str());
  return pass ? 0 : 1;
}

struct TrainArgs {
  std::string task = "denoise";
  double sigma = 25.0;  // 0..255 scale, divided by 255 internally
  int scale = 2;
  int steps = 2000;
  int batch = 1;
  int patch = 32;
  double lr = 2e-3;
  int eval_every = 250;
  std::uint64_t seed = 0;
  std::string out = "model.mair";
  std::string log_path;
  std::string config_path;
};

mair::ModelConfig model_config_from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config '" + path + "'");
  nlohmann::json j;
  f >> j;
  return mair::config_from_json(j);
}

int cmd_train(const TrainArgs& a) {
  mair::TrainOptions opts;
  if (!a.config_path.empty()) opts.model = model_config_from_file(a.config_path);
  opts.task = mair::task_from_string(a.task);
  opts.sigma = a.sigma / 255.0;
  opts.sr_scale = a.scale;
  opts.steps = a.steps;
  opts.batch = a.batch;
  opts.patch = a.patch;
  opts.eval_every = a.eval_every;
  opts.adam.lr = a.lr;
  opts.seed = a.seed;

  std::printf("train: task=%s sigma=%.1f/255 scale=%d steps=%d batch=%d patch=%d lr=%g seed=%llu\n",
              a.task.c_str(), a.sigma, a.scale, a.steps, a.batch, a.patch, a.lr,
              static_cast<unsigned long long>(a.seed));
  std::printf("model: channels=%d groups=%d blocks=%d stripe=%d state=%d expansion=%d agg=%s scan=%s\n",
              opts.model.channels, opts.model.n_groups, opts.model.n_blocks, opts.model.stripe_width,
              opts.model.ssm_state, opts.model.expansion, mair::to_string(opts.model.aggregation),
              mair::to_string(opts.model.strategy));

  mair::TrainResult res = mair::run_training(opts);
  for (const auto& e : res.log)
    std::printf("  step %5d  loss %.6f  psnr %.3f dB  ssim %.4f\n", e.step, e.loss, e.psnr_db, e.ssim_val);
  std::printf("baseline (degraded input) psnr %.3f dB; final psnr %.3f dB (%+.3f dB)\n", res.baseline_psnr,
              res.final_psnr, res.final_psnr - res.baseline_psnr);
  std::printf("wall %.1f s, %s\n", res.wall_seconds, res.converged ? "converged" : "non-converged");

  mair::save_model(res.model, a.out);
  std::printf("wrote %s (%lld params)\n", a.out.c_str(), res.model.param_count());
  const std::string log_path = a.log_path.empty() ? a.out + ".log.csv" : a.log_path;
  mair::write_text_file(log_path, mair::metric_log_csv(res.log));
  const nlohmann::json manifest{{"task", a.task},
                                {"sigma", a.sigma},
                                {"sr_scale", a.scale},
                                {"steps", a.steps},
                                {"batch", a.batch},
                                {"patch", a.patch},
                                {"lr", a.lr},
                                {"eval_every", a.eval_every},
                                {"seed", a.seed},
                                {"config", mair::config_to_json(res.model.cfg)}};
  mair::write_text_file(a.out + ".manifest.json", manifest.dump(2) + "\n");
  std::printf("wrote %s and %s.manifest.json\n", log_path.c_str(), a.out.c_str());
  return 0;
}

int cmd_ablate(const std::string& axis, int budget, std::uint64_t seed, const std::string& csv_path) {
  std::printf("ablate: axis=%s budget=%d seed=%llu\n", axis.c_str(), budget,
              static_cast<unsigned long long>(seed));
  const auto report = mair::run_ablation(mair::ablation_axis_from_string(axis), budget, seed);
  const std::string csv = mair::ablation_csv(report);
  std::fputs(csv.c_str(), stdout);
  if (!csv_path.empty()) {
    mair::write_text_file(csv_path, csv);
    mair::write_text_file(csv_path + ".manifest.json", report.manifest.dump(2) + "\n");
    std::printf("wrote %s and %s.manifest.json\n", csv_path.c_str(), csv_path.c_str());
  }
  return 0;
}

// PGM inputs are replicated to three channels for the model and collapsed
// back on write.
mair::Tensor<float> to_model_input(const mair::Tensor<float>& img) {
  if (img.shape[0] == 3) return img;
  mair::Tensor<float> out({3, img.shape[1], img.shape[2]});
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < img.numel(); ++i) out.data[c * img.numel() + i] = img.data[i];
  return out;
}

mair::Tensor<float> from_model_output(const mair::Tensor<float>& y, int channels) {
  if (channels == 3) return y;
  mair::Tensor<float> out({1, y.shape[1], y.shape[2]});
  const std::size_t sites = out.numel();
  for (std::size_t i = 0; i < sites; ++i)
    out.data[i] = (y.data[i] + y.data[sites + i] + y.data[2 * sites + i]) / 3.0f;
  return out;
}

int cmd_restore(const std::string& model_path, const std::string& in_path, const std::string& out_path) {
  mair::Model<float> model = mair::load_model<float>(model_path);
  std::printf("restore: model=%s head=%s in=%s out=%s\n", model_path.c_str(),
              mair::to_string(model.cfg.head), in_path.c_str(), out_path.c_str());
  const mair::Tensor<float> img = mair::read_pnm<float>(in_path);
  const int in_channels = img.shape[0];
  mair::Tensor<float> y = mair::infer(model, to_model_input(img));
  mair::write_pnm(mair::clamp01(from_model_output(y, in_channels)), out_path);
  std::printf("wrote %s (%dx%d)\n", out_path.c_str(), y.shape[2], y.shape[1]);
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& clean_dir, double sigma255,
             std::uint64_t seed) {
  mair::Model<float> model = mair::load_model<float>(model_path);
  const double sigma = sigma255 / 255.0;
  if (model.cfg.head == mair::Head::SR && sigma > 0.0)
    throw std::runtime_error("eval: task denoise (sigma=" + std::to_string(sigma255) +
                             ") does not match model head 'sr'");
  std::printf("eval: model=%s head=%s clean-dir=%s sigma=%.1f/255\n", model_path.c_str(),
              mair::to_string(model.cfg.head), clean_dir.c_str(), sigma255);

  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(clean_dir)) {
    const auto ext = e.path().extension().string();
    if (ext == ".ppm" || ext == ".pgm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("eval: no .ppm/.pgm files in '" + clean_dir + "'");

  std::printf("%-28s %10s %10s %10s %10s\n", "image", "in_psnr", "psnr", "in_ssim", "ssim");
  double sum_psnr = 0.0, sum_ssim = 0.0;
  std::uint64_t idx = 0;
  for (const auto& f : files) {
    const mair::Tensor<float> clean = to_model_input(mair::read_pnm<float>(f.string()));
    mair::Tensor<float> input, reference = clean;
    if (model.cfg.head == mair::Head::Restore) {
      input = mair::add_noise(clean, sigma, mair::Rng::derive(seed, idx));
    } else {
      input = mair::box_downsample(clean, model.cfg.sr_scale);
    }
    const mair::Tensor<float> base =
        model.cfg.head == mair::Head::Restore
            ? mair::clamp01(input)
            : mair::replicate_upsample(input, model.cfg.sr_scale);
    mair::Tensor<float> y = mair::clamp01(mair::infer(model, input));
    const double p = mair::psnr(y, reference), s = mair::ssim(y, reference);
    std::printf("%-28s %10.3f %10.3f %10.4f %10.4f\n", f.filename().string().c_str(),
                mair::psnr(base, reference), p, mair::ssim(base, reference), s);
    sum_psnr += p;
    sum_ssim += s;
    ++idx;
  }
  std::printf("%-28s %10s %10.3f %10s %10.4f\n", "mean", "", sum_psnr / files.size(), "",
              sum_ssim / files.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MaIR toy restoration toolkit"};
  app.require_subcommand(1);

  ScanArgs sa;
  auto* scan = app.add_subcommand("scan", "build a scan permutation, print its metrics, export JSON/SVG");
  scan->add_option("--strategy", sa.strategy, "nss|z|s|local_window|hilbert")->capture_default_str();
  scan->add_option("--height", sa.height)->check(CLI::Range(1, 4096))->capture_default_str();
  scan->add_option("--width", sa.width)->check(CLI::Range(1, 4096))->capture_default_str();
  scan->add_option("--stripe", sa.stripe, "stripe width (nss) or window side (local_window)")
      ->check(CLI::Range(1, 4096))
      ->capture_default_str();
  scan->add_option("--direction", sa.direction)->check(CLI::Range(0, 3))->capture_default_str();
  scan->add_flag("--shift", sa.shift, "shift-stripe layout (nss)");
  scan->add_option("--json", sa.json_path, "write permutation JSON here");
  scan->add_option("--svg", sa.svg_path, "write SVG path rendering here");

  std::uint64_t gc_seed = 42;
  int gc_cases = 20;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference verification of all gradients");
  gc->add_option("--seed", gc_seed)->capture_default_str();
  gc->add_option("--cases", gc_cases, "random cases per op")->check(CLI::Range(1, 1000))->capture_default_str();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "train a toy model on synthetic data");
  tr->add_option("--task", ta.task, "denoise|sr")->capture_default_str();
  tr->add_option("--sigma", ta.sigma, "noise std on the 0..255 scale")->check(CLI::Range(0.0, 255.0))->capture_default_str();
  tr->add_option("--scale", ta.scale, "sr upscale factor")->check(CLI::Range(2, 4))->capture_default_str();
  tr->add_option("--steps", ta.steps)->check(CLI::Range(1, 1000000))->capture_default_str();
  tr->add_option("--batch", ta.batch)->check(CLI::Range(1, 64))->capture_default_str();
  tr->add_option("--patch", ta.patch)->check(CLI::Range(16, 256))->capture_default_str();
  tr->add_option("--lr", ta.lr)->capture_default_str();
  tr->add_option("--eval-every", ta.eval_every)->check(CLI::Range(1, 1000000))->capture_default_str();
  tr->add_option("--seed", ta.seed)->capture_default_str();
  tr->add_option("--out", ta.out, "model output path")->capture_default_str();
  tr->add_option("--log", ta.log_path, "metric log CSV path (default <out>.log.csv)");
  tr->add_option("--config", ta.config_path, "model config JSON (see README)");

  std::string ab_axis = "scan_strategy";
  int ab_budget = 500;
  std::uint64_t ab_seed = 0;
  std::string ab_csv;
  auto* ab = app.add_subcommand("ablate", "train matched variants along one ablation axis");
  ab->add_option("--axis", ab_axis, "scan_strategy|aggregation|stripe_width")->capture_default_str();
  ab->add_option("--budget", ab_budget, "steps per variant")->check(CLI::Range(1, 1000000))->capture_default_str();
  ab->add_option("--seed", ab_seed)->capture_default_str();
  ab->add_option("--csv", ab_csv, "write the report CSV here");

  std::string rs_model, rs_in, rs_out;
  auto* rs = app.add_subcommand("restore", "run a trained model on one image");
  rs->add_option("--model", rs_model)->required();
  rs->add_option("--in", rs_in, "input PPM/PGM")->required();
  rs->add_option("--out", rs_out, "output image path")->required();

  std::string ev_model, ev_dir;
  double ev_sigma = 25.0;
  std::uint64_t ev_seed = 0;
  auto* ev = app.add_subcommand("eval", "evaluate a model over a directory of clean images");
  ev->add_option("--model", ev_model)->required();
  ev->add_option("--clean-dir", ev_dir)->required();
  ev->add_option("--sigma", ev_sigma, "noise std on the 0..255 scale")->check(CLI::Range(0.0, 255.0))->capture_default_str();
  ev->add_option("--seed", ev_seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (scan->parsed()) return cmd_scan(sa);
    if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_cases);
    if (tr->parsed()) return cmd_train(ta);
    if (ab->parsed()) return cmd_ablate(ab_axis, ab_budget, ab_seed, ab_csv);
    if (rs->parsed()) return cmd_restore(rs_model, rs_in, rs_out);
    if (ev->parsed()) return cmd_eval(ev_model, ev_dir, ev_sigma, ev_seed);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
