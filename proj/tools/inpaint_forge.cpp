// Command-line front end: train, inpaint, eval, genmask, serve.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "forge/errors.hpp"
#include "forge/mask_gen.hpp"
#include "forge/metrics.hpp"
#include "forge/pipeline.hpp"
#include "forge/png_io.hpp"
#include "forge/service.hpp"
#include "forge/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw forge::IoError("cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw forge::ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

struct TrainArgs {
  std::vector<std::string> images;
  std::string mask;
  std::string svbrdf;
  std::string out;
  std::string config;
  int log_every = 100;
  bool no_dual_fallback = false;
  // Flag values only apply when the flag was given; CLI11 reports that through the option count.
  int iters = 0, crop = 0, batch = 0, lr_drop_at = 0, base_width = 0, depth = 0, steps = 0;
  std::uint64_t seed = 0;
  double lr = 0, lr_after = 0, rect_prob = 0;
  std::string mode, loss_reduction;
};

int run_train(const TrainArgs& a, CLI::App& cmd) {
  forge::TrainConfig base;
  if (!a.config.empty()) base = forge::train_config_from_json(read_json_file(a.config));

  json over = json::object();
  auto given = [&](const char* flag) { return cmd.count(flag) > 0; };
  if (!a.images.empty()) over["sources"] = a.images;
  if (given("--mask")) over["test_mask"] = a.mask;
  if (given("--svbrdf")) over["svbrdf"] = a.svbrdf;
  if (given("--iters")) over["iterations"] = a.iters;
  if (given("--seed")) over["seed"] = a.seed;
  if (given("--crop")) over["crop"] = a.crop;
  if (given("--batch")) over["batch"] = a.batch;
  if (given("--lr")) over["lr_initial"] = a.lr;
  if (given("--lr-after")) over["lr_after"] = a.lr_after;
  if (given("--lr-drop-at")) over["lr_drop_at"] = a.lr_drop_at;
  if (given("--mode")) over["mode"] = a.mode;
  if (given("--loss-reduction")) over["loss_reduction"] = a.loss_reduction;
  if (given("--rect-prob")) over["rect_mask_probability"] = a.rect_prob;
  if (given("--base-width")) over["base_width"] = a.base_width;
  if (given("--depth")) over["depth"] = a.depth;
  if (given("--steps")) over["diffusion_steps"] = a.steps;
  if (a.no_dual_fallback) over["allow_dual_fallback"] = false;
  const forge::TrainConfig cfg = forge::train_config_from_json(over, base);

  spdlog::info("training {} iterations (lr {} -> {} at {}), crop {}, batch {}, mode {}, seed {}", cfg.iterations,
               cfg.lr_initial, cfg.lr_after, cfg.lr_drop_at, cfg.crop, cfg.batch, forge::to_string(cfg.mode), cfg.seed);
  std::stop_source stop;
  std::jthread watcher([&stop](std::stop_token st) {
    while (!st.stop_requested()) {
      if (g_interrupted) {
        stop.request_stop();
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
  });
  auto sink = [&](const forge::TrainProgress& p) {
    if (p.iteration == 1 || p.iteration % a.log_every == 0 || p.iteration == p.iterations) {
      spdlog::info("iter {:>6}/{} loss {:.6f} ema {:.6f} lr {:.1e} {:.1f}s", p.iteration, p.iterations, p.loss,
                   p.loss_ema, p.lr, p.elapsed_seconds);
    }
  };
  const auto result = forge::train(cfg, a.out, sink, stop.get_token());
  watcher.request_stop();
  spdlog::info("{} after {} iterations ({:.1f}s); checkpoint {}", result.stopped_early ? "stopped" : "finished",
               result.iterations_completed, result.seconds, a.out);
  return result.stopped_early ? 130 : 0;
}

int run_inpaint(const forge::SampleRequest& req, const std::string& out) {
  auto sink = [&](int sample, int done, int total) {
    if (done % 100 == 0 || done == total) spdlog::info("sample {}/{} step {}/{}", sample + 1, req.num_samples, done, total);
  };
  const auto outcome = forge::run_sampling(req, out, sink);
  for (const auto& p : outcome.outputs) std::cout << p.string() << "\n";
  spdlog::info("{} sample(s) in {:.1f}s; manifest {}", outcome.outputs.size(),
               outcome.manifest["timings"]["total_seconds"].get<double>(), (fs::path(out) / "manifest.json").string());
  return 0;
}

int run_eval(const std::string& pred, const std::string& gt, const std::string& masks, const std::string& out,
             const std::string& lpips) {
  forge::EvalReport report = forge::evaluate_directories(pred, gt, masks);
  if (!lpips.empty()) {
    std::ifstream in(lpips);
    if (!in) throw forge::IoError("cannot open LPIPS table " + lpips);
    const std::string text((std::istreambuf_iterator<char>(in)), {});
    spdlog::info("merged LPIPS for {} of {} rows", report.merge_lpips(text), report.rows.size());
  }
  fs::path base(out);
  if (base.extension() == ".csv" || base.extension() == ".json") base.replace_extension();
  if (base.has_parent_path()) fs::create_directories(base.parent_path());
  forge::write_text_atomic(fs::path(base.string() + ".csv"), report.to_csv());
  forge::write_text_atomic(fs::path(base.string() + ".json"), report.to_json().dump(2) + "\n");
  for (const auto& [name, s] : report.aggregates()) {
    if (s.count) std::cout << name << ": mean " << s.mean << " std " << s.stddev << " (n=" << s.count << ")\n";
  }
  return 0;
}

int run_genmask(std::uint64_t seed, int size, const std::string& out, bool rect) {
  forge::Mask mask = rect ? forge::generate_rect_mask(size, seed)
                          : forge::generate_mask(forge::BrushConfig{}.scaled_to(size), seed);
  forge::save_mask(mask, out);
  const auto stats = forge::hole_stats(mask);
  std::cout << out << ": hole fraction " << stats.fraction << ", components " << stats.components << "\n";
  return 0;
}

int run_serve(forge::ServiceOptions options) {
  forge::Service service(std::move(options));
  service.start();
  std::cout << "listening on port " << service.port() << std::endl;
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(200));
  spdlog::info("shutting down");
  service.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-image diffusion inpainting: train on one image, sample diverse fillings."};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a denoiser on one image, a few images or a material");
  train->add_option("--image", ta.images, "Source image (repeatable)");
  train->add_option("--mask", ta.mask, "Test mask: hole pixels never reach the loss");
  train->add_option("--svbrdf", ta.svbrdf, "Directory with diffuse/normals/roughness/specular maps");
  train->add_option("--out", ta.out, "Checkpoint path")->required();
  train->add_option("--config", ta.config, "JSON training config; flags override it");
  train->add_option("--iters", ta.iters, "Iterations (LR drop keeps its relative position)");
  train->add_option("--seed", ta.seed, "Seed for initialization and data sampling");
  train->add_option("--crop", ta.crop, "Crop size in pixels");
  train->add_option("--batch", ta.batch, "Batch size");
  train->add_option("--lr", ta.lr, "Initial learning rate");
  train->add_option("--lr-after", ta.lr_after, "Learning rate after the drop");
  train->add_option("--lr-drop-at", ta.lr_drop_at, "Iteration of the LR drop");
  train->add_option("--mode", ta.mode, "subregion or dual-mask");
  train->add_option("--loss-reduction", ta.loss_reduction, "mean or sum");
  train->add_option("--rect-prob", ta.rect_prob, "Share of rectangular training masks");
  train->add_option("--base-width", ta.base_width, "Channels per scale");
  train->add_option("--depth", ta.depth, "Number of scales");
  train->add_option("--steps", ta.steps, "Diffusion steps T");
  train->add_option("--log-every", ta.log_every, "Progress log interval")->check(CLI::PositiveNumber);
  train->add_flag("--no-dual-fallback", ta.no_dual_fallback, "Fail instead of falling back to dual-mask crops");

  forge::SampleRequest sr;
  std::string sample_out;
  bool no_clamp = false, no_composite = false;
  auto* inpaint = app.add_subcommand("inpaint", "Sample inpaintings from a checkpoint");
  inpaint->add_option("--ckpt", sr.checkpoint, "Checkpoint")->required();
  inpaint->add_option("--image", sr.image, "Input image (or material directory with --svbrdf)")->required();
  inpaint->add_option("--mask", sr.mask, "Mask PNG; white marks the hole")->required();
  inpaint->add_option("--n", sr.num_samples, "Number of samples")->check(CLI::PositiveNumber);
  inpaint->add_option("--seed", sr.seed, "Seed of the first sample; sample i uses seed + i");
  inpaint->add_option("--out", sample_out, "Output directory")->required();
  inpaint->add_flag("--no-clamp", no_clamp, "Do not clamp x0 estimates to [-1, 1]");
  inpaint->add_flag("--no-composite", no_composite, "Keep sampled known pixels instead of pasting the input");
  inpaint->add_flag("--replace-each-step", sr.replace_each_step, "Overwrite known pixels after every step");
  inpaint->add_flag("--svbrdf", sr.svbrdf, "Treat --image as a material directory");

  std::string pred, gt, masks, report, lpips;
  auto* eval = app.add_subcommand("eval", "Score predictions against ground truth");
  eval->add_option("--pred", pred, "Prediction directory")->required();
  eval->add_option("--gt", gt, "Ground-truth directory")->required();
  eval->add_option("--masks", masks, "Mask directory")->required();
  eval->add_option("--out", report, "Report path stem; writes .csv and .json")->required();
  eval->add_option("--lpips", lpips, "Optional name,lpips table to merge");

  std::uint64_t mask_seed = 0;
  int mask_size = 256;
  std::string mask_out;
  bool rect = false;
  auto* genmask = app.add_subcommand("genmask", "Write a random training-style mask");
  genmask->add_option("--seed", mask_seed, "Seed");
  genmask->add_option("--size", mask_size, "Canvas size")->check(CLI::Range(16, 8192));
  genmask->add_option("--out", mask_out, "Output PNG")->required();
  genmask->add_flag("--rect", rect, "Rectangle instead of brush strokes");

  forge::ServiceOptions so;
  std::string workdir, static_dir;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--port", so.port, "Port (0 picks a free one)");
  serve->add_option("--host", so.host, "Bind address");
  serve->add_option("--workdir", workdir, "State directory (default: $INPAINT_FORGE_WORKDIR or ./forge-work)");
  serve->add_option("--sample-workers", so.sample_workers, "Concurrent sampling jobs")->check(CLI::PositiveNumber);
  serve->add_option("--static", static_dir, "Directory of UI assets served at /");

  CLI11_PARSE(app, argc, argv);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  try {
    if (*train) return run_train(ta, *train);
    if (*inpaint) {
      sr.clamp = !no_clamp;
      sr.composite = !no_composite;
      return run_inpaint(sr, sample_out);
    }
    if (*eval) return run_eval(pred, gt, masks, report, lpips);
    if (*genmask) return run_genmask(mask_seed, mask_size, mask_out, rect);
    if (*serve) {
      so.workdir = workdir.empty() ? forge::default_workdir() : fs::path(workdir);
      if (!static_dir.empty()) so.static_dir = static_dir;
      return run_serve(std::move(so));
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
