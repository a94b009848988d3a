// endn — ensemble denoising network CLI.
// Subcommands: train, denoise, evaluate, gradcheck, params.
// Exit codes: 0 success, 2 config error, 3 I/O error, 4 numeric failure.

#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "endn/checkpoint.hpp"
#include "endn/gradcheck.hpp"
#include "endn/kernels.hpp"
#include "endn/trainer.hpp"

namespace {

// ENDN_SEED, when set, overrides --seed (CI hook).
void apply_seed_env(std::uint64_t& seed) {
  if (const char* env = std::getenv("ENDN_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
      throw endn::ConfigError(std::string("ENDN_SEED is not an integer: ") + env);
    seed = v;
  }
}

int run(int argc, char** argv) {
  CLI::App app{"endn — ensemble-of-modules image denoiser"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a denoising model");
  std::string data_dir, out_ckpt = "model.ckpt", log_csv = "train_log.csv";
  double sigma = 25.0;
  int width = 64, steps = 1000, batch = 16, workers = 1, eval_every = 0;
  std::uint64_t seed = 1;
  bool blind = false;
  train_cmd->add_option("--data", data_dir, "Directory of clean training images")
      ->required();
  train_cmd->add_option("--sigma", sigma, "AWGN std in 8-bit units (15/25/50)")
      ->default_val(25.0);
  train_cmd->add_option("--width", width, "Feature width n")->default_val(64);
  train_cmd->add_option("--steps", steps, "Total optimizer steps")->default_val(1000);
  train_cmd->add_option("--batch", batch, "Batch size")->default_val(16);
  train_cmd->add_option("--seed", seed, "RNG seed")->default_val(1);
  train_cmd->add_option("--out", out_ckpt, "Checkpoint output path")
      ->default_val("model.ckpt");
  train_cmd->add_option("--log", log_csv, "Metrics CSV path")->default_val("train_log.csv");
  train_cmd->add_option("--eval-every", eval_every,
                        "Checkpoint + evaluate every N steps (0 = end only)")
      ->default_val(0);
  train_cmd->add_option("--workers", workers, "Data pipeline worker threads")
      ->default_val(1);
  train_cmd->add_flag("--blind", blind, "Train one model over sigma in {15,25,50}");

  // denoise
  auto* den_cmd = app.add_subcommand("denoise", "Denoise one image with a checkpoint");
  std::string ckpt_path, in_img, out_img;
  den_cmd->add_option("--ckpt", ckpt_path, "Checkpoint path")->required();
  den_cmd->add_option("--in", in_img, "Input image (PNG/PGM/PPM)")->required();
  den_cmd->add_option("--out", out_img, "Output image path")->required();

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Mean PSNR/SSIM over a directory");
  std::string eval_ckpt, eval_dir, eval_csv;
  double eval_sigma = 25.0;
  eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint path")->required();
  eval_cmd->add_option("--data", eval_dir, "Directory of clean images")->required();
  eval_cmd->add_option("--sigma", eval_sigma, "AWGN std in 8-bit units")->required();
  eval_cmd->add_option("--csv", eval_csv, "Optional per-image CSV output");

  // gradcheck
  auto* gc_cmd = app.add_subcommand(
      "gradcheck", "End-to-end f64 finite-difference check of the gradients");
  int gc_width = 8, gc_size = 12, gc_samples = 50;
  double gc_tol = 1e-4;
  std::uint64_t gc_seed = 1;
  gc_cmd->add_option("--width", gc_width, "Feature width n")->default_val(8);
  gc_cmd->add_option("--size", gc_size, "Input height/width")->default_val(12);
  gc_cmd->add_option("--tol", gc_tol, "Max relative error to pass")->default_val(1e-4);
  gc_cmd->add_option("--samples", gc_samples, "Sampled parameter coordinates")
      ->default_val(50);
  gc_cmd->add_option("--seed", gc_seed, "RNG seed")->default_val(1);

  // params
  auto* par_cmd = app.add_subcommand("params", "Print the exact parameter count");
  int par_width = 64, par_channels = 1;
  par_cmd->add_option("--width", par_width, "Feature width n")->default_val(64);
  par_cmd->add_option("--channels", par_channels, "Input channels (1 or 3)")
      ->default_val(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  if (*train_cmd) {
    apply_seed_env(seed);
    endn::TrainConfig cfg;
    cfg.sigma8 = sigma;
    cfg.batch_size = batch;
    cfg.max_steps = steps;
    cfg.eval_every = eval_every;
    cfg.seed = seed;
    cfg.checkpoint_path = out_ckpt;
    cfg.log_path = log_csv;
    cfg.blind = blind;
    cfg.workers = workers;

    endn::Dataset probe = endn::Dataset::load_dir(data_dir);
    endn::ModelConfig model;
    model.base_width = width;
    model.in_channels = probe.channels;

    endn::TrainResult r = endn::train(cfg, model, data_dir);
    std::printf("trained %" PRId64 " steps  total=%.6f l1=%.6f ssim=%.6f  -> %s\n",
                r.steps, r.final_total, r.final_l1, r.final_ssim, out_ckpt.c_str());
    return 0;
  }
  if (*den_cmd) {
    endn::Checkpoint ckpt = endn::load_checkpoint(ckpt_path);
    endn::denoise_file(ckpt, in_img, out_img);
    std::printf("wrote %s\n", out_img.c_str());
    return 0;
  }
  if (*eval_cmd) {
    endn::Checkpoint ckpt = endn::load_checkpoint(eval_ckpt);
    endn::EvalResult r = endn::evaluate(ckpt, eval_dir, eval_sigma, eval_csv);
    if (std::isinf(r.mean_psnr))
      std::printf("PSNR: inf dB  SSIM: %.4f\n", r.mean_ssim);
    else
      std::printf("PSNR: %.2f dB  SSIM: %.4f\n", r.mean_psnr, r.mean_ssim);
    return 0;
  }
  if (*gc_cmd) {
    apply_seed_env(gc_seed);
    endn::ModelConfig model;
    model.base_width = gc_width;
    endn::gradcheck::NetworkCheck r =
        endn::gradcheck::check_network(model, gc_size, gc_size, gc_samples, gc_seed);
    std::printf("max relative error: %.3e over %d sampled parameters (tol %.1e)\n",
                r.max_rel_err, r.samples, gc_tol);
    return r.max_rel_err < gc_tol ? 0 : 4;
  }
  if (*par_cmd) {
    endn::ModelConfig model;
    model.base_width = par_width;
    model.in_channels = par_channels;
    std::printf("%" PRId64 "\n", endn::count_params(model));
    return 0;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const endn::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const endn::ShapeError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const endn::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 3;
  } catch (const endn::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
}
