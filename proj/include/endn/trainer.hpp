#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "endn/checkpoint.hpp"
#include "endn/data.hpp"
#include "endn/loss.hpp"
#include "endn/model.hpp"

namespace endn {

struct TrainConfig {
  double sigma8 = 25.0;
  int batch_size = 16;
  int max_steps = 1000;       // total steps, including any resumed prefix
  int eval_every = 0;         // 0: checkpoint/eval only at the end
  std::uint64_t seed = 1;
  std::string checkpoint_path = "model.ckpt";
  std::string log_path = "train_log.csv";
  bool blind = false;
  bool augment = true;
  int patch_size = 64;
  int workers = 1;            // data-pipeline threads; 1 = synchronous reference mode
  float lr = 1e-4f;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
    if (sigma8 < 0) throw ConfigError("sigma must be >= 0");
    if (patch_size < 8) throw ConfigError("patch size must be >= 8");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
  }
};

struct TrainResult {
  double final_total = 0.0, final_l1 = 0.0, final_ssim = 0.0;
  std::int64_t steps = 0;
};

struct EvalRow {
  std::string path;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct EvalResult {
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::vector<EvalRow> rows;
};

// Fresh run: He init from cfg.seed, then batch -> forward -> l1+SSIM ->
// backward -> Adam for max_steps. Writes a checkpoint at the end and every
// eval_every steps; appends CSV rows "step,total,l1,ssim,psnr_eval,ssim_eval".
TrainResult train(const TrainConfig& cfg, const ModelConfig& model_cfg,
                  const std::string& data_dir);

// Continue a checkpointed run (params + Adam state + step) to cfg.max_steps.
// With the same seed this is bit-identical to the uninterrupted run.
TrainResult train_resume(const TrainConfig& cfg, const Checkpoint& ckpt,
                         const std::string& data_dir);

// Per image: synthesize noise with a seed derived from the filename, denoise
// the full image (no tiling), clamp, score PSNR/SSIM against the clean image.
EvalResult evaluate(const Checkpoint& ckpt, const std::string& data_dir, double sigma8,
                    const std::string& csv_path = "");

// Single forward pass; clamps and writes out_path, input untouched.
void denoise_file(const Checkpoint& ckpt, const std::string& in_path,
                  const std::string& out_path);

}  // namespace endn
