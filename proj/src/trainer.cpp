#include "endn/trainer.hpp"

#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <thread>

#include "endn/optim.hpp"

namespace endn {

namespace {

// Batches are pure functions of (seed, step), so prefetch workers only change
// scheduling, never values: worker k produces steps congruent to k and the
// consumer pops in step order.
class BatchSource {
 public:
  BatchSource(const Dataset& ds, const BatchSpec& spec, std::uint64_t seed,
              std::int64_t first_step, std::int64_t last_step, int workers)
      : ds_(ds), spec_(spec), seed_(seed), first_(first_step), next_(first_step),
        last_(last_step) {
    if (workers > 1) {
      queues_.resize(workers);
      for (int k = 0; k < workers; ++k)
        threads_.emplace_back([this, k, workers, first_step] {
          for (std::int64_t s = first_step + k; s <= last_; s += workers) produce(k, s);
        });
    }
  }

  ~BatchSource() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_space_.notify_all();
    for (auto& t : threads_) t.join();
  }

  PatchBatch next() {
    const std::int64_t step = next_++;
    if (threads_.empty()) {
      Rng rng = rng_for_step(seed_, std::uint64_t(step));
      return make_batch(ds_, spec_, rng);
    }
    Queue& q = queues_[std::size_t(step - first_) % queues_.size()];
    std::unique_lock<std::mutex> lk(mu_);
    cv_item_.wait(lk, [&] { return !q.items.empty(); });
    PatchBatch b = std::move(q.items.front());
    q.items.pop_front();
    lk.unlock();
    cv_space_.notify_all();
    return b;
  }

 private:
  struct Queue {
    std::deque<PatchBatch> items;
  };

  void produce(int k, std::int64_t step) {
    Rng rng = rng_for_step(seed_, std::uint64_t(step));
    PatchBatch b = make_batch(ds_, spec_, rng);
    std::unique_lock<std::mutex> lk(mu_);
    cv_space_.wait(lk, [&] { return stop_ || queues_[k].items.size() < 2; });
    if (stop_) return;
    queues_[k].items.push_back(std::move(b));
    lk.unlock();
    cv_item_.notify_all();
  }

  const Dataset& ds_;
  BatchSpec spec_;
  std::uint64_t seed_;
  std::int64_t first_, next_, last_;
  std::vector<Queue> queues_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_item_, cv_space_;
  bool stop_ = false;
};

class CsvLog {
 public:
  explicit CsvLog(const std::string& path) {
    if (path.empty()) return;
    const bool fresh = !std::filesystem::exists(path);
    f_.reset(std::fopen(path.c_str(), "a"));
    if (!f_) throw IoError("cannot open log for writing: " + path);
    if (fresh) std::fprintf(f_.get(), "step,total,l1,ssim,psnr_eval,ssim_eval\n");
  }

  void row(std::int64_t step, double total, double l1, double ssim) {
    if (!f_) return;
    std::fprintf(f_.get(), "%lld,%.8g,%.8g,%.8g,,\n", (long long)step, total, l1, ssim);
  }

  void row_eval(std::int64_t step, double total, double l1, double ssim, double psnr,
                double mssim) {
    if (!f_) return;
    std::fprintf(f_.get(), "%lld,%.8g,%.8g,%.8g,%.4f,%.6f\n", (long long)step, total, l1,
                 ssim, psnr, mssim);
  }

  void flush() {
    if (f_) std::fflush(f_.get());
  }

 private:
  struct Closer {
    void operator()(FILE* f) const {
      if (f) std::fclose(f);
    }
  };
  std::unique_ptr<FILE, Closer> f_;
};

Tensor4f denoise_tensor(const ModelConfig& cfg, const ModelParamsF& params,
                        const Tensor4f& noisy) {
  return ops::clamp01(forward_eval(cfg, params, noisy));
}

EvalResult evaluate_params(const ModelConfig& cfg, const ModelParamsF& params,
                           const std::string& data_dir, double sigma8,
                           const std::string& csv_path) {
  Dataset ds = Dataset::load_dir(data_dir);
  if (ds.channels != cfg.in_channels)
    throw ConfigError("dataset has " + std::to_string(ds.channels) +
                      " channels but the model expects " + std::to_string(cfg.in_channels));
  EvalResult res;
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const std::string name = std::filesystem::path(ds.paths[i]).filename().string();
    Rng rng(fnv1a(name));
    Tensor4f clean = image_to_tensor(ds.images[i]);
    Tensor4f noisy = add_awgn(clean, sigma8, rng);
    Tensor4f restored = denoise_tensor(cfg, params, noisy);
    EvalRow row;
    row.path = name;
    row.psnr = loss::psnr(restored, clean, 1.0);
    row.ssim = double(loss::ssim_mean(restored, clean));
    res.rows.push_back(row);
    res.mean_psnr += row.psnr;
    res.mean_ssim += row.ssim;
  }
  res.mean_psnr /= double(res.rows.size());
  res.mean_ssim /= double(res.rows.size());

  if (!csv_path.empty()) {
    std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(csv_path.c_str(), "w"), &std::fclose);
    if (!f) throw IoError("cannot open eval CSV for writing: " + csv_path);
    std::fprintf(f.get(), "image,psnr,ssim\n");
    for (const EvalRow& r : res.rows) {
      if (std::isinf(r.psnr))
        std::fprintf(f.get(), "%s,inf,%.6f\n", r.path.c_str(), r.ssim);
      else
        std::fprintf(f.get(), "%s,%.4f,%.6f\n", r.path.c_str(), r.psnr, r.ssim);
    }
  }
  return res;
}

TrainResult train_loop(const TrainConfig& cfg, const ModelConfig& model_cfg,
                       ModelParamsF& params, AdamStateF& adam, std::int64_t first_step,
                       const std::string& data_dir) {
  cfg.validate();
  model_cfg.validate();
  Dataset ds = Dataset::load_dir(data_dir);
  if (ds.channels != model_cfg.in_channels)
    throw ConfigError("dataset has " + std::to_string(ds.channels) +
                      " channels but the model expects " +
                      std::to_string(model_cfg.in_channels));

  BatchSpec spec;
  spec.batch_size = cfg.batch_size;
  spec.patch_size = cfg.patch_size;
  spec.sigma8 = cfg.sigma8;
  spec.blind = cfg.blind;
  spec.augment = cfg.augment;

  CsvLog log(cfg.log_path);
  BatchSource batches(ds, spec, cfg.seed, first_step, cfg.max_steps, cfg.workers);
  SsimConfig ssim_cfg;

  TrainResult result;
  for (std::int64_t step = first_step; step <= cfg.max_steps; ++step) {
    PatchBatch batch = batches.next();

    Tape<float> tape;
    TapeEngine<float> eng(tape, model_cfg, params);
    auto pred = net::forward_model(eng, eng.input(std::move(batch.noisy)));
    auto target = eng.input(std::move(batch.clean));
    auto l1_node = loss::l1(tape, pred, target);
    auto ssim_node = loss::ssim(tape, pred, target, ssim_cfg);
    auto total_node = tape.add(l1_node, ssim_node);

    const double total = tape.val(total_node)[0];
    const double l1v = tape.val(l1_node)[0];
    const double ssimv = tape.val(ssim_node)[0];
    if (!std::isfinite(total)) {
      log.flush();
      throw NumericError("non-finite training loss at step " + std::to_string(step));
    }

    std::vector<Tensor4f> grads = eng.collect_param_grads(total_node);
    adam_step(params, grads, adam);

    result.final_total = total;
    result.final_l1 = l1v;
    result.final_ssim = ssimv;
    result.steps = step;

    const bool do_eval = cfg.eval_every > 0 && step % cfg.eval_every == 0;
    if (do_eval) {
      save_checkpoint(cfg.checkpoint_path,
                      make_checkpoint(model_cfg, params, &adam, step));
      EvalResult ev = evaluate_params(model_cfg, params, data_dir, cfg.sigma8, "");
      log.row_eval(step, total, l1v, ssimv, ev.mean_psnr, ev.mean_ssim);
    } else {
      log.row(step, total, l1v, ssimv);
    }
  }
  save_checkpoint(cfg.checkpoint_path,
                  make_checkpoint(model_cfg, params, &adam, cfg.max_steps));
  log.flush();
  return result;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const ModelConfig& model_cfg,
                  const std::string& data_dir) {
  ModelParamsF params = init_params<float>(model_cfg, cfg.seed);
  AdamStateF adam = AdamStateF::init(params, cfg.lr);
  return train_loop(cfg, model_cfg, params, adam, 1, data_dir);
}

TrainResult train_resume(const TrainConfig& cfg, const Checkpoint& ckpt,
                         const std::string& data_dir) {
  ModelConfig model_cfg = ckpt.model_config();
  ModelParamsF params = ckpt.params;
  AdamStateF adam =
      ckpt.adam ? *ckpt.adam : AdamStateF::init(params, cfg.lr);
  adam.lr = cfg.lr;
  const std::int64_t first = ckpt.step() + 1;
  if (first > cfg.max_steps)
    throw ConfigError("checkpoint is already at step " + std::to_string(ckpt.step()) +
                      ", nothing to resume below max_steps=" + std::to_string(cfg.max_steps));
  return train_loop(cfg, model_cfg, params, adam, first, data_dir);
}

EvalResult evaluate(const Checkpoint& ckpt, const std::string& data_dir, double sigma8,
                    const std::string& csv_path) {
  return evaluate_params(ckpt.model_config(), ckpt.params, data_dir, sigma8, csv_path);
}

void denoise_file(const Checkpoint& ckpt, const std::string& in_path,
                  const std::string& out_path) {
  const ModelConfig cfg = ckpt.model_config();
  ImageBuffer img = load_image(in_path);
  if (img.channels != cfg.in_channels)
    throw ConfigError("image has " + std::to_string(img.channels) +
                      " channels but the model expects " + std::to_string(cfg.in_channels));
  Tensor4f restored = denoise_tensor(cfg, ckpt.params, image_to_tensor(img));
  save_image(tensor_to_image(restored), out_path);
}

}  // namespace endn
