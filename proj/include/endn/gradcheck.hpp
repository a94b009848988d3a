#pragma once

#include <algorithm>
#include <cstdint>

#include "endn/loss.hpp"
#include "endn/model.hpp"
#include "endn/rng.hpp"

namespace endn::gradcheck {

// Relative error with an absolute floor so near-zero gradients are compared
// absolutely rather than blowing up the ratio.
inline double rel_err(double analytic, double numeric, double floor_val = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor_val});
  return std::abs(analytic - numeric) / denom;
}

struct NetworkCheck {
  double max_rel_err = 0.0;
  int samples = 0;
};

// End-to-end finite-difference check: full network forward + l1/SSIM loss in
// f64, analytic tape gradients vs central differences on randomly sampled
// parameter coordinates. The numeric side only ever runs the forward path,
// so it is independent of every backward rule it validates.
//
// Biases are randomized rather than zero: with zero biases a conv output is
// exactly zero wherever the previous relu blanked its whole input window, and
// central differences straddle that kink while the subgradient is 0. The
// check must run at a generic point where the loss is locally smooth.
inline NetworkCheck check_network(const ModelConfig& cfg, int height, int width,
                                  int samples, std::uint64_t seed, double step = 1e-5) {
  ModelParams<double> params = init_params<double>(cfg, seed);
  Rng rng(mix_seed(seed, 0x6fd1));
  for (auto& e : params.entries)
    if (e.is_bias)
      for (std::int64_t i = 0; i < e.tensor.size(); ++i)
        e.tensor[i] = 0.2 * (rng.next_f64() - 0.5);

  Tensor4<double> input(1, cfg.in_channels, height, width);
  for (std::int64_t i = 0; i < input.size(); ++i) input[i] = rng.next_f64();
  Tensor4<double> target(input.dims());
  for (std::int64_t i = 0; i < target.size(); ++i) target[i] = rng.next_f64();

  Tape<double> tape;
  TapeEngine<double> eng(tape, cfg, params);
  auto pred = net::forward_model(eng, eng.input(input));
  auto lnode = loss::total(tape, pred, eng.input(target));
  std::vector<Tensor4<double>> grads = eng.collect_param_grads(lnode);

  auto loss_now = [&]() {
    Tensor4<double> out = forward_eval(cfg, params, input);
    return double(loss::total_loss_value(out, target));
  };

  NetworkCheck res;
  res.samples = samples;
  for (int s = 0; s < samples; ++s) {
    const int e = int(rng.next_below(params.entries.size()));
    Tensor4<double>& t = params.entries[e].tensor;
    const std::int64_t j = std::int64_t(rng.next_below(std::uint64_t(t.size())));
    const double orig = t[j];
    t[j] = orig + step;
    const double lp = loss_now();
    t[j] = orig - step;
    const double lm = loss_now();
    t[j] = orig;
    const double fd = (lp - lm) / (2.0 * step);
    res.max_rel_err = std::max(res.max_rel_err, rel_err(grads[e][j], fd));
  }
  return res;
}

}  // namespace endn::gradcheck
