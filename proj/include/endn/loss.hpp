#pragma once

#include "endn/ops.hpp"
#include "endn/tape.hpp"
#include "endn/tensor.hpp"

namespace endn {

// SSIM in its original parameterization: 11x11 Gaussian window (sigma 1.5),
// c1 = (k1 L)^2, c2 = (k2 L)^2. Borders use zero-padded windows whose weights
// are renormalized to the in-image mass.
struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;  // L; images here live in [0, 1]

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
  ops::BlurSpec blur() const { return {window, sigma}; }
};

namespace loss {

// ---- pure metric forms -------------------------------------------------------

template <typename T>
T l1_value(const Tensor4<T>& pred, const Tensor4<T>& target) {
  require_same_dims(pred.dims(), target.dims(), "l1");
  Tensor4<T> d = ops::sub(target, pred);
  return T(kern::asum(d.data(), std::size_t(d.size())) / double(d.size()));
}

// Per-pixel SSIM from Gaussian-windowed local statistics; multi-channel
// inputs produce one map per channel (channel mean = mean over the tensor).
template <typename T>
Tensor4<T> ssim_map(const Tensor4<T>& x, const Tensor4<T>& y, const SsimConfig& cfg = {}) {
  require_same_dims(x.dims(), y.dims(), "ssim_map");
  const ops::BlurSpec b = cfg.blur();
  const T c1 = T(cfg.c1()), c2 = T(cfg.c2());

  Tensor4<T> mx = ops::gblur_renorm(x, b);
  Tensor4<T> my = ops::gblur_renorm(y, b);
  Tensor4<T> sxx = ops::sub(ops::gblur_renorm(ops::mul(x, x), b), ops::mul(mx, mx));
  Tensor4<T> syy = ops::sub(ops::gblur_renorm(ops::mul(y, y), b), ops::mul(my, my));
  Tensor4<T> sxy = ops::sub(ops::gblur_renorm(ops::mul(x, y), b), ops::mul(mx, my));

  Tensor4<T> num = ops::mul(ops::add_scalar(ops::scale(ops::mul(mx, my), T(2)), c1),
                            ops::add_scalar(ops::scale(sxy, T(2)), c2));
  Tensor4<T> den = ops::mul(ops::add_scalar(ops::add(ops::mul(mx, mx), ops::mul(my, my)), c1),
                            ops::add_scalar(ops::add(sxx, syy), c2));
  return ops::div(num, den);
}

template <typename T>
T ssim_mean(const Tensor4<T>& x, const Tensor4<T>& y, const SsimConfig& cfg = {}) {
  return ops::mean_all(ssim_map(x, y, cfg));
}

template <typename T>
T ssim_loss_value(const Tensor4<T>& pred, const Tensor4<T>& target,
                  const SsimConfig& cfg = {}) {
  return T(1) - ssim_mean(pred, target, cfg);
}

template <typename T>
T total_loss_value(const Tensor4<T>& pred, const Tensor4<T>& target,
                   const SsimConfig& cfg = {}) {
  return l1_value(pred, target) + ssim_loss_value(pred, target, cfg);
}

// 10*log10(max^2 / MSE), +infinity when the images are identical.
template <typename T>
double psnr(const Tensor4<T>& x, const Tensor4<T>& y, double max_val) {
  require_same_dims(x.dims(), y.dims(), "psnr");
  if (max_val <= 0.0) throw ConfigError("psnr: max_val must be positive");
  double se = 0.0;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const double d = double(x[i]) - double(y[i]);
    se += d * d;
  }
  const double mse = se / double(x.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

// ---- differentiable (tape) forms ----------------------------------------------

// mean |target - pred|; ties carry subgradient 0
template <typename T>
typename Tape<T>::Value l1(Tape<T>& tape, typename Tape<T>::Value pred,
                           typename Tape<T>::Value target) {
  return tape.mean(tape.abs(tape.sub(target, pred)));
}

// mean over pixels of (1 - SSIM); same op sequence as ssim_map above so the
// recorded forward value matches the pure metric bit for bit.
template <typename T>
typename Tape<T>::Value ssim(Tape<T>& tape, typename Tape<T>::Value pred,
                             typename Tape<T>::Value target, const SsimConfig& cfg = {}) {
  const ops::BlurSpec b = cfg.blur();
  const T c1 = T(cfg.c1()), c2 = T(cfg.c2());

  auto mx = tape.gblur(pred, b);
  auto my = tape.gblur(target, b);
  auto sxx = tape.sub(tape.gblur(tape.mul(pred, pred), b), tape.mul(mx, mx));
  auto syy = tape.sub(tape.gblur(tape.mul(target, target), b), tape.mul(my, my));
  auto sxy = tape.sub(tape.gblur(tape.mul(pred, target), b), tape.mul(mx, my));

  auto num = tape.mul(tape.add_scalar(tape.scale(tape.mul(mx, my), T(2)), c1),
                      tape.add_scalar(tape.scale(sxy, T(2)), c2));
  auto den = tape.mul(tape.add_scalar(tape.add(tape.mul(mx, mx), tape.mul(my, my)), c1),
                      tape.add_scalar(tape.add(sxx, syy), c2));
  auto map = tape.div(num, den);
  return tape.mean(tape.add_scalar(tape.scale(map, T(-1)), T(1)));
}

// l_total = l1 + l_ssim
template <typename T>
typename Tape<T>::Value total(Tape<T>& tape, typename Tape<T>::Value pred,
                              typename Tape<T>::Value target, const SsimConfig& cfg = {}) {
  return tape.add(l1(tape, pred, target), ssim(tape, pred, target, cfg));
}

}  // namespace loss
}  // namespace endn
