#pragma once

#include <algorithm>
#include <cstring>
#include <vector>

#include "endn/kernels.hpp"
#include "endn/tensor.hpp"

// Pure tensor operations. Everything here is a value-in/value-out function
// over Tensor4; the tape (tape.hpp) records these, the eval path calls them
// directly, so training and inference share one numeric definition.

namespace endn::ops {

// ---- convolution -----------------------------------------------------------

template <typename T>
Tensor4<T> pad_same(const Tensor4<T>& x, int pad_h, int pad_w) {
  Tensor4<T> out(x.n(), x.c(), x.h() + 2 * pad_h, x.w() + 2 * pad_w);
  const int wp = out.w();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      T* dst = out.plane(n, c) + std::size_t(pad_h) * wp + pad_w;
      for (int y = 0; y < x.h(); ++y)
        std::memcpy(dst + std::size_t(y) * wp, src + std::size_t(y) * x.w(),
                    sizeof(T) * x.w());
    }
  }
  return out;
}

inline kern::ConvShape conv_shape(const Dims4& x, const Dims4& w, int dilation) {
  if (w.h % 2 == 0 || w.w % 2 == 0)
    throw ConfigError("conv2d kernel must be odd, got " + std::to_string(w.h) + "x" +
                      std::to_string(w.w));
  if (dilation < 1)
    throw ConfigError("conv2d dilation must be >= 1, got " + std::to_string(dilation));
  if (x.c != w.c)
    throw ShapeError("conv2d channel mismatch: input has " + std::to_string(x.c) +
                     " channels, weight expects " + std::to_string(w.c));
  return kern::ConvShape{x.n, x.c, x.h, x.w, w.n, w.h, w.w, dilation};
}

// "Same" zero-padded convolution. weight dims (out_c, in_c, kh, kw); bias is
// a (1, out_c, 1, 1) tensor or empty.
template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const Tensor4<T>& w, const Tensor4<T>& bias,
                  int dilation) {
  kern::ConvShape s = conv_shape(x.dims(), w.dims(), dilation);
  const T* bp = nullptr;
  if (!bias.empty()) {
    if (bias.c() != s.out_c || bias.size() != s.out_c)
      throw ShapeError("conv2d bias must have out_c=" + std::to_string(s.out_c) +
                       " entries, got dims " + bias.dims().str());
    bp = bias.data();
  }
  Tensor4<T> xp = pad_same(x, s.pad_h(), s.pad_w());
  Tensor4<T> y(x.n(), s.out_c, x.h(), x.w());
  kern::conv2d_padded(xp.data(), w.data(), bp, y.data(), s);
  return y;
}

// weight[o,i,dy,dx] -> out[i,o,kh-1-dy,kw-1-dx]; turns the forward kernel into
// the gradient-of-input kernel.
template <typename T>
Tensor4<T> flip_transpose(const Tensor4<T>& w) {
  Tensor4<T> out(w.c(), w.n(), w.h(), w.w());
  for (int o = 0; o < w.n(); ++o)
    for (int i = 0; i < w.c(); ++i)
      for (int dy = 0; dy < w.h(); ++dy)
        for (int dx = 0; dx < w.w(); ++dx)
          out.at(i, o, w.h() - 1 - dy, w.w() - 1 - dx) = w.at(o, i, dy, dx);
  return out;
}

template <typename T>
struct ConvGrads {
  Tensor4<T> input;   // same dims as x
  Tensor4<T> weight;  // same dims as w
  Tensor4<T> bias;    // (1, out_c, 1, 1)
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& grad_out, const Tensor4<T>& x,
                             const Tensor4<T>& w, int dilation) {
  kern::ConvShape s = conv_shape(x.dims(), w.dims(), dilation);
  if (grad_out.dims() != Dims4{x.n(), s.out_c, x.h(), x.w()})
    throw ShapeError("conv2d_backward: grad_out dims " + grad_out.dims().str() +
                     " do not match forward output");

  ConvGrads<T> g;
  Tensor4<T> wt = flip_transpose(w);
  g.input = conv2d(grad_out, wt, Tensor4<T>{}, dilation);

  Tensor4<T> xp = pad_same(x, s.pad_h(), s.pad_w());
  g.weight = Tensor4<T>(w.dims());
  kern::conv2d_grad_weight_padded(xp.data(), grad_out.data(), g.weight.data(), s);

  g.bias = Tensor4<T>(1, s.out_c, 1, 1);
  const std::size_t plane = std::size_t(x.h()) * x.w();
  for (int o = 0; o < s.out_c; ++o) {
    double acc = 0.0;
    for (int n = 0; n < x.n(); ++n) acc += kern::sum(grad_out.plane(n, o), plane);
    g.bias[o] = T(acc);
  }
  return g;
}

// ---- elementwise ------------------------------------------------------------

template <typename T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_dims(a.dims(), b.dims(), "add");
  Tensor4<T> y(a.dims());
  kern::add(a.data(), b.data(), y.data(), a.size());
  return y;
}

template <typename T>
Tensor4<T> sub(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_dims(a.dims(), b.dims(), "sub");
  Tensor4<T> y(a.dims());
  kern::sub(a.data(), b.data(), y.data(), a.size());
  return y;
}

template <typename T>
Tensor4<T> mul(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_dims(a.dims(), b.dims(), "mul");
  Tensor4<T> y(a.dims());
  kern::mul(a.data(), b.data(), y.data(), a.size());
  return y;
}

template <typename T>
Tensor4<T> div(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_dims(a.dims(), b.dims(), "div");
  Tensor4<T> y(a.dims());
  kern::div(a.data(), b.data(), y.data(), a.size());
  return y;
}

template <typename T>
Tensor4<T> scale(const Tensor4<T>& x, T c) {
  Tensor4<T> y(x.dims());
  kern::scale(x.data(), c, y.data(), x.size());
  return y;
}

template <typename T>
Tensor4<T> add_scalar(const Tensor4<T>& x, T c) {
  Tensor4<T> y(x.dims());
  kern::add_scalar(x.data(), c, y.data(), x.size());
  return y;
}

template <typename T>
Tensor4<T> relu(const Tensor4<T>& x) {
  Tensor4<T> y(x.dims());
  kern::relu(x.data(), y.data(), x.size());
  return y;
}

template <typename T>
Tensor4<T> sigmoid(const Tensor4<T>& x) {
  Tensor4<T> y(x.dims());
  kern::sigmoid(x.data(), y.data(), x.size());
  return y;
}

template <typename T>
Tensor4<T> tanh(const Tensor4<T>& x) {
  Tensor4<T> y(x.dims());
  kern::tanh(x.data(), y.data(), x.size());
  return y;
}

template <typename T>
struct Act1 {
  Tensor4<T> y, aux;  // aux feeds the backward rule
};
template <typename T>
struct Act2 {
  Tensor4<T> y, aux1, aux2;
};

template <typename T>
Act1<T> swish(const Tensor4<T>& x) {
  Act1<T> r{Tensor4<T>(x.dims()), Tensor4<T>(x.dims())};
  kern::swish(x.data(), r.y.data(), r.aux.data(), x.size());
  return r;
}

template <typename T>
Act2<T> mish(const Tensor4<T>& x) {
  Act2<T> r{Tensor4<T>(x.dims()), Tensor4<T>(x.dims()), Tensor4<T>(x.dims())};
  kern::mish(x.data(), r.y.data(), r.aux1.data(), r.aux2.data(), x.size());
  return r;
}

template <typename T>
Act1<T> softplus(const Tensor4<T>& x) {
  Act1<T> r{Tensor4<T>(x.dims()), Tensor4<T>(x.dims())};
  kern::softplus(x.data(), r.y.data(), r.aux.data(), x.size());
  return r;
}

template <typename T>
Tensor4<T> abs(const Tensor4<T>& x) {
  Tensor4<T> y(x.dims());
  for (std::int64_t i = 0; i < x.size(); ++i) y[i] = x[i] < T(0) ? -x[i] : x[i];
  return y;
}

template <typename T>
Tensor4<T> clamp01(const Tensor4<T>& x) {
  Tensor4<T> y(x.dims());
  for (std::int64_t i = 0; i < x.size(); ++i) y[i] = std::clamp(x[i], T(0), T(1));
  return y;
}

// ---- concat -----------------------------------------------------------------

template <typename T>
Tensor4<T> concat_channels(const std::vector<const Tensor4<T>*>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  const Dims4& d0 = xs[0]->dims();
  int total_c = 0;
  for (const Tensor4<T>* x : xs) {
    const Dims4& d = x->dims();
    if (d.n != d0.n || d.h != d0.h || d.w != d0.w)
      throw ShapeError("concat_channels: spatial mismatch " + d.str() + " vs " + d0.str());
    total_c += d.c;
  }
  Tensor4<T> y(d0.n, total_c, d0.h, d0.w);
  const std::size_t plane = std::size_t(d0.h) * d0.w;
  for (int n = 0; n < d0.n; ++n) {
    int co = 0;
    for (const Tensor4<T>* x : xs) {
      std::memcpy(y.plane(n, co), x->plane(n, 0), sizeof(T) * plane * x->c());
      co += x->c();
    }
  }
  return y;
}

template <typename T>
Tensor4<T> slice_channels(const Tensor4<T>& x, int c0, int count) {
  if (c0 < 0 || count < 1 || c0 + count > x.c())
    throw ShapeError("slice_channels: range out of bounds");
  Tensor4<T> y(x.n(), count, x.h(), x.w());
  const std::size_t plane = std::size_t(x.h()) * x.w();
  for (int n = 0; n < x.n(); ++n)
    std::memcpy(y.plane(n, 0), x.plane(n, c0), sizeof(T) * plane * count);
  return y;
}

// ---- reductions -------------------------------------------------------------

template <typename T>
T sum_all(const Tensor4<T>& x) {
  return T(kern::sum(x.data(), x.size()));
}

template <typename T>
T mean_all(const Tensor4<T>& x) {
  return T(kern::sum(x.data(), x.size()) / double(x.size()));
}

// ---- windowed Gaussian blur (SSIM building block, augmentation blur) --------

struct BlurSpec {
  int size = 11;       // odd
  double sigma = 1.5;
};

// 1D taps, normalized to sum 1 over the discrete support.
template <typename T>
std::vector<T> gauss_taps(const BlurSpec& spec) {
  if (spec.size < 1 || spec.size % 2 == 0)
    throw ConfigError("blur window size must be odd and positive");
  std::vector<double> t(spec.size);
  const int r = spec.size / 2;
  double s = 0.0;
  for (int i = 0; i < spec.size; ++i) {
    t[i] = std::exp(-double(i - r) * (i - r) / (2.0 * spec.sigma * spec.sigma));
    s += t[i];
  }
  std::vector<T> out(spec.size);
  for (int i = 0; i < spec.size; ++i) out[i] = T(t[i] / s);
  return out;
}

// Zero-padded separable correlation with the Gaussian window, per channel.
template <typename T>
Tensor4<T> gblur_plain(const Tensor4<T>& x, const BlurSpec& spec) {
  const std::vector<T> taps = gauss_taps<T>(spec);
  const int r = spec.size / 2;
  const int H = x.h(), W = x.w();
  Tensor4<T> tmp(x.dims()), out(x.dims());
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      T* mid = tmp.plane(n, c);
      for (int y = 0; y < H; ++y) {
        const T* row = src + std::size_t(y) * W;
        T* orow = mid + std::size_t(y) * W;
        for (int xx = 0; xx < W; ++xx) {
          T acc = T(0);
          const int k0 = std::max(0, r - xx), k1 = std::min(spec.size, W + r - xx);
          for (int k = k0; k < k1; ++k) acc += taps[k] * row[xx + k - r];
          orow[xx] = acc;
        }
      }
      T* dst = out.plane(n, c);
      for (int y = 0; y < H; ++y) {
        const int k0 = std::max(0, r - y), k1 = std::min(spec.size, H + r - y);
        for (int xx = 0; xx < W; ++xx) {
          T acc = T(0);
          for (int k = k0; k < k1; ++k) acc += taps[k] * mid[std::size_t(y + k - r) * W + xx];
          dst[std::size_t(y) * W + xx] = acc;
        }
      }
    }
  }
  return out;
}

// In-window weight mass per pixel; equals gblur_plain of an all-ones image.
// Separable, so it is a product of two 1D border profiles.
template <typename T>
Tensor4<T> blur_weight_map(const BlurSpec& spec, int h, int w) {
  const std::vector<T> taps = gauss_taps<T>(spec);
  const int r = spec.size / 2;
  auto profile = [&](int len) {
    std::vector<T> p(len);
    for (int i = 0; i < len; ++i) {
      T acc = T(0);
      const int k0 = std::max(0, r - i), k1 = std::min(spec.size, len + r - i);
      for (int k = k0; k < k1; ++k) acc += taps[k];
      p[i] = acc;
    }
    return p;
  };
  std::vector<T> py = profile(h), px = profile(w);
  Tensor4<T> out(1, 1, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(0, 0, y, x) = py[y] * px[x];
  return out;
}

// y = gblur_plain(x) / weight_map, broadcast over (n, c). This is the
// border-renormalized local mean the SSIM implementation is built on.
template <typename T>
Tensor4<T> gblur_renorm(const Tensor4<T>& x, const BlurSpec& spec) {
  Tensor4<T> y = gblur_plain(x, spec);
  Tensor4<T> wmap = blur_weight_map<T>(spec, x.h(), x.w());
  const std::size_t plane = std::size_t(x.h()) * x.w();
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      kern::div(y.plane(n, c), wmap.data(), y.plane(n, c), plane);
  return y;
}

// Adjoint of gblur_renorm: the window is symmetric, so it is the plain blur
// of g / weight_map.
template <typename T>
Tensor4<T> gblur_renorm_bwd(const Tensor4<T>& g, const BlurSpec& spec) {
  Tensor4<T> scaled(g.dims());
  Tensor4<T> wmap = blur_weight_map<T>(spec, g.h(), g.w());
  const std::size_t plane = std::size_t(g.h()) * g.w();
  for (int n = 0; n < g.n(); ++n)
    for (int c = 0; c < g.c(); ++c)
      kern::div(g.plane(n, c), wmap.data(), scaled.plane(n, c), plane);
  return gblur_plain(scaled, spec);
}

// ---- misc -------------------------------------------------------------------

template <typename T>
void accumulate(Tensor4<T>& into, const Tensor4<T>& g) {
  require_same_dims(into.dims(), g.dims(), "accumulate");
  kern::add(into.data(), g.data(), into.data(), into.size());
}

}  // namespace endn::ops
