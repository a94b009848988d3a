#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>

// Low-level arithmetic kernels on raw buffers. The templated functions in
// kern::ref are the scalar reference implementations and define the numeric
// contract; float entry points in kern:: dispatch at runtime to the reference
// or to the AVX2/FMA variants (kernels_avx2.cpp). The double path always runs
// the reference — it exists for gradient checking, not speed.

namespace endn::kern {

enum class Backend { scalar, avx2 };

// Resolved once per process: ENDN_KERNELS=scalar|avx2 if set, else CPU probe.
Backend active_backend();
void set_backend(Backend b);     // tests only; throws ConfigError if unsupported
bool cpu_supports_avx2();
const char* backend_name(Backend b);

// Geometry of a "same"-padded NCHW convolution. Kernels operate on an input
// that is already zero-padded by (pad_h, pad_w) on each side.
struct ConvShape {
  int n, in_c, h, w;   // logical (unpadded) input
  int out_c, kh, kw;
  int dilation;

  int pad_h() const { return dilation * (kh - 1) / 2; }
  int pad_w() const { return dilation * (kw - 1) / 2; }
  int hp() const { return h + 2 * pad_h(); }
  int wp() const { return w + 2 * pad_w(); }
};

struct AdamScalars {
  float lr, beta1, beta2, eps;
  float bc1, bc2;      // 1 - beta1^t, 1 - beta2^t for the step being applied
};

namespace ref {

// y[n,o,yy,xx] = bias[o] + sum_i sum_dy sum_dx w[o,i,dy,dx] * xp[n,i,yy+D*dy,xx+D*dx]
template <typename T>
void conv2d_padded(const T* xp, const T* w, const T* bias, T* y, const ConvShape& s) {
  const int hp = s.hp(), wp = s.wp();
  const std::size_t plane = std::size_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n) {
    for (int o = 0; o < s.out_c; ++o) {
      T* yp = y + (std::size_t(n) * s.out_c + o) * plane;
      const T b = bias ? bias[o] : T(0);
      for (std::size_t i = 0; i < plane; ++i) yp[i] = b;
      for (int i = 0; i < s.in_c; ++i) {
        const T* xc = xp + (std::size_t(n) * s.in_c + i) * hp * wp;
        const T* wk = w + (std::size_t(o) * s.in_c + i) * s.kh * s.kw;
        for (int dy = 0; dy < s.kh; ++dy) {
          for (int dx = 0; dx < s.kw; ++dx) {
            const T wv = wk[dy * s.kw + dx];
            for (int yy = 0; yy < s.h; ++yy) {
              const T* xr = xc + std::size_t(yy + s.dilation * dy) * wp + s.dilation * dx;
              T* yr = yp + std::size_t(yy) * s.w;
              for (int xx = 0; xx < s.w; ++xx) yr[xx] += wv * xr[xx];
            }
          }
        }
      }
    }
  }
}

// gw[o,i,dy,dx] = sum_n sum_yy sum_xx g[n,o,yy,xx] * xp[n,i,yy+D*dy,xx+D*dx]
template <typename T>
void conv2d_grad_weight_padded(const T* xp, const T* g, T* gw, const ConvShape& s) {
  const int hp = s.hp(), wp = s.wp();
  for (int o = 0; o < s.out_c; ++o) {
    for (int i = 0; i < s.in_c; ++i) {
      T* gwk = gw + (std::size_t(o) * s.in_c + i) * s.kh * s.kw;
      for (int dy = 0; dy < s.kh; ++dy) {
        for (int dx = 0; dx < s.kw; ++dx) {
          T acc = T(0);
          for (int n = 0; n < s.n; ++n) {
            const T* gc = g + (std::size_t(n) * s.out_c + o) * s.h * s.w;
            const T* xc = xp + (std::size_t(n) * s.in_c + i) * hp * wp;
            for (int yy = 0; yy < s.h; ++yy) {
              const T* gr = gc + std::size_t(yy) * s.w;
              const T* xr = xc + std::size_t(yy + s.dilation * dy) * wp + s.dilation * dx;
              for (int xx = 0; xx < s.w; ++xx) acc += gr[xx] * xr[xx];
            }
          }
          gwk[dy * s.kw + dx] = acc;
        }
      }
    }
  }
}

template <typename T>
void add(const T* a, const T* b, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <typename T>
void sub(const T* a, const T* b, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

template <typename T>
void mul(const T* a, const T* b, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <typename T>
void div(const T* a, const T* b, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] / b[i];
}

// y += a .* b
template <typename T>
void macc(const T* a, const T* b, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

// y += c * x
template <typename T>
void axpy(T c, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += c * x[i];
}

template <typename T>
void scale(const T* x, T c, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = c * x[i];
}

template <typename T>
void add_scalar(const T* x, T c, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + c;
}

template <typename T>
void relu(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

// gx += g where x > 0 (subgradient 0 at x == 0)
template <typename T>
void relu_bwd(const T* x, const T* g, T* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) gx[i] += x[i] > T(0) ? g[i] : T(0);
}

template <typename T>
T sigmoid_one(T x) {
  if (x >= T(0)) {
    return T(1) / (T(1) + std::exp(-x));
  }
  T e = std::exp(x);
  return e / (T(1) + e);
}

// ln(1 + e^x); returns x directly above the overflow guard
template <typename T>
T softplus_one(T x) {
  return x > T(20) ? x : std::log1p(std::exp(x));
}

template <typename T>
void sigmoid(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = sigmoid_one(x[i]);
}

template <typename T>
void tanh(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

template <typename T>
void softplus(const T* x, T* y, T* sig, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = softplus_one(x[i]);
    sig[i] = sigmoid_one(x[i]);
  }
}

// y = x * sigmoid(x); sig keeps sigmoid(x) for the backward pass
template <typename T>
void swish(const T* x, T* y, T* sig, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    T s = sigmoid_one(x[i]);
    sig[i] = s;
    y[i] = x[i] * s;
  }
}

// y = x * tanh(softplus(x)); tsp and sig keep the factors for the backward pass
template <typename T>
void mish(const T* x, T* y, T* tsp, T* sig, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    T t = std::tanh(softplus_one(x[i]));
    tsp[i] = t;
    sig[i] = sigmoid_one(x[i]);
    y[i] = x[i] * t;
  }
}

// gx += g * (s + x*s*(1-s))
template <typename T>
void swish_bwd(const T* x, const T* sig, const T* g, T* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    T s = sig[i];
    gx[i] += g[i] * (s + x[i] * s * (T(1) - s));
  }
}

// gx += g * (t + x*sig*(1-t^2))
template <typename T>
void mish_bwd(const T* x, const T* tsp, const T* sig, const T* g, T* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    T t = tsp[i];
    gx[i] += g[i] * (t + x[i] * sig[i] * (T(1) - t * t));
  }
}

template <typename T>
double sum(const T* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += double(x[i]);
  return acc;
}

template <typename T>
double asum(const T* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(double(x[i]));
  return acc;
}

template <typename T>
void adam(T* p, const T* g, T* m, T* v, std::size_t n, const AdamScalars& a) {
  const T b1 = T(a.beta1), b2 = T(a.beta2);
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = b1 * m[i] + (T(1) - b1) * g[i];
    v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
    T mhat = m[i] / T(a.bc1);
    T vhat = v[i] / T(a.bc2);
    p[i] -= T(a.lr) * mhat / (std::sqrt(vhat) + T(a.eps));
  }
}

}  // namespace ref

// Generic entry points. Non-float types run the reference; float dispatches.
template <typename T>
inline void conv2d_padded(const T* xp, const T* w, const T* bias, T* y, const ConvShape& s) {
  ref::conv2d_padded(xp, w, bias, y, s);
}
template <typename T>
inline void conv2d_grad_weight_padded(const T* xp, const T* g, T* gw, const ConvShape& s) {
  ref::conv2d_grad_weight_padded(xp, g, gw, s);
}
template <typename T> inline void add(const T* a, const T* b, T* y, std::size_t n) { ref::add(a, b, y, n); }
template <typename T> inline void sub(const T* a, const T* b, T* y, std::size_t n) { ref::sub(a, b, y, n); }
template <typename T> inline void mul(const T* a, const T* b, T* y, std::size_t n) { ref::mul(a, b, y, n); }
template <typename T> inline void div(const T* a, const T* b, T* y, std::size_t n) { ref::div(a, b, y, n); }
template <typename T> inline void macc(const T* a, const T* b, T* y, std::size_t n) { ref::macc(a, b, y, n); }
template <typename T> inline void axpy(T c, const T* x, T* y, std::size_t n) { ref::axpy(c, x, y, n); }
template <typename T> inline void scale(const T* x, T c, T* y, std::size_t n) { ref::scale(x, c, y, n); }
template <typename T> inline void add_scalar(const T* x, T c, T* y, std::size_t n) { ref::add_scalar(x, c, y, n); }
template <typename T> inline void relu(const T* x, T* y, std::size_t n) { ref::relu(x, y, n); }
template <typename T> inline void relu_bwd(const T* x, const T* g, T* gx, std::size_t n) { ref::relu_bwd(x, g, gx, n); }
template <typename T> inline void sigmoid(const T* x, T* y, std::size_t n) { ref::sigmoid(x, y, n); }
template <typename T> inline void tanh(const T* x, T* y, std::size_t n) { ref::tanh(x, y, n); }
template <typename T> inline void softplus(const T* x, T* y, T* sig, std::size_t n) { ref::softplus(x, y, sig, n); }
template <typename T> inline void swish(const T* x, T* y, T* sig, std::size_t n) { ref::swish(x, y, sig, n); }
template <typename T> inline void mish(const T* x, T* y, T* tsp, T* sig, std::size_t n) { ref::mish(x, y, tsp, sig, n); }
template <typename T> inline void swish_bwd(const T* x, const T* sig, const T* g, T* gx, std::size_t n) { ref::swish_bwd(x, sig, g, gx, n); }
template <typename T> inline void mish_bwd(const T* x, const T* tsp, const T* sig, const T* g, T* gx, std::size_t n) { ref::mish_bwd(x, tsp, sig, g, gx, n); }
template <typename T> inline double sum(const T* x, std::size_t n) { return ref::sum(x, n); }
template <typename T> inline double asum(const T* x, std::size_t n) { return ref::asum(x, n); }
template <typename T> inline void adam(T* p, const T* g, T* m, T* v, std::size_t n, const AdamScalars& a) { ref::adam(p, g, m, v, n, a); }

// Float specializations, dispatched in dispatch.cpp.
template <> void conv2d_padded<float>(const float*, const float*, const float*, float*, const ConvShape&);
template <> void conv2d_grad_weight_padded<float>(const float*, const float*, float*, const ConvShape&);
template <> void add<float>(const float*, const float*, float*, std::size_t);
template <> void sub<float>(const float*, const float*, float*, std::size_t);
template <> void mul<float>(const float*, const float*, float*, std::size_t);
template <> void macc<float>(const float*, const float*, float*, std::size_t);
template <> void axpy<float>(float, const float*, float*, std::size_t);
template <> void scale<float>(const float*, float, float*, std::size_t);
template <> void relu<float>(const float*, float*, std::size_t);
template <> void relu_bwd<float>(const float*, const float*, float*, std::size_t);
template <> void sigmoid<float>(const float*, float*, std::size_t);
template <> void swish<float>(const float*, float*, float*, std::size_t);
template <> void mish<float>(const float*, float*, float*, float*, std::size_t);
template <> void swish_bwd<float>(const float*, const float*, const float*, float*, std::size_t);
template <> void mish_bwd<float>(const float*, const float*, const float*, const float*, float*, std::size_t);
template <> double sum<float>(const float*, std::size_t);
template <> double asum<float>(const float*, std::size_t);
template <> void adam<float>(float*, const float*, float*, float*, std::size_t, const AdamScalars&);

// AVX2 variants (compiled with -mavx2 -mfma; call only when the CPU has them).
namespace avx2 {
void conv2d_padded(const float* xp, const float* w, const float* bias, float* y, const ConvShape& s);
void conv2d_grad_weight_padded(const float* xp, const float* g, float* gw, const ConvShape& s);
void add(const float* a, const float* b, float* y, std::size_t n);
void sub(const float* a, const float* b, float* y, std::size_t n);
void mul(const float* a, const float* b, float* y, std::size_t n);
void macc(const float* a, const float* b, float* y, std::size_t n);
void axpy(float c, const float* x, float* y, std::size_t n);
void scale(const float* x, float c, float* y, std::size_t n);
void relu(const float* x, float* y, std::size_t n);
void relu_bwd(const float* x, const float* g, float* gx, std::size_t n);
void sigmoid(const float* x, float* y, std::size_t n);
void swish(const float* x, float* y, float* sig, std::size_t n);
void mish(const float* x, float* y, float* tsp, float* sig, std::size_t n);
void swish_bwd(const float* x, const float* sig, const float* g, float* gx, std::size_t n);
void mish_bwd(const float* x, const float* tsp, const float* sig, const float* g, float* gx, std::size_t n);
double sum(const float* x, std::size_t n);
double asum(const float* x, std::size_t n);
void adam(float* p, const float* g, float* m, float* v, std::size_t n, const AdamScalars& a);
}  // namespace avx2

}  // namespace endn::kern
