// AVX2/FMA variants of the float kernels. Compiled with -mavx2 -mfma and
// selected at runtime (see dispatch.cpp); equivalence against kern::ref is
// covered by tests/test_kernels.cpp.

#include "endn/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

namespace endn::kern::avx2 {

namespace {

inline float hsum8(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 sh = _mm_movehdup_ps(lo);
  lo = _mm_add_ps(lo, sh);
  sh = _mm_movehl_ps(sh, lo);
  lo = _mm_add_ss(lo, sh);
  return _mm_cvtss_f32(lo);
}

// Cephes-style single-precision exp, ~2 ulp over the clamped range.
inline __m256 exp256(__m256 x) {
  const __m256 hi = _mm256_set1_ps(88.3762626647949f);
  const __m256 lo = _mm256_set1_ps(-88.3762626647949f);
  const __m256 log2e = _mm256_set1_ps(1.44269504088896341f);
  const __m256 c1 = _mm256_set1_ps(0.693359375f);
  const __m256 c2 = _mm256_set1_ps(-2.12194440e-4f);
  const __m256 one = _mm256_set1_ps(1.0f);

  x = _mm256_max_ps(_mm256_min_ps(x, hi), lo);
  __m256 fx = _mm256_fmadd_ps(x, log2e, _mm256_set1_ps(0.5f));
  fx = _mm256_floor_ps(fx);
  x = _mm256_fnmadd_ps(fx, c1, x);
  x = _mm256_fnmadd_ps(fx, c2, x);

  __m256 y = _mm256_set1_ps(1.9875691500e-4f);
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894e-2f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459e-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(5.0000001201e-1f));
  y = _mm256_fmadd_ps(y, _mm256_mul_ps(x, x), _mm256_add_ps(x, one));

  __m256i n = _mm256_cvttps_epi32(fx);
  n = _mm256_add_epi32(n, _mm256_set1_epi32(0x7f));
  n = _mm256_slli_epi32(n, 23);
  return _mm256_mul_ps(y, _mm256_castsi256_ps(n));
}

// sigmoid(x) = x >= 0 ? 1/(1+e^-x) : e^x/(1+e^x); both sides share e^-|x|
inline __m256 sigmoid8(__m256 x) {
  const __m256 one = _mm256_set1_ps(1.0f);
  const __m256 sign = _mm256_set1_ps(-0.0f);
  __m256 ax = _mm256_andnot_ps(sign, x);
  __m256 e = exp256(_mm256_sub_ps(_mm256_setzero_ps(), ax));
  __m256 s_pos = _mm256_div_ps(one, _mm256_add_ps(one, e));
  __m256 s_neg = _mm256_mul_ps(e, s_pos);
  __m256 neg = _mm256_cmp_ps(x, _mm256_setzero_ps(), _CMP_LT_OQ);
  return _mm256_blendv_ps(s_pos, s_neg, neg);
}

// tanh(softplus(x)) = (p^2 + 2p) / (p^2 + 2p + 2) with p = e^x; saturates to
// 1 above x = 15 where the f32 value is already indistinguishable from 1
inline __m256 tanh_softplus8(__m256 x) {
  const __m256 cap = _mm256_set1_ps(15.0f);
  const __m256 two = _mm256_set1_ps(2.0f);
  __m256 p = exp256(_mm256_min_ps(x, cap));
  __m256 q = _mm256_fmadd_ps(p, p, _mm256_mul_ps(two, p));
  __m256 t = _mm256_div_ps(q, _mm256_add_ps(q, two));
  __m256 sat = _mm256_cmp_ps(x, cap, _CMP_GT_OQ);
  return _mm256_blendv_ps(t, _mm256_set1_ps(1.0f), sat);
}

}  // namespace

void conv2d_padded(const float* xp, const float* w, const float* bias, float* y,
                   const ConvShape& s) {
  const int hp = s.hp(), wp = s.wp(), W = s.w, H = s.h, D = s.dilation;
  const int taps = s.kh * s.kw;
  const std::size_t xplane = std::size_t(hp) * wp;
  for (int n = 0; n < s.n; ++n) {
    const float* xn = xp + std::size_t(n) * s.in_c * xplane;
    for (int o = 0; o < s.out_c; ++o) {
      const float bval = bias ? bias[o] : 0.0f;
      const __m256 bv = _mm256_set1_ps(bval);
      const float* wo = w + std::size_t(o) * s.in_c * taps;
      float* yp = y + (std::size_t(n) * s.out_c + o) * H * W;
      for (int yy = 0; yy < H; ++yy) {
        float* yr = yp + std::size_t(yy) * W;
        int x = 0;
        for (; x + 64 <= W; x += 64) {
          __m256 a0 = bv, a1 = bv, a2 = bv, a3 = bv, a4 = bv, a5 = bv, a6 = bv, a7 = bv;
          const float* wk = wo;
          for (int i = 0; i < s.in_c; ++i) {
            const float* xc = xn + std::size_t(i) * xplane;
            for (int dy = 0; dy < s.kh; ++dy) {
              const float* xr = xc + std::size_t(yy + D * dy) * wp + x;
              for (int dx = 0; dx < s.kw; ++dx, ++wk) {
                const __m256 wv = _mm256_set1_ps(*wk);
                const float* p = xr + D * dx;
                a0 = _mm256_fmadd_ps(_mm256_loadu_ps(p), wv, a0);
                a1 = _mm256_fmadd_ps(_mm256_loadu_ps(p + 8), wv, a1);
                a2 = _mm256_fmadd_ps(_mm256_loadu_ps(p + 16), wv, a2);
                a3 = _mm256_fmadd_ps(_mm256_loadu_ps(p + 24), wv, a3);
                a4 = _mm256_fmadd_ps(_mm256_loadu_ps(p + 32), wv, a4);
                a5 = _mm256_fmadd_ps(_mm256_loadu_ps(p + 40), wv, a5);
                a6 = _mm256_fmadd_ps(_mm256_loadu_ps(p + 48), wv, a6);
                a7 = _mm256_fmadd_ps(_mm256_loadu_ps(p + 56), wv, a7);
              }
            }
          }
          _mm256_storeu_ps(yr + x, a0);
          _mm256_storeu_ps(yr + x + 8, a1);
          _mm256_storeu_ps(yr + x + 16, a2);
          _mm256_storeu_ps(yr + x + 24, a3);
          _mm256_storeu_ps(yr + x + 32, a4);
          _mm256_storeu_ps(yr + x + 40, a5);
          _mm256_storeu_ps(yr + x + 48, a6);
          _mm256_storeu_ps(yr + x + 56, a7);
        }
        for (; x + 8 <= W; x += 8) {
          __m256 acc = bv;
          const float* wk = wo;
          for (int i = 0; i < s.in_c; ++i) {
            const float* xc = xn + std::size_t(i) * xplane;
            for (int dy = 0; dy < s.kh; ++dy) {
              const float* xr = xc + std::size_t(yy + D * dy) * wp + x;
              for (int dx = 0; dx < s.kw; ++dx, ++wk)
                acc = _mm256_fmadd_ps(_mm256_loadu_ps(xr + D * dx), _mm256_set1_ps(*wk), acc);
            }
          }
          _mm256_storeu_ps(yr + x, acc);
        }
        for (; x < W; ++x) {
          float acc = bval;
          const float* wk = wo;
          for (int i = 0; i < s.in_c; ++i) {
            const float* xc = xn + std::size_t(i) * xplane;
            for (int dy = 0; dy < s.kh; ++dy) {
              const float* xr = xc + std::size_t(yy + D * dy) * wp + x;
              for (int dx = 0; dx < s.kw; ++dx, ++wk) acc += *wk * xr[D * dx];
            }
          }
          yr[x] = acc;
        }
      }
    }
  }
}

void conv2d_grad_weight_padded(const float* xp, const float* g, float* gw,
                               const ConvShape& s) {
  const int hp = s.hp(), wp = s.wp(), W = s.w, H = s.h, D = s.dilation;
  const std::size_t xplane = std::size_t(hp) * wp;
  const std::size_t gplane = std::size_t(H) * W;
  for (int o = 0; o < s.out_c; ++o) {
    for (int i = 0; i < s.in_c; ++i) {
      float* gwk = gw + (std::size_t(o) * s.in_c + i) * s.kh * s.kw;
      for (int dy = 0; dy < s.kh; ++dy) {
        for (int dx = 0; dx < s.kw; ++dx) {
          __m256 acc = _mm256_setzero_ps();
          float tail = 0.0f;
          for (int n = 0; n < s.n; ++n) {
            const float* gc = g + (std::size_t(n) * s.out_c + o) * gplane;
            const float* xc = xp + (std::size_t(n) * s.in_c + i) * xplane;
            for (int yy = 0; yy < H; ++yy) {
              const float* gr = gc + std::size_t(yy) * W;
              const float* xr = xc + std::size_t(yy + D * dy) * wp + D * dx;
              int x = 0;
              for (; x + 8 <= W; x += 8)
                acc = _mm256_fmadd_ps(_mm256_loadu_ps(gr + x), _mm256_loadu_ps(xr + x), acc);
              for (; x < W; ++x) tail += gr[x] * xr[x];
            }
          }
          gwk[dy * s.kw + dx] = hsum8(acc) + tail;
        }
      }
    }
  }
}

void add(const float* a, const float* b, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] + b[i];
}

void sub(const float* a, const float* b, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] - b[i];
}

void mul(const float* a, const float* b, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] * b[i];
}

void macc(const float* a, const float* b, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i),
                                 _mm256_loadu_ps(y + i));
    _mm256_storeu_ps(y + i, acc);
  }
  for (; i < n; ++i) y[i] += a[i] * b[i];
}

void axpy(float c, const float* x, float* y, std::size_t n) {
  const __m256 cv = _mm256_set1_ps(c);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(_mm256_loadu_ps(x + i), cv, _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += c * x[i];
}

void scale(const float* x, float c, float* y, std::size_t n) {
  const __m256 cv = _mm256_set1_ps(c);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), cv));
  for (; i < n; ++i) y[i] = c * x[i];
}

void relu(const float* x, float* y, std::size_t n) {
  const __m256 z = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), z));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd(const float* x, const float* g, float* gx, std::size_t n) {
  const __m256 z = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), z, _CMP_GT_OQ);
    __m256 gv = _mm256_and_ps(_mm256_loadu_ps(g + i), mask);
    _mm256_storeu_ps(gx + i, _mm256_add_ps(_mm256_loadu_ps(gx + i), gv));
  }
  for (; i < n; ++i) gx[i] += x[i] > 0.0f ? g[i] : 0.0f;
}

void sigmoid(const float* x, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, sigmoid8(_mm256_loadu_ps(x + i)));
  for (; i < n; ++i) y[i] = ref::sigmoid_one(x[i]);
}

void swish(const float* x, float* y, float* sig, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 xv = _mm256_loadu_ps(x + i);
    __m256 s = sigmoid8(xv);
    _mm256_storeu_ps(sig + i, s);
    _mm256_storeu_ps(y + i, _mm256_mul_ps(xv, s));
  }
  for (; i < n; ++i) {
    float s = ref::sigmoid_one(x[i]);
    sig[i] = s;
    y[i] = x[i] * s;
  }
}

void mish(const float* x, float* y, float* tsp, float* sig, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 xv = _mm256_loadu_ps(x + i);
    __m256 t = tanh_softplus8(xv);
    _mm256_storeu_ps(tsp + i, t);
    _mm256_storeu_ps(sig + i, sigmoid8(xv));
    _mm256_storeu_ps(y + i, _mm256_mul_ps(xv, t));
  }
  for (; i < n; ++i) {
    float t = std::tanh(ref::softplus_one(x[i]));
    tsp[i] = t;
    sig[i] = ref::sigmoid_one(x[i]);
    y[i] = x[i] * t;
  }
}

void swish_bwd(const float* x, const float* sig, const float* g, float* gx, std::size_t n) {
  const __m256 one = _mm256_set1_ps(1.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 s = _mm256_loadu_ps(sig + i);
    __m256 xs = _mm256_mul_ps(_mm256_loadu_ps(x + i), s);
    __m256 d = _mm256_fmadd_ps(xs, _mm256_sub_ps(one, s), s);
    _mm256_storeu_ps(gx + i, _mm256_fmadd_ps(_mm256_loadu_ps(g + i), d, _mm256_loadu_ps(gx + i)));
  }
  for (; i < n; ++i) {
    float s = sig[i];
    gx[i] += g[i] * (s + x[i] * s * (1.0f - s));
  }
}

void mish_bwd(const float* x, const float* tsp, const float* sig, const float* g, float* gx,
              std::size_t n) {
  const __m256 one = _mm256_set1_ps(1.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 t = _mm256_loadu_ps(tsp + i);
    __m256 xs = _mm256_mul_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(sig + i));
    __m256 d = _mm256_fmadd_ps(xs, _mm256_fnmadd_ps(t, t, one), t);
    _mm256_storeu_ps(gx + i, _mm256_fmadd_ps(_mm256_loadu_ps(g + i), d, _mm256_loadu_ps(gx + i)));
  }
  for (; i < n; ++i) {
    float t = tsp[i];
    gx[i] += g[i] * (t + x[i] * sig[i] * (1.0f - t * t));
  }
}

double sum(const float* x, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
  double r = hsum8(acc);
  for (; i < n; ++i) r += x[i];
  return r;
}

double asum(const float* x, std::size_t n) {
  const __m256 sign = _mm256_set1_ps(-0.0f);
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    acc = _mm256_add_ps(acc, _mm256_andnot_ps(sign, _mm256_loadu_ps(x + i)));
  double r = hsum8(acc);
  for (; i < n; ++i) r += std::abs(x[i]);
  return r;
}

void adam(float* p, const float* g, float* m, float* v, std::size_t n, const AdamScalars& a) {
  const __m256 b1 = _mm256_set1_ps(a.beta1), b2 = _mm256_set1_ps(a.beta2);
  const __m256 ob1 = _mm256_set1_ps(1.0f - a.beta1), ob2 = _mm256_set1_ps(1.0f - a.beta2);
  const __m256 rc1 = _mm256_set1_ps(1.0f / a.bc1), rc2 = _mm256_set1_ps(1.0f / a.bc2);
  const __m256 lr = _mm256_set1_ps(a.lr), eps = _mm256_set1_ps(a.eps);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 gv = _mm256_loadu_ps(g + i);
    __m256 mv = _mm256_fmadd_ps(b1, _mm256_loadu_ps(m + i), _mm256_mul_ps(ob1, gv));
    __m256 vv = _mm256_fmadd_ps(b2, _mm256_loadu_ps(v + i),
                                _mm256_mul_ps(ob2, _mm256_mul_ps(gv, gv)));
    _mm256_storeu_ps(m + i, mv);
    _mm256_storeu_ps(v + i, vv);
    __m256 mhat = _mm256_mul_ps(mv, rc1);
    __m256 vhat = _mm256_mul_ps(vv, rc2);
    __m256 den = _mm256_add_ps(_mm256_sqrt_ps(vhat), eps);
    __m256 upd = _mm256_div_ps(_mm256_mul_ps(lr, mhat), den);
    _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), upd));
  }
  for (; i < n; ++i) {
    m[i] = a.beta1 * m[i] + (1.0f - a.beta1) * g[i];
    v[i] = a.beta2 * v[i] + (1.0f - a.beta2) * g[i] * g[i];
    float mhat = m[i] / a.bc1;
    float vhat = v[i] / a.bc2;
    p[i] -= a.lr * mhat / (std::sqrt(vhat) + a.eps);
  }
}

}  // namespace endn::kern::avx2

#endif  // x86
