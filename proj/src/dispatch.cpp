#include "endn/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "endn/tensor.hpp"

namespace endn::kern {

bool cpu_supports_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

Backend resolve_default() {
  if (const char* env = std::getenv("ENDN_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
    if (std::strcmp(env, "avx2") == 0) {
      if (!cpu_supports_avx2())
        throw ConfigError("ENDN_KERNELS=avx2 but this CPU lacks AVX2/FMA");
      return Backend::avx2;
    }
    throw ConfigError(std::string("unknown ENDN_KERNELS value '") + env +
                      "' (expected scalar or avx2)");
  }
  return cpu_supports_avx2() ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& backend_slot() {
  static std::atomic<Backend> slot{resolve_default()};
  return slot;
}

}  // namespace

Backend active_backend() { return backend_slot().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (b == Backend::avx2 && !cpu_supports_avx2())
    throw ConfigError("cannot select avx2 kernels: CPU lacks AVX2/FMA");
  backend_slot().store(b, std::memory_order_relaxed);
}

const char* backend_name(Backend b) {
  return b == Backend::avx2 ? "avx2" : "scalar";
}

#define ENDN_DISPATCH(fn, ...)                      \
  if (active_backend() == Backend::avx2) {          \
    avx2::fn(__VA_ARGS__);                          \
  } else {                                          \
    ref::fn(__VA_ARGS__);                           \
  }

template <>
void conv2d_padded<float>(const float* xp, const float* w, const float* bias, float* y,
                          const ConvShape& s) {
  ENDN_DISPATCH(conv2d_padded, xp, w, bias, y, s)
}
template <>
void conv2d_grad_weight_padded<float>(const float* xp, const float* g, float* gw,
                                      const ConvShape& s) {
  ENDN_DISPATCH(conv2d_grad_weight_padded, xp, g, gw, s)
}
template <>
void add<float>(const float* a, const float* b, float* y, std::size_t n) {
  ENDN_DISPATCH(add, a, b, y, n)
}
template <>
void sub<float>(const float* a, const float* b, float* y, std::size_t n) {
  ENDN_DISPATCH(sub, a, b, y, n)
}
template <>
void mul<float>(const float* a, const float* b, float* y, std::size_t n) {
  ENDN_DISPATCH(mul, a, b, y, n)
}
template <>
void macc<float>(const float* a, const float* b, float* y, std::size_t n) {
  ENDN_DISPATCH(macc, a, b, y, n)
}
template <>
void axpy<float>(float c, const float* x, float* y, std::size_t n) {
  ENDN_DISPATCH(axpy, c, x, y, n)
}
template <>
void scale<float>(const float* x, float c, float* y, std::size_t n) {
  ENDN_DISPATCH(scale, x, c, y, n)
}
template <>
void relu<float>(const float* x, float* y, std::size_t n) {
  ENDN_DISPATCH(relu, x, y, n)
}
template <>
void relu_bwd<float>(const float* x, const float* g, float* gx, std::size_t n) {
  ENDN_DISPATCH(relu_bwd, x, g, gx, n)
}
template <>
void sigmoid<float>(const float* x, float* y, std::size_t n) {
  ENDN_DISPATCH(sigmoid, x, y, n)
}
template <>
void swish<float>(const float* x, float* y, float* sig, std::size_t n) {
  ENDN_DISPATCH(swish, x, y, sig, n)
}
template <>
void mish<float>(const float* x, float* y, float* tsp, float* sig, std::size_t n) {
  ENDN_DISPATCH(mish, x, y, tsp, sig, n)
}
template <>
void swish_bwd<float>(const float* x, const float* sig, const float* g, float* gx,
                      std::size_t n) {
  ENDN_DISPATCH(swish_bwd, x, sig, g, gx, n)
}
template <>
void mish_bwd<float>(const float* x, const float* tsp, const float* sig, const float* g,
                     float* gx, std::size_t n) {
  ENDN_DISPATCH(mish_bwd, x, tsp, sig, g, gx, n)
}
template <>
double sum<float>(const float* x, std::size_t n) {
  if (active_backend() == Backend::avx2) return avx2::sum(x, n);
  return ref::sum(x, n);
}
template <>
double asum<float>(const float* x, std::size_t n) {
  if (active_backend() == Backend::avx2) return avx2::asum(x, n);
  return ref::asum(x, n);
}
template <>
void adam<float>(float* p, const float* g, float* m, float* v, std::size_t n,
                 const AdamScalars& a) {
  ENDN_DISPATCH(adam, p, g, m, v, n, a)
}

#undef ENDN_DISPATCH

#if !(defined(__x86_64__) || defined(__i386__))
// Non-x86 builds still link; the guards above keep these unreachable.
namespace avx2 {
void conv2d_padded(const float*, const float*, const float*, float*, const ConvShape&) {}
void conv2d_grad_weight_padded(const float*, const float*, float*, const ConvShape&) {}
void add(const float*, const float*, float*, std::size_t) {}
void sub(const float*, const float*, float*, std::size_t) {}
void mul(const float*, const float*, float*, std::size_t) {}
void macc(const float*, const float*, float*, std::size_t) {}
void axpy(float, const float*, float*, std::size_t) {}
void scale(const float*, float, float*, std::size_t) {}
void relu(const float*, float*, std::size_t) {}
void relu_bwd(const float*, const float*, float*, std::size_t) {}
void sigmoid(const float*, float*, std::size_t) {}
void swish(const float*, float*, float*, std::size_t) {}
void mish(const float*, float*, float*, float*, std::size_t) {}
void swish_bwd(const float*, const float*, const float*, float*, std::size_t) {}
void mish_bwd(const float*, const float*, const float*, const float*, float*, std::size_t) {}
double sum(const float*, std::size_t) { return 0.0; }
double asum(const float*, std::size_t) { return 0.0; }
void adam(float*, const float*, float*, float*, std::size_t, const AdamScalars&) {}
}  // namespace avx2
#endif

}  // namespace endn::kern
