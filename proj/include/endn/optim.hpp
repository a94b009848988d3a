#pragma once

#include <cstdint>
#include <vector>

#include "endn/kernels.hpp"
#include "endn/model.hpp"
#include "endn/tensor.hpp"

namespace endn {

// Adam with the canonical defaults; only the learning rate is a training
// choice here. Moments are stored per parameter, aligned with
// ModelParams::entries.
template <typename T>
struct AdamState {
  T lr = T(1e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  std::int64_t t = 0;
  std::vector<Tensor4<T>> m, v;

  static AdamState init(const ModelParams<T>& params, T lr = T(1e-4)) {
    AdamState s;
    s.lr = lr;
    s.m.reserve(params.entries.size());
    s.v.reserve(params.entries.size());
    for (const auto& e : params.entries) {
      s.m.push_back(Tensor4<T>(e.tensor.dims()));
      s.v.push_back(Tensor4<T>(e.tensor.dims()));
    }
    return s;
  }
};

using AdamStateF = AdamState<float>;

// One Adam update:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr * mhat / (sqrt(vhat) + eps)
template <typename T>
void adam_step(ModelParams<T>& params, const std::vector<Tensor4<T>>& grads,
               AdamState<T>& state) {
  if (grads.size() != params.entries.size() || state.m.size() != params.entries.size())
    throw ShapeError("adam_step: params/grads/state size mismatch");
  state.t += 1;
  kern::AdamScalars sc;
  sc.lr = float(state.lr);
  sc.beta1 = float(state.beta1);
  sc.beta2 = float(state.beta2);
  sc.eps = float(state.eps);
  sc.bc1 = float(1.0 - std::pow(double(state.beta1), double(state.t)));
  sc.bc2 = float(1.0 - std::pow(double(state.beta2), double(state.t)));
  for (std::size_t i = 0; i < params.entries.size(); ++i) {
    Tensor4<T>& p = params.entries[i].tensor;
    const Tensor4<T>& g = grads[i];
    require_same_dims(p.dims(), g.dims(), "adam_step");
    kern::adam(p.data(), g.data(), state.m[i].data(), state.v[i].data(),
               std::size_t(p.size()), sc);
  }
}

}  // namespace endn
