#pragma once

#include <utility>
#include <vector>

#include "endn/ops.hpp"
#include "endn/tensor.hpp"

namespace endn {

// Recording tape for reverse-mode differentiation. Each op call computes the
// forward value immediately (define-by-run) and records what backward() needs:
// input node ids plus the activation factors the backward kernels consume.
// Nodes are append-only, so ids are already topologically ordered and the
// reverse sweep visits each node exactly once, accumulating gradients
// additively across fan-out.
template <typename T>
class Tape {
 public:
  using Value = int;
  static constexpr Value kNone = -1;

  enum class Op {
    leaf,
    conv2d,
    add,
    sub,
    mul,
    div,
    scale,
    add_scalar,
    relu,
    swish,
    mish,
    sigmoid,
    tanh,
    softplus,
    abs,
    concat,
    gblur,
    sum,
    mean,
  };

  Value leaf(Tensor4<T> v, bool requires_grad = true) {
    Node n;
    n.op = Op::leaf;
    n.val = std::move(v);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    leaves_.push_back(int(nodes_.size()) - 1);
    return leaves_.back();
  }

  Value conv2d(Value x, Value w, Value bias, int dilation) {
    const Tensor4<T>& xb = val(x);
    const Tensor4<T>& wb = val(w);
    Node n;
    n.op = Op::conv2d;
    n.dilation = dilation;
    if (bias == kNone) {
      n.in = {x, w};
      n.val = ops::conv2d(xb, wb, Tensor4<T>{}, dilation);
    } else {
      n.in = {x, w, bias};
      n.val = ops::conv2d(xb, wb, val(bias), dilation);
    }
    return push(std::move(n));
  }

  Value add(Value a, Value b) { return binary(Op::add, a, b, ops::add(val(a), val(b))); }
  Value sub(Value a, Value b) { return binary(Op::sub, a, b, ops::sub(val(a), val(b))); }
  Value mul(Value a, Value b) { return binary(Op::mul, a, b, ops::mul(val(a), val(b))); }
  Value div(Value a, Value b) { return binary(Op::div, a, b, ops::div(val(a), val(b))); }

  Value scale(Value x, T c) {
    Node n;
    n.op = Op::scale;
    n.in = {x};
    n.cval = c;
    n.val = ops::scale(val(x), c);
    return push(std::move(n));
  }

  Value add_scalar(Value x, T c) {
    Node n;
    n.op = Op::add_scalar;
    n.in = {x};
    n.cval = c;
    n.val = ops::add_scalar(val(x), c);
    return push(std::move(n));
  }

  Value relu(Value x) { return unary(Op::relu, x, ops::relu(val(x))); }

  Value swish(Value x) {
    ops::Act1<T> r = ops::swish(val(x));
    Node n;
    n.op = Op::swish;
    n.in = {x};
    n.val = std::move(r.y);
    n.aux1 = std::move(r.aux);
    return push(std::move(n));
  }

  Value mish(Value x) {
    ops::Act2<T> r = ops::mish(val(x));
    Node n;
    n.op = Op::mish;
    n.in = {x};
    n.val = std::move(r.y);
    n.aux1 = std::move(r.aux1);
    n.aux2 = std::move(r.aux2);
    return push(std::move(n));
  }

  Value sigmoid(Value x) { return unary(Op::sigmoid, x, ops::sigmoid(val(x))); }
  Value tanh(Value x) { return unary(Op::tanh, x, ops::tanh(val(x))); }

  Value softplus(Value x) {
    ops::Act1<T> r = ops::softplus(val(x));
    Node n;
    n.op = Op::softplus;
    n.in = {x};
    n.val = std::move(r.y);
    n.aux1 = std::move(r.aux);
    return push(std::move(n));
  }

  Value abs(Value x) { return unary(Op::abs, x, ops::abs(val(x))); }

  Value concat(const std::vector<Value>& xs) {
    std::vector<const Tensor4<T>*> ptrs;
    ptrs.reserve(xs.size());
    for (Value v : xs) ptrs.push_back(&val(v));
    Node n;
    n.op = Op::concat;
    n.in = xs;
    n.val = ops::concat_channels(ptrs);
    return push(std::move(n));
  }

  Value gblur(Value x, const ops::BlurSpec& spec) {
    Node n;
    n.op = Op::gblur;
    n.in = {x};
    n.blur = spec;
    n.val = ops::gblur_renorm(val(x), spec);
    return push(std::move(n));
  }

  Value sum(Value x) {
    Node n;
    n.op = Op::sum;
    n.in = {x};
    n.val = Tensor4<T>::scalar(ops::sum_all(val(x)));
    return push(std::move(n));
  }

  Value mean(Value x) {
    Node n;
    n.op = Op::mean;
    n.in = {x};
    n.val = Tensor4<T>::scalar(ops::mean_all(val(x)));
    return push(std::move(n));
  }

  const Tensor4<T>& val(Value id) const { return nodes_.at(id).val; }
  std::size_t node_count() const { return nodes_.size(); }
  const std::vector<Value>& leaves() const { return leaves_; }

  // d(loss)/d(leaf) for every leaf, in registration order. The loss node must
  // be scalar. Leaves not reachable from the loss (and leaves registered with
  // requires_grad=false) come back as zero tensors.
  std::vector<Tensor4<T>> backward(Value loss) const {
    const Tensor4<T>& lv = val(loss);
    if (lv.dims() != Dims4{1, 1, 1, 1})
      throw ContractError("backward: loss node must be scalar (1,1,1,1), got " +
                          lv.dims().str());

    std::vector<Tensor4<T>> grad(nodes_.size());
    grad[loss] = Tensor4<T>::scalar(T(1));

    for (int id = loss; id >= 0; --id) {
      const Node& n = nodes_[id];
      Tensor4<T>& g = grad[id];
      if (g.empty()) continue;  // not on a path to the loss
      switch (n.op) {
        case Op::leaf:
          continue;  // keep the gradient for the caller
        case Op::conv2d: {
          ops::ConvGrads<T> cg =
              ops::conv2d_backward(g, nodes_[n.in[0]].val, nodes_[n.in[1]].val, n.dilation);
          acc(grad, n.in[0], std::move(cg.input));
          acc(grad, n.in[1], std::move(cg.weight));
          if (n.in.size() > 2) acc(grad, n.in[2], std::move(cg.bias));
          break;
        }
        case Op::add:
          acc(grad, n.in[0], g);
          acc(grad, n.in[1], g);
          break;
        case Op::sub:
          acc(grad, n.in[0], g);
          acc(grad, n.in[1], ops::scale(g, T(-1)));
          break;
        case Op::mul:
          acc(grad, n.in[0], ops::mul(g, nodes_[n.in[1]].val));
          acc(grad, n.in[1], ops::mul(g, nodes_[n.in[0]].val));
          break;
        case Op::div: {
          // y = a/b: da += g/b, db += -g*y/b
          const Tensor4<T>& b = nodes_[n.in[1]].val;
          acc(grad, n.in[0], ops::div(g, b));
          acc(grad, n.in[1], ops::scale(ops::div(ops::mul(g, n.val), b), T(-1)));
          break;
        }
        case Op::scale:
          acc(grad, n.in[0], ops::scale(g, n.cval));
          break;
        case Op::add_scalar:
          acc(grad, n.in[0], g);
          break;
        case Op::relu: {
          Tensor4<T>& gx = slot(grad, n.in[0]);
          kern::relu_bwd(nodes_[n.in[0]].val.data(), g.data(), gx.data(), g.size());
          break;
        }
        case Op::swish: {
          Tensor4<T>& gx = slot(grad, n.in[0]);
          kern::swish_bwd(nodes_[n.in[0]].val.data(), n.aux1.data(), g.data(), gx.data(),
                          g.size());
          break;
        }
        case Op::mish: {
          Tensor4<T>& gx = slot(grad, n.in[0]);
          kern::mish_bwd(nodes_[n.in[0]].val.data(), n.aux1.data(), n.aux2.data(), g.data(),
                         gx.data(), g.size());
          break;
        }
        case Op::sigmoid: {
          Tensor4<T>& gx = slot(grad, n.in[0]);
          const Tensor4<T>& y = n.val;
          for (std::int64_t i = 0; i < g.size(); ++i)
            gx[i] += g[i] * y[i] * (T(1) - y[i]);
          break;
        }
        case Op::tanh: {
          Tensor4<T>& gx = slot(grad, n.in[0]);
          const Tensor4<T>& y = n.val;
          for (std::int64_t i = 0; i < g.size(); ++i)
            gx[i] += g[i] * (T(1) - y[i] * y[i]);
          break;
        }
        case Op::softplus: {
          Tensor4<T>& gx = slot(grad, n.in[0]);
          kern::macc(g.data(), n.aux1.data(), gx.data(), g.size());
          break;
        }
        case Op::abs: {
          Tensor4<T>& gx = slot(grad, n.in[0]);
          const Tensor4<T>& x = nodes_[n.in[0]].val;
          for (std::int64_t i = 0; i < g.size(); ++i) {
            if (x[i] > T(0)) gx[i] += g[i];
            else if (x[i] < T(0)) gx[i] -= g[i];
            // subgradient 0 at the tie x == 0
          }
          break;
        }
        case Op::concat: {
          int c0 = 0;
          for (Value in : n.in) {
            const int cc = nodes_[in].val.c();
            acc(grad, in, ops::slice_channels(g, c0, cc));
            c0 += cc;
          }
          break;
        }
        case Op::gblur:
          acc(grad, n.in[0], ops::gblur_renorm_bwd(g, n.blur));
          break;
        case Op::sum: {
          Tensor4<T>& gx = slot(grad, n.in[0]);
          kern::add_scalar(gx.data(), g[0], gx.data(), gx.size());
          break;
        }
        case Op::mean: {
          Tensor4<T>& gx = slot(grad, n.in[0]);
          kern::add_scalar(gx.data(), T(g[0] / T(nodes_[n.in[0]].val.size())), gx.data(),
                           gx.size());
          break;
        }
      }
      g = Tensor4<T>{};  // consumed; free before moving down the tape
    }

    std::vector<Tensor4<T>> out;
    out.reserve(leaves_.size());
    for (Value id : leaves_) {
      if (!grad[id].empty() && nodes_[id].requires_grad)
        out.push_back(std::move(grad[id]));
      else
        out.push_back(Tensor4<T>(nodes_[id].val.dims()));  // zeros
    }
    return out;
  }

 private:
  struct Node {
    Op op = Op::leaf;
    std::vector<int> in;
    Tensor4<T> val;
    Tensor4<T> aux1, aux2;
    T cval = T(0);
    int dilation = 1;
    ops::BlurSpec blur{};
    bool requires_grad = true;
  };

  Value push(Node n) {
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
  }

  Value unary(Op op, Value x, Tensor4<T> v) {
    Node n;
    n.op = op;
    n.in = {x};
    n.val = std::move(v);
    return push(std::move(n));
  }

  Value binary(Op op, Value a, Value b, Tensor4<T> v) {
    Node n;
    n.op = op;
    n.in = {a, b};
    n.val = std::move(v);
    return push(std::move(n));
  }

  // Gradient buffer for a node, zero-initialized on first touch.
  Tensor4<T>& slot(std::vector<Tensor4<T>>& grad, Value id) const {
    if (grad[id].empty()) grad[id] = Tensor4<T>(nodes_[id].val.dims());
    return grad[id];
  }

  void acc(std::vector<Tensor4<T>>& grad, Value id, Tensor4<T>&& g) const {
    if (grad[id].empty())
      grad[id] = std::move(g);
    else
      ops::accumulate(grad[id], g);
  }

  void acc(std::vector<Tensor4<T>>& grad, Value id, const Tensor4<T>& g) const {
    if (grad[id].empty())
      grad[id] = g;
    else
      ops::accumulate(grad[id], g);
  }

  std::vector<Node> nodes_;
  std::vector<Value> leaves_;
};

using Tapef = Tape<float>;
using Taped = Tape<double>;

}  // namespace endn
