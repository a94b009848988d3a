#pragma once

#include <array>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "endn/rng.hpp"
#include "endn/tape.hpp"
#include "endn/tensor.hpp"

namespace endn {

// Architecture hyperparameters. base_width is the feature depth n; the MCA
// module's internal widths default to fractions of it (the one place the
// layer widths are not pinned), sized so the default width-64 model lands
// near the 846k parameter budget.
struct ModelConfig {
  int in_channels = 1;  // 1 or 3
  int base_width = 64;
  std::array<int, 3> rfa_kernels{1, 3, 5};
  std::array<int, 5> mca_deep_kernels{3, 5, 7, 5, 3};
  int drf_blocks = 3;
  int fusion_dilation = 2;
  bool global_residual = true;
  int mca_deep_width = 0;    // 0 -> base_width/4
  int mca_branch_width = 0;  // 0 -> base_width/8
  int mca_path_width = 0;    // 0 -> base_width/4

  int deep_width() const { return resolve(mca_deep_width, base_width / 4); }
  int branch_width() const { return resolve(mca_branch_width, base_width / 8); }
  int path_width() const { return resolve(mca_path_width, base_width / 4); }

  void validate() const {
    if (in_channels != 1 && in_channels != 3)
      throw ConfigError("in_channels must be 1 or 3");
    if (base_width < 4) throw ConfigError("base_width must be >= 4");
    auto odd = [](int k) { return k >= 1 && k % 2 == 1; };
    for (int k : rfa_kernels)
      if (!odd(k)) throw ConfigError("rfa kernel sizes must be odd");
    for (int k : mca_deep_kernels)
      if (!odd(k)) throw ConfigError("mca deep kernel sizes must be odd");
    if (drf_blocks < 1) throw ConfigError("drf_blocks must be >= 1");
    if (fusion_dilation < 1) throw ConfigError("fusion_dilation must be >= 1");
  }

 private:
  static int resolve(int v, int dflt) { return v > 0 ? v : (dflt > 0 ? dflt : 1); }
};

// One convolution layer of the network; the full architecture is this list.
struct ConvDesc {
  std::string name;
  int in_c, out_c, k;
  int dilation = 1;

  std::int64_t param_count() const {
    return std::int64_t(out_c) * in_c * k * k + out_c;
  }
};

inline std::vector<ConvDesc> conv_layout(const ModelConfig& cfg) {
  cfg.validate();
  const int n = cfg.base_width;
  const int m = cfg.deep_width();
  const int p = cfg.branch_width();
  const int q = cfg.path_width();
  std::vector<ConvDesc> L;

  L.push_back({"initial.conv1", cfg.in_channels, n, 5});
  L.push_back({"initial.conv2", n, n, 3});
  L.push_back({"initial.conv3", n, n, 1});

  for (int i = 0; i < 3; ++i) {
    const std::string rb = "rfa.rb" + std::to_string(i + 1);
    L.push_back({rb + ".conv1", n, n, cfg.rfa_kernels[i]});
    L.push_back({rb + ".conv2", n, n, cfg.rfa_kernels[i]});
  }
  L.push_back({"rfa.fuse", n, n, 3});

  for (const char* b : {"branch_relu", "branch_swish", "branch_mish"})
    L.push_back({std::string("mafe.") + b, n, n, 3});
  L.push_back({"mafe.fuse", 3 * n, n, 3});

  L.push_back({"mca.shallow", n, n, 3});
  for (int i = 0; i < 5; ++i)
    L.push_back({"mca.deep" + std::to_string(i + 1), i == 0 ? n : m, m,
                 cfg.mca_deep_kernels[i]});
  for (const char* path : {"ens_shallow", "ens_deep"}) {
    const int in_c = std::string(path) == "ens_shallow" ? n : m;
    for (const char* b : {"branch_relu", "branch_swish", "branch_mish"})
      L.push_back({"mca." + std::string(path) + "." + b, in_c, p, 3});
    L.push_back({"mca." + std::string(path) + ".fuse", 3 * p, q, 3});
  }
  L.push_back({"mca.fuse", 2 * q, n, 3});

  for (int i = 0; i < cfg.drf_blocks; ++i) {
    const std::string rb = "drf.rb" + std::to_string(i + 1);
    L.push_back({rb + ".conv1", n, n, 3});
    L.push_back({rb + ".conv2", n, n, 3});
  }
  L.push_back({"drf.fuse", cfg.drf_blocks * n, n, 1});

  L.push_back({"head.fuse", 4 * n, cfg.in_channels, 3, cfg.fusion_dilation});
  return L;
}

// Exact number of weight and bias scalars for a config.
inline std::int64_t count_params(const ModelConfig& cfg) {
  std::int64_t total = 0;
  for (const ConvDesc& d : conv_layout(cfg)) total += d.param_count();
  return total;
}

// Flat named parameter store; entry order is the canonical layout order and
// is what the optimizer, checkpoints, and deterministic init all iterate.
template <typename T>
struct ModelParams {
  struct Entry {
    std::string name;
    Tensor4<T> tensor;
    bool is_bias;
  };

  std::vector<Entry> entries;
  std::unordered_map<std::string, int> index;

  void add(std::string name, Tensor4<T> t, bool is_bias) {
    if (index.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index.emplace(name, int(entries.size()));
    entries.push_back({std::move(name), std::move(t), is_bias});
  }

  const Tensor4<T>& at(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw ConfigError("unknown parameter: " + name);
    return entries[it->second].tensor;
  }
  Tensor4<T>& at(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw ConfigError("unknown parameter: " + name);
    return entries[it->second].tensor;
  }

  std::int64_t scalar_count() const {
    std::int64_t n = 0;
    for (const Entry& e : entries) n += e.tensor.size();
    return n;
  }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    for (const Entry& e : entries) out.add(e.name, e.tensor.template cast<U>(), e.is_bias);
    return out;
  }
};

using ModelParamsF = ModelParams<float>;

// He-style normal init, std = sqrt(2 / fan_in). Deterministic in the seed.
template <typename T>
Tensor4<T> he_init(Dims4 dims, std::int64_t fan_in, std::uint64_t seed) {
  if (fan_in <= 0) throw ConfigError("he_init: fan_in must be positive");
  Tensor4<T> t(dims);
  Rng rng(seed);
  const double std_dev = std::sqrt(2.0 / double(fan_in));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = T(rng.next_gaussian() * std_dev);
  return t;
}

// Weights He-initialized, biases zero; layer seeds derived from the run seed.
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams<T> params;
  int layer = 0;
  for (const ConvDesc& d : conv_layout(cfg)) {
    const std::int64_t fan_in = std::int64_t(d.in_c) * d.k * d.k;
    params.add(d.name + ".w",
               he_init<T>(Dims4{d.out_c, d.in_c, d.k, d.k}, fan_in, mix_seed(seed, layer)),
               false);
    params.add(d.name + ".b", Tensor4<T>(1, d.out_c, 1, 1), true);
    ++layer;
  }
  return params;
}

template <typename T>
ModelParams<T> zero_params(const ModelConfig& cfg) {
  ModelParams<T> params;
  for (const ConvDesc& d : conv_layout(cfg)) {
    params.add(d.name + ".w", Tensor4<T>(d.out_c, d.in_c, d.k, d.k), false);
    params.add(d.name + ".b", Tensor4<T>(1, d.out_c, 1, 1), true);
  }
  return params;
}

// ---- engines ----------------------------------------------------------------
// The network builder below is generic over an engine. EvalEngine executes
// ops directly (temporaries die with their last reference); TapeEngine records
// onto a Tape for backward().

template <typename T>
class EvalEngine {
 public:
  using Value = std::shared_ptr<const Tensor4<T>>;

  EvalEngine(const ModelConfig& cfg, const ModelParams<T>& params)
      : cfg_(cfg), params_(&params) {
    index_dilations();
  }

  const ModelConfig& config() const { return cfg_; }

  Value input(Tensor4<T> v) { return std::make_shared<Tensor4<T>>(std::move(v)); }

  Value conv(const Value& x, const std::string& layer) {
    return wrap(ops::conv2d(*x, params_->at(layer + ".w"), params_->at(layer + ".b"),
                            dilation_of(layer)));
  }
  Value relu(const Value& x) { return wrap(ops::relu(*x)); }
  Value swish(const Value& x) { return wrap(std::move(ops::swish(*x).y)); }
  Value mish(const Value& x) { return wrap(std::move(ops::mish(*x).y)); }
  Value add(const Value& a, const Value& b) { return wrap(ops::add(*a, *b)); }
  Value concat(const std::vector<Value>& xs) {
    std::vector<const Tensor4<T>*> ptrs;
    for (const Value& v : xs) ptrs.push_back(v.get());
    return wrap(ops::concat_channels(ptrs));
  }

  const Tensor4<T>& tensor(const Value& v) const { return *v; }

 private:
  Value wrap(Tensor4<T> t) { return std::make_shared<Tensor4<T>>(std::move(t)); }

  void index_dilations() {
    for (const ConvDesc& d : conv_layout(cfg_)) dilations_[d.name] = d.dilation;
  }
  int dilation_of(const std::string& layer) const {
    auto it = dilations_.find(layer);
    if (it == dilations_.end()) throw ConfigError("unknown conv layer: " + layer);
    return it->second;
  }

  ModelConfig cfg_;
  const ModelParams<T>* params_;
  std::unordered_map<std::string, int> dilations_;
};

template <typename T>
class TapeEngine {
 public:
  using Value = typename Tape<T>::Value;

  TapeEngine(Tape<T>& tape, const ModelConfig& cfg, const ModelParams<T>& params)
      : tape_(&tape), cfg_(cfg), params_(&params) {
    for (const ConvDesc& d : conv_layout(cfg_)) dilations_[d.name] = d.dilation;
  }

  const ModelConfig& config() const { return cfg_; }
  Tape<T>& tape() { return *tape_; }

  Value input(Tensor4<T> v, bool requires_grad = false) {
    return tape_->leaf(std::move(v), requires_grad);
  }

  Value conv(Value x, const std::string& layer) {
    return tape_->conv2d(x, param_leaf(layer + ".w"), param_leaf(layer + ".b"),
                         dilations_.at(layer));
  }
  Value relu(Value x) { return tape_->relu(x); }
  Value swish(Value x) { return tape_->swish(x); }
  Value mish(Value x) { return tape_->mish(x); }
  Value add(Value a, Value b) { return tape_->add(a, b); }
  Value concat(const std::vector<Value>& xs) { return tape_->concat(xs); }

  const Tensor4<T>& tensor(Value v) const { return tape_->val(v); }

  // Gradients aligned with params.entries order; zeros for parameters the
  // forward never touched.
  std::vector<Tensor4<T>> collect_param_grads(Value loss) const {
    std::vector<Tensor4<T>> leaf_grads = tape_->backward(loss);
    std::unordered_map<int, int> leaf_pos;  // node id -> position in leaves()
    const std::vector<Value>& ls = tape_->leaves();
    for (int i = 0; i < int(ls.size()); ++i) leaf_pos[ls[i]] = i;

    std::vector<Tensor4<T>> out;
    out.reserve(params_->entries.size());
    for (const auto& e : params_->entries) {
      auto it = param_nodes_.find(e.name);
      if (it == param_nodes_.end()) {
        out.push_back(Tensor4<T>(e.tensor.dims()));
      } else {
        out.push_back(std::move(leaf_grads[leaf_pos.at(it->second)]));
      }
    }
    return out;
  }

 private:
  Value param_leaf(const std::string& name) {
    auto it = param_nodes_.find(name);
    if (it != param_nodes_.end()) return it->second;
    Value v = tape_->leaf(params_->at(name), true);
    param_nodes_.emplace(name, v);
    return v;
  }

  Tape<T>* tape_;
  ModelConfig cfg_;
  const ModelParams<T>* params_;
  std::unordered_map<std::string, int> dilations_;
  std::unordered_map<std::string, Value> param_nodes_;
};

// ---- network ----------------------------------------------------------------

namespace net {

// conv5 -> relu -> conv3 -> relu -> conv1 -> relu, all at base_width
template <typename E>
typename E::Value initial_block(E& eng, typename E::Value in) {
  auto h = eng.relu(eng.conv(in, "initial.conv1"));
  h = eng.relu(eng.conv(h, "initial.conv2"));
  return eng.relu(eng.conv(h, "initial.conv3"));
}

// y = x + conv(relu(conv(x))), both convs at the block's kernel size
template <typename E>
typename E::Value residual_block(E& eng, typename E::Value x, const std::string& prefix) {
  auto h = eng.conv(eng.relu(eng.conv(x, prefix + ".conv1")), prefix + ".conv2");
  return eng.add(x, h);
}

template <typename E>
typename E::Value rfa_module(E& eng, typename E::Value ep) {
  auto r1 = residual_block(eng, ep, "rfa.rb1");
  auto r2 = residual_block(eng, ep, "rfa.rb2");
  auto r3 = residual_block(eng, ep, "rfa.rb3");
  return eng.conv(eng.add(eng.add(r1, r2), r3), "rfa.fuse");
}

// relu/swish/mish branches, each through a conv, concatenated, fused
template <typename E>
typename E::Value multi_activation_ensemble(E& eng, typename E::Value x,
                                            const std::string& prefix) {
  auto b1 = eng.conv(eng.relu(x), prefix + ".branch_relu");
  auto b2 = eng.conv(eng.swish(x), prefix + ".branch_swish");
  auto b3 = eng.conv(eng.mish(x), prefix + ".branch_mish");
  return eng.conv(eng.concat({b1, b2, b3}), prefix + ".fuse");
}

template <typename E>
typename E::Value mafe_module(E& eng, typename E::Value ep) {
  return multi_activation_ensemble(eng, ep, "mafe");
}

template <typename E>
typename E::Value mca_module(E& eng, typename E::Value ep) {
  auto shallow = eng.conv(ep, "mca.shallow");
  auto deep = eng.conv(ep, "mca.deep1");
  for (int i = 2; i <= 5; ++i)
    deep = eng.conv(eng.relu(deep), "mca.deep" + std::to_string(i));
  auto s = multi_activation_ensemble(eng, shallow, "mca.ens_shallow");
  auto d = multi_activation_ensemble(eng, deep, "mca.ens_deep");
  return eng.conv(eng.concat({s, d}), "mca.fuse");
}

// residual blocks in series with dense skips: each block sees the sum of the
// initial features and all previous block outputs
template <typename E>
typename E::Value drf_module(E& eng, typename E::Value ep) {
  const int blocks = eng.config().drf_blocks;
  std::vector<typename E::Value> rs;
  auto acc = ep;
  for (int i = 1; i <= blocks; ++i) {
    auto r = residual_block(eng, acc, "drf.rb" + std::to_string(i));
    rs.push_back(r);
    if (i < blocks) acc = eng.add(acc, r);
  }
  return eng.conv(eng.concat(rs), "drf.fuse");
}

// Full network: initial features, four refinement modules in parallel,
// channel concat, dilated fusion conv, optional global residual.
template <typename E>
typename E::Value forward_model(E& eng, typename E::Value in) {
  if (eng.tensor(in).c() != eng.config().in_channels)
    throw ShapeError("forward: input has " + std::to_string(eng.tensor(in).c()) +
                     " channels, model expects " +
                     std::to_string(eng.config().in_channels));
  auto ep = initial_block(eng, in);
  auto fused = eng.concat(
      {rfa_module(eng, ep), mafe_module(eng, ep), mca_module(eng, ep), drf_module(eng, ep)});
  auto head = eng.conv(fused, "head.fuse");
  return eng.config().global_residual ? eng.add(in, head) : head;
}

}  // namespace net

// One-call inference path.
template <typename T>
Tensor4<T> forward_eval(const ModelConfig& cfg, const ModelParams<T>& params,
                        const Tensor4<T>& input) {
  EvalEngine<T> eng(cfg, params);
  auto out = net::forward_model(eng, eng.input(input));
  return eng.tensor(out);
}

}  // namespace endn
