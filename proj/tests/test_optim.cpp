#include <doctest.h>

#include "endn/checkpoint.hpp"
#include "endn/optim.hpp"
#include "test_util.hpp"

using namespace endn;

namespace {

// One-entry parameter store around a plain tensor, for driving adam_step.
ModelParams<float> single_param(Tensor4f t) {
  ModelParams<float> p;
  p.add("theta.w", std::move(t), false);
  return p;
}

}  // namespace

TEST_CASE("he_init") {
  SUBCASE("fan_in 2 targets std 1") {
    Tensor4d t = he_init<double>({64, 2, 1, 1}, 2, 7);
    (void)t;  // the statistical check below covers the scale; here: shape + determinism
    CHECK(t.dims() == Dims4{64, 2, 1, 1});
  }
  SUBCASE("empirical std within 1% of sqrt(2/576) over 1e6 samples") {
    // fan_in 576 = 64 * 3 * 3
    Tensor4d t = he_init<double>({1, 64, 125, 125}, 576, 1234);  // 1,000,000 samples
    REQUIRE(t.size() == 1000000);
    double sum = 0, sq = 0;
    for (std::int64_t i = 0; i < t.size(); ++i) {
      sum += t[i];
      sq += t[i] * t[i];
    }
    const double mean = sum / double(t.size());
    const double stddev = std::sqrt(sq / double(t.size()) - mean * mean);
    const double target = std::sqrt(2.0 / 576.0);  // 0.058926
    CHECK(std::abs(stddev - target) / target < 0.01);
  }
  SUBCASE("same seed gives the identical tensor twice") {
    Tensor4f a = he_init<float>({8, 4, 3, 3}, 36, 99);
    Tensor4f b = he_init<float>({8, 4, 3, 3}, 36, 99);
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }
  SUBCASE("init_params zeroes biases") {
    ModelConfig cfg;
    cfg.base_width = 8;
    ModelParams<float> p = init_params<float>(cfg, 5);
    for (const auto& e : p.entries)
      if (e.is_bias)
        for (std::int64_t i = 0; i < e.tensor.size(); ++i) CHECK(e.tensor[i] == 0.0f);
  }
  SUBCASE("fan_in must be positive") {
    CHECK_THROWS_AS(he_init<float>({1, 1, 1, 1}, 0, 1), ConfigError);
  }
}

TEST_CASE("adam_step") {
  SUBCASE("zero gradient on a fresh state leaves parameters unchanged") {
    auto t0 = testutil::random_tensor_f({2, 3, 3, 3}, 11);
    ModelParams<float> p = single_param(t0);
    AdamStateF st = AdamStateF::init(p, 1e-4f);
    std::vector<Tensor4f> g{Tensor4f(t0.dims())};
    adam_step(p, g, st);
    for (std::int64_t i = 0; i < t0.size(); ++i) CHECK(p.entries[0].tensor[i] == t0[i]);
    CHECK(st.t == 1);
  }
  SUBCASE("first step magnitude is lr within 1e-6") {
    ModelParams<float> p = single_param(Tensor4f::scalar(0.0f));
    AdamStateF st = AdamStateF::init(p, 1e-4f);
    std::vector<Tensor4f> g{Tensor4f::scalar(5.0f)};
    adam_step(p, g, st);
    const double update = -double(p.entries[0].tensor[0]);
    CHECK(std::abs(update - 1e-4) < 1e-6);
  }
  SUBCASE("200 steps on (theta-3)^2 with lr 0.1 converge") {
    ModelParams<float> p = single_param(Tensor4f::scalar(0.0f));
    AdamStateF st = AdamStateF::init(p, 0.1f);
    for (int i = 0; i < 200; ++i) {
      const float th = p.entries[0].tensor[0];
      std::vector<Tensor4f> g{Tensor4f::scalar(2.0f * (th - 3.0f))};
      adam_step(p, g, st);
    }
    CHECK(std::abs(p.entries[0].tensor[0] - 3.0f) < 0.1f);
  }
  SUBCASE("per-coordinate step size stays under 1.2 * lr on iid streams") {
    const float lr = 1e-3f;
    ModelParams<float> p = single_param(Tensor4f(1, 1, 16, 16));
    AdamStateF st = AdamStateF::init(p, lr);
    Rng rng(2024);
    Tensor4f prev = p.entries[0].tensor;
    for (int step = 0; step < 300; ++step) {
      Tensor4f g(prev.dims());
      for (std::int64_t i = 0; i < g.size(); ++i) g[i] = float(rng.next_gaussian());
      adam_step(p, {g}, st);
      for (std::int64_t i = 0; i < prev.size(); ++i) {
        CHECK(std::abs(p.entries[0].tensor[i] - prev[i]) <= 1.2f * lr);
        prev[i] = p.entries[0].tensor[i];
      }
    }
    // constant gradients sit at the bias-corrected unit ratio
    ModelParams<float> pc = single_param(Tensor4f::scalar(0.0f));
    AdamStateF stc = AdamStateF::init(pc, lr);
    float prev_th = 0.0f;
    for (int step = 0; step < 50; ++step) {
      adam_step(pc, {Tensor4f::scalar(0.7f)}, stc);
      CHECK(std::abs(pc.entries[0].tensor[0] - prev_th) <= 1.2f * lr);
      prev_th = pc.entries[0].tensor[0];
    }
  }
  SUBCASE("dim mismatch raises") {
    ModelParams<float> p = single_param(Tensor4f(1, 2, 2, 2));
    AdamStateF st = AdamStateF::init(p, 1e-4f);
    std::vector<Tensor4f> g{Tensor4f(1, 2, 2, 3)};
    CHECK_THROWS_AS(adam_step(p, g, st), ShapeError);
  }
}

TEST_CASE("adam state round-trips through a checkpoint mid-run") {
  ModelConfig cfg;
  cfg.base_width = 4;
  testutil::TempDir dir("adamrt");

  ModelParams<float> p = init_params<float>(cfg, 3);
  AdamStateF st = AdamStateF::init(p, 1e-3f);

  // synthetic deterministic gradient stream
  auto grads_at = [&](int step) {
    std::vector<Tensor4f> g;
    Rng rng(mix_seed(42, step));
    for (const auto& e : p.entries) {
      Tensor4f t(e.tensor.dims());
      for (std::int64_t i = 0; i < t.size(); ++i) t[i] = float(rng.next_gaussian());
      g.push_back(std::move(t));
    }
    return g;
  };

  for (int s = 1; s <= 10; ++s) adam_step(p, grads_at(s), st);
  save_checkpoint(dir.file("mid.ckpt"), make_checkpoint(cfg, p, &st, 10));

  // uninterrupted continuation
  ModelParams<float> p_direct = p;
  AdamStateF st_direct = st;
  for (int s = 11; s <= 20; ++s) adam_step(p_direct, grads_at(s), st_direct);

  // restored continuation
  Checkpoint ck = load_checkpoint(dir.file("mid.ckpt"));
  ModelParams<float> p_resumed = ck.params;
  AdamStateF st_resumed = *ck.adam;
  for (int s = 11; s <= 20; ++s) adam_step(p_resumed, grads_at(s), st_resumed);

  for (std::size_t e = 0; e < p.entries.size(); ++e)
    for (std::int64_t i = 0; i < p.entries[e].tensor.size(); ++i)
      CHECK(p_direct.entries[e].tensor[i] == p_resumed.entries[e].tensor[i]);
}
