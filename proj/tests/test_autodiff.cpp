#include <doctest.h>

#include <functional>

#include "endn/gradcheck.hpp"
#include "endn/tape.hpp"
#include "test_util.hpp"

using namespace endn;

namespace {

using Build = std::function<Tape<double>::Value(Tape<double>&,
                                                const std::vector<Tape<double>::Value>&)>;

// Tape-vs-central-differences check. The numeric side only replays the
// forward build, so it is independent of every backward rule under test.
double fd_max_rel_err(std::vector<Tensor4d> inputs, const Build& build,
                      double step = 1e-5) {
  auto eval = [&](const std::vector<Tensor4d>& ins) {
    Tape<double> tape;
    std::vector<Tape<double>::Value> leaves;
    for (const auto& t : ins) leaves.push_back(tape.leaf(t));
    return tape.val(build(tape, leaves))[0];
  };

  Tape<double> tape;
  std::vector<Tape<double>::Value> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  auto loss = build(tape, leaves);
  std::vector<Tensor4d> grads = tape.backward(loss);

  double max_err = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::int64_t j = 0; j < inputs[k].size(); ++j) {
      std::vector<Tensor4d> pert = inputs;
      pert[k][j] += step;
      const double lp = eval(pert);
      pert[k][j] = inputs[k][j] - step;
      const double lm = eval(pert);
      const double fd = (lp - lm) / (2.0 * step);
      // floor 1e-3: gradients below it are checked absolutely (~1e-9), which
      // is where central-difference roundoff lives in f64
      max_err = std::max(max_err, gradcheck::rel_err(grads[k][j], fd, 1e-3));
    }
  }
  return max_err;
}

// loss = sum(y .* W) for a fixed random weighting, so every output coordinate
// carries a distinct gradient
Build weighted(std::function<Tape<double>::Value(
                   Tape<double>&, const std::vector<Tape<double>::Value>&)>
                   fwd,
               Dims4 out_dims, std::uint64_t seed) {
  Tensor4d w = testutil::random_tensor_d(out_dims, seed, 0.3, 1.7);
  return [fwd, w](Tape<double>& t, const std::vector<Tape<double>::Value>& in) {
    auto y = fwd(t, in);
    auto wleaf = t.leaf(w, false);
    return t.sum(t.mul(y, wleaf));
  };
}

}  // namespace

TEST_CASE("per-op gradients match finite differences (< 1e-6)") {
  const Dims4 d{1, 2, 4, 5};
  auto x = testutil::random_tensor_d(d, 1, 0.2, 1.8);   // positive: clear of relu/abs kinks
  auto x2 = testutil::random_tensor_d(d, 2, 0.3, 1.5);
  auto xs = testutil::random_tensor_d(d, 3, -1.5, 1.5);  // signed, for smooth ops

  auto unary = [&](auto op, const Tensor4d& in, std::uint64_t seed) {
    return fd_max_rel_err(
        {in}, weighted([op](Tape<double>& t, const std::vector<Tape<double>::Value>& v) {
          return op(t, v[0]);
        }, d, seed));
  };

  CHECK(unary([](Taped& t, auto v) { return t.relu(v); }, x, 11) < 1e-6);
  CHECK(unary([](Taped& t, auto v) { return t.swish(v); }, xs, 12) < 1e-6);
  CHECK(unary([](Taped& t, auto v) { return t.mish(v); }, xs, 13) < 1e-6);
  CHECK(unary([](Taped& t, auto v) { return t.sigmoid(v); }, xs, 14) < 1e-6);
  CHECK(unary([](Taped& t, auto v) { return t.tanh(v); }, xs, 15) < 1e-6);
  CHECK(unary([](Taped& t, auto v) { return t.softplus(v); }, xs, 16) < 1e-6);
  CHECK(unary([](Taped& t, auto v) { return t.abs(v); }, x, 17) < 1e-6);
  CHECK(unary([](Taped& t, auto v) { return t.scale(v, -1.3); }, xs, 18) < 1e-6);
  CHECK(unary([](Taped& t, auto v) { return t.add_scalar(v, 0.7); }, xs, 19) < 1e-6);
  CHECK(unary([](Taped& t, auto v) { return t.gblur(v, ops::BlurSpec{5, 1.1}); }, xs, 20) <
        1e-6);

  auto binary = [&](auto op, std::uint64_t seed) {
    return fd_max_rel_err(
        {x, x2}, weighted([op](Tape<double>& t, const std::vector<Tape<double>::Value>& v) {
          return op(t, v[0], v[1]);
        }, d, seed));
  };
  CHECK(binary([](Taped& t, auto a, auto b) { return t.add(a, b); }, 21) < 1e-6);
  CHECK(binary([](Taped& t, auto a, auto b) { return t.sub(a, b); }, 22) < 1e-6);
  CHECK(binary([](Taped& t, auto a, auto b) { return t.mul(a, b); }, 23) < 1e-6);
  CHECK(binary([](Taped& t, auto a, auto b) { return t.div(a, b); }, 24) < 1e-6);

  // mean and sum
  CHECK(fd_max_rel_err({xs}, [](Taped& t, const auto& v) { return t.mean(v[0]); }) < 1e-6);
  CHECK(fd_max_rel_err({xs}, [](Taped& t, const auto& v) { return t.sum(v[0]); }) < 1e-6);
}

TEST_CASE("conv2d gradient matches finite differences") {
  SUBCASE("spec case: 2x1x4x4 input, 3 output channels, 3x3 kernel") {
    auto x = testutil::random_tensor_d({2, 1, 4, 4}, 31);
    auto w = testutil::random_tensor_d({3, 1, 3, 3}, 32);
    auto b = testutil::random_tensor_d({1, 3, 1, 1}, 33);
    const double err = fd_max_rel_err(
        {x, w, b},
        weighted([](Taped& t, const std::vector<Taped::Value>& v) {
          return t.conv2d(v[0], v[1], v[2], 1);
        }, Dims4{2, 3, 4, 4}, 34));
    CHECK(err < 1e-6);
  }
  SUBCASE("kernel sizes 1/3/5/7 and dilation 2") {
    struct Case {
      int k, dil;
    } cases[] = {{1, 1}, {3, 1}, {5, 1}, {7, 1}, {3, 2}};
    for (const Case& c : cases) {
      auto x = testutil::random_tensor_d({1, 2, 8, 8}, 40 + c.k + c.dil);
      auto w = testutil::random_tensor_d({2, 2, c.k, c.k}, 50 + c.k + c.dil);
      auto b = testutil::random_tensor_d({1, 2, 1, 1}, 60 + c.k + c.dil);
      const double err = fd_max_rel_err(
          {x, w, b},
          weighted([c](Taped& t, const std::vector<Taped::Value>& v) {
            return t.conv2d(v[0], v[1], v[2], c.dil);
          }, Dims4{1, 2, 8, 8}, 70 + c.k));
      CHECK(err < 1e-6);
    }
  }
}

TEST_CASE("conv2d_backward explicit cases") {
  auto x = testutil::random_tensor_d({1, 2, 5, 5}, 80);
  auto w = testutil::random_tensor_d({3, 2, 3, 3}, 81);

  SUBCASE("zero grad_out gives three zero gradients") {
    Tensor4d g(1, 3, 5, 5);
    ops::ConvGrads<double> cg = ops::conv2d_backward(g, x, w, 1);
    for (std::int64_t i = 0; i < cg.input.size(); ++i) CHECK(cg.input[i] == 0.0);
    for (std::int64_t i = 0; i < cg.weight.size(); ++i) CHECK(cg.weight[i] == 0.0);
    for (std::int64_t i = 0; i < cg.bias.size(); ++i) CHECK(cg.bias[i] == 0.0);
  }
  SUBCASE("identity 1x1 conv passes the gradient through") {
    Tensor4d wi(1, 1, 1, 1);
    wi[0] = 1.0;
    auto xi = testutil::random_tensor_d({2, 1, 4, 4}, 82);
    auto g = testutil::random_tensor_d({2, 1, 4, 4}, 83);
    ops::ConvGrads<double> cg = ops::conv2d_backward(g, xi, wi, 1);
    for (std::int64_t i = 0; i < g.size(); ++i) CHECK(cg.input[i] == g[i]);
  }
  SUBCASE("grad_bias is the channel sum of grad_out") {
    auto xb = testutil::random_tensor_d({2, 2, 5, 5}, 85);
    auto g = testutil::random_tensor_d({2, 3, 5, 5}, 84);
    ops::ConvGrads<double> cg = ops::conv2d_backward(g, xb, w, 1);
    for (int o = 0; o < 3; ++o) {
      double want = 0.0;
      for (int n = 0; n < 2; ++n)
        for (int y = 0; y < 5; ++y)
          for (int xx = 0; xx < 5; ++xx) want += g.at(n, o, y, xx);
      CHECK(cg.bias[o] == doctest::Approx(want).epsilon(1e-12));
    }
  }
  SUBCASE("dim mismatch raises") {
    Tensor4d bad(1, 3, 4, 5);
    CHECK_THROWS_AS(ops::conv2d_backward(bad, x, w, 1), ShapeError);
  }
}

TEST_CASE("concat gradient slices back per input") {
  auto a = testutil::random_tensor_d({1, 2, 3, 3}, 90);
  auto b = testutil::random_tensor_d({1, 3, 3, 3}, 91);

  // channel-sum of the concat: every input element receives gradient 1
  Tape<double> tape;
  auto la = tape.leaf(a), lb = tape.leaf(b);
  auto cat = tape.concat({la, lb});
  auto loss = tape.sum(cat);
  auto grads = tape.backward(loss);
  for (std::int64_t i = 0; i < a.size(); ++i) CHECK(grads[0][i] == 1.0);
  for (std::int64_t i = 0; i < b.size(); ++i) CHECK(grads[1][i] == 1.0);

  const double err = fd_max_rel_err(
      {a, b}, weighted([](Taped& t, const std::vector<Taped::Value>& v) {
        return t.concat({v[0], v[1]});
      }, Dims4{1, 5, 3, 3}, 92));
  CHECK(err < 1e-6);
}

TEST_CASE("backward basics") {
  SUBCASE("loss = sum(x) gives all-ones gradient") {
    auto x = testutil::random_tensor_d({1, 2, 3, 4}, 100);
    Tape<double> t;
    auto lx = t.leaf(x);
    auto grads = t.backward(t.sum(lx));
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(grads[0][i] == 1.0);
  }
  SUBCASE("loss = sum(x*x)/2 at x=[3] gives gradient [3]") {
    Tensor4d x = Tensor4d::scalar(3.0);
    Tape<double> t;
    auto lx = t.leaf(x);
    auto grads = t.backward(t.scale(t.sum(t.mul(lx, lx)), 0.5));
    CHECK(grads[0][0] == doctest::Approx(3.0).epsilon(1e-14));
  }
  SUBCASE("fan-out accumulates additively") {
    Tensor4d x = Tensor4d::scalar(1.5);
    Tape<double> t;
    auto lx = t.leaf(x);
    auto grads = t.backward(t.sum(t.add(lx, lx)));
    CHECK(grads[0][0] == 2.0);
  }
  SUBCASE("unreachable leaves get zero gradients") {
    Tape<double> t;
    auto used = t.leaf(Tensor4d::scalar(2.0));
    auto unused = t.leaf(testutil::random_tensor_d({1, 2, 2, 2}, 101));
    auto grads = t.backward(t.sum(used));
    CHECK(grads[0][0] == 1.0);
    CHECK(grads[1].dims() == Dims4{1, 2, 2, 2});
    for (std::int64_t i = 0; i < grads[1].size(); ++i) CHECK(grads[1][i] == 0.0);
  }
  SUBCASE("non-scalar loss is a contract error") {
    Tape<double> t;
    auto lx = t.leaf(testutil::random_tensor_d({1, 1, 2, 2}, 102));
    CHECK_THROWS_AS(t.backward(t.relu(lx)), ContractError);
  }
}

TEST_CASE("tape evaluation is deterministic") {
  auto x = testutil::random_tensor_f({2, 3, 8, 8}, 110);
  auto w = testutil::random_tensor_f({4, 3, 3, 3}, 111);
  auto b = testutil::random_tensor_f({1, 4, 1, 1}, 112);

  auto run = [&]() {
    Tape<float> t;
    auto y = t.swish(t.conv2d(t.leaf(x), t.leaf(w), t.leaf(b), 1));
    auto loss = t.mean(t.mul(y, y));
    auto grads = t.backward(loss);
    return std::pair{t.val(loss)[0], std::move(grads)};
  };
  auto [l1v, g1] = run();
  auto [l2v, g2] = run();
  CHECK(l1v == l2v);
  REQUIRE(g1.size() == g2.size());
  for (std::size_t k = 0; k < g1.size(); ++k)
    for (std::int64_t i = 0; i < g1[k].size(); ++i) CHECK(g1[k][i] == g2[k][i]);
}
