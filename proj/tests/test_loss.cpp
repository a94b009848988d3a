#include <doctest.h>

#include "endn/gradcheck.hpp"
#include "endn/loss.hpp"
#include "test_util.hpp"

using namespace endn;

namespace {

// Independent SSIM oracle: per pixel, walk the 11x11 window directly, with
// zero-padded borders renormalized by the in-window weight mass. No shared
// code with the separable implementation in loss.hpp.
Tensor4d ssim_oracle(const Tensor4d& x, const Tensor4d& y, const SsimConfig& cfg) {
  const int r = cfg.window / 2;
  std::vector<double> w2d(std::size_t(cfg.window) * cfg.window);
  double wsum = 0.0;
  for (int a = 0; a < cfg.window; ++a)
    for (int b = 0; b < cfg.window; ++b) {
      const double d2 = double((a - r) * (a - r) + (b - r) * (b - r));
      w2d[a * cfg.window + b] = std::exp(-d2 / (2.0 * cfg.sigma * cfg.sigma));
      wsum += w2d[a * cfg.window + b];
    }
  for (double& v : w2d) v /= wsum;

  const double c1 = cfg.c1(), c2 = cfg.c2();
  Tensor4d out(x.dims());
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int py = 0; py < x.h(); ++py)
        for (int px = 0; px < x.w(); ++px) {
          double mass = 0, mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
          for (int a = 0; a < cfg.window; ++a)
            for (int b = 0; b < cfg.window; ++b) {
              const int sy = py + a - r, sx = px + b - r;
              if (sy < 0 || sy >= x.h() || sx < 0 || sx >= x.w()) continue;
              const double wgt = w2d[a * cfg.window + b];
              const double xv = x.at(n, c, sy, sx), yv = y.at(n, c, sy, sx);
              mass += wgt;
              mx += wgt * xv;
              my += wgt * yv;
              mxx += wgt * xv * xv;
              myy += wgt * yv * yv;
              mxy += wgt * xv * yv;
            }
          mx /= mass;
          my /= mass;
          const double sxx = mxx / mass - mx * mx;
          const double syy = myy / mass - my * my;
          const double sxy = mxy / mass - mx * my;
          out.at(n, c, py, px) = ((2 * mx * my + c1) * (2 * sxy + c2)) /
                                 ((mx * mx + my * my + c1) * (sxx + syy + c2));
        }
  return out;
}

}  // namespace

TEST_CASE("l1 loss") {
  SUBCASE("identical images give zero") {
    auto x = testutil::random_tensor_d({1, 1, 6, 6}, 1, 0, 1);
    CHECK(loss::l1_value(x, x) == 0.0);
  }
  SUBCASE("constant offset") {
    Tensor4d gp = Tensor4d::full({1, 1, 4, 4}, 0.3);
    Tensor4d gg = Tensor4d::full({1, 1, 4, 4}, 0.5);
    CHECK(loss::l1_value(gp, gg) == doctest::Approx(0.2).epsilon(1e-12));
  }
  SUBCASE("tape value matches the pure value") {
    auto p = testutil::random_tensor_d({2, 1, 5, 5}, 2, 0, 1);
    auto g = testutil::random_tensor_d({2, 1, 5, 5}, 3, 0, 1);
    Tape<double> t;
    auto l = loss::l1(t, t.leaf(p), t.leaf(g, false));
    CHECK(t.val(l)[0] == loss::l1_value(p, g));
  }
  SUBCASE("gradient is sign(pred - target)/N away from ties") {
    auto p = testutil::random_tensor_d({1, 1, 4, 4}, 4, 0, 1);
    auto g = testutil::random_tensor_d({1, 1, 4, 4}, 5, 0, 1);
    Tape<double> t;
    auto lp = t.leaf(p);
    auto l = loss::l1(t, lp, t.leaf(g, false));
    auto grads = t.backward(l);
    const double invn = 1.0 / double(p.size());
    for (std::int64_t i = 0; i < p.size(); ++i) {
      const double want = (p[i] > g[i] ? 1.0 : p[i] < g[i] ? -1.0 : 0.0) * invn;
      CHECK(grads[0][i] == doctest::Approx(want).epsilon(1e-12));
    }
  }
  SUBCASE("dim mismatch raises") {
    Tensor4d a(1, 1, 3, 3), b(1, 1, 3, 4);
    CHECK_THROWS_AS(loss::l1_value(a, b), ShapeError);
  }
}

TEST_CASE("ssim_map") {
  const SsimConfig cfg;

  SUBCASE("identical inputs give a map of ones") {
    auto x = testutil::random_tensor_f({1, 1, 16, 16}, 11, 0, 1);
    Tensor4f m = loss::ssim_map(x, x, cfg);
    for (std::int64_t i = 0; i < m.size(); ++i)
      CHECK(std::abs(m[i] - 1.0f) <= 1e-7f);
  }
  SUBCASE("constant images have the closed-form map everywhere") {
    const double a = 0.4, b = 0.7;
    Tensor4d x = Tensor4d::full({1, 1, 12, 15}, a);
    Tensor4d y = Tensor4d::full({1, 1, 12, 15}, b);
    const double want = (2 * a * b + cfg.c1()) / (a * a + b * b + cfg.c1());
    Tensor4d m = loss::ssim_map(x, y, cfg);
    for (std::int64_t i = 0; i < m.size(); ++i)
      CHECK(m[i] == doctest::Approx(want).epsilon(1e-12));
  }
  SUBCASE("agrees with the naive sliding-window oracle on 20 random pairs") {
    for (int k = 0; k < 20; ++k) {
      auto x = testutil::random_tensor_d({1, 1, 16, 16}, 100 + k, 0, 1);
      auto y = testutil::random_tensor_d({1, 1, 16, 16}, 200 + k, 0, 1);
      Tensor4d impl = loss::ssim_map(x, y, cfg);
      Tensor4d want = ssim_oracle(x, y, cfg);
      double max_diff = 0;
      for (std::int64_t i = 0; i < impl.size(); ++i)
        max_diff = std::max(max_diff, std::abs(impl[i] - want[i]));
      CHECK(max_diff < 1e-6);
    }
  }
  SUBCASE("symmetry and bounds") {
    auto x = testutil::random_tensor_d({1, 3, 14, 14}, 31, 0, 1);
    auto y = testutil::random_tensor_d({1, 3, 14, 14}, 32, 0, 1);
    Tensor4d mxy = loss::ssim_map(x, y, cfg);
    Tensor4d myx = loss::ssim_map(y, x, cfg);
    for (std::int64_t i = 0; i < mxy.size(); ++i) {
      CHECK(std::abs(mxy[i] - myx[i]) <= 1e-12);
      CHECK(mxy[i] <= 1.0 + 1e-9);
      CHECK(mxy[i] >= -1.0 - 1e-9);
    }
  }
}

TEST_CASE("ssim loss") {
  const SsimConfig cfg;

  SUBCASE("identical images give zero and the loss stays in [0, 2]") {
    auto x = testutil::random_tensor_d({1, 1, 16, 16}, 41, 0, 1);
    CHECK(loss::ssim_loss_value(x, x, cfg) == doctest::Approx(0.0).epsilon(1e-9));
    for (int k = 0; k < 5; ++k) {
      auto a = testutil::random_tensor_d({1, 1, 12, 12}, 50 + k, 0, 1);
      auto b = testutil::random_tensor_d({1, 1, 12, 12}, 60 + k, 0, 1);
      const double v = loss::ssim_loss_value(a, b, cfg);
      CHECK(v >= 0.0);
      CHECK(v <= 2.0);
    }
  }
  SUBCASE("gradcheck against finite differences (< 1e-5)") {
    auto p = testutil::random_tensor_d({1, 1, 9, 9}, 71, 0.1, 0.9);
    auto g = testutil::random_tensor_d({1, 1, 9, 9}, 72, 0.1, 0.9);

    Tape<double> tape;
    auto lp = tape.leaf(p);
    auto l = loss::ssim(tape, lp, tape.leaf(g, false), cfg);
    auto grads = tape.backward(l);

    auto loss_at = [&](const Tensor4d& pp) { return double(loss::ssim_loss_value(pp, g, cfg)); };
    const double step = 1e-5;
    double max_err = 0;
    for (std::int64_t j = 0; j < p.size(); ++j) {
      Tensor4d pp = p;
      pp[j] = p[j] + step;
      const double hi = loss_at(pp);
      pp[j] = p[j] - step;
      const double lo = loss_at(pp);
      max_err = std::max(max_err,
                         gradcheck::rel_err(grads[0][j], (hi - lo) / (2 * step), 1e-3));
    }
    CHECK(max_err < 1e-5);
  }
}

TEST_CASE("total loss") {
  const SsimConfig cfg;
  auto p = testutil::random_tensor_d({1, 1, 12, 12}, 81, 0.1, 0.9);
  auto g = testutil::random_tensor_d({1, 1, 12, 12}, 82, 0.1, 0.9);

  SUBCASE("identical images give zero") {
    CHECK(loss::total_loss_value(g, g, cfg) == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("equals l1 + ssim exactly") {
    const double total = loss::total_loss_value(p, g, cfg);
    CHECK(total == loss::l1_value(p, g) + loss::ssim_loss_value(p, g, cfg));

    Tape<double> t;
    auto lp = t.leaf(p);
    auto lg = t.leaf(g, false);
    CHECK(t.val(loss::total(t, lp, lg, cfg))[0] == total);
  }
  SUBCASE("a uniform offset strictly increases the loss") {
    const double base = loss::total_loss_value(g, g, cfg);
    Tensor4d shifted = ops::add_scalar(g, 0.1);
    CHECK(loss::total_loss_value(shifted, g, cfg) > base);
  }
}

TEST_CASE("psnr") {
  SUBCASE("uniform 0.1 offset at max_val 1 is exactly 20 dB") {
    Tensor4d x = Tensor4d::full({1, 1, 8, 8}, 0.0);
    Tensor4d y = Tensor4d::full({1, 1, 8, 8}, 0.1);
    CHECK(std::abs(loss::psnr(x, y, 1.0) - 20.0) < 1e-6);
  }
  SUBCASE("identical images hit the +infinity sentinel") {
    auto x = testutil::random_tensor_d({1, 1, 5, 5}, 91, 0, 1);
    CHECK(std::isinf(loss::psnr(x, x, 1.0)));
  }
  SUBCASE("matches the two-line MSE oracle") {
    auto x = testutil::random_tensor_d({1, 3, 9, 9}, 92, 0, 1);
    auto y = testutil::random_tensor_d({1, 3, 9, 9}, 93, 0, 1);
    double mse = 0;
    for (std::int64_t i = 0; i < x.size(); ++i) mse += (x[i] - y[i]) * (x[i] - y[i]);
    mse /= double(x.size());
    CHECK(std::abs(loss::psnr(x, y, 1.0) - 10.0 * std::log10(1.0 / mse)) < 1e-9);
  }
  SUBCASE("strictly decreases as a fixed error pattern scales up") {
    auto x = testutil::random_tensor_d({1, 1, 8, 8}, 94, 0, 1);
    auto e = testutil::random_tensor_d({1, 1, 8, 8}, 95, -0.05, 0.05);
    double prev = loss::psnr(ops::add(x, e), x, 1.0);
    for (double t : {1.5, 2.0, 4.0}) {
      const double cur = loss::psnr(ops::add(x, ops::scale(e, t)), x, 1.0);
      CHECK(cur < prev);
      prev = cur;
    }
  }
}
