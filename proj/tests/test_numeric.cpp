#include <doctest.h>

#include <cmath>

#include "pan/gemm.hpp"
#include "pan/gradcheck_suite.hpp"
#include "pan/ops.hpp"
#include "pan/params.hpp"
#include "pan/rng.hpp"

using namespace pan;

namespace {

TensorD random_t(const std::vector<std::size_t>& shape, Rng& rng) {
  TensorD t(shape);
  for (auto& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

// Direct quadruple-loop convolution, the oracle for the im2col+GEMM path.
TensorD conv2d_naive(const TensorD& x, const TensorD& w, const TensorD* bias, std::size_t stride,
                     std::size_t pad) {
  const std::size_t c_in = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t c_out = w.dim(0), k = w.dim(2);
  const std::size_t ho = (h + 2 * pad - k) / stride + 1;
  const std::size_t wo = (wd + 2 * pad - k) / stride + 1;
  TensorD out({c_out, ho, wo});
  for (std::size_t co = 0; co < c_out; ++co) {
    for (std::size_t y = 0; y < ho; ++y) {
      for (std::size_t xo = 0; xo < wo; ++xo) {
        double acc = bias ? (*bias)[co] : 0.0;
        for (std::size_t ci = 0; ci < c_in; ++ci) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y * stride + ky) - static_cast<std::ptrdiff_t>(pad);
              const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xo * stride + kx) - static_cast<std::ptrdiff_t>(pad);
              if (sy < 0 || sx < 0 || sy >= static_cast<std::ptrdiff_t>(h) || sx >= static_cast<std::ptrdiff_t>(wd)) continue;
              acc += x.at3(ci, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)) * w.at4(co, ci, ky, kx);
            }
          }
        }
        out.at3(co, y, xo) = acc;
      }
    }
  }
  return out;
}

struct BackendInit {
  BackendInit() { init_numeric_backend(); }
} backend_init;

}  // namespace

TEST_CASE("conv2d box filter on constant input") {
  // 5x5 ones, 3x3 all-ones kernel, pad 1: output counts the in-bounds taps.
  TensorD x({1, 5, 5}, 1.0);
  TensorD w({1, 1, 3, 3}, TensorD::Buffer(9, 1.0));
  auto y = conv2d(x, w, nullptr, 1, 1);
  CHECK(y.shape == std::vector<std::size_t>{1, 5, 5});
  CHECK(y.at3(0, 2, 2) == doctest::Approx(9.0));
  CHECK(y.at3(0, 0, 0) == doctest::Approx(4.0));
  CHECK(y.at3(0, 0, 2) == doctest::Approx(6.0));
  CHECK(y.at3(0, 4, 4) == doctest::Approx(4.0));
}

TEST_CASE("conv2d 1x1 identity kernel") {
  Rng rng(7);
  TensorD x = random_t({2, 4, 4}, rng);
  TensorD w({2, 2, 1, 1});
  w.at4(0, 0, 0, 0) = 1.0;
  w.at4(1, 1, 0, 0) = 1.0;
  auto y = conv2d(x, w, nullptr, 1, 0);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]));
}

TEST_CASE("conv2d bias and stride shapes") {
  Rng rng(3);
  TensorD x = random_t({3, 9, 9}, rng);
  TensorD w = random_t({4, 3, 3, 3}, rng);
  TensorD b = random_t({4}, rng);
  auto y = conv2d(x, w, &b, 2, 1);
  CHECK(y.shape == std::vector<std::size_t>{4, 5, 5});
  // 7x7 kernel, pad 3, stride 1 preserves a 224x224 grid.
  CHECK(conv_out_extent(224, 7, 1, 3) == 224);
}

TEST_CASE("conv2d matches the direct-loop oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 3; ++trial) {
    TensorD x = random_t({3, 7, 6}, rng);
    TensorD w = random_t({5, 3, 3, 3}, rng);
    TensorD b = random_t({5}, rng);
    auto fast = conv2d(x, w, &b, 1, 1);
    auto slow = conv2d_naive(x, w, &b, 1, 1);
    REQUIRE(fast.shape == slow.shape);
    for (std::size_t i = 0; i < fast.size(); ++i) CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-10));
  }
}

TEST_CASE("conv2d is linear in the input") {
  Rng rng(13);
  TensorF x = random_t({3, 8, 8}, rng).cast<float>();
  TensorF y = random_t({3, 8, 8}, rng).cast<float>();
  TensorF w = random_t({4, 3, 5, 5}, rng).cast<float>();
  const float a = 0.7f, b = -1.3f;
  TensorF mix({3, 8, 8});
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
  auto lhs = conv2d(mix, w, nullptr, 1, 2);
  auto cx = conv2d(x, w, nullptr, 1, 2);
  auto cy = conv2d(y, w, nullptr, 1, 2);
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    CHECK(std::abs(lhs[i] - (a * cx[i] + b * cy[i])) < 1e-4f);
  }
}

TEST_CASE("fc against a hand example") {
  // y = W x + b with W = [[1,2],[3,4],[5,6]], x = [1,-1], b = [0.5,0,-0.5]
  TensorD x({2}, {1.0, -1.0});
  TensorD w({3, 2}, {1, 2, 3, 4, 5, 6});
  TensorD b({3}, {0.5, 0.0, -0.5});
  auto y = fc(x, w, &b);
  CHECK(y[0] == doctest::Approx(-0.5));
  CHECK(y[1] == doctest::Approx(-1.0));
  CHECK(y[2] == doctest::Approx(-1.5));
}

TEST_CASE("elementwise add/sub/mul") {
  TensorD a({3}, {1.0, 2.0, 3.0});
  TensorD b({3}, {4.0, -1.0, 0.5});
  CHECK(add(a, b)[0] == doctest::Approx(5.0));
  CHECK(sub(a, b)[1] == doctest::Approx(3.0));
  CHECK(mul(a, b)[2] == doctest::Approx(1.5));
}

TEST_CASE("softmax basics") {
  TensorD x({2}, {0.0, 0.0});
  auto s = softmax(x);
  CHECK(s[0] == doctest::Approx(0.5));
  // shift invariance and normalization
  TensorD y({3}, {1.0, 2.0, 3.0});
  TensorD ys({3}, {101.0, 102.0, 103.0});
  auto sy = softmax(y), sys = softmax(ys);
  double sum = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(sy[i] == doctest::Approx(sys[i]));
    sum += sy[i];
  }
  CHECK(sum == doctest::Approx(1.0));
  // e^1 : e^2 : e^3 ratios
  CHECK(sy[1] / sy[0] == doctest::Approx(std::exp(1.0)));
}

TEST_CASE("channel_l2 on a 3-4 channel pair is 5") {
  TensorD x({2, 1, 1}, {3.0, 4.0});
  auto out = channel_l2(x, 0.0);
  CHECK(out.shape == std::vector<std::size_t>{1, 1, 1});
  CHECK(out[0] == doctest::Approx(5.0));
}

TEST_CASE("channel_mean example") {
  TensorD x({3, 1, 2}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
  auto m = channel_mean(x);
  CHECK(m[0] == doctest::Approx(3.0));
  CHECK(m[1] == doctest::Approx(4.0));
}

TEST_CASE("dilated_maxpool_time against brute force") {
  Rng rng(17);
  for (std::size_t n = 2; n <= 12; ++n) {
    for (std::size_t kernel = 1; kernel <= n; ++kernel) {
      for (std::size_t dil = 1; dil <= 4; ++dil) {
        if ((kernel - 1) * dil + 1 > n) continue;
        TensorD x = random_t({n, 2}, rng);
        auto res = dilated_maxpool_time(x, kernel, 1, dil);
        const std::size_t span = (kernel - 1) * dil + 1;
        REQUIRE(res.out.dim(0) == n - span + 1);
        for (std::size_t j = 0; j < res.out.dim(0); ++j) {
          for (std::size_t f = 0; f < 2; ++f) {
            double best = -1e30;
            for (std::size_t i = 0; i < kernel; ++i) best = std::max(best, x.at2(j + i * dil, f));
            CHECK(res.out.at2(j, f) == doctest::Approx(best));
          }
        }
      }
    }
  }
}

TEST_CASE("dilated_maxpool_time routes ties to the earliest index") {
  TensorD x({4, 1}, {1.0, 1.0, 1.0, 1.0});
  auto res = dilated_maxpool_time(x, 2, 1, 2);
  CHECK(res.argmax[0] == 0);
  CHECK(res.argmax[1] == 1);
}

TEST_CASE("maxpool2d and global_avg_pool examples") {
  TensorD x({1, 2, 4}, {1, 5, 2, 0, 3, 4, 1, 7});
  auto p = maxpool2d_2x2(x);
  CHECK(p.out.shape == std::vector<std::size_t>{1, 1, 2});
  CHECK(p.out[0] == doctest::Approx(5.0));
  CHECK(p.out[1] == doctest::Approx(7.0));
  auto g = global_avg_pool(x);
  CHECK(g[0] == doctest::Approx(23.0 / 8.0));
}

TEST_CASE("cross entropy of uniform scores is ln(C)") {
  TensorD s({4}, {0.2, 0.2, 0.2, 0.2});
  CHECK(cross_entropy(s, 2) == doctest::Approx(std::log(4.0)));
  // hand example: scores (0, ln 3), label 0 -> -log(1/4) = log 4
  TensorD t({2}, {0.0, std::log(3.0)});
  CHECK(cross_entropy(t, 0) == doctest::Approx(std::log(4.0)));
}

TEST_CASE("sgd momentum and weight decay unroll") {
  // lr=0.1, mom=0.9, wd=0.1; p0=1, grad 1 at both steps.
  // v1 = 1 + 0.1*1 = 1.1,        p1 = 1 - 0.11 = 0.89
  // v2 = 0.9*1.1 + 1 + 0.1*0.89, p2 = 0.89 - 0.1*v2 = 0.6821
  ParamSet<double> ps;
  ps.add("p", TensorD({1}, {1.0}));
  Sgd<double> opt(0.1, 0.9, 0.1);
  ps.at("p").grad[0] = 1.0;
  opt.step(ps);
  CHECK(ps.at("p").value[0] == doctest::Approx(0.89));
  CHECK(ps.at("p").grad[0] == 0.0);  // zeroed by the step
  ps.at("p").grad[0] = 1.0;
  opt.step(ps);
  CHECK(ps.at("p").value[0] == doctest::Approx(0.6821));
}

TEST_CASE("gemm small example") {
  // [1 2; 3 4] * [5; 6] = [17; 39]
  double a[4] = {1, 2, 3, 4};
  double b[2] = {5, 6};
  double c[2] = {0, 0};
  gemm(false, false, 2, 1, 2, 1.0, a, b, 0.0, c);
  CHECK(c[0] == doctest::Approx(17.0));
  CHECK(c[1] == doctest::Approx(39.0));
}

TEST_CASE("finite-difference suite for the primitives") {
  for (const auto& r : run_gradcheck_suite(42)) {
    INFO(r.name, " max_err=", r.max_err, " tol=", r.tol);
    CHECK(r.pass());
  }
}
