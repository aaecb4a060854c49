#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "pan/rng.hpp"
#include "pan/vap.hpp"

using namespace pan;

namespace {

TensorD random_seq(std::size_t n, std::size_t d, Rng& rng) {
  TensorD f({n, d});
  for (auto& v : f.data) v = rng.uniform(-2.0, 2.0);
  return f;
}

}  // namespace

TEST_CASE("timescale pooling of 1..8") {
  // single feature 1,2,...,8: rows are the residue-class maxima
  // k=1 -> 8; k=2 -> 7, 8; k=4 -> 5, 6, 7, 8
  TensorD f({8, 1}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto bank = timescale_pool(f);
  REQUIRE(bank.v.dim(0) == 7);
  const double expect[7] = {8, 7, 8, 5, 6, 7, 8};
  for (std::size_t r = 0; r < 7; ++r) CHECK(bank.v.at2(r, 0) == doctest::Approx(expect[r]));
  CHECK(bank.scales[0] == std::pair<std::size_t, std::size_t>{1, 0});
  CHECK(bank.scales[2] == std::pair<std::size_t, std::size_t>{2, 1});
  CHECK(bank.scales[6] == std::pair<std::size_t, std::size_t>{4, 3});
}

TEST_CASE("pooled rows equal residue-class maxima") {
  Rng rng(31);
  for (std::size_t n : {2ul, 4ul, 8ul}) {
    for (std::size_t d = 1; d <= 4; ++d) {
      for (int trial = 0; trial < 100; ++trial) {
        TensorD f = random_seq(n, d, rng);
        auto bank = timescale_pool(f);
        REQUIRE(bank.v.dim(0) == n - 1);
        std::size_t row = 0;
        for (std::size_t k = 1; k < n; k *= 2) {
          for (std::size_t off = 0; off < k; ++off, ++row) {
            for (std::size_t i = 0; i < d; ++i) {
              double best = -1e30;
              for (std::size_t t = off; t < n; t += k) best = std::max(best, f.at2(t, i));
              CHECK(bank.v.at2(row, i) == doctest::Approx(best));
            }
          }
        }
      }
    }
  }
}

TEST_CASE("k=1 row is the global max and rows are permutation invariant within a residue class") {
  Rng rng(7);
  TensorD f = random_seq(8, 3, rng);
  auto bank = timescale_pool(f);
  for (std::size_t i = 0; i < 3; ++i) {
    double best = -1e30;
    for (std::size_t t = 0; t < 8; ++t) best = std::max(best, f.at2(t, i));
    CHECK(bank.v.at2(0, i) == doctest::Approx(best));
  }
  // swap frames 1 and 5 (same class mod 2 and mod 4): every row value survives
  TensorD g = f;
  for (std::size_t i = 0; i < 3; ++i) std::swap(g.at2(1, i), g.at2(5, i));
  auto bank2 = timescale_pool(g);
  for (std::size_t i = 0; i < bank.v.size(); ++i) CHECK(bank.v[i] == doctest::Approx(bank2.v[i]));
}

TEST_CASE("timescale pooling rejects non power of two lengths") {
  TensorD f({6, 2});
  CHECK_THROWS(timescale_pool(f));
}

TEST_CASE("shrink averages each row") {
  TensorD f({2, 2}, {1.0, 3.0, -2.0, 6.0});
  auto bank = timescale_pool(f);
  auto z = shrink(bank);
  // rows: [1,6] (max over both), then the two single frames contribute k=1 only for n=2: rows = 1
  REQUIRE(z.size() == 1);
  CHECK(z[0] == doctest::Approx((1.0 + 6.0) / 2.0));
}

TEST_CASE("perception weights form a probability vector") {
  Rng rng(11);
  VAPConfig cfg;
  auto params = init_vap_params<double>(7, 5, 4, cfg, 11);
  CHECK(params.at("vap.w1").value.shape == std::vector<std::size_t>{28, 7});
  CHECK(params.at("vap.w2").value.shape == std::vector<std::size_t>{7, 28});
  CHECK(params.at("vap.w3").value.shape == std::vector<std::size_t>{4, 5});
  TensorD z({7});
  for (auto& v : z.data) v = rng.uniform(-1.0, 1.0);
  auto tr = weight_perception(z, params);
  double sum = 0.0;
  for (double w : tr.w.data) {
    CHECK(w >= 0.0);
    sum += w;
  }
  CHECK(sum == doctest::Approx(1.0));
}

TEST_CASE("constant input aggregates to itself") {
  Rng rng(13);
  VAPConfig cfg;
  auto params = init_vap_params<double>(7, 6, 4, cfg, 13);
  TensorD f({8, 6});
  for (std::size_t i = 0; i < 6; ++i) {
    const double c = rng.uniform(-1.0, 1.0);
    for (std::size_t t = 0; t < 8; ++t) f.at2(t, i) = c;
  }
  auto tr = vap_forward(f, params);
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(tr.f_g[i] - f.at2(0, i)) < 1e-6);
  // prediction equals W3 applied to that constant vector
  auto s = predict(tr.f_g, params);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(tr.s[i] == doctest::Approx(s[i]));
}

TEST_CASE("pooling is monotone in the inputs") {
  Rng rng(17);
  TensorD f = random_seq(8, 2, rng);
  auto before = timescale_pool(f);
  f.at2(3, 1) += 1.5;
  auto after = timescale_pool(f);
  for (std::size_t i = 0; i < before.v.size(); ++i) CHECK(after.v[i] >= before.v[i]);
}
