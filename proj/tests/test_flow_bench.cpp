#include <doctest.h>

#include <cmath>

#include "pan/bench.hpp"
#include "pan/flow.hpp"
#include "pan/gemm.hpp"
#include "pan/rng.hpp"

using namespace pan;

namespace {

struct BackendInit {
  BackendInit() { init_numeric_backend(); }
} backend_init;

// Smooth periodic pattern; translating it right by `shift` pixels wraps.
TensorF sinusoid_gray(std::size_t size, float shift) {
  TensorF f({size, size});
  const float tau = 6.28318530718f;
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const float fx = (static_cast<float>(x) - shift) * tau / 16.0f;
      const float fy = static_cast<float>(y) * tau / 16.0f;
      f.at2(y, x) = 0.5f + 0.25f * std::sin(fx) + 0.15f * std::sin(fy + 0.5f * fx);
    }
  }
  return f;
}

}  // namespace

TEST_CASE("rgb_to_gray weights") {
  TensorF frame({3, 1, 1}, {1.0f, 0.5f, 0.25f});
  auto g = rgb_to_gray(frame);
  CHECK(g.shape == std::vector<std::size_t>{1, 1});
  CHECK(g[0] == doctest::Approx(0.299f * 1.0f + 0.587f * 0.5f + 0.114f * 0.25f));
}

TEST_CASE("identical frames give exactly zero flow") {
  Rng rng(3);
  TensorF f({12, 12});
  for (auto& v : f.data) v = static_cast<float>(rng.uniform());
  auto flow = horn_schunck(f, f, 0.01f, 50);
  for (float u : flow.u.data) CHECK(u == 0.0f);
  for (float v : flow.v.data) CHECK(v == 0.0f);
}

TEST_CASE("horizontal translation recovers mostly horizontal flow") {
  auto f1 = sinusoid_gray(48, 0.0f);
  auto f2 = sinusoid_gray(48, 1.0f);  // moved 1 px to the right
  auto flow = horn_schunck(f1, f2, 0.01f, 200);
  double mu = 0.0, mv = 0.0;
  // borders suffer from the one-sided image gradients; average the interior
  std::size_t count = 0;
  for (std::size_t y = 4; y < 44; ++y) {
    for (std::size_t x = 4; x < 44; ++x) {
      mu += flow.u.at2(y, x);
      mv += flow.v.at2(y, x);
      ++count;
    }
  }
  mu /= static_cast<double>(count);
  mv /= static_cast<double>(count);
  CHECK(mu > 0.7);
  CHECK(mu < 1.2);
  CHECK(std::abs(mv) < 0.15);
}

TEST_CASE("jacobi residuals decay") {
  auto f1 = sinusoid_gray(32, 0.0f);
  auto f2 = sinusoid_gray(32, 1.0f);
  std::vector<float> residuals;
  horn_schunck(f1, f2, 0.01f, 60, &residuals);
  REQUIRE(residuals.size() == 60);
  // monotone apart from float noise, and much smaller at the end
  for (std::size_t i = 1; i < residuals.size(); ++i) {
    CHECK(residuals[i] <= residuals[i - 1] * 1.05f + 1e-12f);
  }
  CHECK(residuals.back() < residuals.front() * 0.2f);
}

TEST_CASE("flow magnitude is the per-pixel euclidean norm") {
  FlowField flow;
  flow.u = TensorF({1, 2}, {3.0f, 0.0f});
  flow.v = TensorF({1, 2}, {4.0f, -2.0f});
  auto mag = flow_magnitude(flow);
  CHECK(mag[0] == doctest::Approx(5.0f));
  CHECK(mag[1] == doctest::Approx(2.0f));
}

TEST_CASE("throughput benchmark produces a coherent report") {
  auto report = bench::benchmark_throughput(32, 2, 3, 1, 10, 42);
  REQUIRE(report.methods.size() == 3);
  CHECK(report.methods[0].name == "PA");
  CHECK(report.methods[1].name == "RawDiff");
  CHECK(report.methods[2].name == "HornSchunck");
  for (const auto& m : report.methods) {
    CHECK(m.fps > 0.0);
    CHECK(m.ms_min <= m.ms_median);
    CHECK(m.ms_median <= m.ms_max);
  }
  CHECK(report.ratio_pa_hs == doctest::Approx(report.methods[0].fps / report.methods[2].fps));
}

TEST_CASE("multi-threaded runs stay in the same ballpark on one pair set") {
  auto one = bench::benchmark_throughput(32, 4, 3, 1, 5, 7);
  auto two = bench::benchmark_throughput(32, 4, 3, 2, 5, 7);
  // generous slack: the box may expose a single core
  CHECK(two.methods[0].ms_median < one.methods[0].ms_median * 3.0);
}

TEST_CASE("encoding benchmark pairs timings with estimates") {
  auto enc = bench::benchmark_encodings(32, 4, 3, 42);
  CHECK(enc.e1_ms_median > 0.0);
  CHECK(enc.e2_ms_median > 0.0);
  CHECK(enc.e2_flops > enc.e1_flops);
}
