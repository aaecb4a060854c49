#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pan::bench {

struct MethodReport {
  std::string name;
  double ms_median = 0.0;  // per frame pair
  double ms_min = 0.0;
  double ms_max = 0.0;
  double fps = 0.0;
  std::size_t threads = 1;
};

struct BenchReport {
  std::size_t size = 0;
  std::size_t pairs = 0;
  std::size_t reps = 0;
  std::size_t threads = 1;
  int hs_iters = 100;
  std::vector<MethodReport> methods;  // PA, RawDiff, HornSchunck
  double ratio_pa_hs = 0.0;           // fps_PA / fps_HS
};

/// Runs PA (d=1, C=8, k=7), RawDiff (d=0) and Horn-Schunck over the same
/// seeded random frame pairs. A warm-up pass per method is excluded; each
/// repetition processes every pair once and the per-pair wall time is
/// reported as the median over repetitions. PA/RawDiff pairs fan out over
/// `threads` workers; Horn-Schunck always runs single-threaded per pair and
/// sequentially over pairs.
BenchReport benchmark_throughput(std::size_t size, std::size_t pairs, std::size_t reps,
                                 std::size_t threads, int hs_iters, std::uint64_t seed = 42);

struct EncodingReport {
  double e1_ms_median = 0.0;  // per m-frame stack, PA computation + encoding
  double e2_ms_median = 0.0;
  double e1_flops = 0.0;      // analytic estimate at the same configuration
  double e2_flops = 0.0;
};

/// Measures the e1 vs e2 encoding paths at the given resolution (single
/// thread) and pairs the timings with the analytic FLOP estimates.
EncodingReport benchmark_encodings(std::size_t size, std::size_t m, std::size_t reps,
                                   std::uint64_t seed = 42);

std::string format_report(const BenchReport& report);
std::string report_to_json(const BenchReport& report);

}  // namespace pan::bench
