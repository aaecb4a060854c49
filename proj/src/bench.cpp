#include "pan/bench.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "pan/flow.hpp"
#include "pan/pa.hpp"
#include "pan/rng.hpp"

namespace pan::bench {

namespace {

using Clock = std::chrono::steady_clock;

TensorF random_frame(std::size_t size, Rng& rng) {
  TensorF frame({3, size, size});
  for (auto& v : frame.data) v = static_cast<float>(rng.uniform());
  return frame;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Times `reps` passes over all pairs; `process(i)` handles pair i. Returns
/// per-pair milliseconds per repetition.
std::vector<double> time_pairs(std::size_t pairs, std::size_t reps, std::size_t threads,
                               const std::function<void(std::size_t)>& process) {
  auto run_all = [&] {
    if (threads <= 1) {
      for (std::size_t i = 0; i < pairs; ++i) process(i);
      return;
    }
    const std::size_t workers = std::min(threads, pairs);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < pairs; i += workers) process(i);
      });
    }
    for (auto& th : pool) th.join();
  };
  run_all();  // warm-up, excluded
  std::vector<double> per_pair_ms(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    run_all();
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    per_pair_ms[r] = ms / static_cast<double>(pairs);
  }
  return per_pair_ms;
}

MethodReport summarize(const std::string& name, const std::vector<double>& per_pair_ms,
                       std::size_t threads) {
  MethodReport m;
  m.name = name;
  m.ms_median = median(per_pair_ms);
  m.ms_min = *std::min_element(per_pair_ms.begin(), per_pair_ms.end());
  m.ms_max = *std::max_element(per_pair_ms.begin(), per_pair_ms.end());
  m.fps = 1000.0 / m.ms_median;
  m.threads = threads;
  return m;
}

}  // namespace

BenchReport benchmark_throughput(std::size_t size, std::size_t pairs, std::size_t reps,
                                 std::size_t threads, int hs_iters, std::uint64_t seed) {
  BenchReport report;
  report.size = size;
  report.pairs = pairs;
  report.reps = reps;
  report.threads = threads;
  report.hs_iters = hs_iters;

  // Identical seeded workload for every method.
  Rng rng(seed);
  std::vector<TensorF> a(pairs), b(pairs);
  for (std::size_t i = 0; i < pairs; ++i) {
    a[i] = random_frame(size, rng);
    b[i] = random_frame(size, rng);
  }

  PAConfig pa_cfg;  // d=1, C=8, k=7
  const ParamSet<float> pa_params = init_pa_weights<float>(pa_cfg, seed);
  PAConfig raw_cfg;
  raw_cfg.depth = 0;
  const ParamSet<float> raw_params;

  report.methods.push_back(summarize(
      "PA",
      time_pairs(pairs, reps, threads, [&](std::size_t i) { pa_pair(a[i], b[i], pa_params, pa_cfg); }),
      threads));
  report.methods.push_back(summarize(
      "RawDiff",
      time_pairs(pairs, reps, threads, [&](std::size_t i) { pa_pair(a[i], b[i], raw_params, raw_cfg); }),
      threads));
  report.methods.push_back(summarize("HornSchunck",
                                     time_pairs(pairs, reps, 1,
                                                [&](std::size_t i) {
                                                  horn_schunck(rgb_to_gray(a[i]), rgb_to_gray(b[i]), 0.01f,
                                                               hs_iters);
                                                }),
                                     1));
  report.ratio_pa_hs = report.methods[0].fps / report.methods[2].fps;
  return report;
}

EncodingReport benchmark_encodings(std::size_t size, std::size_t m, std::size_t reps, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TensorF> frames(m);
  std::vector<const TensorF*> frame_ptrs(m);
  for (std::size_t i = 0; i < m; ++i) {
    frames[i] = random_frame(size, rng);
    frame_ptrs[i] = &frames[i];
  }
  PAConfig e1_cfg;
  e1_cfg.encoding = Encoding::E1;
  PAConfig e2_cfg;
  e2_cfg.encoding = Encoding::E2;
  const ParamSet<float> params = init_pa_weights<float>(e1_cfg, seed);

  auto time_path = [&](const PAConfig& cfg) {
    std::vector<TensorF> owned;
    owned.reserve(m);
    for (const auto& f : frames) owned.push_back(f);
    auto run = [&] {
      PAStack<float> stack = pa_stack(owned, params, cfg);
      return cfg.encoding == Encoding::E1 ? encode_e1(stack) : encode_e2(stack);
    };
    run();  // warm-up
    std::vector<double> ms(reps);
    for (std::size_t r = 0; r < reps; ++r) {
      const auto t0 = Clock::now();
      run();
      ms[r] = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    }
    return median(ms);
  };

  EncodingReport report;
  report.e1_ms_median = time_path(e1_cfg);
  report.e2_ms_median = time_path(e2_cfg);
  report.e1_flops = estimate_flops(e1_cfg, size, size, 1, m);
  report.e2_flops = estimate_flops(e2_cfg, size, size, 1, m);
  return report;
}

std::string format_report(const BenchReport& report) {
  std::ostringstream os;
  os << "resolution " << report.size << "x" << report.size << ", " << report.pairs << " pairs, "
     << report.reps << " reps, HS iters " << report.hs_iters << "\n";
  os << "method        threads   ms/pair (min..max)          fps\n";
  char line[160];
  for (const auto& m : report.methods) {
    std::snprintf(line, sizeof line, "%-12s  %7zu   %9.3f (%8.3f..%8.3f)  %10.1f\n", m.name.c_str(),
                  m.threads, m.ms_median, m.ms_min, m.ms_max, m.fps);
    os << line;
  }
  std::snprintf(line, sizeof line, "PA / HornSchunck fps ratio: %.1fx\n", report.ratio_pa_hs);
  os << line;
  return os.str();
}

std::string report_to_json(const BenchReport& report) {
  nlohmann::json j;
  j["size"] = report.size;
  j["pairs"] = report.pairs;
  j["reps"] = report.reps;
  j["threads"] = report.threads;
  j["hs_iters"] = report.hs_iters;
  j["ratio_pa_hs"] = report.ratio_pa_hs;
  for (const auto& m : report.methods) {
    j["methods"][m.name] = {{"ms_median", m.ms_median}, {"ms_min", m.ms_min},
                            {"ms_max", m.ms_max},       {"fps", m.fps},
                            {"threads", m.threads}};
  }
  return j.dump(2);
}

}  // namespace pan::bench
