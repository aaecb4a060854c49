#include <doctest.h>

#include <cmath>

#include "pan/gemm.hpp"
#include "pan/model.hpp"

using namespace pan;

namespace {

struct BackendInit {
  BackendInit() { init_numeric_backend(); }
} backend_init;

// Tiny in-memory clip with a moving bright square on a dark background.
ClipData make_clip(std::size_t frames, std::size_t size, int dr, int dc, int label, std::uint64_t seed) {
  ClipData clip;
  clip.frames = frames;
  clip.height = clip.width = size;
  clip.label = label;
  clip.rgb.assign(frames * 3 * size * size, 0);
  Rng rng(seed);
  const std::size_t sq = 3;
  std::ptrdiff_t r0 = 2 + static_cast<std::ptrdiff_t>(rng.uniform_int(0, 3));
  std::ptrdiff_t c0 = 2 + static_cast<std::ptrdiff_t>(rng.uniform_int(0, 3));
  if (dr < 0) r0 = static_cast<std::ptrdiff_t>(size) - 4;
  if (dc < 0) c0 = static_cast<std::ptrdiff_t>(size) - 4;
  for (std::size_t t = 0; t < frames; ++t) {
    std::uint8_t* f = clip.rgb.data() + t * clip.frame_bytes();
    for (std::size_t i = 0; i < clip.frame_bytes(); ++i) f[i] = 30;
    const std::ptrdiff_t r = r0 + dr * static_cast<std::ptrdiff_t>(t) / 2;
    const std::ptrdiff_t c = c0 + dc * static_cast<std::ptrdiff_t>(t) / 2;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      for (std::size_t y = 0; y < sq; ++y) {
        for (std::size_t x = 0; x < sq; ++x) {
          const std::ptrdiff_t yy = r + static_cast<std::ptrdiff_t>(y);
          const std::ptrdiff_t xx = c + static_cast<std::ptrdiff_t>(x);
          if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(size) ||
              xx >= static_cast<std::ptrdiff_t>(size)) {
            continue;
          }
          f[(ch * size + static_cast<std::size_t>(yy)) * size + static_cast<std::size_t>(xx)] = 220;
        }
      }
    }
  }
  return clip;
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.sampler.segments = 4;
  cfg.sampler.stack_len = 2;
  cfg.pa.channels = 4;
  cfg.pa.kernel = 3;
  cfg.backbone_channels = {4, 8};
  cfg.classes = 2;
  cfg.vap.alpha = 2;
  return cfg;
}

}  // namespace

TEST_CASE("center sampling places stacks mid-segment") {
  SamplerConfig cfg;  // N=8, m=4
  auto s32 = sample_starts(32, cfg, nullptr);
  // segment width 4, slack 0 -> starts at the segment begins
  const std::size_t want32[8] = {0, 4, 8, 12, 16, 20, 24, 28};
  for (std::size_t t = 0; t < 8; ++t) CHECK(s32[t] == want32[t]);
  auto s64 = sample_starts(64, cfg, nullptr);
  // segment width 8, slack 4 -> offset 2 inside each segment
  const std::size_t want64[8] = {2, 10, 18, 26, 34, 42, 50, 58};
  for (std::size_t t = 0; t < 8; ++t) CHECK(s64[t] == want64[t]);
  CHECK_THROWS(sample_starts(31, cfg, nullptr));
}

TEST_CASE("random sampling stays inside each segment") {
  SamplerConfig cfg;
  cfg.mode = SamplerConfig::Mode::TrainRandom;
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    auto starts = sample_starts(48, cfg, &rng);
    for (std::size_t t = 0; t < 8; ++t) {
      CHECK(starts[t] >= t * 48 / 8);
      CHECK(starts[t] + 4 <= (t + 1) * 48 / 8);
    }
  }
}

TEST_CASE("backbone input channels per variant") {
  ModelConfig cfg;
  cfg.sampler.stack_len = 4;
  cfg.kind = BranchKind::LiteJoint;
  CHECK(cfg.backbone_in_channels() == 6);
  cfg.kind = BranchKind::RgbOnly;
  CHECK(cfg.backbone_in_channels() == 3);
  cfg.kind = BranchKind::PaOnly;
  CHECK(cfg.backbone_in_channels() == 3);
  cfg.sampler.stack_len = 2;
  cfg.kind = BranchKind::LiteJoint;
  CHECK(cfg.backbone_in_channels() == 4);
}

TEST_CASE("fuse_scores averages and validates") {
  TensorF a({2}, {1.0f, 3.0f});
  TensorF b({2}, {5.0f, 1.0f});
  auto f = fuse_scores<float>({a, b}, {0.5f, 0.5f});
  CHECK(f[0] == doctest::Approx(3.0f));
  CHECK(f[1] == doctest::Approx(2.0f));
  auto g = fuse_scores<float>({a, b}, {0.25f, 0.75f});
  CHECK(g[0] == doctest::Approx(4.0f));
  CHECK_THROWS(fuse_scores<float>({a, b}, {0.5f}));
  CHECK_THROWS(fuse_scores<float>({a, b}, {0.9f, 0.9f}));
  CHECK_THROWS(fuse_scores<float>({a, b}, {-0.5f, 1.5f}));
}

TEST_CASE("a static clip carries no motion signal") {
  ClipData clip = make_clip(8, 16, 0, 0, 0, 7);
  ModelConfig cfg = tiny_config();
  auto params = init_model_params<float>(cfg, 3);
  auto sampled = detail::sample_clip<float>(clip, cfg.sampler, nullptr);
  auto tr = branch_forward(sampled.stacks, sampled.firsts, params, cfg);
  for (const auto& pa : tr.pa) {
    for (const auto& map : pa.pa_maps) {
      for (float v : map.data) CHECK(v < 1e-5f);
    }
  }
}

TEST_CASE("training is bit-deterministic for a fixed seed") {
  std::vector<ClipData> clips;
  for (int i = 0; i < 6; ++i) {
    clips.push_back(make_clip(8, 16, i % 2 ? 1 : -1, 0, i % 2, static_cast<std::uint64_t>(i)));
  }
  ModelConfig cfg = tiny_config();
  TrainConfig tcfg;
  tcfg.epochs = 2;
  tcfg.batch = 3;

  auto p1 = init_model_params<float>(cfg, 5);
  auto m1 = train_model(clips, cfg, tcfg, p1);
  auto p2 = init_model_params<float>(cfg, 5);
  auto m2 = train_model(clips, cfg, tcfg, p2);
  REQUIRE(m1.size() == m2.size());
  for (std::size_t e = 0; e < m1.size(); ++e) {
    CHECK(m1[e].train_loss == m2[e].train_loss);
    CHECK(m1[e].train_top1 == m2[e].train_top1);
  }
  for (std::size_t i = 0; i < p1.items.size(); ++i) {
    REQUIRE(p1.items[i].name == p2.items[i].name);
    for (std::size_t j = 0; j < p1.items[i].value.size(); ++j) {
      CHECK(p1.items[i].value[j] == p2.items[i].value[j]);
    }
  }
}

TEST_CASE("lr milestones divide the rate by 10") {
  std::vector<ClipData> clips = {make_clip(8, 16, 1, 0, 0, 1), make_clip(8, 16, -1, 0, 1, 2)};
  ModelConfig cfg = tiny_config();
  TrainConfig tcfg;
  tcfg.epochs = 4;
  tcfg.lr_milestones = {2, 3};
  auto params = init_model_params<float>(cfg, 8);
  auto metrics = train_model(clips, cfg, tcfg, params);
  CHECK(metrics[0].lr == doctest::Approx(0.01));
  CHECK(metrics[1].lr == doctest::Approx(0.01));
  CHECK(metrics[2].lr == doctest::Approx(0.001));
  CHECK(metrics[3].lr == doctest::Approx(0.0001));
}

TEST_CASE("early stop callback halts training") {
  std::vector<ClipData> clips = {make_clip(8, 16, 1, 0, 0, 1), make_clip(8, 16, -1, 0, 1, 2)};
  ModelConfig cfg = tiny_config();
  TrainConfig tcfg;
  tcfg.epochs = 10;
  auto params = init_model_params<float>(cfg, 8);
  auto metrics = train_model(clips, cfg, tcfg, params,
                             [](const EpochMetrics& em) { return em.epoch < 2; });
  CHECK(metrics.size() == 3);
}

TEST_CASE("evaluation counts the confusion matrix") {
  std::vector<ClipData> clips;
  for (int i = 0; i < 4; ++i) {
    clips.push_back(make_clip(8, 16, i % 2 ? 1 : -1, 0, i % 2, static_cast<std::uint64_t>(10 + i)));
  }
  ModelConfig cfg = tiny_config();
  auto params = init_model_params<float>(cfg, 12);
  auto res = evaluate_model(clips, cfg, params);
  CHECK(res.clips == 4);
  std::size_t total = 0;
  for (const auto& row : res.confusion) {
    for (std::size_t v : row) total += v;
  }
  CHECK(total == 4);
  CHECK(res.mean_w.size() == cfg.vap_rows());
  CHECK(res.top1 >= 0.0);
  CHECK(res.top1 <= 1.0);
}

TEST_CASE("zero_pa ablation blanks the motion channels") {
  ClipData clip = make_clip(8, 16, 1, 0, 0, 5);
  ModelConfig cfg = tiny_config();
  cfg.zero_pa = true;
  auto params = init_model_params<float>(cfg, 3);
  auto sampled = detail::sample_clip<float>(clip, cfg.sampler, nullptr);
  auto tr = branch_forward(sampled.stacks, sampled.firsts, params, cfg);
  const std::size_t hw = 16 * 16;
  for (const auto& input : tr.bb_input) {
    for (std::size_t i = 3 * hw; i < input.size(); ++i) CHECK(input[i] == 0.0f);
  }
}
