#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pan/backbone.hpp"
#include "pan/model.hpp"
#include "pan/ops.hpp"
#include "pan/pa.hpp"
#include "pan/params.hpp"
#include "pan/vap.hpp"

namespace pan {

struct GradCheckResult {
  std::string name;
  double max_err = 0.0;
  double tol = 1e-6;
  bool pass() const { return max_err < tol; }
};

namespace gradcheck_detail {

inline Tensor<double> random_tensor(const std::vector<std::size_t>& shape, Rng& rng, double lo = -1.0,
                                    double hi = 1.0) {
  Tensor<double> t(shape);
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

/// Scalar loss = fixed random projection of a tensor.
inline double project(const Tensor<double>& t, const Tensor<double>& r) {
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) acc += t[i] * r[i];
  return acc;
}

inline void project_backward(const Tensor<double>& r, Tensor<double>& grad) {
  for (std::size_t i = 0; i < r.size(); ++i) grad[i] += r[i];
}

}  // namespace gradcheck_detail

/// Finite-difference checks (central differences, 64-bit) for every
/// differentiable primitive and the composite paths, several seeds each.
inline std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed = 42) {
  using gradcheck_detail::project;
  using gradcheck_detail::random_tensor;
  constexpr double kEps = 1e-5;
  std::vector<GradCheckResult> results;

  auto run_seeds = [&](const std::string& name, double tol, int seeds, auto&& make_check) {
    double worst = 0.0;
    for (int s = 0; s < seeds; ++s) {
      worst = std::max(worst, make_check(seed + static_cast<std::uint64_t>(s) * 977));
    }
    results.push_back({name, worst, tol});
  };

  // sum(x): analytic gradient is exactly all-ones.
  run_seeds("sum", 1e-10, 5, [&](std::uint64_t s) {
    Rng rng(s);
    ParamSet<double> ps;
    ps.add("x", random_tensor({7}, rng));
    return grad_check<double>(ps, [&] {
      const auto& x = ps.at("x").value;
      double acc = 0.0;
      for (double v : x.data) acc += v;
      for (auto& g : ps.at("x").grad.data) g += 1.0;
      return acc;
    }, kEps);
  });

  // conv2d wrt input, weights, bias.
  run_seeds("conv2d", 1e-6, 5, [&](std::uint64_t s) {
    Rng rng(s);
    ParamSet<double> ps;
    ps.add("x", random_tensor({2, 6, 6}, rng));
    ps.add("w", random_tensor({3, 2, 3, 3}, rng));
    ps.add("b", random_tensor({3}, rng));
    const auto r = random_tensor({3, 6, 6}, rng);
    return grad_check<double>(ps, [&] {
      auto out = conv2d(ps.at("x").value, ps.at("w").value, &ps.at("b").value, 1, 1);
      Tensor<double> g_out = r;
      conv2d_backward(ps.at("x").value, ps.at("w").value, g_out, 1, 1, &ps.at("x").grad,
                      &ps.at("w").grad, &ps.at("b").grad);
      return project(out, r);
    }, kEps);
  });

  // fc -> softmax -> cross-entropy, a 2-layer net on a 5-dim input.
  run_seeds("fc_softmax_xent", 1e-6, 5, [&](std::uint64_t s) {
    Rng rng(s);
    ParamSet<double> ps;
    ps.add("x", random_tensor({5}, rng));
    ps.add("w1", random_tensor({4, 5}, rng));
    ps.add("b1", random_tensor({4}, rng));
    ps.add("w2", random_tensor({3, 4}, rng));
    const std::size_t label = 1;
    return grad_check<double>(ps, [&] {
      auto h_pre = fc(ps.at("x").value, ps.at("w1").value, &ps.at("b1").value);
      auto h = relu(h_pre);
      auto scores = fc(h, ps.at("w2").value);
      const double loss = cross_entropy(scores, label);
      Tensor<double> g_scores(scores.shape);
      cross_entropy_backward(scores, label, 1.0, g_scores);
      Tensor<double> g_h(h.shape);
      fc_backward(h, ps.at("w2").value, g_scores, &g_h, &ps.at("w2").grad, nullptr);
      Tensor<double> g_hpre(h_pre.shape);
      relu_backward(h_pre, g_h, g_hpre);
      fc_backward(ps.at("x").value, ps.at("w1").value, g_hpre, &ps.at("x").grad, &ps.at("w1").grad,
                  &ps.at("b1").grad);
      return loss;
    }, kEps);
  });

  // channel_l2 at the all-zero point: eps must keep the gradient finite.
  run_seeds("channel_l2_at_zero", 1e-6, 5, [&](std::uint64_t s) {
    Rng rng(s);
    ParamSet<double> ps;
    ps.add("x", Tensor<double>({3, 4, 4}));  // exactly zero
    const auto r = random_tensor({1, 4, 4}, rng);
    return grad_check<double>(ps, [&] {
      auto out = channel_l2(ps.at("x").value, 1e-12);
      channel_l2_backward(ps.at("x").value, out, r, ps.at("x").grad);
      return project(out, r);
    }, kEps);
  });

  // sigmoid . mul . channel_mean composite.
  run_seeds("pointwise_suite", 1e-6, 5, [&](std::uint64_t s) {
    Rng rng(s);
    ParamSet<double> ps;
    ps.add("x", random_tensor({3, 4, 4}, rng));
    const auto r = random_tensor({1, 4, 4}, rng);
    return grad_check<double>(ps, [&] {
      const auto& x = ps.at("x").value;
      auto mean = channel_mean(x);
      auto sg = sigmoid(mean);
      auto out = mul(sg, mean);
      // out = sigmoid(mean) * mean
      Tensor<double> g_mean(mean.shape);
      for (std::size_t i = 0; i < mean.size(); ++i) {
        const double ds = sg[i] * (1.0 - sg[i]);
        g_mean[i] = r[i] * (ds * mean[i] + sg[i]);
      }
      channel_mean_backward(3, g_mean, ps.at("x").grad);
      return project(out, r);
    }, kEps);
  });

  // dilated max pooling over time.
  run_seeds("dilated_maxpool_time", 1e-6, 5, [&](std::uint64_t s) {
    Rng rng(s);
    ParamSet<double> ps;
    ps.add("x", random_tensor({8, 3}, rng));
    const auto r = random_tensor({2, 3}, rng);
    return grad_check<double>(ps, [&] {
      auto res = dilated_maxpool_time(ps.at("x").value, 4, 1, 2);
      dilated_maxpool_time_backward(res, r, ps.at("x").grad);
      return project(res.out, r);
    }, kEps);
  });

  // pa_pair wrt frames and conv weights (E1 route).
  run_seeds("pa_pair", 1e-6, 5, [&](std::uint64_t s) {
    Rng rng(s);
    PAConfig cfg;
    cfg.depth = 1;
    cfg.channels = 4;
    cfg.kernel = 3;
    ParamSet<double> ps = init_pa_weights<double>(cfg, s);
    ps.add("frame_a", random_tensor({3, 6, 6}, rng, 0.0, 1.0));
    ps.add("frame_b", random_tensor({3, 6, 6}, rng, 0.0, 1.0));
    const auto r = random_tensor({1, 6, 6}, rng);
    return grad_check<double>(ps, [&] {
      std::vector<const Tensor<double>*> frames = {&ps.at("frame_a").value, &ps.at("frame_b").value};
      auto tr = pa_stack_forward_traced(frames, ps, cfg);
      std::vector<Tensor<double>> frame_grads{Tensor<double>({3, 6, 6}), Tensor<double>({3, 6, 6})};
      Tensor<double> g_enc = r;
      g_enc.shape = {1, 6, 6};
      pa_stack_backward(tr, g_enc, ps, &frame_grads);
      for (std::size_t i = 0; i < frame_grads[0].size(); ++i) {
        ps.at("frame_a").grad[i] += frame_grads[0][i];
        ps.at("frame_b").grad[i] += frame_grads[1][i];
      }
      return project(tr.encoded, r);
    }, kEps);
  });

  // pa_stack with the attention encoding (features + gates + biases).
  run_seeds("pa_stack_e2", 1e-6, 3, [&](std::uint64_t s) {
    Rng rng(s);
    PAConfig cfg;
    cfg.depth = 2;
    cfg.channels = 3;
    cfg.kernel = 3;
    cfg.encoding = Encoding::E2;
    ParamSet<double> ps = init_pa_weights<double>(cfg, s);
    for (auto& p : ps.items) {
      for (auto& v : p.grad.data) v = 0.0;
      if (p.name.ends_with(".b")) {
        for (auto& v : p.value.data) v = rng.uniform(-0.1, 0.1);
      }
    }
    ps.add("f0", random_tensor({3, 5, 5}, rng, 0.0, 1.0));
    ps.add("f1", random_tensor({3, 5, 5}, rng, 0.0, 1.0));
    ps.add("f2", random_tensor({3, 5, 5}, rng, 0.0, 1.0));
    const auto r = random_tensor({2, 5, 5}, rng);
    return grad_check<double>(ps, [&] {
      std::vector<const Tensor<double>*> frames = {&ps.at("f0").value, &ps.at("f1").value,
                                                   &ps.at("f2").value};
      auto tr = pa_stack_forward_traced(frames, ps, cfg);
      std::vector<Tensor<double>> frame_grads(3, Tensor<double>({3, 5, 5}));
      pa_stack_backward(tr, r, ps, &frame_grads);
      for (int i = 0; i < 3; ++i) {
        auto& g = ps.at("f" + std::to_string(i)).grad;
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += frame_grads[i][j];
      }
      return project(tr.encoded, r);
    }, kEps);
  });

  // VAP composite wrt W1, W2, W3, biases and the input sequence.
  run_seeds("vap_composite", 1e-6, 5, [&](std::uint64_t s) {
    Rng rng(s);
    VAPConfig vcfg;
    vcfg.alpha = 2;
    ParamSet<double> ps = init_vap_params<double>(7, 4, 3, vcfg, s);
    ps.add("f", random_tensor({8, 4}, rng));
    const std::size_t label = 2;
    return grad_check<double>(ps, [&] {
      auto tr = vap_forward(ps.at("f").value, ps);
      const double loss = cross_entropy(tr.s, label);
      Tensor<double> g_s(tr.s.shape);
      cross_entropy_backward(tr.s, label, 1.0, g_s);
      vap_backward(tr, g_s, ps, &ps.at("f").grad);
      return loss;
    }, kEps);
  });

  // Full PAN_Lite composite: cross-entropy through VAP, backbone, encoding
  // and the PA conv weights on tiny 16x16 frames, N=4, m=2.
  run_seeds("pan_lite_composite", 1e-5, 2, [&](std::uint64_t s) {
    Rng rng(s);
    ModelConfig cfg;
    cfg.sampler.segments = 4;
    cfg.sampler.stack_len = 2;
    cfg.pa.channels = 4;
    cfg.pa.kernel = 3;
    cfg.backbone_channels = {4, 8};
    cfg.classes = 3;
    cfg.vap.alpha = 2;
    ParamSet<double> ps = init_model_params<double>(cfg, s);
    // frames as fixed inputs
    std::vector<Tensor<double>> frames;
    for (int i = 0; i < 8; ++i) frames.push_back(random_tensor({3, 16, 16}, rng, 0.0, 1.0));
    const std::size_t label = 1;
    return grad_check<double>(ps, [&] {
      std::vector<std::vector<const Tensor<double>*>> stacks;
      std::vector<const Tensor<double>*> firsts;
      for (int t = 0; t < 4; ++t) {
        stacks.push_back({&frames[2 * t], &frames[2 * t + 1]});
        firsts.push_back(&frames[2 * t]);
      }
      auto tr = branch_forward(stacks, firsts, ps, cfg);
      const double loss = cross_entropy(tr.head.s, label);
      Tensor<double> g_s(tr.head.s.shape);
      cross_entropy_backward(tr.head.s, label, 1.0, g_s);
      branch_backward(tr, g_s, ps, cfg);
      return loss;
    }, kEps);
  });

  // Same composite with per-channel input standardization in front of the
  // backbone, exercising the extra normalization backward.
  run_seeds("pan_lite_composite_standardized", 1e-5, 2, [&](std::uint64_t s) {
    Rng rng(s + 17);
    ModelConfig cfg;
    cfg.sampler.segments = 4;
    cfg.sampler.stack_len = 2;
    cfg.pa.channels = 4;
    cfg.pa.kernel = 3;
    cfg.backbone_channels = {4, 8};
    cfg.classes = 3;
    cfg.vap.alpha = 2;
    cfg.standardize_input = true;
    ParamSet<double> ps = init_model_params<double>(cfg, s + 17);
    std::vector<Tensor<double>> frames;
    for (int i = 0; i < 8; ++i) frames.push_back(random_tensor({3, 16, 16}, rng, 0.0, 1.0));
    const std::size_t label = 2;
    return grad_check<double>(ps, [&] {
      std::vector<std::vector<const Tensor<double>*>> stacks;
      std::vector<const Tensor<double>*> firsts;
      for (int t = 0; t < 4; ++t) {
        stacks.push_back({&frames[2 * t], &frames[2 * t + 1]});
        firsts.push_back(&frames[2 * t]);
      }
      auto tr = branch_forward(stacks, firsts, ps, cfg);
      const double loss = cross_entropy(tr.head.s, label);
      Tensor<double> g_s(tr.head.s.shape);
      cross_entropy_backward(tr.head.s, label, 1.0, g_s);
      branch_backward(tr, g_s, ps, cfg);
      return loss;
    }, kEps);
  });

  return results;
}

}  // namespace pan
