#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pan/backbone.hpp"
#include "pan/dataset.hpp"
#include "pan/pa.hpp"
#include "pan/params.hpp"
#include "pan/vap.hpp"

namespace pan {

// ---------------------------------------------------------------------------
// Segment / stack sampling.
// ---------------------------------------------------------------------------

struct SamplerConfig {
  std::size_t segments = 8;   // N
  std::size_t stack_len = 4;  // m consecutive frames per stack
  enum class Mode { TrainRandom, TestCenter } mode = Mode::TestCenter;
};

/// First-frame index of each m-frame stack, one per segment. Segment t covers
/// frames [t*L/N, (t+1)*L/N).
inline std::vector<std::size_t> sample_starts(std::size_t clip_len, const SamplerConfig& cfg, Rng* rng) {
  const std::size_t n = cfg.segments, m = cfg.stack_len;
  if (clip_len < n * m) {
    throw std::invalid_argument("sample_starts: clip of " + std::to_string(clip_len) +
                                " frames is too short; need at least " + std::to_string(n * m));
  }
  std::vector<std::size_t> starts(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t seg_begin = t * clip_len / n;
    const std::size_t seg_end = (t + 1) * clip_len / n;
    const std::size_t slack = seg_end - seg_begin - m;
    if (cfg.mode == SamplerConfig::Mode::TrainRandom) {
      starts[t] = seg_begin + static_cast<std::size_t>(rng->uniform_int(0, static_cast<std::int64_t>(slack)));
    } else {
      starts[t] = seg_begin + slack / 2;
    }
  }
  return starts;
}

// ---------------------------------------------------------------------------
// Model configuration. One branch kind covers PAN_Lite and the two PAN_Full
// branches; PAN_Full is a pair of independently trained branches plus fusion.
// ---------------------------------------------------------------------------

enum class BranchKind {
  LiteJoint,  // backbone input = concat(I_t, encoded PA), 3 + (m-1) channels
  RgbOnly,    // backbone input = I_t
  PaOnly,     // backbone input = encoded PA, m-1 channels
};

enum class TemporalPool { VAP, Average };

struct ModelConfig {
  BranchKind kind = BranchKind::LiteJoint;
  SamplerConfig sampler;
  PAConfig pa;
  std::vector<std::size_t> backbone_channels = {16, 32, 64};
  std::size_t classes = 4;
  VAPConfig vap;
  TemporalPool pool = TemporalPool::VAP;
  bool zero_pa = false;            // ablation: PA channels forced to zero after encoding
  bool standardize_input = false;  // per-channel standardization of the backbone input

  bool uses_pa() const { return kind != BranchKind::RgbOnly; }

  std::size_t backbone_in_channels() const {
    const std::size_t pa_ch = sampler.stack_len - 1;
    switch (kind) {
      case BranchKind::LiteJoint: return 3 + pa_ch;
      case BranchKind::RgbOnly: return 3;
      case BranchKind::PaOnly: return pa_ch;
    }
    return 0;
  }

  BackboneConfig backbone() const {
    BackboneConfig bb;
    bb.in_channels = backbone_in_channels();
    bb.stage_channels = backbone_channels;
    bb.standardize_input = standardize_input;
    return bb;
  }

  std::size_t vap_rows() const { return sampler.segments - 1; }
};

template <class T>
ParamSet<T> init_model_params(const ModelConfig& cfg, std::uint64_t seed) {
  if (!is_power_of_two(cfg.sampler.segments) || cfg.sampler.segments < 2) {
    throw std::invalid_argument("init_model_params: segment count must be a power of two >= 2");
  }
  if (cfg.sampler.stack_len < 2) {
    throw std::invalid_argument("init_model_params: stack length must be >= 2");
  }
  ParamSet<T> params;
  if (cfg.uses_pa()) params.adopt(init_pa_weights<T>(cfg.pa, seed ^ 0x9e3779b9ull), "");
  params.adopt(init_backbone_params<T>(cfg.backbone(), seed ^ 0x85ebca6bull), "");
  params.adopt(init_vap_params<T>(cfg.vap_rows(), cfg.backbone().feature_dim(), cfg.classes, cfg.vap,
                                  seed ^ 0xc2b2ae35ull),
               "");
  return params;
}

// ---------------------------------------------------------------------------
// Temporal head: VAP or plain averaging over the N segment features.
// ---------------------------------------------------------------------------

template <class T>
struct HeadTrace {
  TemporalPool pool;
  VapTrace<T> vap;   // VAP mode
  Tensor<T> f_g;     // Average mode
  Tensor<T> s;
  Tensor<T> w;       // timescale weights; empty in Average mode
};

template <class T>
HeadTrace<T> head_forward(const Tensor<T>& f, const ParamSet<T>& params, TemporalPool pool) {
  HeadTrace<T> tr;
  tr.pool = pool;
  if (pool == TemporalPool::VAP) {
    tr.vap = vap_forward(f, params);
    tr.s = tr.vap.s;
    tr.w = tr.vap.wp.w;
  } else {
    const std::size_t n = f.dim(0), d = f.dim(1);
    tr.f_g = Tensor<T>({d});
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t i = 0; i < d; ++i) tr.f_g[i] += f.at2(t, i);
    }
    const T inv = T{1} / static_cast<T>(n);
    for (auto& v : tr.f_g.data) v *= inv;
    tr.s = predict(tr.f_g, params);
  }
  return tr;
}

template <class T>
void head_backward(const HeadTrace<T>& tr, const Tensor<T>& grad_s, ParamSet<T>& params,
                   Tensor<T>& grad_f) {
  if (tr.pool == TemporalPool::VAP) {
    vap_backward(tr.vap, grad_s, params, &grad_f);
  } else {
    const std::size_t n = grad_f.dim(0), d = grad_f.dim(1);
    Tensor<T> g_fg({d});
    fc_backward(tr.f_g, params.at("vap.w3").value, grad_s, &g_fg, &params.at("vap.w3").grad, nullptr);
    const T inv = T{1} / static_cast<T>(n);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t i = 0; i < d; ++i) grad_f.at2(t, i) += g_fg[i] * inv;
    }
  }
}

// ---------------------------------------------------------------------------
// Branch forward / backward over one sampled clip.
// ---------------------------------------------------------------------------

template <class T>
struct BranchTrace {
  std::vector<PAStackTrace<T>> pa;        // per segment (when PA is used)
  std::vector<Tensor<T>> bb_input;        // per segment
  std::vector<BackboneTrace<T>> bb;       // per segment
  HeadTrace<T> head;
};

/// stacks[t] holds the m frames of segment t; firsts[t] is I_t.
template <class T>
BranchTrace<T> branch_forward(const std::vector<std::vector<const Tensor<T>*>>& stacks,
                              const std::vector<const Tensor<T>*>& firsts, const ParamSet<T>& params,
                              const ModelConfig& cfg) {
  const std::size_t n = cfg.sampler.segments;
  const BackboneConfig bb = cfg.backbone();
  BranchTrace<T> tr;
  Tensor<T> feats({n, bb.feature_dim()});
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t h = firsts[t]->dim(1), w = firsts[t]->dim(2);
    Tensor<T> input({bb.in_channels, h, w});
    std::size_t ch = 0;
    if (cfg.kind != BranchKind::PaOnly) {
      std::copy(firsts[t]->data.begin(), firsts[t]->data.end(), input.ptr());
      ch = 3;
    }
    if (cfg.uses_pa() && !cfg.zero_pa) {
      tr.pa.push_back(pa_stack_forward_traced(stacks[t], params, cfg.pa));
      const Tensor<T>& enc = tr.pa.back().encoded;
      std::copy(enc.data.begin(), enc.data.end(), input.ptr() + ch * h * w);
    }
    tr.bb_input.push_back(std::move(input));
    tr.bb.push_back(backbone_forward(tr.bb_input.back(), params, bb));
    for (std::size_t i = 0; i < bb.feature_dim(); ++i) feats.at2(t, i) = tr.bb.back().feature[i];
  }
  tr.head = head_forward(feats, params, cfg.pool);
  return tr;
}

template <class T>
void branch_backward(const BranchTrace<T>& tr, const Tensor<T>& grad_s, ParamSet<T>& params,
                     const ModelConfig& cfg) {
  const std::size_t n = cfg.sampler.segments;
  const BackboneConfig bb = cfg.backbone();
  Tensor<T> grad_f({n, bb.feature_dim()});
  head_backward(tr.head, grad_s, params, grad_f);
  for (std::size_t t = 0; t < n; ++t) {
    Tensor<T> g_feat({bb.feature_dim()});
    for (std::size_t i = 0; i < bb.feature_dim(); ++i) g_feat[i] = grad_f.at2(t, i);
    Tensor<T> g_input(tr.bb_input[t].shape);
    backbone_backward(tr.bb[t], g_feat, params, bb, &g_input);
    if (cfg.uses_pa() && !cfg.zero_pa) {
      const std::size_t h = g_input.dim(1), w = g_input.dim(2);
      const std::size_t pa_ch = cfg.sampler.stack_len - 1;
      const std::size_t ch0 = cfg.kind == BranchKind::PaOnly ? 0 : 3;
      Tensor<T> g_enc({pa_ch, h, w});
      std::copy(g_input.ptr() + ch0 * h * w, g_input.ptr() + (ch0 + pa_ch) * h * w, g_enc.ptr());
      pa_stack_backward(tr.pa[t], g_enc, params, nullptr);
    }
  }
}

// ---------------------------------------------------------------------------
// Score fusion (weighted average; equal weights over {Lite, Full} is PAN_En).
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> fuse_scores(const std::vector<Tensor<T>>& scores, const std::vector<T>& weights) {
  if (scores.empty() || scores.size() != weights.size()) {
    throw std::invalid_argument("fuse_scores: got " + std::to_string(scores.size()) + " score vectors and " +
                                std::to_string(weights.size()) + " weights");
  }
  T sum{0};
  for (T w : weights) {
    if (w < T{0}) throw std::invalid_argument("fuse_scores: weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - T{1}) > T{1e-5}) {
    throw std::invalid_argument("fuse_scores: weights must sum to 1");
  }
  Tensor<T> out(scores[0].shape);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    require_same_shape(scores[0], scores[i], "fuse_scores");
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += weights[i] * scores[i][j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training / evaluation.
// ---------------------------------------------------------------------------

struct TrainConfig {
  double lr = 0.01;
  std::size_t epochs = 30;
  std::size_t batch = 8;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<std::size_t> lr_milestones;  // epoch indices at which lr is divided by 10
  std::uint64_t seed = 42;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_top1 = 0.0;
};

namespace detail {
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = a * 0x9e3779b97f4a7c15ull;
  h ^= b + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  h ^= c + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

template <class T>
struct SampledClip {
  std::vector<Tensor<T>> frames;                    // owned decoded frames
  std::vector<std::vector<const Tensor<T>*>> stacks;
  std::vector<const Tensor<T>*> firsts;
};

template <class T>
SampledClip<T> sample_clip(const ClipData& clip, const SamplerConfig& cfg, Rng* rng) {
  SampledClip<T> out;
  const auto starts = sample_starts(clip.frames, cfg, rng);
  // Decode each needed frame once.
  std::vector<std::ptrdiff_t> slot(clip.frames, -1);
  for (std::size_t s : starts) {
    for (std::size_t i = 0; i < cfg.stack_len; ++i) {
      if (slot[s + i] < 0) {
        slot[s + i] = static_cast<std::ptrdiff_t>(out.frames.size());
        out.frames.push_back(clip.frame<T>(s + i));
      }
    }
  }
  for (std::size_t s : starts) {
    std::vector<const Tensor<T>*> stack(cfg.stack_len);
    for (std::size_t i = 0; i < cfg.stack_len; ++i) stack[i] = &out.frames[slot[s + i]];
    out.stacks.push_back(std::move(stack));
    out.firsts.push_back(&out.frames[slot[s]]);
  }
  return out;
}
}  // namespace detail

/// Loss + gradient accumulation for one clip; returns (loss, predicted class).
template <class T>
std::pair<T, std::size_t> clip_loss_grad(const ClipData& clip, std::size_t label, const ModelConfig& cfg,
                                         ParamSet<T>& params, Rng* sampler_rng, T grad_scale) {
  auto sampled = detail::sample_clip<T>(clip, cfg.sampler, sampler_rng);
  BranchTrace<T> tr = branch_forward(sampled.stacks, sampled.firsts, params, cfg);
  const T loss = cross_entropy(tr.head.s, label);
  Tensor<T> g_s(tr.head.s.shape);
  cross_entropy_backward(tr.head.s, label, grad_scale, g_s);
  branch_backward(tr, g_s, params, cfg);
  const std::size_t pred = static_cast<std::size_t>(
      std::max_element(tr.head.s.data.begin(), tr.head.s.data.end()) - tr.head.s.data.begin());
  return {loss, pred};
}

/// Inference scores (and VAP weights) for one clip with TestCenter sampling.
template <class T>
std::pair<Tensor<T>, Tensor<T>> clip_scores(const ClipData& clip, const ModelConfig& cfg,
                                            const ParamSet<T>& params) {
  SamplerConfig sc = cfg.sampler;
  sc.mode = SamplerConfig::Mode::TestCenter;
  auto sampled = detail::sample_clip<T>(clip, sc, nullptr);
  BranchTrace<T> tr = branch_forward(sampled.stacks, sampled.firsts, params, cfg);
  return {tr.head.s, tr.head.w};
}

/// Single-stream SGD training; deterministic for a fixed seed. A non-empty
/// on_epoch callback may stop training early by returning false.
template <class T>
std::vector<EpochMetrics> train_model(const std::vector<ClipData>& clips, const ModelConfig& cfg,
                                      const TrainConfig& tcfg, ParamSet<T>& params,
                                      const std::function<bool(const EpochMetrics&)>& on_epoch = {}) {
  if (clips.empty()) throw std::invalid_argument("train_model: empty dataset");
  ModelConfig train_cfg = cfg;
  train_cfg.sampler.mode = SamplerConfig::Mode::TrainRandom;
  Sgd<T> opt(static_cast<T>(tcfg.lr), static_cast<T>(tcfg.momentum), static_cast<T>(tcfg.weight_decay));
  Rng shuffle_rng(detail::mix_seed(tcfg.seed, 0x51ffull, 1));
  std::vector<std::size_t> order(clips.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<EpochMetrics> metrics;
  for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    std::size_t decades = 0;
    for (std::size_t ms : tcfg.lr_milestones) {
      if (epoch >= ms) ++decades;
    }
    T lr = static_cast<T>(tcfg.lr);
    for (std::size_t i = 0; i < decades; ++i) lr *= static_cast<T>(0.1);
    opt.set_lr(lr);

    // Fisher-Yates with the run RNG.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t done = 0;
    while (done < order.size()) {
      const std::size_t bsz = std::min(tcfg.batch, order.size() - done);
      params.zero_grads();
      for (std::size_t b = 0; b < bsz; ++b) {
        const std::size_t idx = order[done + b];
        Rng clip_rng(detail::mix_seed(tcfg.seed, epoch + 1, idx + 1));
        auto [loss, pred] =
            clip_loss_grad(clips[idx], static_cast<std::size_t>(clips[idx].label), train_cfg, params,
                           &clip_rng, static_cast<T>(1.0 / static_cast<double>(bsz)));
        loss_sum += static_cast<double>(loss);
        if (pred == static_cast<std::size_t>(clips[idx].label)) ++correct;
      }
      opt.step(params);
      done += bsz;
    }
    EpochMetrics em{epoch, static_cast<double>(lr), loss_sum / static_cast<double>(clips.size()),
                    static_cast<double>(correct) / static_cast<double>(clips.size())};
    metrics.push_back(em);
    if (on_epoch && !on_epoch(em)) break;
  }
  return metrics;
}

struct EvalResult {
  double top1 = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][pred]
  std::vector<double> mean_w;                       // mean per-clip VAP weights
  std::size_t clips = 0;
};

/// Generic evaluation over a scorer. scorer returns (scores, w); w may be empty.
template <class T>
EvalResult evaluate_clips(const std::vector<ClipData>& clips, std::size_t classes,
                          const std::function<std::pair<Tensor<T>, Tensor<T>>(const ClipData&)>& scorer) {
  if (clips.empty()) throw std::invalid_argument("evaluate_clips: empty dataset");
  EvalResult res;
  res.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  std::size_t correct = 0;
  for (const auto& clip : clips) {
    auto [s, w] = scorer(clip);
    const std::size_t pred =
        static_cast<std::size_t>(std::max_element(s.data.begin(), s.data.end()) - s.data.begin());
    const auto truth = static_cast<std::size_t>(clip.label);
    res.confusion[truth][pred]++;
    if (pred == truth) ++correct;
    if (w.size() > 0) {
      if (res.mean_w.empty()) res.mean_w.assign(w.size(), 0.0);
      for (std::size_t i = 0; i < w.size(); ++i) res.mean_w[i] += static_cast<double>(w[i]);
    }
  }
  res.clips = clips.size();
  res.top1 = static_cast<double>(correct) / static_cast<double>(clips.size());
  for (auto& v : res.mean_w) v /= static_cast<double>(clips.size());
  return res;
}

template <class T>
EvalResult evaluate_model(const std::vector<ClipData>& clips, const ModelConfig& cfg,
                          const ParamSet<T>& params) {
  return evaluate_clips<T>(clips, cfg.classes, [&](const ClipData& c) { return clip_scores(c, cfg, params); });
}

}  // namespace pan
