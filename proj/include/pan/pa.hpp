#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pan/ops.hpp"
#include "pan/params.hpp"

namespace pan {

enum class Encoding { E1, E2 };

struct PAConfig {
  std::size_t depth = 1;     // stacked basic conv-layers; 0 = differences in input space
  std::size_t channels = 8;  // feature maps per layer
  std::size_t kernel = 7;    // odd
  double eps = 1e-12;        // inside the sqrt of the channel accumulation
  Encoding encoding = Encoding::E1;

  std::size_t pad() const { return (kernel - 1) / 2; }
  void validate() const {
    if (kernel % 2 == 0) throw std::invalid_argument("PAConfig: kernel must be odd");
    if (depth > 0 && channels == 0) throw std::invalid_argument("PAConfig: channels must be >= 1");
  }
};

/// (m-1) single-channel motion maps from an m-frame stack; low-level feature
/// maps are kept only for the attention encoding.
template <class T>
struct PAStack {
  std::vector<Tensor<T>> pa_maps;   // m-1 maps, each [1,H,W]
  std::vector<Tensor<T>> features;  // m maps [C,H,W]; populated iff encoding E2
};

namespace detail {
inline std::string pa_w_name(const std::string& prefix, std::size_t layer) {
  return prefix + "conv" + std::to_string(layer) + ".w";
}
inline std::string pa_b_name(const std::string& prefix, std::size_t layer) {
  return prefix + "conv" + std::to_string(layer) + ".b";
}
}  // namespace detail

/// Weights [C, C_in, k, k] per layer (C_in = 3 for layer 0), fan-in scaled
/// uniform; biases zero. d=1, C=8, k=7 on RGB yields exactly 1184 scalars.
template <class T>
ParamSet<T> init_pa_weights(const PAConfig& cfg, std::uint64_t seed, const std::string& prefix = "pa.") {
  cfg.validate();
  ParamSet<T> params;
  Rng rng(seed);
  std::size_t c_in = 3;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const std::size_t fan_in = c_in * cfg.kernel * cfg.kernel;
    params.add(detail::pa_w_name(prefix, l),
               uniform_init<T>({cfg.channels, c_in, cfg.kernel, cfg.kernel}, fan_in, rng));
    params.add(detail::pa_b_name(prefix, l), Tensor<T>({cfg.channels}));
    c_in = cfg.channels;
  }
  return params;
}

/// d stacked conv layers (stride 1, padding (k-1)/2, no activation or
/// normalization), spatial size preserved. Requires depth >= 1.
template <class T>
Tensor<T> low_level_features(const Tensor<T>& frame, const ParamSet<T>& params, const PAConfig& cfg,
                             const std::string& prefix = "pa.") {
  if (cfg.depth == 0) throw std::invalid_argument("low_level_features: depth 0 has no feature extractor");
  Tensor<T> x = frame;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const Tensor<T>& w = params.at(detail::pa_w_name(prefix, l)).value;
    const Tensor<T>& b = params.at(detail::pa_b_name(prefix, l)).value;
    x = conv2d(x, w, &b, 1, cfg.pad());
  }
  return x;
}

/// PA = channel_l2(F(b) - F(a), eps). The conv stack is linear, so the
/// feature difference equals the bias-free stack applied to (b - a); that is
/// the route used here (one conv pass per pair instead of two).
template <class T>
Tensor<T> pa_pair(const Tensor<T>& frame_t, const Tensor<T>& frame_t1, const ParamSet<T>& params,
                  const PAConfig& cfg, const std::string& prefix = "pa.") {
  require_same_shape(frame_t, frame_t1, "pa_pair");
  Tensor<T> x = sub(frame_t1, frame_t);
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    x = conv2d(x, params.at(detail::pa_w_name(prefix, l)).value, nullptr, 1, cfg.pad());
  }
  return channel_l2(x, static_cast<T>(cfg.eps));
}

template <class T>
PAStack<T> pa_stack(const std::vector<Tensor<T>>& frames, const ParamSet<T>& params, const PAConfig& cfg,
                    const std::string& prefix = "pa.") {
  if (frames.size() < 2) {
    throw std::invalid_argument("pa_stack: need at least 2 frames, got " + std::to_string(frames.size()));
  }
  PAStack<T> out;
  if (cfg.encoding == Encoding::E2) {
    out.features.reserve(frames.size());
    for (const auto& f : frames) {
      out.features.push_back(cfg.depth == 0 ? f : low_level_features(f, params, cfg, prefix));
    }
    for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
      out.pa_maps.push_back(channel_l2(sub(out.features[i + 1], out.features[i]), static_cast<T>(cfg.eps)));
    }
  } else {
    for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
      out.pa_maps.push_back(pa_pair(frames[i], frames[i + 1], params, cfg, prefix));
    }
  }
  return out;
}

/// e1: chronological channel concatenation of the PA maps.
template <class T>
Tensor<T> encode_e1(const PAStack<T>& stack) {
  const std::size_t n = stack.pa_maps.size();
  const std::size_t h = stack.pa_maps[0].dim(1), w = stack.pa_maps[0].dim(2);
  Tensor<T> out({n, h, w});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(stack.pa_maps[i].data.begin(), stack.pa_maps[i].data.end(), out.ptr() + i * h * w);
  }
  return out;
}

/// e2: channel i = sigmoid(PA_i) * channel_mean(F_i), F_i from the earlier
/// frame of pair i.
template <class T>
Tensor<T> encode_e2(const PAStack<T>& stack) {
  if (stack.features.empty()) {
    throw std::invalid_argument("encode_e2: stack was built without retained features (encoding E1?)");
  }
  const std::size_t n = stack.pa_maps.size();
  const std::size_t h = stack.pa_maps[0].dim(1), w = stack.pa_maps[0].dim(2);
  Tensor<T> out({n, h, w});
  for (std::size_t i = 0; i < n; ++i) {
    Tensor<T> gate = sigmoid(stack.pa_maps[i]);
    Tensor<T> mean = channel_mean(stack.features[i]);
    for (std::size_t p = 0; p < h * w; ++p) out[i * h * w + p] = gate[p] * mean[p];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cached forward / backward for training through the PA module.
// ---------------------------------------------------------------------------

template <class T>
struct PAStackTrace {
  PAConfig cfg;
  // E1 route: per pair, acts[0] = frame_{i+1} - frame_i and acts[l] the l-th
  // bias-free conv output. E2 route: per frame, acts[0] = frame.
  std::vector<std::vector<Tensor<T>>> acts;
  std::vector<Tensor<T>> pa_maps;    // [m-1][1,H,W]
  std::vector<Tensor<T>> gates;      // E2: sigmoid(pa) per pair
  std::vector<Tensor<T>> mean_feat;  // E2: channel_mean(features[i]) per pair
  Tensor<T> encoded;                 // [m-1,H,W]
};

template <class T>
PAStackTrace<T> pa_stack_forward_traced(const std::vector<const Tensor<T>*>& frames,
                                        const ParamSet<T>& params, const PAConfig& cfg,
                                        const std::string& prefix = "pa.") {
  if (frames.size() < 2) throw std::invalid_argument("pa_stack: need at least 2 frames");
  PAStackTrace<T> tr;
  tr.cfg = cfg;
  const std::size_t m = frames.size();
  const std::size_t h = frames[0]->dim(1), w = frames[0]->dim(2);
  tr.pa_maps.reserve(m - 1);

  if (cfg.encoding == Encoding::E2) {
    tr.acts.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      tr.acts[i].reserve(cfg.depth + 1);
      tr.acts[i].push_back(*frames[i]);
      for (std::size_t l = 0; l < cfg.depth; ++l) {
        const Tensor<T>& wt = params.at(detail::pa_w_name(prefix, l)).value;
        const Tensor<T>& bt = params.at(detail::pa_b_name(prefix, l)).value;
        tr.acts[i].push_back(conv2d(tr.acts[i].back(), wt, &bt, 1, cfg.pad()));
      }
    }
    tr.encoded = Tensor<T>({m - 1, h, w});
    for (std::size_t i = 0; i + 1 < m; ++i) {
      Tensor<T> diff = sub(tr.acts[i + 1].back(), tr.acts[i].back());
      tr.pa_maps.push_back(channel_l2(diff, static_cast<T>(cfg.eps)));
      tr.gates.push_back(sigmoid(tr.pa_maps.back()));
      tr.mean_feat.push_back(channel_mean(tr.acts[i].back()));
      for (std::size_t p = 0; p < h * w; ++p) {
        tr.encoded[i * h * w + p] = tr.gates[i][p] * tr.mean_feat[i][p];
      }
    }
  } else {
    tr.acts.resize(m - 1);
    tr.encoded = Tensor<T>({m - 1, h, w});
    for (std::size_t i = 0; i + 1 < m; ++i) {
      tr.acts[i].reserve(cfg.depth + 1);
      tr.acts[i].push_back(sub(*frames[i + 1], *frames[i]));
      for (std::size_t l = 0; l < cfg.depth; ++l) {
        const Tensor<T>& wt = params.at(detail::pa_w_name(prefix, l)).value;
        tr.acts[i].push_back(conv2d(tr.acts[i].back(), wt, nullptr, 1, cfg.pad()));
      }
      tr.pa_maps.push_back(channel_l2(tr.acts[i].back(), static_cast<T>(cfg.eps)));
      std::copy(tr.pa_maps[i].data.begin(), tr.pa_maps[i].data.end(), tr.encoded.ptr() + i * h * w);
    }
  }
  return tr;
}

/// Accumulates parameter grads; when frame_grads is non-null it must hold one
/// zero-initialized [3,H,W] tensor per input frame.
template <class T>
void pa_stack_backward(const PAStackTrace<T>& tr, const Tensor<T>& grad_encoded, ParamSet<T>& params,
                       std::type_identity_t<std::vector<Tensor<T>>>* frame_grads,
                       const std::string& prefix = "pa.") {
  const PAConfig& cfg = tr.cfg;
  const std::size_t h = grad_encoded.dim(1), w = grad_encoded.dim(2);
  const std::size_t pairs = tr.pa_maps.size();

  auto conv_stack_backward = [&](const std::vector<Tensor<T>>& acts, Tensor<T> grad_top, bool with_bias,
                                 Tensor<T>* grad_in) {
    for (std::size_t l = cfg.depth; l-- > 0;) {
      Param<T>& pw = params.at(detail::pa_w_name(prefix, l));
      Tensor<T>* gb = nullptr;
      if (with_bias) gb = &params.at(detail::pa_b_name(prefix, l)).grad;
      const bool need_ginput = l > 0 || grad_in != nullptr;
      Tensor<T> gin;
      if (need_ginput) gin = Tensor<T>(acts[l].shape);
      conv2d_backward(acts[l], pw.value, grad_top, 1, cfg.pad(), need_ginput ? &gin : nullptr, &pw.grad, gb);
      if (l == 0) {
        if (grad_in) *grad_in = std::move(gin);
        return;
      }
      grad_top = std::move(gin);
    }
    if (grad_in) *grad_in = std::move(grad_top);  // depth 0
  };

  if (cfg.encoding == Encoding::E2) {
    const std::size_t m = tr.acts.size();
    const std::size_t feat_c = tr.acts[0].back().dim(0);
    std::vector<Tensor<T>> grad_feat(m);
    for (std::size_t i = 0; i < m; ++i) grad_feat[i] = Tensor<T>(tr.acts[i].back().shape);

    for (std::size_t i = 0; i < pairs; ++i) {
      Tensor<T> g_gate({1, h, w}), g_mean({1, h, w}), g_pa({1, h, w});
      for (std::size_t p = 0; p < h * w; ++p) {
        const T g = grad_encoded[i * h * w + p];
        g_gate[p] = g * tr.mean_feat[i][p];
        g_mean[p] = g * tr.gates[i][p];
        g_pa[p] = g_gate[p] * tr.gates[i][p] * (T{1} - tr.gates[i][p]);
      }
      channel_mean_backward(feat_c, g_mean, grad_feat[i]);
      // PA_i = channel_l2(F_{i+1} - F_i)
      Tensor<T> diff = sub(tr.acts[i + 1].back(), tr.acts[i].back());
      Tensor<T> g_diff(diff.shape);
      channel_l2_backward(diff, tr.pa_maps[i], g_pa, g_diff);
      for (std::size_t p = 0; p < g_diff.size(); ++p) {
        grad_feat[i + 1][p] += g_diff[p];
        grad_feat[i][p] -= g_diff[p];
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      Tensor<T> gin;
      conv_stack_backward(tr.acts[i], std::move(grad_feat[i]), /*with_bias=*/true,
                          frame_grads ? &gin : nullptr);
      if (frame_grads) {
        for (std::size_t p = 0; p < gin.size(); ++p) (*frame_grads)[i][p] += gin[p];
      }
    }
  } else {
    for (std::size_t i = 0; i < pairs; ++i) {
      Tensor<T> g_pa({1, h, w});
      std::copy(grad_encoded.ptr() + i * h * w, grad_encoded.ptr() + (i + 1) * h * w, g_pa.ptr());
      Tensor<T> g_top(tr.acts[i].back().shape);
      channel_l2_backward(tr.acts[i].back(), tr.pa_maps[i], g_pa, g_top);
      Tensor<T> g_diff;
      conv_stack_backward(tr.acts[i], std::move(g_top), /*with_bias=*/false,
                          frame_grads ? &g_diff : nullptr);
      if (frame_grads) {
        for (std::size_t p = 0; p < g_diff.size(); ++p) {
          (*frame_grads)[i + 1][p] += g_diff[p];
          (*frame_grads)[i][p] -= g_diff[p];
        }
      }
    }
  }
}

/// Analytic floating-point operation count for n_stacks m-frame stacks:
/// 2x multiply-add for the conv layers plus per-pixel difference, square,
/// accumulate, sqrt, and the e2 extras (sigmoid, channel mean, multiply).
inline double estimate_flops(const PAConfig& cfg, std::size_t h, std::size_t w, std::size_t n_stacks,
                             std::size_t m) {
  const double hw = static_cast<double>(h) * static_cast<double>(w);
  const double c = static_cast<double>(cfg.channels);
  const double k2 = static_cast<double>(cfg.kernel) * static_cast<double>(cfg.kernel);

  double conv_per_frame = 0.0;
  double c_in = 3.0;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    conv_per_frame += (2.0 * c_in * k2 + 1.0) * c * hw;  // MACs x2 plus bias add
    c_in = c;
  }
  const double feat_c = cfg.depth == 0 ? 3.0 : c;
  // per pair, per pixel: C subs, C squares, C accumulate adds (incl. eps), 1 sqrt
  double pair_cost = (3.0 * feat_c + 1.0) * hw;
  if (cfg.encoding == Encoding::E2) {
    // sigmoid (exp, add, div, neg), channel mean (C-1 adds + 1 mul), multiply
    pair_cost += (4.0 + feat_c + 1.0) * hw;
  }
  const double md = static_cast<double>(m);
  return static_cast<double>(n_stacks) * (md * conv_per_frame + (md - 1.0) * pair_cost);
}

}  // namespace pan
