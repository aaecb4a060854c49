#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pan/ops.hpp"
#include "pan/params.hpp"

namespace pan {

/// Desk-scale stand-in for a deep 2D backbone: per stage conv(k=3, pad=1) ->
/// relu -> 2x2 max pool, then global average pooling to a feature vector.
struct BackboneConfig {
  std::size_t in_channels = 6;
  std::vector<std::size_t> stage_channels = {16, 32, 64};
  std::size_t kernel = 3;
  // Standardize each input channel to zero mean / unit variance before the
  // first conv. The raw channels mix full-range RGB with sparse motion maps;
  // without this the RGB common mode swamps the motion signal.
  bool standardize_input = false;

  std::size_t feature_dim() const { return stage_channels.back(); }
};

namespace detail {
inline std::string bb_w_name(const std::string& prefix, std::size_t stage) {
  return prefix + "conv" + std::to_string(stage) + ".w";
}
inline std::string bb_b_name(const std::string& prefix, std::size_t stage) {
  return prefix + "conv" + std::to_string(stage) + ".b";
}
}  // namespace detail

template <class T>
ParamSet<T> init_backbone_params(const BackboneConfig& cfg, std::uint64_t seed,
                                 const std::string& prefix = "bb.") {
  ParamSet<T> params;
  Rng rng(seed);
  std::size_t c_in = cfg.in_channels;
  for (std::size_t s = 0; s < cfg.stage_channels.size(); ++s) {
    const std::size_t c_out = cfg.stage_channels[s];
    const std::size_t fan_in = c_in * cfg.kernel * cfg.kernel;
    params.add(detail::bb_w_name(prefix, s), uniform_init<T>({c_out, c_in, cfg.kernel, cfg.kernel}, fan_in, rng));
    params.add(detail::bb_b_name(prefix, s), Tensor<T>({c_out}));
    c_in = c_out;
  }
  return params;
}

template <class T>
struct BackboneTrace {
  std::vector<Tensor<T>> stage_in;            // conv input per stage
  std::vector<Tensor<T>> pre_relu;            // conv output per stage
  std::vector<MaxPool2dResult<T>> pooled;     // post-relu pool per stage
  Tensor<T> inv_std;                          // per-channel 1/sigma (standardized input only)
  Tensor<T> feature;                          // [d]
};

namespace detail {

constexpr double kStandardizeEps = 1e-5;

/// y_c = (x_c - mean_c) / sqrt(var_c + eps), per channel over the spatial map.
template <class T>
Tensor<T> standardize_channels(const Tensor<T>& x, Tensor<T>& inv_std) {
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  Tensor<T> y(x.shape);
  inv_std = Tensor<T>({c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* in = x.ptr() + ch * hw;
    double mean = 0;
    for (std::size_t i = 0; i < hw; ++i) mean += static_cast<double>(in[i]);
    mean /= static_cast<double>(hw);
    double var = 0;
    for (std::size_t i = 0; i < hw; ++i) {
      const double d = static_cast<double>(in[i]) - mean;
      var += d * d;
    }
    var /= static_cast<double>(hw);
    const T is = static_cast<T>(1.0 / std::sqrt(var + kStandardizeEps));
    inv_std[ch] = is;
    T* out = y.ptr() + ch * hw;
    for (std::size_t i = 0; i < hw; ++i) out[i] = (in[i] - static_cast<T>(mean)) * is;
  }
  return y;
}

/// Backward of standardize_channels. y is the forward output;
/// dx_i = inv_std * (g_i - mean(g) - y_i * mean(g*y)).
template <class T>
void standardize_channels_backward(const Tensor<T>& y, const Tensor<T>& inv_std, const Tensor<T>& grad_y,
                                   Tensor<T>& grad_x) {
  const std::size_t c = y.dim(0), hw = y.dim(1) * y.dim(2);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* yc = y.ptr() + ch * hw;
    const T* g = grad_y.ptr() + ch * hw;
    T* gx = grad_x.ptr() + ch * hw;
    double gm = 0, gym = 0;
    for (std::size_t i = 0; i < hw; ++i) {
      gm += static_cast<double>(g[i]);
      gym += static_cast<double>(g[i]) * static_cast<double>(yc[i]);
    }
    gm /= static_cast<double>(hw);
    gym /= static_cast<double>(hw);
    for (std::size_t i = 0; i < hw; ++i) {
      gx[i] += inv_std[ch] * (g[i] - static_cast<T>(gm) - yc[i] * static_cast<T>(gym));
    }
  }
}

}  // namespace detail

template <class T>
BackboneTrace<T> backbone_forward(const Tensor<T>& input, const ParamSet<T>& params,
                                  const BackboneConfig& cfg, const std::string& prefix = "bb.") {
  if (input.dim(0) != cfg.in_channels) {
    throw std::invalid_argument("backbone: expected " + std::to_string(cfg.in_channels) +
                                " input channels, got " + Tensor<T>::shape_str(input.shape));
  }
  BackboneTrace<T> tr;
  Tensor<T> x = cfg.standardize_input ? detail::standardize_channels(input, tr.inv_std) : input;
  const std::size_t pad = (cfg.kernel - 1) / 2;
  for (std::size_t s = 0; s < cfg.stage_channels.size(); ++s) {
    tr.stage_in.push_back(x);
    const Tensor<T>& w = params.at(detail::bb_w_name(prefix, s)).value;
    const Tensor<T>& b = params.at(detail::bb_b_name(prefix, s)).value;
    tr.pre_relu.push_back(conv2d(x, w, &b, 1, pad));
    tr.pooled.push_back(maxpool2d_2x2(relu(tr.pre_relu.back())));
    x = tr.pooled.back().out;
  }
  tr.feature = global_avg_pool(x);
  return tr;
}

template <class T>
void backbone_backward(const BackboneTrace<T>& tr, const Tensor<T>& grad_feature, ParamSet<T>& params,
                       const BackboneConfig& cfg, Tensor<T>* grad_input,
                       const std::string& prefix = "bb.") {
  const std::size_t stages = cfg.stage_channels.size();
  const std::size_t pad = (cfg.kernel - 1) / 2;
  const Tensor<T>& last = tr.pooled.back().out;
  Tensor<T> g(last.shape);
  global_avg_pool_backward(last.dim(1), last.dim(2), grad_feature, g);
  for (std::size_t s = stages; s-- > 0;) {
    Tensor<T> g_relu(tr.pre_relu[s].shape);
    maxpool2d_2x2_backward(tr.pooled[s], g, g_relu);
    Tensor<T> g_conv(tr.pre_relu[s].shape);
    relu_backward(tr.pre_relu[s], g_relu, g_conv);
    Param<T>& pw = params.at(detail::bb_w_name(prefix, s));
    Param<T>& pb = params.at(detail::bb_b_name(prefix, s));
    const bool need_gin = s > 0 || grad_input != nullptr;
    Tensor<T> g_in;
    if (need_gin) g_in = Tensor<T>(tr.stage_in[s].shape);
    conv2d_backward(tr.stage_in[s], pw.value, g_conv, 1, pad, need_gin ? &g_in : nullptr, &pw.grad,
                    &pb.grad);
    if (s == 0) {
      if (grad_input) {
        if (cfg.standardize_input) {
          detail::standardize_channels_backward(tr.stage_in[0], tr.inv_std, g_in, *grad_input);
        } else {
          for (std::size_t i = 0; i < g_in.size(); ++i) (*grad_input)[i] += g_in[i];
        }
      }
      return;
    }
    g = std::move(g_in);
  }
}

}  // namespace pan
