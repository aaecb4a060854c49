#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "pan/gemm.hpp"
#include "pan/tensor.hpp"

namespace pan {

// ---------------------------------------------------------------------------
// conv2d: zero padding, square odd kernel, NCHW single image [C,H,W].
// Forward is im2col + gemm; backward recomputes the column buffer from the
// cached input instead of holding it, which keeps per-layer memory at O(input).
// ---------------------------------------------------------------------------

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

template <class T>
void im2col(const Tensor<T>& input, std::size_t k, std::size_t stride, std::size_t pad, T* cols) {
  const std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t ho = conv_out_extent(h, k, stride, pad);
  const std::size_t wo = conv_out_extent(w, k, stride, pad);
  const T* in = input.ptr();
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* dst = cols + ((c * k + ky) * k + kx) * (ho * wo);
        for (std::size_t y = 0; y < ho; ++y) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(y * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          T* row = dst + y * wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(row, row + wo, T{0});
            continue;
          }
          const T* src = in + (c * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t x = 0; x < wo; ++x) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(x * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            row[x] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? T{0} : src[ix];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, std::size_t c_in, std::size_t h, std::size_t w, std::size_t k,
                std::size_t stride, std::size_t pad, Tensor<T>& grad_input) {
  const std::size_t ho = conv_out_extent(h, k, stride, pad);
  const std::size_t wo = conv_out_extent(w, k, stride, pad);
  T* out = grad_input.ptr();
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* src = cols + ((c * k + ky) * k + kx) * (ho * wo);
        for (std::size_t y = 0; y < ho; ++y) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(y * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          T* dst = out + (c * h + static_cast<std::size_t>(iy)) * w;
          const T* row = src + y * wo;
          for (std::size_t x = 0; x < wo; ++x) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(x * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            dst[ix] += row[x];
          }
        }
      }
    }
  }
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>* bias,
                 std::size_t stride = 1, std::size_t pad = 0) {
  require_rank(input, 3, "conv2d input");
  require_rank(weights, 4, "conv2d weights");
  if (weights.dim(2) != weights.dim(3) || weights.dim(2) % 2 == 0) {
    throw std::invalid_argument("conv2d: kernel must be square and odd, got " +
                                Tensor<T>::shape_str(weights.shape));
  }
  if (input.dim(0) != weights.dim(1)) {
    throw std::invalid_argument("conv2d: input channels " + Tensor<T>::shape_str(input.shape) +
                                " do not match weights " + Tensor<T>::shape_str(weights.shape));
  }
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  const std::size_t c_out = weights.dim(0), c_in = weights.dim(1), k = weights.dim(2);
  const std::size_t h = input.dim(1), w = input.dim(2);
  if (h + 2 * pad < k || w + 2 * pad < k) {
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  }
  const std::size_t ho = conv_out_extent(h, k, stride, pad);
  const std::size_t wo = conv_out_extent(w, k, stride, pad);
  const std::size_t kk = c_in * k * k, p = ho * wo;

  std::vector<T> cols(kk * p);
  im2col(input, k, stride, pad, cols.data());

  Tensor<T> out({c_out, ho, wo});
  gemm(false, false, c_out, p, kk, T{1}, weights.ptr(), cols.data(), T{0}, out.ptr());
  if (bias) {
    if (bias->size() != c_out) {
      throw std::invalid_argument("conv2d: bias " + Tensor<T>::shape_str(bias->shape) +
                                  " does not match " + std::to_string(c_out) + " output channels");
    }
    for (std::size_t c = 0; c < c_out; ++c) {
      T* o = out.ptr() + c * p;
      const T b = (*bias)[c];
      for (std::size_t i = 0; i < p; ++i) o[i] += b;
    }
  }
  return out;
}

// nullptr alone cannot deduce T for the bias pointer
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights, std::nullptr_t,
                 std::size_t stride = 1, std::size_t pad = 0) {
  return conv2d(input, weights, static_cast<const Tensor<T>*>(nullptr), stride, pad);
}

/// Accumulates into the optional gradient outputs.
template <class T>
void conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& grad_out,
                     std::size_t stride, std::size_t pad, Tensor<T>* grad_input, Tensor<T>* grad_weights,
                     Tensor<T>* grad_bias) {
  const std::size_t c_out = weights.dim(0), c_in = weights.dim(1), k = weights.dim(2);
  const std::size_t h = input.dim(1), w = input.dim(2);
  const std::size_t ho = grad_out.dim(1), wo = grad_out.dim(2);
  const std::size_t kk = c_in * k * k, p = ho * wo;

  if (grad_bias) {
    for (std::size_t c = 0; c < c_out; ++c) {
      const T* g = grad_out.ptr() + c * p;
      T acc{0};
      for (std::size_t i = 0; i < p; ++i) acc += g[i];
      (*grad_bias)[c] += acc;
    }
  }
  if (grad_weights || grad_input) {
    std::vector<T> cols(kk * p);
    if (grad_weights) {
      im2col(input, k, stride, pad, cols.data());
      // gW[c_out, kk] += gout[c_out, p] * cols[kk, p]^T
      gemm(false, true, c_out, kk, p, T{1}, grad_out.ptr(), cols.data(), T{1}, grad_weights->ptr());
    }
    if (grad_input) {
      // gcols[kk, p] = W[c_out, kk]^T * gout[c_out, p]
      std::vector<T> gcols(kk * p);
      gemm(true, false, kk, p, c_out, T{1}, weights.ptr(), grad_out.ptr(), T{0}, gcols.data());
      col2im_add(gcols.data(), c_in, h, w, k, stride, pad, *grad_input);
    }
  }
}

// ---------------------------------------------------------------------------
// Fully connected: y = W x (+ b).
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> fc(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias = nullptr) {
  require_rank(w, 2, "fc weights");
  if (w.dim(1) != x.size()) {
    throw std::invalid_argument("fc: weights " + Tensor<T>::shape_str(w.shape) + " do not match input " +
                                Tensor<T>::shape_str(x.shape));
  }
  const std::size_t p = w.dim(0), n = w.dim(1);
  Tensor<T> y({p});
  gemm(false, false, p, 1, n, T{1}, w.ptr(), x.ptr(), T{0}, y.ptr());
  if (bias) {
    if (bias->size() != p) {
      throw std::invalid_argument("fc: bias " + Tensor<T>::shape_str(bias->shape) + " does not match " +
                                  std::to_string(p) + " outputs");
    }
    for (std::size_t i = 0; i < p; ++i) y[i] += (*bias)[i];
  }
  return y;
}

template <class T>
void fc_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& grad_y, Tensor<T>* grad_x,
                 Tensor<T>* grad_w, std::type_identity_t<Tensor<T>>* grad_bias) {
  const std::size_t p = w.dim(0), n = w.dim(1);
  if (grad_w) {
    // gW += gy (p x 1) * x^T (1 x n)
    gemm(false, false, p, n, 1, T{1}, grad_y.ptr(), x.ptr(), T{1}, grad_w->ptr());
  }
  if (grad_x) {
    gemm(true, false, n, 1, p, T{1}, w.ptr(), grad_y.ptr(), T{1}, grad_x->ptr());
  }
  if (grad_bias) {
    for (std::size_t i = 0; i < p; ++i) (*grad_bias)[i] += grad_y[i];
  }
}

// ---------------------------------------------------------------------------
// Pointwise ops and reductions. No broadcasting: exact shape match required.
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out = x;
  for (auto& v : out.data) v = v > T{0} ? v : T{0};
  return out;
}

/// grad wrt x, gated by the forward input.
template <class T>
void relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out, Tensor<T>& grad_x) {
  for (std::size_t i = 0; i < x.size(); ++i) grad_x[i] += x[i] > T{0} ? grad_out[i] : T{0};
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out = x;
  for (auto& v : out.data) v = T{1} / (T{1} + std::exp(-v));
  return out;
}

/// x: [n]. Max-subtracted for stability; output sums to 1.
template <class T>
Tensor<T> softmax(const Tensor<T>& x) {
  Tensor<T> out = x;
  T mx = *std::max_element(out.data.begin(), out.data.end());
  T sum{0};
  for (auto& v : out.data) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : out.data) v /= sum;
  return out;
}

/// grad_x += J_softmax^T * grad_out given the forward output s.
template <class T>
void softmax_backward(const Tensor<T>& s, const Tensor<T>& grad_out, Tensor<T>& grad_x) {
  T dot{0};
  for (std::size_t i = 0; i < s.size(); ++i) dot += s[i] * grad_out[i];
  for (std::size_t i = 0; i < s.size(); ++i) grad_x[i] += s[i] * (grad_out[i] - dot);
}

/// [C,H,W] -> [1,H,W] mean over channels.
template <class T>
Tensor<T> channel_mean(const Tensor<T>& x) {
  require_rank(x, 3, "channel_mean");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  Tensor<T> out({1, x.dim(1), x.dim(2)});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* src = x.ptr() + ch * hw;
    for (std::size_t i = 0; i < hw; ++i) out[i] += src[i];
  }
  const T inv = T{1} / static_cast<T>(c);
  for (std::size_t i = 0; i < hw; ++i) out[i] *= inv;
  return out;
}

template <class T>
void channel_mean_backward(std::size_t channels, const Tensor<T>& grad_out, Tensor<T>& grad_x) {
  const std::size_t hw = grad_out.dim(1) * grad_out.dim(2);
  const T inv = T{1} / static_cast<T>(channels);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    T* dst = grad_x.ptr() + ch * hw;
    for (std::size_t i = 0; i < hw; ++i) dst[i] += grad_out[i] * inv;
  }
}

/// [C,H,W] -> [1,H,W], sqrt(sum_c x_c^2 + eps). eps keeps the gradient finite
/// at the all-zero point.
template <class T>
Tensor<T> channel_l2(const Tensor<T>& x, T eps) {
  require_rank(x, 3, "channel_l2");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  Tensor<T> out({1, x.dim(1), x.dim(2)}, eps);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* src = x.ptr() + ch * hw;
    for (std::size_t i = 0; i < hw; ++i) out[i] += src[i] * src[i];
  }
  for (std::size_t i = 0; i < hw; ++i) out[i] = std::sqrt(out[i]);
  return out;
}

/// d out / d x_c = x_c / out.
template <class T>
void channel_l2_backward(const Tensor<T>& x, const Tensor<T>& out, const Tensor<T>& grad_out,
                         Tensor<T>& grad_x) {
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* src = x.ptr() + ch * hw;
    T* dst = grad_x.ptr() + ch * hw;
    for (std::size_t i = 0; i < hw; ++i) dst[i] += grad_out[i] * src[i] / out[i];
  }
}

// ---------------------------------------------------------------------------
// Dilated max pooling over time. seq: [N, d] -> [L, d].
// Ties route the gradient to the smallest time index.
// ---------------------------------------------------------------------------

template <class T>
struct MaxPoolTimeResult {
  Tensor<T> out;                   // [L, d]
  std::vector<std::size_t> argmax; // L*d source row indices
};

template <class T>
MaxPoolTimeResult<T> dilated_maxpool_time(const Tensor<T>& seq, std::size_t kernel, std::size_t stride,
                                          std::size_t dilation) {
  require_rank(seq, 2, "dilated_maxpool_time");
  const std::size_t n = seq.dim(0), d = seq.dim(1);
  if (kernel < 1 || stride < 1 || dilation < 1) {
    throw std::invalid_argument("dilated_maxpool_time: kernel, stride and dilation must be >= 1");
  }
  const std::size_t span = (kernel - 1) * dilation + 1;
  if (span > n) {
    throw std::invalid_argument("dilated_maxpool_time: window span " + std::to_string(span) +
                                " exceeds sequence length " + std::to_string(n));
  }
  const std::size_t l = (n - span) / stride + 1;
  MaxPoolTimeResult<T> res{Tensor<T>({l, d}), std::vector<std::size_t>(l * d)};
  for (std::size_t j = 0; j < l; ++j) {
    for (std::size_t f = 0; f < d; ++f) {
      std::size_t best_row = j * stride;
      T best = seq.at2(best_row, f);
      for (std::size_t i = 1; i < kernel; ++i) {
        const std::size_t row = j * stride + i * dilation;
        const T v = seq.at2(row, f);
        if (v > best) {
          best = v;
          best_row = row;
        }
      }
      res.out.at2(j, f) = best;
      res.argmax[j * d + f] = best_row;
    }
  }
  return res;
}

template <class T>
void dilated_maxpool_time_backward(const MaxPoolTimeResult<T>& res, const Tensor<T>& grad_out,
                                   Tensor<T>& grad_seq) {
  const std::size_t l = res.out.dim(0), d = res.out.dim(1);
  for (std::size_t j = 0; j < l; ++j) {
    for (std::size_t f = 0; f < d; ++f) {
      grad_seq.at2(res.argmax[j * d + f], f) += grad_out.at2(j, f);
    }
  }
}

// ---------------------------------------------------------------------------
// 2x2 stride-2 spatial max pooling for the toy backbone.
// ---------------------------------------------------------------------------

template <class T>
struct MaxPool2dResult {
  Tensor<T> out;                   // [C, H/2, W/2]
  std::vector<std::size_t> argmax; // flat input offsets
};

template <class T>
MaxPool2dResult<T> maxpool2d_2x2(const Tensor<T>& x) {
  require_rank(x, 3, "maxpool2d_2x2");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h < 2 || w < 2) throw std::invalid_argument("maxpool2d_2x2: input too small");
  const std::size_t ho = h / 2, wo = w / 2;
  MaxPool2dResult<T> res{Tensor<T>({c, ho, wo}), std::vector<std::size_t>(c * ho * wo)};
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < ho; ++y) {
      for (std::size_t x0 = 0; x0 < wo; ++x0) {
        std::size_t base = (ch * h + 2 * y) * w + 2 * x0;
        std::size_t best_idx = base;
        T best = x[base];
        const std::size_t cand[3] = {base + 1, base + w, base + w + 1};
        for (std::size_t idx : cand) {
          if (x[idx] > best) {
            best = x[idx];
            best_idx = idx;
          }
        }
        const std::size_t o = (ch * ho + y) * wo + x0;
        res.out[o] = best;
        res.argmax[o] = best_idx;
      }
    }
  }
  return res;
}

template <class T>
void maxpool2d_2x2_backward(const MaxPool2dResult<T>& res, const Tensor<T>& grad_out, Tensor<T>& grad_x) {
  for (std::size_t i = 0; i < grad_out.size(); ++i) grad_x[res.argmax[i]] += grad_out[i];
}

/// [C,H,W] -> [C] spatial mean.
template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank(x, 3, "global_avg_pool");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  Tensor<T> out({c});
  const T inv = T{1} / static_cast<T>(hw);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* src = x.ptr() + ch * hw;
    T acc{0};
    for (std::size_t i = 0; i < hw; ++i) acc += src[i];
    out[ch] = acc * inv;
  }
  return out;
}

template <class T>
void global_avg_pool_backward(std::size_t h, std::size_t w, const Tensor<T>& grad_out, Tensor<T>& grad_x) {
  const std::size_t c = grad_out.size(), hw = h * w;
  const T inv = T{1} / static_cast<T>(hw);
  for (std::size_t ch = 0; ch < c; ++ch) {
    T* dst = grad_x.ptr() + ch * hw;
    const T g = grad_out[ch] * inv;
    for (std::size_t i = 0; i < hw; ++i) dst[i] += g;
  }
}

// ---------------------------------------------------------------------------
// Cross-entropy on raw scores, stable log-sum-exp form.
// ---------------------------------------------------------------------------

template <class T>
T cross_entropy(const Tensor<T>& scores, std::size_t label) {
  if (label >= scores.size()) {
    throw std::invalid_argument("cross_entropy: label " + std::to_string(label) + " out of range for " +
                                std::to_string(scores.size()) + " classes");
  }
  T mx = *std::max_element(scores.data.begin(), scores.data.end());
  T sum{0};
  for (const T v : scores.data) sum += std::exp(v - mx);
  return std::log(sum) - (scores[label] - mx);
}

/// grad = softmax(scores) - onehot(label), accumulated.
template <class T>
void cross_entropy_backward(const Tensor<T>& scores, std::size_t label, T scale, Tensor<T>& grad_scores) {
  Tensor<T> s = softmax(scores);
  for (std::size_t i = 0; i < s.size(); ++i) {
    grad_scores[i] += scale * (s[i] - (i == label ? T{1} : T{0}));
  }
}

}  // namespace pan
