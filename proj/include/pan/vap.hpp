#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pan/ops.hpp"
#include "pan/params.hpp"

namespace pan {

/// Pooled timescale features. For N a power of two the rows are ordered by
/// ascending timescale k, offsets 0..k-1 within each k, T = N-1 rows total.
template <class T>
struct TimescaleBank {
  Tensor<T> v;                                      // [T, d]
  std::vector<std::pair<std::size_t, std::size_t>> scales;  // (k, offset) per row
  std::size_t n = 0;                                // source sequence length
  std::vector<std::size_t> argmax;                  // T*d source frame indices
};

inline bool is_power_of_two(std::size_t n) { return n >= 1 && (n & (n - 1)) == 0; }

/// Pyramidal dilated max pooling: for each k in {1, 2, ..., N/2} apply
/// maxpool(kernel = N/k, stride = 1, dilation = k); the k-scale contributes k
/// rows, one per residue class of frame indices mod k.
template <class T>
TimescaleBank<T> timescale_pool(const Tensor<T>& f) {
  require_rank(f, 2, "timescale_pool");
  const std::size_t n = f.dim(0), d = f.dim(1);
  if (!is_power_of_two(n) || n < 2) {
    throw std::invalid_argument("timescale_pool: sequence length " + std::to_string(n) +
                                " must be a power of two >= 2");
  }
  TimescaleBank<T> bank;
  bank.n = n;
  bank.v = Tensor<T>({n - 1, d});
  bank.argmax.resize((n - 1) * d);
  std::size_t row = 0;
  for (std::size_t k = 1; k < n; k *= 2) {
    auto pooled = dilated_maxpool_time(f, n / k, 1, k);
    for (std::size_t j = 0; j < k; ++j, ++row) {
      for (std::size_t i = 0; i < d; ++i) {
        bank.v.at2(row, i) = pooled.out.at2(j, i);
        bank.argmax[row * d + i] = pooled.argmax[j * d + i];
      }
      bank.scales.emplace_back(k, j);
    }
  }
  return bank;
}

template <class T>
void timescale_pool_backward(const TimescaleBank<T>& bank, const Tensor<T>& grad_v, Tensor<T>& grad_f) {
  const std::size_t rows = bank.v.dim(0), d = bank.v.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      grad_f.at2(bank.argmax[r * d + i], i) += grad_v.at2(r, i);
    }
  }
}

/// z_t = (1/d) sum_i v[t, i].
template <class T>
Tensor<T> shrink(const TimescaleBank<T>& bank) {
  const std::size_t rows = bank.v.dim(0), d = bank.v.dim(1);
  Tensor<T> z({rows});
  const T inv = T{1} / static_cast<T>(d);
  for (std::size_t r = 0; r < rows; ++r) {
    T acc{0};
    for (std::size_t i = 0; i < d; ++i) acc += bank.v.at2(r, i);
    z[r] = acc * inv;
  }
  return z;
}

struct VAPConfig {
  std::size_t alpha = 4;  // expansion ratio of the weight-perception hidden layer
};

/// W1 [alpha*T, T], W2 [T, alpha*T] with zero biases, W3 [c, d] bias-free.
template <class T>
ParamSet<T> init_vap_params(std::size_t rows, std::size_t d, std::size_t classes, const VAPConfig& cfg,
                            std::uint64_t seed, const std::string& prefix = "vap.") {
  if (classes < 2) throw std::invalid_argument("init_vap_params: need at least 2 classes");
  ParamSet<T> params;
  Rng rng(seed);
  const std::size_t hidden = cfg.alpha * rows;
  params.add(prefix + "w1", uniform_init<T>({hidden, rows}, rows, rng));
  params.add(prefix + "b1", Tensor<T>({hidden}));
  params.add(prefix + "w2", uniform_init<T>({rows, hidden}, hidden, rng));
  params.add(prefix + "b2", Tensor<T>({rows}));
  params.add(prefix + "w3", uniform_init<T>({classes, d}, d, rng));
  return params;
}

template <class T>
struct WeightPerceptionTrace {
  Tensor<T> z, h_pre, h, u, w;
};

/// w = softmax(W2 relu(W1 z + b1) + b2); a probability vector over the T rows.
template <class T>
WeightPerceptionTrace<T> weight_perception(const Tensor<T>& z, const ParamSet<T>& params,
                                           const std::string& prefix = "vap.") {
  WeightPerceptionTrace<T> tr;
  tr.z = z;
  const Tensor<T>& b1 = params.at(prefix + "b1").value;
  const Tensor<T>& b2 = params.at(prefix + "b2").value;
  tr.h_pre = fc(z, params.at(prefix + "w1").value, &b1);
  tr.h = relu(tr.h_pre);
  tr.u = fc(tr.h, params.at(prefix + "w2").value, &b2);
  tr.w = softmax(tr.u);
  return tr;
}

/// f_g = sum_t w_t * v[t, :].
template <class T>
Tensor<T> aggregate(const Tensor<T>& w, const TimescaleBank<T>& bank) {
  const std::size_t rows = bank.v.dim(0), d = bank.v.dim(1);
  if (w.size() != rows) {
    throw std::invalid_argument("aggregate: weight vector of " + std::to_string(w.size()) +
                                " entries does not match " + std::to_string(rows) + " pooled rows");
  }
  Tensor<T> f_g({d});
  for (std::size_t r = 0; r < rows; ++r) {
    const T wr = w[r];
    for (std::size_t i = 0; i < d; ++i) f_g[i] += wr * bank.v.at2(r, i);
  }
  return f_g;
}

/// s = W3 f_g, no bias.
template <class T>
Tensor<T> predict(const Tensor<T>& f_g, const ParamSet<T>& params, const std::string& prefix = "vap.") {
  return fc(f_g, params.at(prefix + "w3").value);
}

template <class T>
struct VapTrace {
  TimescaleBank<T> bank;
  WeightPerceptionTrace<T> wp;
  Tensor<T> f_g;
  Tensor<T> s;
};

template <class T>
VapTrace<T> vap_forward(const Tensor<T>& f, const ParamSet<T>& params, const std::string& prefix = "vap.") {
  VapTrace<T> tr;
  tr.bank = timescale_pool(f);
  tr.wp = weight_perception(shrink(tr.bank), params, prefix);
  tr.f_g = aggregate(tr.wp.w, tr.bank);
  tr.s = predict(tr.f_g, params, prefix);
  return tr;
}

/// Exact gradients for W1/W2/W3, biases and (optionally) the input sequence.
template <class T>
void vap_backward(const VapTrace<T>& tr, const Tensor<T>& grad_s, ParamSet<T>& params, Tensor<T>* grad_f,
                  const std::string& prefix = "vap.") {
  const std::size_t rows = tr.bank.v.dim(0), d = tr.bank.v.dim(1);

  Tensor<T> g_fg({d});
  fc_backward(tr.f_g, params.at(prefix + "w3").value, grad_s, &g_fg, &params.at(prefix + "w3").grad,
              nullptr);

  Tensor<T> g_w({rows});
  Tensor<T> g_v({rows, d});
  for (std::size_t r = 0; r < rows; ++r) {
    T acc{0};
    for (std::size_t i = 0; i < d; ++i) {
      acc += g_fg[i] * tr.bank.v.at2(r, i);
      g_v.at2(r, i) += tr.wp.w[r] * g_fg[i];
    }
    g_w[r] = acc;
  }

  Tensor<T> g_u({rows});
  softmax_backward(tr.wp.w, g_w, g_u);
  Tensor<T> g_h(tr.wp.h.shape);
  fc_backward(tr.wp.h, params.at(prefix + "w2").value, g_u, &g_h, &params.at(prefix + "w2").grad,
              &params.at(prefix + "b2").grad);
  Tensor<T> g_hpre(tr.wp.h_pre.shape);
  relu_backward(tr.wp.h_pre, g_h, g_hpre);
  Tensor<T> g_z({rows});
  fc_backward(tr.wp.z, params.at(prefix + "w1").value, g_hpre, &g_z, &params.at(prefix + "w1").grad,
              &params.at(prefix + "b1").grad);

  const T inv = T{1} / static_cast<T>(d);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < d; ++i) g_v.at2(r, i) += g_z[r] * inv;
  }
  if (grad_f) timescale_pool_backward(tr.bank, g_v, *grad_f);
}

}  // namespace pan
