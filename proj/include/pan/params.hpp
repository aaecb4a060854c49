#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "pan/rng.hpp"
#include "pan/tensor.hpp"

namespace pan {

template <class T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

/// Named parameter collection. Names are unique; iteration order is the
/// insertion order, which fixes the SGD/serialization ordering.
template <class T>
struct ParamSet {
  std::vector<Param<T>> items;

  Param<T>& add(const std::string& name, Tensor<T> value) {
    if (index_.count(name)) throw std::invalid_argument("ParamSet: duplicate parameter name " + name);
    index_[name] = items.size();
    items.push_back(Param<T>{name, std::move(value), {}});
    Param<T>& p = items.back();
    p.grad = Tensor<T>(p.value.shape);
    return p;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Param<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("ParamSet: unknown parameter " + name);
    return items[it->second];
  }
  const Param<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("ParamSet: unknown parameter " + name);
    return items[it->second];
  }

  void zero_grads() {
    for (auto& p : items) p.grad.fill(T{0});
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : items) n += p.value.size();
    return n;
  }

  /// Merge another set under a name prefix.
  void adopt(ParamSet<T>&& other, const std::string& prefix) {
    for (auto& p : other.items) add(prefix + p.name, std::move(p.value));
  }

  template <class U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& p : items) out.add(p.name, p.value.template cast<U>());
    return out;
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

/// Fan-in scaled uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
template <class T>
Tensor<T> uniform_init(const std::vector<std::size_t>& shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(shape);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

/// SGD with momentum and decoupled-from-nothing classic L2 weight decay:
///   v <- momentum * v + grad + weight_decay * value
///   value <- value - lr * v
/// Grads are zeroed after the step.
template <class T>
class Sgd {
 public:
  Sgd(T lr, T momentum, T weight_decay) : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

  void set_lr(T lr) { lr_ = lr; }
  T lr() const { return lr_; }

  void step(ParamSet<T>& params) {
    if (velocity_.size() != params.items.size()) {
      velocity_.clear();
      for (const auto& p : params.items) velocity_.emplace_back(p.value.shape);
    }
    for (std::size_t i = 0; i < params.items.size(); ++i) {
      Param<T>& p = params.items[i];
      Tensor<T>& v = velocity_[i];
      for (std::size_t j = 0; j < p.value.size(); ++j) {
        v[j] = momentum_ * v[j] + p.grad[j] + weight_decay_ * p.value[j];
        p.value[j] -= lr_ * v[j];
      }
    }
    params.zero_grads();
  }

 private:
  T lr_, momentum_, weight_decay_;
  std::vector<Tensor<T>> velocity_;
};

/// Central-difference gradient check. `loss_fn()` must compute the scalar loss
/// and accumulate analytic gradients into `params` (grads are zeroed here
/// before each evaluation). Returns
///   max over scalars of |analytic - numeric| / max(1, |numeric|).
template <class T, class F>
T grad_check(ParamSet<T>& params, F&& loss_fn, T eps) {
  params.zero_grads();
  loss_fn();
  std::vector<Tensor<T>> analytic;
  analytic.reserve(params.items.size());
  for (const auto& p : params.items) analytic.push_back(p.grad);

  T max_err{0};
  for (std::size_t i = 0; i < params.items.size(); ++i) {
    Param<T>& p = params.items[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const T saved = p.value[j];
      p.value[j] = saved + eps;
      params.zero_grads();
      const T lp = loss_fn();
      p.value[j] = saved - eps;
      params.zero_grads();
      const T lm = loss_fn();
      p.value[j] = saved;
      const T numeric = (lp - lm) / (2 * eps);
      const T err = std::abs(analytic[i][j] - numeric) / std::max(T{1}, std::abs(numeric));
      if (err > max_err) max_err = err;
    }
  }
  params.zero_grads();
  return max_err;
}

}  // namespace pan
