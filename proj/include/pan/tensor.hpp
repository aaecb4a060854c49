#pragma once

#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pan {

/// 64-byte aligned allocator for tensor storage. Keeping every buffer at one
/// fixed alignment makes the BLAS backend bit-reproducible: its AVX-512
/// small-matrix kernels pick code paths based on pointer alignment, so
/// results would otherwise depend on heap history.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t alignment = 64;

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{alignment}));
  }
  void deallocate(T* p, std::size_t n) {
    ::operator delete(p, n * sizeof(T), std::align_val_t{alignment});
  }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
  template <class U>
  bool operator!=(const AlignedAllocator<U>&) const { return false; }
};

/// Dense row-major tensor, last axis fastest. Rank 1..4 in practice.
/// Scalar type is float for training/inference and double for gradient checking.
template <class T>
struct Tensor {
  using Buffer = std::vector<T, AlignedAllocator<T>>;

  std::vector<std::size_t> shape;
  Buffer data;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> s, T fill = T{0}) : shape(std::move(s)) {
    for (std::size_t e : shape) {
      if (e == 0) throw std::invalid_argument("Tensor: zero extent in shape " + shape_str(shape));
    }
    data.assign(numel(shape), fill);
  }

  Tensor(std::vector<std::size_t> s, Buffer d) : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != data.size()) {
      throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " does not match buffer of " +
                                  std::to_string(data.size()) + " elements");
    }
  }

  static std::size_t numel(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  static std::string shape_str(const std::vector<std::size_t>& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  T& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  const T& at2(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

  T& at3(std::size_t c, std::size_t y, std::size_t x) { return data[(c * shape[1] + y) * shape[2] + x]; }
  const T& at3(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * shape[1] + y) * shape[2] + x];
  }

  T& at4(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data[((n * shape[1] + c) * shape[2] + y) * shape[3] + x];
  }
  const T& at4(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data[((n * shape[1] + c) * shape[2] + y) * shape[3] + x];
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* ctx) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(ctx) + ": shape mismatch " + Tensor<T>::shape_str(a.shape) +
                                " vs " + Tensor<T>::shape_str(b.shape));
  }
}

template <class T>
void require_rank(const Tensor<T>& t, std::size_t r, const char* ctx) {
  if (t.rank() != r) {
    throw std::invalid_argument(std::string(ctx) + ": expected rank " + std::to_string(r) + " tensor, got " +
                                Tensor<T>::shape_str(t.shape));
  }
}

}  // namespace pan
