#pragma once

#include <cstdint>
#include <cstdlib>
#include <initializer_list>
#include <new>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "maneuver/core/error.hpp"

namespace maneuver {

// 64-byte-aligned storage for anything SIMD kernels touch. Plain vectors
// land on 16- or 32-byte boundaries depending on heap history, which makes
// vectorized reductions pick different head/tail splits run to run and
// wobbles results in the last bit. Fixing the alignment pins the summation
// order, so identical inputs give bitwise-identical outputs.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr size_t alignment = 64;

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(size_t n) {
    const size_t bytes = (n * sizeof(T) + alignment - 1) / alignment * alignment;
    void* p = std::aligned_alloc(alignment, bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, size_t) { std::free(p); }

  bool operator==(const AlignedAllocator&) const { return true; }
  bool operator!=(const AlignedAllocator&) const { return false; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

// Dense row-major tensor. Deliberately minimal: shape + flat storage plus a
// few indexing helpers. All layout conventions (NCHW etc.) live in the ops
// that consume these.
template <typename T>
struct Tensor {
  std::vector<int64_t> shape;
  AlignedVector<T> data;

  Tensor() = default;

  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), T(0));
  }

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<int64_t> s, T value) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), value);
    return t;
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      require(d >= 0, "Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // Convenience accessors for the common ranks.
  T& at2(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
  T at2(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
  T& at4(int64_t b, int64_t c, int64_t y, int64_t x) {
    return data[static_cast<size_t>(((b * shape[1] + c) * shape[2] + y) * shape[3] + x)];
  }
  T at4(int64_t b, int64_t c, int64_t y, int64_t x) const {
    return data[static_cast<size_t>(((b * shape[1] + c) * shape[2] + y) * shape[3] + x)];
  }
  T& at5(int64_t b, int64_t c, int64_t t, int64_t y, int64_t x) {
    return data[static_cast<size_t>((((b * shape[1] + c) * shape[2] + t) * shape[3] + y) * shape[4] + x)];
  }
  T at5(int64_t b, int64_t c, int64_t t, int64_t y, int64_t x) const {
    return data[static_cast<size_t>((((b * shape[1] + c) * shape[2] + t) * shape[3] + y) * shape[4] + x)];
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
  }
};

template <typename T>
void check_shape(const Tensor<T>& t, const std::vector<int64_t>& want, const std::string& what) {
  if (t.shape != want) {
    Tensor<T> dummy;
    dummy.shape = want;
    validation_error(what + ": expected shape " + dummy.shape_str() + ", got " + t.shape_str());
  }
}

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  Tensor<To> out;
  out.shape = t.shape;
  out.data.resize(t.data.size());
  for (size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<To>(t.data[i]);
  return out;
}

}  // namespace maneuver
