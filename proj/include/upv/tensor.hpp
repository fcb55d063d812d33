#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "upv/error.hpp"

namespace upv {

/// Row-major dense array. Shapes here are tiny (at most 2-D), so this is a
/// plain container plus a few kernels, not a tensor library.
template <class T>
struct tensor_t {
  std::vector<int> shape;
  std::vector<T> data;

  tensor_t() = default;
  tensor_t(std::vector<int> s, T fill = T{}) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(numel_of(shape)), fill);
  }

  static std::int64_t numel_of(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) {
      require(d > 0, errc::shape_mismatch, "non-positive dimension");
      n *= d;
    }
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  T* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols(); }
  const T* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols(); }

  T& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
  const T& at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const tensor_t& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (T v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }
};

using tensor = tensor_t<float>;

// Dot product with independent accumulator lanes so the compiler can
// vectorize without relying on fast-math reassociation.
template <class T>
inline T dot(const T* a, const T* b, int n) {
  T s0{}, s1{}, s2{}, s3{}, s4{}, s5{}, s6{}, s7{};
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
    s4 += a[i + 4] * b[i + 4];
    s5 += a[i + 5] * b[i + 5];
    s6 += a[i + 6] * b[i + 6];
    s7 += a[i + 7] * b[i + 7];
  }
  T tail{};
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7)) + tail;
}

template <class T>
inline void axpy(T alpha, const T* x, T* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// y = W * x + b, W is [out x in] row-major.
template <class T>
inline void matvec_bias(const tensor_t<T>& w, const T* x, const T* b, T* y) {
  const int out = w.rows();
  const int in = w.cols();
  for (int o = 0; o < out; ++o) y[o] = dot(w.row(o), x, in) + (b ? b[o] : T{});
}

// y += W * x
template <class T>
inline void matvec_add(const tensor_t<T>& w, const T* x, T* y) {
  const int out = w.rows();
  const int in = w.cols();
  for (int o = 0; o < out; ++o) y[o] += dot(w.row(o), x, in);
}

// x_grad += W^T * y_grad, accumulated row-wise to keep memory access sequential.
template <class T>
inline void matvec_transpose_add(const tensor_t<T>& w, const T* y_grad, T* x_grad) {
  const int out = w.rows();
  const int in = w.cols();
  for (int o = 0; o < out; ++o) axpy(y_grad[o], w.row(o), x_grad, in);
}

}  // namespace upv
