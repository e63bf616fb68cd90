// Copyright (c) 2026 the facesynth authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsyn {

// Data or usage problem caused by the caller (bad file, mismatched sizes).
// The CLI maps this to exit code 2; anything else is an internal error (1).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

inline int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

// Dense row-major tensor. Rank is dynamic; network activations are
// (N, C, H, W), conv weights (OC, IC, KH, KW), scalars {1}.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(shape_numel(shape), T(0)) {}
  Tensor(std::vector<int> s, T fill) : shape(std::move(s)), data(shape_numel(shape), fill) {}

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, T v) { return Tensor(std::move(s), v); }
  static Tensor scalar(T v) { return Tensor({1}, v); }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  bool empty() const { return data.empty(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // 4D accessors (N, C, H, W)
  T& at(int n, int c, int y, int x) {
    return data[((static_cast<int64_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
  }
  const T& at(int n, int c, int y, int x) const {
    return data[((static_cast<int64_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
  }
  // 3D accessors (C, H, W)
  T& at(int c, int y, int x) {
    return data[(static_cast<int64_t>(c) * shape[1] + y) * shape[2] + x];
  }
  const T& at(int c, int y, int x) const {
    return data[(static_cast<int64_t>(c) * shape[1] + y) * shape[2] + x];
  }
  // 2D accessors (H, W)
  T& at(int y, int x) { return data[static_cast<int64_t>(y) * shape[1] + x]; }
  const T& at(int y, int x) const { return data[static_cast<int64_t>(y) * shape[1] + x]; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  // Adds a leading batch axis of size 1.
  Tensor batched() const {
    Tensor out = *this;
    out.shape.insert(out.shape.begin(), 1);
    return out;
  }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b))
    throw DataError(std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                    shape_str(b.shape));
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  T m = 0;
  for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace fsyn
