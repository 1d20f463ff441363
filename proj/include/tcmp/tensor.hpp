#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "tcmp/errors.hpp"

namespace tcmp {

// Shape-tagged flat numeric array, row-major.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, T fill = T{0}) : shape(std::move(s)) {
    data.assign(numel_of(shape), fill);
  }
  Tensor(std::vector<int> s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != numel_of(shape)) {
      throw InvalidInput("Tensor: data length does not match shape");
    }
  }

  static size_t numel_of(const std::vector<int>& s) {
    size_t n = 1;
    for (int e : s) {
      if (e <= 0) throw InvalidInput("Tensor: non-positive extent");
      n *= static_cast<size_t>(e);
    }
    return n;
  }

  static Tensor scalar(T v) { return Tensor({1}, std::vector<T>{v}); }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape); }

  size_t numel() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  T& operator[](size_t i) { return data[i]; }
  const T& operator[](size_t i) const { return data[i]; }

  // Rank-2 accessors.
  T& at(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
  const T& at(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  bool all_finite() const {
    for (const T& v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }
};

}  // namespace tcmp
