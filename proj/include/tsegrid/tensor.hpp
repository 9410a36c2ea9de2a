// Copyright 2026 tsegrid authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef TSEGRID_TENSOR_HPP_
#define TSEGRID_TENSOR_HPP_

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "tsegrid/common.hpp"

namespace tsegrid {

using Shape = std::vector<size_t>;

inline size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Dense row-major n-d array. Value semantics throughout: copies are real
// copies, tensors can move across threads freely.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), T(0)) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size())
      throw ShapeError("tensor " + shape_str(shape) + " given " +
                       std::to_string(data.size()) + " values");
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, T v) {
    Tensor t(std::move(s));
    for (T& x : t.data) x = v;
    return t;
  }
  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  size_t size() const { return data.size(); }
  size_t rank() const { return shape.size(); }
  size_t dim(size_t i) const { return shape.at(i); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& operator[](size_t i) { return data[i]; }
  const T& operator[](size_t i) const { return data[i]; }

  // rank-specific accessors; row-major strides
  T& at2(size_t i, size_t j) { return data[i * shape[1] + j]; }
  const T& at2(size_t i, size_t j) const { return data[i * shape[1] + j]; }
  T& at3(size_t i, size_t j, size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  const T& at3(size_t i, size_t j, size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  T& at4(size_t i, size_t j, size_t k, size_t l) {
    return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }
  const T& at4(size_t i, size_t j, size_t k, size_t l) const {
    return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (const T& x : data)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  void fill(T v) {
    for (T& x : data) x = v;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i)
      out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

template <typename T>
inline void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                               const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
}

}  // namespace tsegrid

#endif  // TSEGRID_TENSOR_HPP_
