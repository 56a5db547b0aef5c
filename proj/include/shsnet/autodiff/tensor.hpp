#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "shsnet/error.hpp"

namespace shsnet::ad {

using Shape = std::vector<std::size_t>;

// Storage aligned to the SIMD width. Eigen peels vectorized loops up to the
// first aligned element, so with plain std::vector the summation order, and
// the last bits of every product, would depend on where the heap put a buffer.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

// Dense row-major array of doubles. An empty shape denotes a scalar.
struct Tensor {
  Shape shape;
  Buffer data;
  bool requires_grad = false;

  Tensor() : data(1, 0.0) {}
  Tensor(Shape s, Buffer d, bool grad = false)
      : shape(std::move(s)), data(std::move(d)), requires_grad(grad) {
    if (data.size() != numel(shape))
      throw ShapeMismatch("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                          to_string(shape));
  }

  static Tensor zeros(Shape s, bool grad = false) {
    const std::size_t n = numel(s);
    return Tensor(std::move(s), Buffer(n, 0.0), grad);
  }
  static Tensor filled(Shape s, double v, bool grad = false) {
    const std::size_t n = numel(s);
    return Tensor(std::move(s), Buffer(n, v), grad);
  }
  static Tensor scalar(double v, bool grad = false) { return Tensor({}, {v}, grad); }

  std::size_t size() const noexcept { return data.size(); }
  double item() const {
    if (data.size() != 1) throw NotScalar("tensor of shape " + to_string(shape) + " is not a scalar");
    return data.front();
  }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
};

}  // namespace shsnet::ad
