#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "vmp/error.hpp"

namespace vmp::nn {

// Dense row-major tensor of 64-bit reals. Rank 1 or 2 in practice; the
// graph ops below require rank 2.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != element_count()) throw ValueError("tensor: value count does not match shape");
  }

  static Tensor zeros(std::vector<std::size_t> s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return Tensor{std::move(s), std::vector<double>(n, 0.0)};
  }
  static Tensor scalar(double v) { return Tensor{{1, 1}, {v}}; }
  static Tensor row(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor{{1, n}, std::move(v)};
  }
  static Tensor matrix(std::size_t r, std::size_t c, std::vector<double> v) {
    return Tensor{{r, c}, std::move(v)};
  }

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }

  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

}  // namespace vmp::nn
