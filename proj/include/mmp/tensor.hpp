/*
 * Copyright 2026 The MMP Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mmp/errors.hpp"

namespace mmp {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major array of doubles with rank 0..3.
///
/// Rank 0 is a scalar holding one element. Tensors are plain values: copying
/// copies the buffer, and nothing about gradients lives here (see Tape).
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    check_rank();
    data_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_rank();
    if (shape_size(shape_) != data_.size()) {
      throw DimensionError("tensor shape " + shape_str(shape_) + " does not match " +
                           std::to_string(data_.size()) + " values");
    }
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }

  /// Builds a matrix from nested rows: `Tensor::matrix({{1, 2}, {3, 4}})`.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(data));
  }

  static Tensor identity(std::size_t n) {
    Tensor t(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t extent(std::size_t axis) const {
    if (axis >= shape_.size()) throw DimensionError("axis out of range for " + shape_str(shape_));
    return shape_[axis];
  }
  /// Extent of the last axis (1 for scalars).
  std::size_t cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }
  /// Extent of the second-to-last axis (1 for rank < 2).
  std::size_t rows() const noexcept { return shape_.size() < 2 ? 1 : shape_[shape_.size() - 2]; }
  /// Product of all leading extents before the last two (1 for rank < 3).
  std::size_t batch() const noexcept { return shape_.size() < 3 ? 1 : shape_[0]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_.back() + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_.back() + j]; }

  double& operator()(std::size_t b, std::size_t i, std::size_t j) {
    return data_[(b * shape_[1] + i) * shape_[2] + j];
  }
  double operator()(std::size_t b, std::size_t i, std::size_t j) const {
    return data_[(b * shape_[1] + i) * shape_[2] + j];
  }

  double item() const {
    if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
  }

  /// Same buffer, new extents. Element count must be preserved.
  Tensor reshaped(Shape shape) const {
    Tensor t = *this;
    if (shape_size(shape) != t.data_.size()) {
      throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    t.shape_ = std::move(shape);
    t.check_rank();
    return t;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_rank() const {
    if (shape_.size() > 3) throw DimensionError("rank above 3 is unsupported: " + shape_str(shape_));
  }

  Shape shape_;
  std::vector<double> data_;
};

/// Largest absolute elementwise difference; shapes must agree.
inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Bitwise comparison of payloads (distinguishes +0/-0 and NaN payloads).
inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::equal(a.data().begin(), a.data().end(), b.data().begin(), [](double x, double y) {
    return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
  });
}

}  // namespace mmp
