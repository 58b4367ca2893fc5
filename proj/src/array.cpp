// Copyright 2026 The flowfill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "flowfill/array.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

namespace flowfill {

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

ShapeError::ShapeError(const std::string& op, const Shape& a, const Shape& b)
    : std::invalid_argument(op + ": shape mismatch " + shape_string(a) +
                            " vs " + shape_string(b)) {}

ShapeError::ShapeError(const std::string& op, const std::string& detail)
    : std::invalid_argument(op + ": " + detail) {}

Array::Array(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Array::Array(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("Array", "shape " + shape_string(shape_) + " holds " +
                                  std::to_string(shape_size(shape_)) +
                                  " values, got " +
                                  std::to_string(data_.size()));
  }
}

Array Array::scalar(double value) { return Array(Shape{}, {value}); }

Array Array::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Array(Shape{n}, std::move(values));
}

Array Array::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Array::matrix", "ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Array(Shape{r, c}, std::move(data));
}

std::size_t Array::rows() const {
  if (rank() != 2) throw ShapeError("rows", "expected rank 2, got " + shape_string(shape_));
  return shape_[0];
}

std::size_t Array::cols() const {
  if (rank() != 2) throw ShapeError("cols", "expected rank 2, got " + shape_string(shape_));
  return shape_[1];
}

std::span<double> Array::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

std::span<const double> Array::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

double Array::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item", "expected one element, got " + shape_string(shape_));
  }
  return data_[0];
}

Array Array::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) throw ShapeError("reshape", shape_, shape);
  return Array(std::move(shape), data_);
}

bool Array::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

bool bitwise_equal(const Array& a, const Array& b) {
  return a.shape() == b.shape() &&
         (a.size() == 0 ||
          std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0);
}

void require_same_shape(const std::string& op, const Array& a, const Array& b) {
  if (a.shape() != b.shape()) throw ShapeError(op, a.shape(), b.shape());
}

double max_abs_diff(const Array& a, const Array& b) {
  require_same_shape("max_abs_diff", a, b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double l2_norm(const Array& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

Array operator+(const Array& a, const Array& b) {
  require_same_shape("add", a, b);
  Array out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Array operator-(const Array& a, const Array& b) {
  require_same_shape("sub", a, b);
  Array out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Array operator*(double s, const Array& a) {
  Array out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

Array& axpy_inplace(Array& y, double alpha, const Array& x) {
  require_same_shape("axpy", y, x);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
  return y;
}

}  // namespace flowfill
