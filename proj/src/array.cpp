// Copyright 2026 The ADKL Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "adkl/array.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "adkl/errors.hpp"

namespace adkl {

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
  out << ']';
  return out.str();
}

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

Array::Array() : data_{0.0} {}

Array::Array(Shape shape, const std::vector<double>& data)
    : Array(from_storage(std::move(shape), Storage(data.begin(), data.end()))) {}

Array Array::from_storage(Shape shape, Storage data) {
  Array a = unchecked(std::move(shape), std::move(data));
  a.validate();
  return a;
}

void Array::validate() const {
  if (shape_.size() > 2) throw DimensionError("arrays of rank > 2 are not supported");
  if (shape_product(shape_) != data_.size()) {
    throw DimensionError("shape " + to_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
  if (!all_finite()) throw NumericalError("non-finite value in array of shape " + to_string(shape_));
}

Array Array::unchecked(Shape shape, Storage data) {
  Array a;
  a.shape_ = std::move(shape);
  a.data_ = std::move(data);
  return a;
}

Array Array::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Array Array::filled(Shape shape, double value) {
  const auto n = shape_product(shape);
  return from_storage(std::move(shape), Storage(n, value));
}

Array Array::scalar(double value) { return from_storage({}, Storage{value}); }

Array Array::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Array({rows, cols}, std::move(data));
}

Array Array::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Array({r, c}, std::move(data));
}

Array Array::column(std::vector<double> values) {
  const auto n = values.size();
  return Array({n, 1}, std::move(values));
}

Array Array::row(std::vector<double> values) {
  const auto n = values.size();
  return Array({1, n}, std::move(values));
}

Array Array::from_matrix(const RowMatrix& m) {
  Storage data(m.data(), m.data() + m.size());
  return from_storage({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                      std::move(data));
}

std::size_t Array::rows() const noexcept {
  if (shape_.empty()) return 1;
  return shape_[0];
}

std::size_t Array::cols() const noexcept {
  if (shape_.size() < 2) return 1;
  return shape_[1];
}

double Array::item() const {
  if (data_.size() != 1) throw DimensionError("item() on array of shape " + to_string(shape_));
  return data_[0];
}

bool Array::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Array Array::reshaped(Shape shape) const {
  if (shape_product(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return unchecked(std::move(shape), data_);
}

double max_abs_diff(const Array& a, const Array& b) {
  if (a.size() != b.size()) throw DimensionError("max_abs_diff size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace adkl
