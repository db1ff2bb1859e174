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

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace adkl {

using Shape = std::vector<std::size_t>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<const RowMatrix>;
using MutableMatrixView = Eigen::Map<RowMatrix>;
/// Aligned so Eigen's vectorized reductions split work the same way on every
/// run; with plain malloc alignment the summation order (and the last bits of
/// the result) depends on the buffer address.
using Storage = std::vector<double, Eigen::aligned_allocator<double>>;

std::string to_string(const Shape& shape);

/// Dense row-major tensor of doubles.
///
/// Rank 0 is a scalar, rank 1 of extent n is viewed as an n x 1 column for
/// matrix purposes, rank 2 is a matrix. Values are checked finite whenever an
/// Array is built from external data or produced by an operation.
class Array {
 public:
  /// Scalar zero.
  Array();
  Array(Shape shape, const std::vector<double>& data);
  /// Validating constructor over already-aligned storage.
  static Array from_storage(Shape shape, Storage data);

  static Array zeros(Shape shape);
  static Array scalar(double value);
  static Array filled(Shape shape, double value);
  /// Row-major rows x cols matrix.
  static Array matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Array matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Array column(std::vector<double> values);
  static Array row(std::vector<double> values);
  static Array from_matrix(const RowMatrix& m);
  /// Skips the finiteness check; only for buffers known to be finite.
  static Array unchecked(Shape shape, Storage data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;
  bool is_scalar() const noexcept { return data_.size() == 1; }

  double item() const;
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  std::vector<double> values() const { return {data_.begin(), data_.end()}; }

  MatrixView view() const { return MatrixView(data_.data(), rows(), cols()); }
  MutableMatrixView view() { return MutableMatrixView(data_.data(), rows(), cols()); }
  RowMatrix to_matrix() const { return view(); }

  bool all_finite() const noexcept;
  /// Same data, different shape of equal element count.
  Array reshaped(Shape shape) const;

  friend bool operator==(const Array& a, const Array& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void validate() const;

  Shape shape_;
  Storage data_;
};

std::size_t shape_product(const Shape& shape);

/// Largest absolute elementwise difference; shapes must have equal size.
double max_abs_diff(const Array& a, const Array& b);

}  // namespace adkl
