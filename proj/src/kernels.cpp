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

#include "adkl/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "adkl/errors.hpp"

namespace adkl {

std::string_view to_string(KernelFamily f) {
  return f == KernelFamily::linear ? "linear" : "rbf";
}

std::optional<KernelFamily> parse_kernel_family(std::string_view s) {
  if (s == "linear") return KernelFamily::linear;
  if (s == "rbf") return KernelFamily::rbf;
  return std::nullopt;
}

void add_kernel_params(const KernelSpec& spec, ParamSet& params) {
  if (spec.family == KernelFamily::rbf) params.add(kLogLengthscale, ParamGroup::rho, Array::scalar(0.0));
}

Kernel::Kernel(KernelSpec spec, Var log_lengthscale)
    : spec_(spec), log_lengthscale_(log_lengthscale) {
  if (spec_.family == KernelFamily::rbf && !log_lengthscale_.valid()) {
    throw ContractError("rbf kernel needs a bound log length-scale");
  }
}

Var Kernel::raw_gram(const Var& rows, const Var& cols) const {
  if (rows.cols() != cols.cols()) {
    throw DimensionError("kernel inputs differ in embedding dimension: " +
                         std::to_string(rows.cols()) + " vs " + std::to_string(cols.cols()));
  }
  if (spec_.family == KernelFamily::linear) return matmul(rows, transpose(cols));
  // exp(-||a - b||^2 / (2 l^2)),  -1 / (2 l^2) = -0.5 * exp(-2 log l)
  Var coeff = scale(exp(scale(log_lengthscale_, -2.0)), -0.5);
  return exp(mul(sqdist(rows, cols), coeff));
}

Var Kernel::self_similarity(const Var& points) const {
  if (spec_.family == KernelFamily::linear) return row_sum(square(points));
  return points.tape().constant(Array::filled({points.rows(), 1}, 1.0));
}

Var Kernel::prior_variance(const Var& points) const {
  if (spec_.normalized) return points.tape().constant(Array::filled({points.rows(), 1}, 1.0));
  return self_similarity(points);
}

GramMatrix Kernel::gram(const Var& rows, const Var& cols, bool square) const {
  Var k = raw_gram(rows, cols);
  if (spec_.normalized) {
    Var dr = self_similarity(rows);
    Var dc = square ? dr : self_similarity(cols);
    k = normalize_gram(k, dr, dc, kNormalizeFloor);
  }
  return GramMatrix{k, square};
}

Var Kernel::eval(const Var& a, const Var& b) const {
  // A rank-1 [d] array is a d x 1 column; its transpose is the [1 x d] row.
  auto as_row = [](const Var& v) { return v.value().rank() == 2 ? v : transpose(v); };
  Var ra = as_row(a), rb = as_row(b);
  if (ra.rows() != 1 || rb.rows() != 1) throw DimensionError("kernel eval expects single points");
  return sum(gram(ra, rb).values);
}

double normalize(double k_ab, double k_aa, double k_bb, double floor) {
  return k_ab / std::sqrt(std::max(k_aa * k_bb, floor));
}

}  // namespace adkl
