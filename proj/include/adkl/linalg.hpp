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

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <array>

#include "adkl/array.hpp"

namespace adkl {

/// Diagonal jitter tried, in order, after a plain factorization fails.
inline constexpr std::array<double, 4> kJitterLadder = {1e-10, 1e-8, 1e-6, 1e-4};

/// Cholesky factor of a + jitter*I.
struct SpdFactor {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;

  Eigen::MatrixXd lower() const { return llt.matrixL(); }
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const { return llt.solve(b); }
  double logdet() const;
};

/// Throws DimensionError for non-square input, ContractError for a
/// visibly asymmetric one, FactorizationError once the ladder is exhausted.
SpdFactor factorize_spd(const MatrixView& a);

}  // namespace adkl
