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

#include "adkl/linalg.hpp"

#include <cmath>
#include <string>

#include "adkl/errors.hpp"

namespace adkl {

namespace {

bool factor_ok(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  if (llt.info() != Eigen::Success) return false;
  const auto& lu = llt.matrixLLT();
  for (Eigen::Index i = 0; i < lu.rows(); ++i) {
    const double d = lu(i, i);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
  }
  return true;
}

}  // namespace

double SpdFactor::logdet() const {
  const auto& lu = llt.matrixLLT();
  double s = 0.0;
  for (Eigen::Index i = 0; i < lu.rows(); ++i) s += std::log(lu(i, i));
  return 2.0 * s;
}

SpdFactor factorize_spd(const MatrixView& a) {
  if (a.rows() != a.cols()) {
    throw DimensionError("expected a square matrix, got " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()));
  }
  if (a.rows() == 0) throw DimensionError("cannot factorize an empty matrix");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw ContractError("matrix is not symmetric");
  }

  SpdFactor f;
  Eigen::MatrixXd m = a;
  f.llt.compute(m);
  if (factor_ok(f.llt)) return f;
  for (double j : kJitterLadder) {
    Eigen::MatrixXd shifted = m;
    shifted.diagonal().array() += j;
    f.llt.compute(shifted);
    if (factor_ok(f.llt)) {
      f.jitter = j;
      return f;
    }
  }
  throw FactorizationError("matrix of order " + std::to_string(a.rows()) +
                           " is not positive definite after jitter " +
                           std::to_string(kJitterLadder.back()));
}

}  // namespace adkl
