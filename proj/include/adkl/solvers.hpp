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

// Closed-form task-level regressors on top of a Gram matrix.
//
// Both heads share alpha = (K_trn,trn + lambda I)^-1 y_trn with lambda fixed to
// 1 / |support|. KRR scores the query set by squared error, GP by the negative
// log density of the query targets under the posterior predictive.

#pragma once

#include <optional>
#include <string_view>

#include "adkl/kernels.hpp"

namespace adkl {

enum class SolverKind { krr, gp };

std::string_view to_string(SolverKind s);
std::optional<SolverKind> parse_solver(std::string_view s);

/// 1 / m.
double default_lambda(std::size_t support_size);

struct TaskSolution {
  Var alpha;  // [m x 1]
  double lambda = 0.0;
  std::size_t support_size = 0;
};

struct GPPrediction {
  Var mean;        // [n x 1]
  Var covariance;  // [n x n], symmetrized
};

/// `lambda` overrides 1/m; only tests and diagnostics pass it.
TaskSolution krr_fit(const GramMatrix& gram_trn, const Var& y_trn,
                     std::optional<double> lambda = std::nullopt);
Var krr_predict(const TaskSolution& sol, const GramMatrix& gram_cross);
/// Mean squared error; empty query sets are a ContractError.
Var mean_squared_error(const Var& predictions, const Var& targets);
Var krr_task_loss(const TaskSolution& sol, const GramMatrix& gram_cross, const Var& y_val);

GPPrediction gp_predict(const GramMatrix& gram_trn, const GramMatrix& gram_cross,
                        const GramMatrix& gram_val, const Var& y_trn,
                        std::optional<double> lambda = std::nullopt);
/// 0.5 * [r^T C^-1 r + log det C + n log 2 pi] with r = y - mean.
Var gp_task_loss(const GPPrediction& pred, const Var& y_val);

/// Diagonal of the posterior covariance, k(x,x) - k_x^T (K + lambda I)^-1 k_x,
/// for points whose cross-gram is `gram_cross` and self-similarity `self_sim`.
Var gp_predictive_variance(const GramMatrix& gram_trn, const GramMatrix& gram_cross,
                           const Var& self_sim, std::optional<double> lambda = std::nullopt);

}  // namespace adkl
