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

#include "adkl/solvers.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "adkl/errors.hpp"

namespace adkl {

std::string_view to_string(SolverKind s) { return s == SolverKind::krr ? "krr" : "gp"; }

std::optional<SolverKind> parse_solver(std::string_view s) {
  if (s == "krr") return SolverKind::krr;
  if (s == "gp") return SolverKind::gp;
  return std::nullopt;
}

double default_lambda(std::size_t support_size) {
  if (support_size == 0) throw ContractError("empty support set");
  return 1.0 / static_cast<double>(support_size);
}

namespace {

void check_square(const GramMatrix& g, const char* what) {
  if (!g.square || g.values.rows() != g.values.cols()) {
    throw ContractError(std::string(what) + " must be a square gram of the support set");
  }
}

Var regularized(const GramMatrix& gram_trn, double lambda) {
  return add_diag(gram_trn.values, lambda);
}

}  // namespace

TaskSolution krr_fit(const GramMatrix& gram_trn, const Var& y_trn, std::optional<double> lambda) {
  check_square(gram_trn, "krr_fit gram");
  const std::size_t m = gram_trn.values.rows();
  if (m == 0) throw ContractError("krr_fit needs at least one support point");
  if (y_trn.rows() != m || y_trn.cols() != 1) {
    throw DimensionError("krr_fit targets must be [" + std::to_string(m) + " x 1]");
  }
  const double lam = lambda.value_or(default_lambda(m));
  return TaskSolution{solve_spd(regularized(gram_trn, lam), y_trn), lam, m};
}

Var krr_predict(const TaskSolution& sol, const GramMatrix& gram_cross) {
  if (gram_cross.values.cols() != sol.support_size) {
    throw DimensionError("cross gram has " + std::to_string(gram_cross.values.cols()) +
                         " columns for " + std::to_string(sol.support_size) + " support points");
  }
  return matmul(gram_cross.values, sol.alpha);
}

Var mean_squared_error(const Var& predictions, const Var& targets) {
  if (targets.value().size() == 0) throw ContractError("empty query set");
  if (predictions.value().size() != targets.value().size()) {
    throw DimensionError("predictions and targets differ in length");
  }
  return mean(square(sub(predictions, targets)));
}

Var krr_task_loss(const TaskSolution& sol, const GramMatrix& gram_cross, const Var& y_val) {
  if (y_val.value().size() == 0) throw ContractError("empty query set");
  return mean_squared_error(krr_predict(sol, gram_cross), y_val);
}

GPPrediction gp_predict(const GramMatrix& gram_trn, const GramMatrix& gram_cross,
                        const GramMatrix& gram_val, const Var& y_trn, std::optional<double> lambda) {
  check_square(gram_trn, "gp_predict train gram");
  check_square(gram_val, "gp_predict query gram");
  const std::size_t m = gram_trn.values.rows();
  const std::size_t n = gram_val.values.rows();
  if (gram_cross.values.rows() != n || gram_cross.values.cols() != m) {
    throw DimensionError("gp_predict cross gram must be [" + std::to_string(n) + " x " +
                         std::to_string(m) + "]");
  }
  if (y_trn.rows() != m) throw DimensionError("gp_predict targets do not match support size");
  const double lam = lambda.value_or(default_lambda(m));
  Var a = regularized(gram_trn, lam);
  Var mean = matmul(gram_cross.values, solve_spd(a, y_trn));
  Var reduction = matmul(gram_cross.values, solve_spd(a, transpose(gram_cross.values)));
  Var cov = symmetrize(sub(gram_val.values, reduction));
  return GPPrediction{mean, cov};
}

Var gp_task_loss(const GPPrediction& pred, const Var& y_val) {
  const std::size_t n = pred.mean.rows();
  if (n == 0) throw ContractError("empty query set");
  if (y_val.rows() != n) throw DimensionError("gp_task_loss targets do not match prediction");
  Var r = sub(y_val, pred.mean);
  Var quad = sum(mul(r, solve_spd(pred.covariance, r)));
  Var logdet = logdet_spd(pred.covariance);
  const double norm_const = static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  return scale(shift(add(quad, logdet), norm_const), 0.5);
}

Var gp_predictive_variance(const GramMatrix& gram_trn, const GramMatrix& gram_cross,
                           const Var& self_sim, std::optional<double> lambda) {
  check_square(gram_trn, "gp_predictive_variance gram");
  const std::size_t m = gram_trn.values.rows();
  if (gram_cross.values.cols() != m || self_sim.rows() != gram_cross.values.rows()) {
    throw DimensionError("gp_predictive_variance shapes disagree");
  }
  const double lam = lambda.value_or(default_lambda(m));
  Var w = solve_spd(regularized(gram_trn, lam), transpose(gram_cross.values));  // [m x n]
  Var reduction = row_sum(mul(gram_cross.values, transpose(w)));
  return sub(self_sim, reduction);
}

}  // namespace adkl
