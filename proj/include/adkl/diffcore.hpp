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

// Reverse-mode differentiation over dense Arrays.
//
// A Tape records every primitive as it is evaluated (eager forward). Calling
// backward() on a scalar node sweeps the record in exact reverse order and
// accumulates gradients into the ParamSet entries that were bound with
// Tape::param(). A Tape is confined to one thread; independent Tapes may run
// concurrently as long as they bind disjoint ParamSets for backward.

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adkl/array.hpp"
#include "adkl/param_set.hpp"

namespace adkl {

class Tape;

/// Handle to one node of a Tape.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const;
  std::size_t id() const noexcept { return id_; }
  const Array& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double item() const { return value().item(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the upstream gradient of the node being swept.
  using Backward = std::function<void(Tape&, const Array& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Array value);
  /// Leaf bound to a named parameter. Repeated calls with the same set and
  /// name return the same node, so shared weights are a single leaf.
  Var param(ParamSet& params, const std::string& name);
  /// Read-only binding: gradients are computed but never written back.
  Var param(const ParamSet& params, const std::string& name);

  const Array& value(const Var& v) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Reverse sweep from a scalar node. Gradients of bound (mutable)
  /// parameters are added to ParamSet::grad; parameters the loss does not
  /// depend on receive nothing. A tape can be swept once.
  void backward(const Var& loss);
  /// Gradient of the loss w.r.t. a node after backward(); zeros if unreached.
  Array grad(const Var& v) const;

  std::size_t size() const noexcept { return nodes_.size(); }

  // Op authoring interface.
  Var record(Array value, std::vector<std::size_t> inputs, Backward backward, const char* op);
  /// Zero-initialised on first access.
  MutableMatrixView grad_view(std::size_t id);

 private:
  struct Node {
    Array value;
    const Array* external = nullptr;
    Param* param = nullptr;
    Array grad;
    bool has_grad = false;
    bool requires_grad = false;
    Backward backward;
  };

  Var bind(const ParamSet* set, Param* mutable_param, const Param& param, const std::string& name);

  std::deque<Node> nodes_;
  std::map<std::pair<const ParamSet*, std::string>, std::size_t> param_ids_;
  bool swept_ = false;
};

// ---------------------------------------------------------------------------
// Primitive operations. All inputs must live on the same tape.

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

enum class UnaryOp { exp, log, tanh, relu, square, sqrt_eps };
enum class BinaryOp { add, sub, mul };

/// Pointwise op. sqrt_eps computes sqrt(v + eps); log of a nonpositive value
/// and sqrt of a negative shifted value raise DomainError.
Var elementwise(UnaryOp op, const Var& a, double eps = 1e-8);
/// Equal shapes, or one operand holding a single value (scalar broadcast).
Var elementwise(BinaryOp op, const Var& a, const Var& b);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var exp(const Var& a);
Var log(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
Var square(const Var& a);
Var sqrt_eps(const Var& a, double eps = 1e-8);
Var scale(const Var& a, double c);
Var shift(const Var& a, double c);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

/// x[n x d] plus a bias row [1 x d] (or [d]) added to every row.
Var add_bias(const Var& x, const Var& bias);
/// Repeats a single row n times.
Var repeat_rows(const Var& row, std::size_t n);

/// Juxtaposition along axis 0 (rows) or 1 (columns).
Var concat(const Var& a, const Var& b, std::size_t axis);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& a, std::size_t begin, std::size_t count);
Var gather_rows(const Var& a, std::vector<std::size_t> indices);

struct MeanStd {
  Var mean;
  Var std;
};
/// Per-column mean and sqrt(biased variance + eps) over the rows of a set.
MeanStd reduce_mean_std(const Var& set, double eps = 1e-8);

Var sum(const Var& a);
Var mean(const Var& a);
/// [n x d] -> [n x 1]
Var row_sum(const Var& a);
/// Diagonal of a square matrix as [n x 1].
Var diag_part(const Var& a);
Var add_diag(const Var& a, double c);
/// (a + aT) / 2
Var symmetrize(const Var& a);

/// Lower-triangular L with L*LT = a, using the jitter ladder on failure.
Var cholesky(const Var& a);
/// x with a*x = b for symmetric positive definite a.
Var solve_spd(const Var& a, const Var& b);
/// log det a = 2 * sum(log diag(L)).
Var logdet_spd(const Var& a);

/// D[i,j] = ||a_i - b_j||^2 for rows of a [m x d] and b [n x d].
Var sqdist(const Var& a, const Var& b);
/// K[i,j] / sqrt(max(da[i] * db[j], floor)).
Var normalize_gram(const Var& k, const Var& diag_rows, const Var& diag_cols, double floor);
/// log of the sum of exp(a) over entries where mask != 0. Numerically stable.
Var logsumexp(const Var& a, const Array& mask);

/// Unfolds a sequence [L x C] into [L x k*C] windows with zero "same"
/// padding, so that a 1-D convolution is im2col(x) * W.
Var im2col(const Var& x, std::size_t kernel);
/// Column-wise maximum over rows: [n x d] -> [1 x d].
Var max_rows(const Var& a);

}  // namespace adkl
