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

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "adkl/diffcore.hpp"
#include "adkl/errors.hpp"
#include "adkl/linalg.hpp"

namespace adkl {

namespace {

Tape& same_tape(const Var& a, const Var& b) {
  Tape& t = a.tape();
  if (&b.tape() != &t) throw ContractError("operands live on different tapes");
  return t;
}

Array blank(Shape shape) {
  const auto n = shape_product(shape);
  return Array::unchecked(std::move(shape), Storage(n, 0.0));
}

Array blank(std::size_t rows, std::size_t cols) { return blank(Shape{rows, cols}); }

std::string dims(const Array& a) { return to_string(a.shape()); }

}  // namespace

// ---------------------------------------------------------------------------
// Linear algebra on dense matrices.

Var matmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul inner extents differ: " + dims(av) + " x " + dims(bv));
  }
  Array out = blank(av.rows(), bv.cols());
  out.view().noalias() = av.view() * bv.view();
  return t.record(std::move(out), {a.id(), b.id()},
                  [a, b](Tape& t, const Array& g) {
                    if (t.requires_grad(a.id())) {
                      t.grad_view(a.id()).noalias() += g.view() * b.value().view().transpose();
                    }
                    if (t.requires_grad(b.id())) {
                      t.grad_view(b.id()).noalias() += a.value().view().transpose() * g.view();
                    }
                  },
                  "matmul");
}

Var transpose(const Var& a) {
  Tape& t = a.tape();
  const Array& av = a.value();
  Array out = blank(av.cols(), av.rows());
  out.view() = av.view().transpose();
  return t.record(std::move(out), {a.id()},
                  [a](Tape& t, const Array& g) { t.grad_view(a.id()) += g.view().transpose(); },
                  "transpose");
}

// ---------------------------------------------------------------------------
// Pointwise.

Var elementwise(UnaryOp op, const Var& a, double eps) {
  Tape& t = a.tape();
  const Array& av = a.value();
  Array out = blank(av.shape());
  const std::size_t n = av.size();
  const char* name = "elementwise";
  switch (op) {
    case UnaryOp::exp:
      name = "exp";
      for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(av[i]);
      break;
    case UnaryOp::log:
      name = "log";
      for (std::size_t i = 0; i < n; ++i) {
        if (!(av[i] > 0.0)) throw DomainError("log of nonpositive value " + std::to_string(av[i]));
        out[i] = std::log(av[i]);
      }
      break;
    case UnaryOp::tanh:
      name = "tanh";
      for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(av[i]);
      break;
    case UnaryOp::relu:
      name = "relu";
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
      break;
    case UnaryOp::square:
      name = "square";
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * av[i];
      break;
    case UnaryOp::sqrt_eps:
      name = "sqrt_eps";
      for (std::size_t i = 0; i < n; ++i) {
        const double s = av[i] + eps;
        if (s < 0.0) throw DomainError("sqrt of negative value " + std::to_string(s));
        out[i] = std::sqrt(s);
      }
      break;
  }
  // The output is needed by several of the derivatives; keep a copy so the
  // closure does not depend on the node it is attached to.
  auto y = std::make_shared<Array>(out);
  return t.record(std::move(out), {a.id()},
                  [a, op, y](Tape& t, const Array& g) {
                    const Array& x = a.value();
                    auto dst = t.grad_view(a.id());
                    double* d = dst.data();
                    const std::size_t n = x.size();
                    switch (op) {
                      case UnaryOp::exp:
                        for (std::size_t i = 0; i < n; ++i) d[i] += g[i] * (*y)[i];
                        break;
                      case UnaryOp::log:
                        for (std::size_t i = 0; i < n; ++i) d[i] += g[i] / x[i];
                        break;
                      case UnaryOp::tanh:
                        for (std::size_t i = 0; i < n; ++i) {
                          d[i] += g[i] * (1.0 - (*y)[i] * (*y)[i]);
                        }
                        break;
                      case UnaryOp::relu:
                        for (std::size_t i = 0; i < n; ++i) {
                          if (x[i] > 0.0) d[i] += g[i];
                        }
                        break;
                      case UnaryOp::square:
                        for (std::size_t i = 0; i < n; ++i) d[i] += 2.0 * x[i] * g[i];
                        break;
                      case UnaryOp::sqrt_eps:
                        for (std::size_t i = 0; i < n; ++i) d[i] += g[i] * 0.5 / (*y)[i];
                        break;
                    }
                  },
                  name);
}

Var elementwise(BinaryOp op, const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  // 0: equal shapes, 1: b broadcast, 2: a broadcast
  int mode;
  if (av.shape() == bv.shape() || (av.size() == 1 && bv.size() == 1)) {
    mode = 0;
  } else if (bv.size() == 1) {
    mode = 1;
  } else if (av.size() == 1) {
    mode = 2;
  } else {
    throw DimensionError("elementwise operands differ: " + dims(av) + " vs " + dims(bv));
  }
  const Array& big = mode == 2 ? bv : av;
  Array out = blank(big.shape());
  const std::size_t n = out.size();
  auto lhs = [&](std::size_t i) { return mode == 2 ? av[0] : av[i]; };
  auto rhs = [&](std::size_t i) { return mode == 1 ? bv[0] : bv[i]; };
  for (std::size_t i = 0; i < n; ++i) {
    switch (op) {
      case BinaryOp::add: out[i] = lhs(i) + rhs(i); break;
      case BinaryOp::sub: out[i] = lhs(i) - rhs(i); break;
      case BinaryOp::mul: out[i] = lhs(i) * rhs(i); break;
    }
  }
  const char* name = op == BinaryOp::add ? "add" : op == BinaryOp::sub ? "sub" : "mul";
  return t.record(std::move(out), {a.id(), b.id()},
                  [a, b, op, mode](Tape& t, const Array& g) {
                    const Array& av = a.value();
                    const Array& bv = b.value();
                    const std::size_t n = g.size();
                    auto lhs = [&](std::size_t i) { return mode == 2 ? av[0] : av[i]; };
                    auto rhs = [&](std::size_t i) { return mode == 1 ? bv[0] : bv[i]; };
                    if (t.requires_grad(a.id())) {
                      double* d = t.grad_view(a.id()).data();
                      for (std::size_t i = 0; i < n; ++i) {
                        const double gi = op == BinaryOp::mul ? g[i] * rhs(i) : g[i];
                        d[mode == 2 ? 0 : i] += gi;
                      }
                    }
                    if (t.requires_grad(b.id())) {
                      double* d = t.grad_view(b.id()).data();
                      for (std::size_t i = 0; i < n; ++i) {
                        const double gi = op == BinaryOp::mul   ? g[i] * lhs(i)
                                          : op == BinaryOp::sub ? -g[i]
                                                                : g[i];
                        d[mode == 1 ? 0 : i] += gi;
                      }
                    }
                  },
                  name);
}

Var add(const Var& a, const Var& b) { return elementwise(BinaryOp::add, a, b); }
Var sub(const Var& a, const Var& b) { return elementwise(BinaryOp::sub, a, b); }
Var mul(const Var& a, const Var& b) { return elementwise(BinaryOp::mul, a, b); }
Var exp(const Var& a) { return elementwise(UnaryOp::exp, a); }
Var log(const Var& a) { return elementwise(UnaryOp::log, a); }
Var tanh(const Var& a) { return elementwise(UnaryOp::tanh, a); }
Var relu(const Var& a) { return elementwise(UnaryOp::relu, a); }
Var square(const Var& a) { return elementwise(UnaryOp::square, a); }
Var sqrt_eps(const Var& a, double eps) { return elementwise(UnaryOp::sqrt_eps, a, eps); }

Var scale(const Var& a, double c) {
  Tape& t = a.tape();
  const Array& av = a.value();
  Array out = blank(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = c * av[i];
  return t.record(std::move(out), {a.id()},
                  [a, c](Tape& t, const Array& g) { t.grad_view(a.id()) += c * g.view(); },
                  "scale");
}

Var shift(const Var& a, double c) {
  Tape& t = a.tape();
  const Array& av = a.value();
  Array out = blank(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + c;
  return t.record(std::move(out), {a.id()},
                  [a](Tape& t, const Array& g) { t.grad_view(a.id()) += g.view(); }, "shift");
}

Var add_bias(const Var& x, const Var& bias) {
  Tape& t = same_tape(x, bias);
  const Array& xv = x.value();
  const Array& bv = bias.value();
  if (bv.size() != xv.cols()) {
    throw DimensionError("bias of shape " + dims(bv) + " for input " + dims(xv));
  }
  Array out = blank(xv.rows(), xv.cols());
  auto bias_row = Eigen::Map<const Eigen::RowVectorXd>(bv.data().data(), bv.size());
  out.view() = xv.view().rowwise() + bias_row;
  return t.record(std::move(out), {x.id(), bias.id()},
                  [x, bias](Tape& t, const Array& g) {
                    if (t.requires_grad(x.id())) t.grad_view(x.id()) += g.view();
                    if (t.requires_grad(bias.id())) {
                      auto d = t.grad_view(bias.id());
                      Eigen::Map<Eigen::RowVectorXd>(d.data(), d.size()) +=
                          g.view().colwise().sum();
                    }
                  },
                  "add_bias");
}

Var repeat_rows(const Var& row, std::size_t n) {
  Tape& t = row.tape();
  const Array& rv = row.value();
  const std::size_t d = rv.size();
  Array out = blank(n, d);
  for (std::size_t i = 0; i < n; ++i) std::copy(rv.data().begin(), rv.data().end(), &out(i, 0));
  return t.record(std::move(out), {row.id()},
                  [row, d](Tape& t, const Array& g) {
                    auto dst = t.grad_view(row.id());
                    Eigen::Map<Eigen::RowVectorXd>(dst.data(), d) += g.view().colwise().sum();
                  },
                  "repeat_rows");
}

// ---------------------------------------------------------------------------
// Structural.

Var concat(const Var& a, const Var& b, std::size_t axis) {
  Tape& t = same_tape(a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  if (axis > 1) throw DimensionError("concat axis must be 0 or 1");
  Array out;
  if (axis == 0) {
    if (av.cols() != bv.cols()) {
      throw DimensionError("concat rows: column extents differ " + dims(av) + " vs " + dims(bv));
    }
    const bool vector = av.rank() <= 1 && bv.rank() <= 1;
    Shape shape = vector ? Shape{av.size() + bv.size()} : Shape{av.rows() + bv.rows(), av.cols()};
    out = blank(std::move(shape));
    std::copy(av.data().begin(), av.data().end(), out.data().begin());
    std::copy(bv.data().begin(), bv.data().end(), out.data().begin() + av.size());
  } else {
    if (av.rows() != bv.rows()) {
      throw DimensionError("concat columns: row extents differ " + dims(av) + " vs " + dims(bv));
    }
    out = blank(av.rows(), av.cols() + bv.cols());
    auto o = out.view();
    o.leftCols(av.cols()) = av.view();
    o.rightCols(bv.cols()) = bv.view();
  }
  return t.record(std::move(out), {a.id(), b.id()},
                  [a, b, axis](Tape& t, const Array& g) {
                    const std::size_t ar = a.value().rows(), ac = a.value().cols();
                    const std::size_t br = b.value().rows(), bc = b.value().cols();
                    if (axis == 0) {
                      const MatrixView gv(g.data().data(), ar + br, ac);
                      if (t.requires_grad(a.id())) t.grad_view(a.id()) += gv.topRows(ar);
                      if (t.requires_grad(b.id())) t.grad_view(b.id()) += gv.bottomRows(br);
                    } else {
                      auto gv = g.view();
                      if (t.requires_grad(a.id())) t.grad_view(a.id()) += gv.leftCols(ac);
                      if (t.requires_grad(b.id())) t.grad_view(b.id()) += gv.rightCols(bc);
                    }
                  },
                  "concat");
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw EmptySetError("concat_rows of no parts");
  Tape& t = parts.front().tape();
  const std::size_t cols = parts.front().value().cols();
  std::size_t rows = 0;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    if (&p.tape() != &t) throw ContractError("operands live on different tapes");
    if (p.value().cols() != cols) throw DimensionError("concat_rows: column extents differ");
    rows += p.value().rows();
    ids.push_back(p.id());
  }
  Array out = blank(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + offset);
    offset += v.size();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return t.record(std::move(out), ids,
                  [keep](Tape& t, const Array& g) {
                    std::size_t offset = 0;
                    for (const auto& p : keep) {
                      const std::size_t n = p.value().size();
                      if (t.requires_grad(p.id())) {
                        double* d = t.grad_view(p.id()).data();
                        for (std::size_t i = 0; i < n; ++i) d[i] += g[offset + i];
                      }
                      offset += n;
                    }
                  },
                  "concat_rows");
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t count) {
  Tape& t = a.tape();
  const Array& av = a.value();
  if (begin + count > av.rows()) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + dims(av));
  }
  const std::size_t cols = av.cols();
  Array out = blank(count, cols);
  std::copy(av.data().begin() + begin * cols, av.data().begin() + (begin + count) * cols,
            out.data().begin());
  return t.record(std::move(out), {a.id()},
                  [a, begin, count](Tape& t, const Array& g) {
                    t.grad_view(a.id()).middleRows(begin, count) += g.view();
                  },
                  "slice_rows");
}

Var gather_rows(const Var& a, std::vector<std::size_t> indices) {
  Tape& t = a.tape();
  const Array& av = a.value();
  const std::size_t cols = av.cols();
  Array out = blank(indices.size(), cols);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= av.rows()) throw DimensionError("gather_rows index out of range");
    std::copy_n(av.data().data() + indices[r] * cols, cols, &out(r, 0));
  }
  return t.record(std::move(out), {a.id()},
                  [a, indices = std::move(indices)](Tape& t, const Array& g) {
                    auto dst = t.grad_view(a.id());
                    auto gv = g.view();
                    for (std::size_t r = 0; r < indices.size(); ++r) {
                      dst.row(indices[r]) += gv.row(r);
                    }
                  },
                  "gather_rows");
}

// ---------------------------------------------------------------------------
// Reductions.

MeanStd reduce_mean_std(const Var& set, double eps) {
  Tape& t = set.tape();
  const Array& x = set.value();
  const std::size_t m = x.rows(), d = x.cols();
  if (m == 0) throw EmptySetError("reduce_mean_std over an empty set");
  Array mu = blank(1, d);
  Array sd = blank(1, d);
  // Two passes: mean, then centred second moment.
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < d; ++j) mu[j] += x(i, j);
  }
  for (std::size_t j = 0; j < d; ++j) mu[j] /= static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x(i, j) - mu[j];
      sd[j] += c * c;
    }
  }
  for (std::size_t j = 0; j < d; ++j) sd[j] = std::sqrt(sd[j] / static_cast<double>(m) + eps);

  Var mean_var = t.record(mu, {set.id()},
                          [set, m, d](Tape& t, const Array& g) {
                            auto dst = t.grad_view(set.id());
                            const double inv = 1.0 / static_cast<double>(m);
                            for (std::size_t i = 0; i < m; ++i) {
                              for (std::size_t j = 0; j < d; ++j) dst(i, j) += g[j] * inv;
                            }
                          },
                          "reduce_mean");
  auto mu_copy = std::make_shared<Array>(mu);
  auto sd_copy = std::make_shared<Array>(sd);
  Var std_var = t.record(std::move(sd), {set.id()},
                         [set, m, d, mu_copy, sd_copy](Tape& t, const Array& g) {
                           const Array& x = set.value();
                           auto dst = t.grad_view(set.id());
                           const double inv = 1.0 / static_cast<double>(m);
                           for (std::size_t i = 0; i < m; ++i) {
                             for (std::size_t j = 0; j < d; ++j) {
                               dst(i, j) += g[j] * (x(i, j) - (*mu_copy)[j]) * inv / (*sd_copy)[j];
                             }
                           }
                         },
                         "reduce_std");
  return {mean_var, std_var};
}

Var sum(const Var& a) {
  Tape& t = a.tape();
  const Array& av = a.value();
  double s = 0.0;
  for (double v : av.data()) s += v;
  return t.record(Array::unchecked({}, Storage{s}), {a.id()},
                  [a](Tape& t, const Array& g) { t.grad_view(a.id()).array() += g[0]; }, "sum");
}

Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw EmptySetError("mean of an empty array");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var row_sum(const Var& a) {
  Tape& t = a.tape();
  const Array& av = a.value();
  Array out = blank(av.rows(), 1);
  out.view() = av.view().rowwise().sum();
  return t.record(std::move(out), {a.id()},
                  [a](Tape& t, const Array& g) {
                    auto dst = t.grad_view(a.id());
                    auto gv = g.view();
                    for (Eigen::Index i = 0; i < dst.rows(); ++i) dst.row(i).array() += gv(i, 0);
                  },
                  "row_sum");
}

Var diag_part(const Var& a) {
  Tape& t = a.tape();
  const Array& av = a.value();
  if (av.rows() != av.cols()) throw DimensionError("diag_part of non-square " + dims(av));
  const std::size_t n = av.rows();
  Array out = blank(n, 1);
  for (std::size_t i = 0; i < n; ++i) out[i] = av(i, i);
  return t.record(std::move(out), {a.id()},
                  [a, n](Tape& t, const Array& g) {
                    auto dst = t.grad_view(a.id());
                    for (std::size_t i = 0; i < n; ++i) dst(i, i) += g[i];
                  },
                  "diag_part");
}

Var add_diag(const Var& a, double c) {
  Tape& t = a.tape();
  const Array& av = a.value();
  if (av.rows() != av.cols()) throw DimensionError("add_diag of non-square " + dims(av));
  Array out = av;
  for (std::size_t i = 0; i < av.rows(); ++i) out(i, i) += c;
  return t.record(std::move(out), {a.id()},
                  [a](Tape& t, const Array& g) { t.grad_view(a.id()) += g.view(); }, "add_diag");
}

Var symmetrize(const Var& a) { return scale(add(a, transpose(a)), 0.5); }

// ---------------------------------------------------------------------------
// Symmetric positive definite routines.

Var cholesky(const Var& a) {
  Tape& t = a.tape();
  auto f = std::make_shared<SpdFactor>(factorize_spd(a.value().view()));
  RowMatrix l = f->lower();
  Array out = Array::from_matrix(l);
  return t.record(std::move(out), {a.id()},
                  [a, f](Tape& t, const Array& g) {
                    const Eigen::MatrixXd lower = f->lower();
                    Eigen::MatrixXd gl = g.view();
                    gl.triangularView<Eigen::StrictlyUpper>().setZero();
                    // P = Phi(L^T Lbar): lower triangle with halved diagonal.
                    Eigen::MatrixXd p = lower.transpose() * gl;
                    p.triangularView<Eigen::StrictlyUpper>().setZero();
                    p.diagonal() *= 0.5;
                    // S = L^-T P L^-1
                    const auto lt = lower.transpose().triangularView<Eigen::Upper>();
                    Eigen::MatrixXd x = lt.solve(p);
                    Eigen::MatrixXd s = lt.solve(Eigen::MatrixXd(x.transpose())).transpose();
                    t.grad_view(a.id()) += 0.5 * (s + s.transpose());
                  },
                  "cholesky");
}

Var solve_spd(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Array& bv = b.value();
  if (bv.rows() != a.value().rows()) {
    throw DimensionError("solve_spd: system " + dims(a.value()) + " with rhs " + dims(bv));
  }
  auto f = std::make_shared<SpdFactor>(factorize_spd(a.value().view()));
  Eigen::MatrixXd rhs = bv.view();
  RowMatrix x = f->solve(rhs);
  Array out = blank(bv.shape());
  out.view() = x;
  auto xs = std::make_shared<RowMatrix>(std::move(x));
  return t.record(std::move(out), {a.id(), b.id()},
                  [a, b, f, xs](Tape& t, const Array& g) {
                    Eigen::MatrixXd gb = f->solve(Eigen::MatrixXd(g.view()));
                    if (t.requires_grad(b.id())) t.grad_view(b.id()) += gb;
                    if (t.requires_grad(a.id())) t.grad_view(a.id()).noalias() -= gb * xs->transpose();
                  },
                  "solve_spd");
}

Var logdet_spd(const Var& a) {
  Tape& t = a.tape();
  auto f = std::make_shared<SpdFactor>(factorize_spd(a.value().view()));
  const double v = f->logdet();
  return t.record(Array::unchecked({}, Storage{v}), {a.id()},
                  [a, f](Tape& t, const Array& g) {
                    const auto n = static_cast<Eigen::Index>(a.value().rows());
                    Eigen::MatrixXd inv = f->solve(Eigen::MatrixXd::Identity(n, n));
                    t.grad_view(a.id()) += g[0] * inv;
                  },
                  "logdet_spd");
}

// ---------------------------------------------------------------------------
// Kernel helpers.

Var sqdist(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw DimensionError("sqdist: embedding dimensions differ " + dims(av) + " vs " + dims(bv));
  }
  const std::size_t m = av.rows(), n = bv.rows(), d = av.cols();
  Array out = blank(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = av.data().data() + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = bv.data().data() + j * d;
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = ai[k] - bj[k];
        s += diff * diff;
      }
      out(i, j) = s;
    }
  }
  return t.record(std::move(out), {a.id(), b.id()},
                  [a, b, m, n, d](Tape& t, const Array& g) {
                    const Array& av = a.value();
                    const Array& bv = b.value();
                    const bool ga = t.requires_grad(a.id());
                    const bool gb = t.requires_grad(b.id());
                    double* da = ga ? t.grad_view(a.id()).data() : nullptr;
                    double* db = gb ? t.grad_view(b.id()).data() : nullptr;
                    for (std::size_t i = 0; i < m; ++i) {
                      for (std::size_t j = 0; j < n; ++j) {
                        const double w = 2.0 * g(i, j);
                        if (w == 0.0) continue;
                        for (std::size_t k = 0; k < d; ++k) {
                          const double diff = av(i, k) - bv(j, k);
                          if (da) da[i * d + k] += w * diff;
                          if (db) db[j * d + k] -= w * diff;
                        }
                      }
                    }
                  },
                  "sqdist");
}

Var normalize_gram(const Var& k, const Var& diag_rows, const Var& diag_cols, double floor) {
  Tape& t = same_tape(k, diag_rows);
  same_tape(k, diag_cols);
  const Array& kv = k.value();
  const Array& dr = diag_rows.value();
  const Array& dc = diag_cols.value();
  const std::size_t m = kv.rows(), n = kv.cols();
  if (dr.size() != m || dc.size() != n) {
    throw DimensionError("normalize_gram: diagonals do not match gram " + dims(kv));
  }
  Array out = blank(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out(i, j) = kv(i, j) / std::sqrt(std::max(dr[i] * dc[j], floor));
    }
  }
  return t.record(std::move(out), {k.id(), diag_rows.id(), diag_cols.id()},
                  [k, diag_rows, diag_cols, floor, m, n](Tape& t, const Array& g) {
                    const Array& kv = k.value();
                    const Array& dr = diag_rows.value();
                    const Array& dc = diag_cols.value();
                    double* gk = t.requires_grad(k.id()) ? t.grad_view(k.id()).data() : nullptr;
                    double* gr =
                        t.requires_grad(diag_rows.id()) ? t.grad_view(diag_rows.id()).data() : nullptr;
                    double* gc =
                        t.requires_grad(diag_cols.id()) ? t.grad_view(diag_cols.id()).data() : nullptr;
                    for (std::size_t i = 0; i < m; ++i) {
                      for (std::size_t j = 0; j < n; ++j) {
                        const double s = dr[i] * dc[j];
                        const double gij = g(i, j);
                        if (s > floor) {
                          const double inv = 1.0 / std::sqrt(s);
                          if (gk) gk[i * n + j] += gij * inv;
                          // d/ds s^{-1/2} = -0.5 s^{-3/2}
                          const double ds = -0.5 * kv(i, j) * inv / s * gij;
                          if (gr) gr[i] += ds * dc[j];
                          if (gc) gc[j] += ds * dr[i];
                        } else if (gk) {
                          gk[i * n + j] += gij / std::sqrt(floor);
                        }
                      }
                    }
                  },
                  "normalize_gram");
}

Var logsumexp(const Var& a, const Array& mask) {
  Tape& t = a.tape();
  const Array& av = a.value();
  if (mask.size() != av.size()) throw DimensionError("logsumexp mask does not match " + dims(av));
  double mx = -std::numeric_limits<double>::infinity();
  std::size_t active = 0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (mask[i] != 0.0) {
      mx = std::max(mx, av[i]);
      ++active;
    }
  }
  if (active == 0) throw EmptySetError("logsumexp over an empty mask");
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (mask[i] != 0.0) s += std::exp(av[i] - mx);
  }
  const double lse = mx + std::log(s);
  Array mask_copy = mask;
  return t.record(Array::unchecked({}, Storage{lse}), {a.id()},
                  [a, mask_copy, lse](Tape& t, const Array& g) {
                    const Array& av = a.value();
                    double* d = t.grad_view(a.id()).data();
                    for (std::size_t i = 0; i < av.size(); ++i) {
                      if (mask_copy[i] != 0.0) d[i] += g[0] * std::exp(av[i] - lse);
                    }
                  },
                  "logsumexp");
}

// ---------------------------------------------------------------------------
// Sequence helpers for the character CNN.

Var im2col(const Var& x, std::size_t kernel) {
  Tape& t = x.tape();
  const Array& xv = x.value();
  if (kernel == 0) throw DimensionError("im2col kernel must be positive");
  const std::size_t len = xv.rows(), ch = xv.cols();
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((kernel - 1) / 2);
  Array out = blank(len, kernel * ch);
  for (std::size_t p = 0; p < len; ++p) {
    for (std::size_t j = 0; j < kernel; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(p + j) - pad;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
      std::copy_n(xv.data().data() + static_cast<std::size_t>(src) * ch, ch, &out(p, j * ch));
    }
  }
  return t.record(std::move(out), {x.id()},
                  [x, kernel, len, ch, pad](Tape& t, const Array& g) {
                    auto dst = t.grad_view(x.id());
                    for (std::size_t p = 0; p < len; ++p) {
                      for (std::size_t j = 0; j < kernel; ++j) {
                        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(p + j) - pad;
                        if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
                        for (std::size_t c = 0; c < ch; ++c) {
                          dst(src, c) += g(p, j * ch + c);
                        }
                      }
                    }
                  },
                  "im2col");
}

Var max_rows(const Var& a) {
  Tape& t = a.tape();
  const Array& av = a.value();
  const std::size_t n = av.rows(), d = av.cols();
  if (n == 0) throw EmptySetError("max_rows of an empty matrix");
  Array out = blank(1, d);
  std::vector<std::size_t> arg(d, 0);
  for (std::size_t j = 0; j < d; ++j) {
    double best = av(0, j);
    for (std::size_t i = 1; i < n; ++i) {
      if (av(i, j) > best) {
        best = av(i, j);
        arg[j] = i;
      }
    }
    out[j] = best;
  }
  return t.record(std::move(out), {a.id()},
                  [a, arg = std::move(arg)](Tape& t, const Array& g) {
                    auto dst = t.grad_view(a.id());
                    for (std::size_t j = 0; j < arg.size(); ++j) dst(arg[j], j) += g[j];
                  },
                  "max_rows");
}

}  // namespace adkl
