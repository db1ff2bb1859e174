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

// Independent reference computations for the unit tests. Nothing here calls
// into the library's numerics; plain loops over std::vector only.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "adkl/diffcore.hpp"

namespace adkl::oracle {

using Dense = std::vector<std::vector<double>>;

inline Dense dense(const Array& a) {
  Dense d(a.rows(), std::vector<double>(a.cols()));
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) d[r][c] = a(r, c);
  }
  return d;
}

inline Array array(const Dense& d) {
  std::vector<double> flat;
  for (const auto& row : d) flat.insert(flat.end(), row.begin(), row.end());
  return Array::matrix(d.size(), d.empty() ? 0 : d[0].size(), flat);
}

inline Dense random_dense(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                          double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Dense d(rows, std::vector<double>(cols));
  for (auto& row : d) {
    for (auto& v : row) v = u(rng);
  }
  return d;
}

inline Dense matmul(const Dense& a, const Dense& b) {
  Dense out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b[0].size(); ++j) {
      for (std::size_t k = 0; k < b.size(); ++k) out[i][j] += a[i][k] * b[k][j];
    }
  }
  return out;
}

inline Dense transpose(const Dense& a) {
  Dense out(a[0].size(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[0].size(); ++j) out[j][i] = a[i][j];
  }
  return out;
}

inline Dense identity(std::size_t n) {
  Dense out(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) out[i][i] = 1.0;
  return out;
}

// B Bᵀ + shift·I
inline Dense random_spd(std::size_t n, std::mt19937_64& rng, double shift = 1.0) {
  const Dense b = random_dense(n, n, rng);
  Dense a = matmul(b, transpose(b));
  for (std::size_t i = 0; i < n; ++i) a[i][i] += shift;
  return a;
}

// Gauss-Jordan elimination with partial pivoting.
inline Dense inverse(Dense a) {
  const std::size_t n = a.size();
  Dense inv = identity(n);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    std::swap(a[col], a[pivot]);
    std::swap(inv[col], inv[pivot]);
    const double p = a[col][col];
    for (std::size_t c = 0; c < n; ++c) {
      a[col][c] /= p;
      inv[col][c] /= p;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      for (std::size_t c = 0; c < n; ++c) {
        a[r][c] -= f * a[col][c];
        inv[r][c] -= f * inv[col][c];
      }
    }
  }
  return inv;
}

// Cyclic Jacobi rotations on a symmetric matrix.
inline std::vector<double> eigenvalues(Dense a) {
  const std::size_t n = a.size();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
    }
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
  std::sort(ev.begin(), ev.end());
  return ev;
}

inline double max_abs(const Dense& a, const Dense& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].size(); ++j) m = std::max(m, std::abs(a[i][j] - b[i][j]));
  }
  return m;
}

inline double max_abs(const Array& a, const Dense& b) { return max_abs(dense(a), b); }

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// Central differences of f over every coordinate of params[name].
inline std::vector<double> numeric_gradient(ParamSet& params, const std::string& name,
                                            const std::function<double()>& f, double h = 1e-5) {
  Array& v = params.at(name).value;
  std::vector<double> g(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double saved = v[i];
    v[i] = saved + h;
    const double up = f();
    v[i] = saved - h;
    const double down = f();
    v[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

using LossBuilder = std::function<Var(Tape&, ParamSet&)>;

inline double loss_value(ParamSet& params, const LossBuilder& build) {
  Tape tape;
  return build(tape, params).item();
}

// Worst relative error between the tape gradient and central differences
// over up to `coords` random (parameter, coordinate) pairs, or all of them.
inline double worst_gradient_error(ParamSet& params, const LossBuilder& build, std::mt19937_64& rng,
                                   std::size_t coords = 100, double h = 1e-5) {
  params.zero_grad();
  {
    Tape tape;
    tape.backward(build(tape, params));
  }
  std::vector<std::pair<std::string, std::size_t>> all;
  for (const auto& [name, p] : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) all.emplace_back(name, i);
  }
  std::shuffle(all.begin(), all.end(), rng);
  if (all.size() > coords) all.resize(coords);
  double worst = 0.0;
  for (const auto& [name, i] : all) {
    Param& p = params.at(name);
    const double saved = p.value[i];
    p.value[i] = saved + h;
    const double up = loss_value(params, build);
    p.value[i] = saved - h;
    const double down = loss_value(params, build);
    p.value[i] = saved;
    worst = std::max(worst, relative_error(p.grad[i], (up - down) / (2.0 * h)));
  }
  return worst;
}

}  // namespace adkl::oracle
