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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "adkl/errors.hpp"
#include "adkl/kernels.hpp"
#include "oracles.hpp"

using namespace adkl;
namespace o = adkl::oracle;

namespace {

struct Fixture {
  ParamSet params;
  Tape tape;
  explicit Fixture(double log_lengthscale = 0.0) {
    params.add(kLogLengthscale, ParamGroup::rho, Array::scalar(log_lengthscale));
  }
  Kernel kernel(KernelFamily f, bool normalized = false) {
    return Kernel(KernelSpec{f, normalized}, f == KernelFamily::rbf ? tape.param(params, kLogLengthscale) : Var{});
  }
  Var c(const Array& a) { return tape.constant(a); }
};

double pair_oracle(KernelFamily f, bool normalized, const std::vector<double>& a, const std::vector<double>& b,
                   double lengthscale) {
  auto raw = [&](const std::vector<double>& u, const std::vector<double>& v) {
    double dot = 0, dist = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      dot += u[i] * v[i];
      dist += (u[i] - v[i]) * (u[i] - v[i]);
    }
    return f == KernelFamily::linear ? dot : std::exp(-dist / (2 * lengthscale * lengthscale));
  };
  const double k = raw(a, b);
  if (!normalized) return k;
  return k / std::sqrt(std::max(raw(a, a) * raw(b, b), 1e-12));
}

}  // namespace

TEST_CASE("kernel names round-trip") {
  CHECK(parse_kernel_family("linear") == KernelFamily::linear);
  CHECK(parse_kernel_family("rbf") == KernelFamily::rbf);
  CHECK_FALSE(parse_kernel_family("poly").has_value());
  CHECK(to_string(KernelFamily::rbf) == "rbf");
}

TEST_CASE("kernel parameters") {
  ParamSet linear, rbf;
  add_kernel_params({KernelFamily::linear, false}, linear);
  add_kernel_params({KernelFamily::rbf, true}, rbf);
  CHECK(linear.size() == 0);
  REQUIRE(rbf.contains(kLogLengthscale));
  CHECK(rbf.at(kLogLengthscale).group == ParamGroup::rho);
  CHECK(rbf.at(kLogLengthscale).value.item() == 0.0);
  CHECK_THROWS_AS(Kernel(KernelSpec{KernelFamily::rbf, false}), ContractError);
}

TEST_CASE("kernel_eval") {
  Fixture fx;
  CHECK(fx.kernel(KernelFamily::linear).eval(fx.c(Array::row({1, 2})), fx.c(Array::row({3, 4}))).item() == 11.0);
  CHECK(fx.kernel(KernelFamily::rbf).eval(fx.c(Array::row({0.3, -2})), fx.c(Array::row({0.3, -2}))).item() == 1.0);
  CHECK(fx.kernel(KernelFamily::rbf).eval(fx.c(Array::row({0})), fx.c(Array::row({1}))).item() ==
        doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
  CHECK(std::abs(std::exp(-0.5) - 0.60653) < 1e-5);
  CHECK_THROWS_AS(fx.kernel(KernelFamily::linear).eval(fx.c(Array::row({1, 2})), fx.c(Array::row({1}))),
                  DimensionError);
}

TEST_CASE("normalize") {
  CHECK(normalize(5.0, 5.0, 5.0) == 1.0);
  Fixture fx;
  auto lin = fx.kernel(KernelFamily::linear, true);
  CHECK(lin.eval(fx.c(Array::row({2, 0})), fx.c(Array::row({0, 3}))).item() == 0.0);
  CHECK(lin.eval(fx.c(Array::row({1, 0})), fx.c(Array::row({1, 1}))).item() ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(lin.eval(fx.c(Array::row({0.7, -3})), fx.c(Array::row({0.7, -3}))).item() == doctest::Approx(1.0));
  // Zero embedding: the floor keeps the value finite.
  CHECK(lin.eval(fx.c(Array::row({0, 0})), fx.c(Array::row({1, 1}))).item() == 0.0);
  CHECK(std::isfinite(normalize(0.0, 0.0, 0.0)));
}

TEST_CASE("gram") {
  Fixture fx(0.4);
  SUBCASE("linear gram of orthonormal rows is the identity") {
    const double s = 1 / std::sqrt(2.0);
    Var rows = fx.c(Array::matrix({{s, s, 0}, {s, -s, 0}, {0, 0, 1}}));
    GramMatrix g = fx.kernel(KernelFamily::linear).gram(rows, rows, true);
    CHECK(o::max_abs(g.values.value(), o::identity(3)) < 1e-15);
  }
  SUBCASE("rbf square gram has unit diagonal") {
    std::mt19937_64 rng(1);
    Var rows = fx.c(o::array(o::random_dense(6, 3, rng, -2, 2)));
    GramMatrix g = fx.kernel(KernelFamily::rbf).gram(rows, rows, true);
    for (std::size_t i = 0; i < 6; ++i) CHECK(g.values.value()(i, i) == 1.0);
  }
  SUBCASE("pairwise-loop oracle") {
    std::mt19937_64 rng(2);
    const auto a = o::random_dense(3, 5, rng), b = o::random_dense(4, 5, rng);
    for (KernelFamily f : {KernelFamily::linear, KernelFamily::rbf}) {
      for (bool normalized : {false, true}) {
        GramMatrix g = fx.kernel(f, normalized).gram(fx.c(o::array(a)), fx.c(o::array(b)));
        CHECK_FALSE(g.square);
        REQUIRE(g.values.value().shape() == Shape{3, 4});
        double worst = 0;
        for (std::size_t i = 0; i < 3; ++i) {
          for (std::size_t j = 0; j < 4; ++j) {
            worst = std::max(worst, std::abs(g.values.value()(i, j) -
                                             pair_oracle(f, normalized, a[i], b[j], std::exp(0.4))));
          }
        }
        CHECK(worst < 1e-12);
      }
    }
  }
}

TEST_CASE("square grams are symmetric positive semidefinite") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Fixture fx(0.3 * (trial % 5) - 0.6);
    const std::size_t n = 2 + trial % 9;
    Var rows = fx.c(o::array(o::random_dense(n, 4, rng, -2, 2)));
    for (KernelFamily f : {KernelFamily::linear, KernelFamily::rbf}) {
      for (bool normalized : {false, true}) {
        const auto g = o::dense(fx.kernel(f, normalized).gram(rows, rows, true).values.value());
        CHECK(o::max_abs(g, o::transpose(g)) <= 1e-12);
        CHECK(o::eigenvalues(g).front() >= -1e-9);
        if (normalized) {
          for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(g[i][i] - 1.0) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("normalized linear gram ignores uniform positive scaling") {
  std::mt19937_64 rng(4);
  Fixture fx;
  const auto a = o::random_dense(5, 3, rng);
  auto scaled = a;
  for (auto& row : scaled) {
    for (auto& v : row) v *= 7.5;
  }
  auto k = fx.kernel(KernelFamily::linear, true);
  const Array g1 = k.gram(fx.c(o::array(a)), fx.c(o::array(a)), true).values.value();
  const Array g2 = k.gram(fx.c(o::array(scaled)), fx.c(o::array(a)), false).values.value();
  CHECK(max_abs_diff(g1, g2) < 1e-9);
}

TEST_CASE("rbf values lie in (0, 1] and equal 1 only on identical inputs") {
  std::mt19937_64 rng(5);
  Fixture fx(-0.5);
  const auto a = o::random_dense(8, 2, rng, -1, 1);
  const auto g = fx.kernel(KernelFamily::rbf).gram(fx.c(o::array(a)), fx.c(o::array(a)), true).values.value();
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 8; ++j) {
      CHECK(g(i, j) > 0.0);
      CHECK(g(i, j) <= 1.0);
      if (i != j) CHECK(g(i, j) < 1.0);
    }
  }
}

TEST_CASE("kernel gradients match finite differences") {
  std::mt19937_64 rng(6);
  for (KernelFamily f : {KernelFamily::linear, KernelFamily::rbf}) {
    for (bool normalized : {false, true}) {
      ParamSet p;
      add_kernel_params({f, normalized}, p);
      if (f == KernelFamily::rbf) p.at(kLogLengthscale).value = Array::scalar(0.2);
      p.add("a", ParamGroup::theta, o::array(o::random_dense(4, 3, rng)));
      p.add("b", ParamGroup::theta, o::array(o::random_dense(2, 3, rng)));
      const Array w = o::array(o::random_dense(4, 2, rng));
      auto build = [&](Tape& t, ParamSet& ps) {
        Kernel k({f, normalized}, f == KernelFamily::rbf ? t.param(ps, kLogLengthscale) : Var{});
        return sum(mul(k.gram(t.param(ps, "a"), t.param(ps, "b")).values, t.constant(w)));
      };
      CHECK(o::worst_gradient_error(p, build, rng) < 1e-6);
    }
  }
}
