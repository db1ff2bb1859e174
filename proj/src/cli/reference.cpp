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

// Extended-precision meta-loss written directly against Eigen, without the
// tape. Finite differences of the GP head need it: posterior covariances are
// small differences of large Gram entries, and in double precision that
// round-off swamps the central-difference quotient.

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "adkl/cli.hpp"
#include "adkl/errors.hpp"

namespace adkl::cli {

namespace {

using Real = long double;
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

Mat to_mat(const Array& a) {
  Mat m(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) m(r, c) = a(r, c);
  }
  return m;
}

Mat activate(Mat x, Activation a) {
  if (a == Activation::relu) return x.cwiseMax(Real(0));
  return x.array().tanh().matrix();
}

Mat mlp(const ParamSet& p, const std::string& prefix, Mat h, bool activate_output, Activation a) {
  std::size_t layers = 0;
  while (p.contains(prefix + "." + std::to_string(layers) + ".weight")) ++layers;
  if (layers == 0) throw ContractError("no layers under '" + prefix + "'");
  for (std::size_t l = 0; l < layers; ++l) {
    const Mat w = to_mat(p.at(prefix + "." + std::to_string(l) + ".weight").value);
    const Mat b = to_mat(p.at(prefix + "." + std::to_string(l) + ".bias").value);
    h = (h * w).rowwise() + b.row(0);
    if (l + 1 < layers || activate_output) h = activate(h, a);
  }
  return h;
}

Mat hcat(const Mat& a, const Mat& b) {
  Mat out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

struct Side {
  Mat features;  // u'(x)
  Vec y;
};

Side side(const Model& model, const ParamSet& p, const std::vector<Sample>& samples) {
  const std::size_t d = model.config().input_dim;
  Mat x(samples.size(), d);
  Vec y(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto* v = std::get_if<std::vector<double>>(&samples[i].input);
    if (!v) throw ContractError("reference loss supports vector inputs only");
    for (std::size_t j = 0; j < d; ++j) x(i, j) = (*v)[j];
    y(i) = samples[i].target;
  }
  const Activation a = model.config().net.activation;
  return Side{mlp(p, kExtractorPrefix, x, true, a), y};
}

Mat task_embedding(const Model& model, const ParamSet& p, const Side& s) {
  const NetShape& n = model.config().net;
  Mat v = s.y;
  if (!n.target_hidden.empty()) v = mlp(p, "eta.target", v, true, n.activation);
  const Mat codes = mlp(p, "eta.pair", hcat(s.features, v), false, n.activation);
  const Real rows = static_cast<Real>(codes.rows());
  const Mat mu = codes.colwise().sum() / rows;
  Mat sd(1, codes.cols());
  for (Eigen::Index j = 0; j < codes.cols(); ++j) {
    Real acc = 0;
    for (Eigen::Index i = 0; i < codes.rows(); ++i) acc += (codes(i, j) - mu(0, j)) * (codes(i, j) - mu(0, j));
    sd(0, j) = std::sqrt(acc / rows + Real(1e-8));
  }
  return mlp(p, "eta.task", hcat(mu, sd), false, n.activation);
}

Mat embed(const Model& model, const ParamSet& p, const Mat& features, const Mat& z) {
  if (!model.config().adaptive) return features;
  Mat zz = z.replicate(features.rows(), 1);
  return mlp(p, "theta.embed", hcat(features, zz), false, model.config().net.activation);
}

Mat gram(const Model& model, const ParamSet& p, const Mat& a, const Mat& b) {
  const KernelSpec& k = model.config().kernel;
  Mat g(a.rows(), b.rows());
  if (k.family == KernelFamily::linear) {
    g = a * b.transpose();
  } else {
    const Real logl = p.at(kLogLengthscale).value.item();
    const Real coeff = Real(-0.5) * std::exp(Real(-2) * logl);
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = 0; j < b.rows(); ++j) g(i, j) = std::exp(coeff * (a.row(i) - b.row(j)).squaredNorm());
    }
  }
  if (k.normalized) {
    auto self = [&](const Mat& m) {
      Vec s(m.rows());
      for (Eigen::Index i = 0; i < m.rows(); ++i) s(i) = k.family == KernelFamily::linear ? m.row(i).squaredNorm() : Real(1);
      return s;
    };
    const Vec sa = self(a), sb = self(b);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      for (Eigen::Index j = 0; j < g.cols(); ++j) {
        g(i, j) /= std::sqrt(std::max(sa(i) * sb(j), Real(kNormalizeFloor)));
      }
    }
  }
  return g;
}

Real episode_loss(const Model& model, const ParamSet& p, const Mat& phi_s, const Vec& y_s, const Mat& phi_q,
                  const Vec& y_q) {
  const Eigen::Index m = phi_s.rows();
  Mat a = gram(model, p, phi_s, phi_s);
  a.diagonal().array() += Real(1) / static_cast<Real>(m);
  const Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success) throw FactorizationError("reference solve failed");
  const Mat k_vt = gram(model, p, phi_q, phi_s);
  const Vec mean = k_vt * llt.solve(y_s);
  const Vec r = y_q - mean;
  if (model.config().solver == SolverKind::krr) return r.squaredNorm() / static_cast<Real>(r.size());
  Mat c = gram(model, p, phi_q, phi_q) - k_vt * llt.solve(Mat(k_vt.transpose()));
  c = (c + c.transpose()) / Real(2);
  const Eigen::LLT<Mat> lc(c);
  if (lc.info() != Eigen::Success) throw FactorizationError("reference covariance is not positive definite");
  Real logdet = 0;
  for (Eigen::Index i = 0; i < c.rows(); ++i) logdet += 2 * std::log(Mat(lc.matrixL())(i, i));
  const Real quad = r.dot(lc.solve(r));
  return Real(0.5) * (quad + logdet + static_cast<Real>(r.size()) * std::log(2 * std::numbers::pi_v<Real>));
}

}  // namespace

long double reference_meta_loss(const Model& model, const ParamSet& params, std::span<const Episode> batch,
                                double gamma) {
  const std::size_t b = batch.size();
  const bool contrastive = gamma > 0.0;
  Real total = 0;
  Mat z_trn, z_val;
  if (contrastive) {
    z_trn.resize(b, model.config().net.task_dim);
    z_val.resize(b, model.config().net.task_dim);
  }
  for (std::size_t e = 0; e < b; ++e) {
    const Side s = side(model, params, batch[e].support);
    const Side q = side(model, params, batch[e].query);
    Mat z;
    if (model.config().adaptive) z = task_embedding(model, params, s);
    if (contrastive) {
      z_trn.row(e) = z.row(0);
      z_val.row(e) = task_embedding(model, params, q).row(0);
    }
    total += episode_loss(model, params, embed(model, params, s.features, z), s.y,
                          embed(model, params, q.features, z), q.y);
  }
  total /= static_cast<Real>(b);
  if (contrastive) {
    const Mat sdot = z_trn * z_val.transpose();
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < b; ++j) {
        if (i != j) mx = std::max(mx, sdot(i, j));
      }
    }
    Real acc = 0;
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < b; ++j) {
        if (i != j) acc += std::exp(sdot(i, j) - mx);
      }
    }
    const Real lse = mx + std::log(acc);
    const Real nce = sdot.trace() / static_cast<Real>(b) - (lse - std::log(static_cast<Real>(b * (b - 1))));
    total -= static_cast<Real>(gamma) * nce;
  }
  return total;
}

}  // namespace adkl::cli
