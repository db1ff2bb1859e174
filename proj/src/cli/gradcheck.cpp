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

#include "adkl/cli.hpp"

namespace adkl::cli {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradcheckFloor});
}

GradcheckReport gradient_check(const GradcheckOptions& o) {
  SinusoidOptions so;
  so.tasks = 8;
  so.samples_per_task = 2 * (o.support_size + o.query_size);
  so.seed = o.seed;
  const TaskCollection data = gen_sinusoids(so);
  Rng rng(o.seed);
  std::vector<Episode> batch;
  for (std::size_t i = 0; i < o.batch_size; ++i) {
    batch.push_back(sample_episode(data.tasks[i % data.size()], o.support_size, o.query_size, rng));
  }
  Model model(o.model, o.seed);
  // Move the rbf length-scale off its initial value so the check is generic.
  if (model.params().contains(kLogLengthscale)) {
    model.params().at(kLogLengthscale).value = Array::scalar(0.3);
  }
  ParamSet& params = model.params();

  double tape_loss = 0.0;
  params.zero_grad();
  {
    Tape tape;
    ParamBinding p(tape, params);
    Var loss = meta_loss(model, p, batch, o.gamma).total;
    tape_loss = loss.item();
    tape.backward(loss);
  }
  auto loss_at = [&]() { return reference_meta_loss(model, params, batch, o.gamma); };

  GradcheckReport report;
  report.forward_gap = std::abs(static_cast<double>(loss_at()) - tape_loss);
  for (auto& [name, param] : params) {
    const std::size_t n = param.value.size();
    std::vector<std::size_t> coords;
    if (o.coords_per_tensor == 0 || n <= o.coords_per_tensor) {
      for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      coords = sample_without_replacement(n, o.coords_per_tensor, rng);
      const auto g = param.grad.data();
      const auto largest = static_cast<std::size_t>(
          std::max_element(g.begin(), g.end(), [](double a, double b) { return std::abs(a) < std::abs(b); }) -
          g.begin());
      if (std::find(coords.begin(), coords.end(), largest) == coords.end()) coords.push_back(largest);
    }
    double& worst = report.worst[param.group];
    for (auto i : coords) {
      double& w = param.value.data()[i];
      const double saved = w;
      w = saved + o.step;
      const long double up = loss_at();
      w = saved - o.step;
      const long double down = loss_at();
      w = saved;
      // The realised step, since saved +- step is rounded to double.
      const long double span = static_cast<long double>(saved + o.step) - static_cast<long double>(saved - o.step);
      const double numeric = static_cast<double>((up - down) / span);
      double analytic = param.grad.data()[i];
      if (o.corrupt) analytic = analytic * 1.1 + 1e-3;
      const double err = relative_error(analytic, numeric);
      worst = std::max(worst, err);
      if (err >= report.worst_error) {
        report.worst_error = err;
        report.worst_name = name + "[" + std::to_string(i) + "]";
      }
    }
    report.checked[param.group] += coords.size();
  }
  report.passed = report.worst_error < o.tolerance && report.forward_gap < 1e-8 * std::max(1.0, std::abs(tape_loss));
  return report;
}

}  // namespace adkl::cli
