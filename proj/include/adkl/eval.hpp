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

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adkl/meta.hpp"

namespace adkl {

struct Prediction {
  std::vector<double> mean;
  std::optional<std::vector<double>> variance;  // posterior variance when available
};

/// Anything that adapts to a support set and predicts query targets.
class EpisodePredictor {
 public:
  virtual ~EpisodePredictor() = default;
  virtual Prediction predict(std::span<const Sample> support, std::span<const Input> queries) const = 0;
  virtual bool has_variance() const { return false; }
};

/// Closed-form adaptation of a trained model: task embedding of the support
/// set (adaptive models), then the KRR / GP solve. GP heads also report the
/// posterior variance.
class ModelPredictor : public EpisodePredictor {
 public:
  explicit ModelPredictor(const Model& model, std::optional<double> lambda = std::nullopt)
      : model_(&model), lambda_(lambda) {}
  Prediction predict(std::span<const Sample> support, std::span<const Input> queries) const override;
  bool has_variance() const override { return model_->config().solver == SolverKind::gp; }

 private:
  const Model* model_;
  std::optional<double> lambda_;
};

struct TaskReport {
  std::string task_id;
  double mean_mse = 0.0;
  std::vector<double> partition_mse;
  std::size_t support_size = 0;
};

/// Mean query MSE over random support/query partitions of one task.
TaskReport task_mse(const EpisodePredictor& predictor, const Task& task, std::size_t m,
                    std::size_t partitions, Rng& rng);

/// Per-task reports for the given collection indices. Task i uses an rng
/// seeded from (seed, i), so results do not depend on `workers`.
std::vector<TaskReport> evaluate_tasks(const EpisodePredictor& predictor,
                                       const TaskCollection& collection,
                                       std::span<const std::size_t> tasks, std::size_t m,
                                       std::size_t partitions, std::uint64_t seed,
                                       std::size_t workers = 1);

double mean_of(const std::vector<TaskReport>& reports);

/// Identity columns shared by every report row.
struct ReportIdentity {
  std::string collection;
  std::string algorithm;
  std::string kernel;
  bool normalized = false;
  double gamma = 0.0;
};

std::string algorithm_name(const ModelConfig& config);
ReportIdentity identity_of(const ModelConfig& config, double gamma, std::string collection);

struct BenchmarkRow {
  ReportIdentity identity;
  std::size_t T = 0;
  std::size_t m = 0;
  std::uint64_t seed = 0;
  std::vector<TaskReport> reports;
  double mean_mse = 0.0;
};

struct BenchmarkSpec {
  ModelConfig model;
  TrainConfig train;  // support_size and seed are overridden per cell
  std::vector<std::size_t> T_list;
  std::vector<std::size_t> m_list;
  std::vector<std::uint64_t> seeds;
  std::size_t partitions = 20;
  std::size_t workers = 1;
  std::string collection_name;
};

/// T meta-train task indices drawn without replacement (all when T >= size).
std::vector<std::size_t> subsample_tasks(std::span<const std::size_t> tasks, std::size_t T,
                                         std::uint64_t seed);

/// One row per (T, m, seed), passed to `on_row` as soon as it is complete.
std::vector<BenchmarkRow> benchmark(const BenchmarkSpec& spec, const TaskCollection& collection,
                                    const std::function<void(const BenchmarkRow&)>& on_row = {});

enum class Strategy { entropy, random };
enum class Labeling { predicted, oracle };

std::string_view to_string(Strategy s);
std::string_view to_string(Labeling l);
std::optional<Strategy> parse_strategy(std::string_view s);
std::optional<Labeling> parse_labeling(std::string_view s);

struct ActiveConfig {
  std::size_t init = 5;
  std::size_t budget = 20;
  std::size_t query_size = 20;
  Strategy strategy = Strategy::entropy;
  Labeling labeling = Labeling::predicted;
};

struct ActiveTrace {
  std::string task_id;
  Strategy strategy = Strategy::entropy;
  Labeling labeling = Labeling::predicted;
  std::vector<double> mse;  // index 0 is the initial hypothesis
  std::vector<std::size_t> selected;  // task sample index chosen at each step
  /// Predictive variance of the chosen point and the largest one over the
  /// pool at selection time (empty without a variance-capable predictor).
  std::vector<double> selected_variance;
  std::vector<double> pool_max_variance;
  bool truncated = false;  // pool ran dry before the budget
};

/// Random initial support of `init` points and a fixed query set of
/// `query_size` points; the remaining samples form the pool.
ActiveTrace active_run(const EpisodePredictor& predictor, const Task& task, const ActiveConfig& config,
                       Rng& rng);

struct CurveRecord {
  std::string task_id;
  double x = 0.0;
  std::optional<double> y_true;
  double y_pred = 0.0;
  std::optional<double> y_std;
};

std::vector<double> uniform_grid(std::size_t points, double lo = kInputMin, double hi = kInputMax);

/// Predictions over `grid` conditioned on `support`; 1-D inputs only.
std::vector<CurveRecord> emit_curves(const EpisodePredictor& predictor, const Task& task,
                                     std::span<const Sample> support, std::span<const double> grid);

// CSV output. `config_hash`, when non-empty, is written as a leading
// "# config_hash=..." comment line. Curve files carry a y_std column only
// when some record has a predictive std.
void write_report_csv(std::ostream& out, std::span<const BenchmarkRow> rows,
                      const std::string& config_hash = {});
void write_active_csv(std::ostream& out, std::span<const ActiveTrace> traces,
                      const std::string& config_hash = {});
void write_curves_csv(std::ostream& out, std::span<const CurveRecord> records,
                      const std::string& config_hash = {});

}  // namespace adkl
