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
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adkl/encoders.hpp"

namespace adkl {

/// Contrastive estimate between support-set and query-set task embeddings,
/// both [b x d]. Raw dot products, temperature 1:
///   mean_j <z_j, z'_j> - log( sum_{i != j} exp <z_j, z'_i> / (b (b - 1)) )
Var info_nce(const Var& z_trn, const Var& z_val);

/// Solver loss of one embedded episode (KRR query MSE or GP query NLL).
Var episode_task_loss(const Model& model, const Kernel& kernel, const EpisodeEmbedding& e);

struct MetaLossResult {
  Var total;               // mean task loss - gamma * info_nce
  double task_loss = 0.0;  // mean over the episodes that were solved
  double info_nce = 0.0;   // 0 when gamma == 0
  std::size_t solved = 0;
  std::vector<std::size_t> skipped;  // batch positions whose solve failed
};

/// Episodes whose Gram matrix cannot be factorised are left out of the mean
/// and reported in `skipped`; if none survive a NumericalError is thrown.
MetaLossResult meta_loss(const Model& model, const ParamBinding& p, std::span<const Episode> batch,
                         double gamma);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig config) : config_(config) {}

  /// One update from ParamSet::grad; accumulated gradients are left in place.
  void step(ParamSet& params);

  const AdamConfig& config() const { return config_; }
  std::uint64_t steps() const { return t_; }
  const std::map<std::string, std::vector<double>>& first_moments() const { return m_; }
  const std::map<std::string, std::vector<double>>& second_moments() const { return v_; }
  void restore(std::uint64_t t, std::map<std::string, std::vector<double>> m,
               std::map<std::string, std::vector<double>> v);

 private:
  AdamConfig config_;
  std::uint64_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

struct TrainLogRecord {
  std::size_t episode = 0;  // optimizer steps taken
  double train_loss = 0.0;  // mean meta-loss since the previous record
  std::optional<double> val_loss;
  double gamma = 0.0;
  double wall_time = 0.0;  // seconds since the start of training
};

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t support_size = 10;
  std::size_t query_size = 10;
  double gamma = 0.1;
  std::size_t episodes = 20000;
  std::size_t eval_interval = 250;
  std::size_t val_episodes = 320;
  AdamConfig optim;
  std::uint64_t seed = 0;
  /// Subset of collection indices to meta-train on; empty means the whole
  /// meta-train split.
  std::vector<std::size_t> train_tasks;
  std::function<void(const std::string&)> warn;
  std::function<void(const TrainLogRecord&)> on_log;
};

struct TrainState {
  ParamSet params;
  ParamSet best_params;
  Adam optimizer;
  std::size_t episode = 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_episode = 0;
  Rng rng;
  std::vector<TrainLogRecord> log;
};

/// Throws ContractError on an empty meta-train set or b < 2 with gamma > 0.
void validate(const TrainConfig& config);

/// Tasks usable for training episodes: at least m + 1 samples.
std::vector<std::size_t> trainable_tasks(const TaskCollection& collection,
                                         std::span<const std::size_t> candidates, std::size_t m,
                                         const std::function<void(const std::string&)>& warn);

/// Fixed validation episodes drawn from the meta-validation split.
std::vector<Episode> validation_episodes(const TaskCollection& collection, const TrainConfig& config);

/// Mean task loss of `episodes` under frozen parameters, in chunks of
/// `chunk` episodes. Unsolvable episodes are left out.
double evaluate_loss(const Model& model, const ParamSet& params, std::span<const Episode> episodes,
                     std::size_t chunk);

/// b tasks uniformly with replacement, one episode each.
std::vector<Episode> sample_meta_batch(const TaskCollection& collection,
                                       std::span<const std::size_t> tasks, const TrainConfig& config,
                                       Rng& rng);

/// Meta-trains `model` in place. On return the model holds the best
/// meta-validation snapshot (the final parameters when no validation split
/// exists).
TrainState train(Model& model, const TaskCollection& collection, const TrainConfig& config);

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig model;
  std::optional<SmilesVocab> vocab;
  /// Serialized experiment configuration and its hash.
  std::string config_json;
  std::string config_hash;
  std::string provenance;
  TrainState state;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
std::string serialize_checkpoint(const Checkpoint& checkpoint);
/// CheckpointError on bad magic, version mismatch, truncation or checksum.
Checkpoint load_checkpoint(const std::string& path);
Checkpoint deserialize_checkpoint(std::string_view bytes);

/// Model holding the best snapshot of a checkpoint.
Model model_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace adkl
