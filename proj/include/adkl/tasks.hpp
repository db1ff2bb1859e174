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

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace adkl {

using Rng = std::mt19937_64;

/// A real feature vector or a SMILES string.
using Input = std::variant<std::vector<double>, std::string>;

struct Sample {
  Input input;
  double target = 0.0;
};

/// y = amplitude * sin(frequency * x + phase) + noise
struct SinusoidParams {
  double amplitude = 1.0;
  double frequency = 1.0;
  double phase = 0.0;

  double operator()(double x) const;
};

struct Task {
  std::string id;
  std::vector<Sample> samples;
  std::optional<SinusoidParams> params;

  std::size_t size() const { return samples.size(); }
  /// Episode-eligible tasks have at least two samples.
  bool eligible() const { return samples.size() >= 2; }
};

enum class Split { train, valid, test };

std::string_view to_string(Split s);
std::optional<Split> parse_split(std::string_view s);

struct TaskCollection {
  std::vector<Task> tasks;
  std::vector<Split> splits;  // parallel to tasks
  /// "sinusoids:..." for generated collections, "file:<hash>" for loaded ones.
  std::string provenance;

  std::vector<std::size_t> indices(Split s) const;
  std::size_t size() const { return tasks.size(); }
  bool has_smiles() const;
};

/// Task counts for (train, valid, test) at 56.25 / 18.75 / 25 percent.
std::array<std::size_t, 3> split_counts(std::size_t total);

/// Assigns splits by a seeded shuffle of task positions.
std::vector<Split> assign_splits(std::size_t total, std::uint64_t seed);

struct SinusoidOptions {
  std::size_t tasks = 5000;
  std::size_t samples_per_task = 60;
  std::uint64_t seed = 0;
  bool noise = true;
};

inline constexpr double kAmplitudeMin = 0.1, kAmplitudeMax = 5.0;
inline constexpr double kFrequencyMin = 0.5, kFrequencyMax = 2.0;
inline constexpr double kPhaseMin = 0.0;
inline constexpr double kInputMin = -5.0, kInputMax = 5.0;
inline constexpr double kNoiseFraction = 0.01;

/// Requires tasks >= 4 so that every split is non-empty.
TaskCollection gen_sinusoids(const SinusoidOptions& options);

struct LoadOptions {
  /// Per-task min-max scaling of targets to [0, 1]; unset means "scale when
  /// the inputs are SMILES strings".
  std::optional<bool> scale_targets;
  std::uint64_t split_seed = 0;
  /// Receives diagnostics such as tasks too small to sample.
  std::function<void(const std::string&)> warn;
};

/// One JSON object per line: task_id, x (numbers or string), y, optional split.
TaskCollection load_collection(const std::string& path, const LoadOptions& options = {});
TaskCollection parse_collection(std::istream& in, const LoadOptions& options,
                                std::string provenance);
void write_collection(const TaskCollection& collection, std::ostream& out);

/// Rescales targets of one task to [0, 1]; constant targets become 0.5.
void min_max_scale(Task& task);

struct Episode {
  std::vector<Sample> support;
  std::vector<Sample> query;
  std::vector<std::size_t> support_index;  // positions within the task
  std::vector<std::size_t> query_index;
};

/// Uniform draw without replacement. Tasks with fewer than 2m samples are
/// split half/half (support = floor(size / 2)); otherwise support = m and the
/// query is `query_size` samples, or all remaining ones when unset.
Episode sample_episode(const Task& task, std::size_t m, std::optional<std::size_t> query_size,
                       Rng& rng);

/// First k positions of a uniformly random permutation of 0..n-1.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng);

/// FNV-1a, used for provenance and config hashes.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace adkl
