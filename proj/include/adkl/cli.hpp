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
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "adkl/eval.hpp"

namespace adkl::cli {

enum class KeyType { integer, real, boolean, string, integer_list, real_list, string_list };

struct KeySpec {
  std::string key;
  KeyType type;
  nlohmann::json default_value;
  std::string help;
  bool training = false;  // part of the training identity hash
};

/// Every configuration key, in display order.
const std::vector<KeySpec>& config_keys();
const KeySpec& key_spec(const std::string& key);

/// ADKL_ + upper-cased key with dots replaced by underscores.
std::string env_name(const std::string& key);

/// Flat key -> value store layered as defaults < config file < environment
/// < command-line flags.
class ExperimentConfig {
 public:
  ExperimentConfig();

  /// Type-checked against the key's declared type.
  void set(const std::string& key, const nlohmann::json& value);
  /// Parses command-line / environment text ("1,2", "true", "0.1", ...).
  void set_text(const std::string& key, const std::string& text);
  /// Nested or flat (dotted) JSON object of overrides.
  void merge_json(const nlohmann::json& doc, bool mark_explicit = true);
  void merge_file(const std::string& path);
  void merge_env(const std::function<std::optional<std::string>(const std::string&)>& getenv);

  const nlohmann::json& at(const std::string& key) const;
  template <class T>
  T get(const std::string& key) const {
    return at(key).get<T>();
  }
  bool is_explicit(const std::string& key) const { return explicit_.count(key) != 0; }
  const std::set<std::string>& explicit_keys() const { return explicit_; }

  /// Defaults that depend on other keys: gamma falls back to 0 for a
  /// non-adaptive model unless it was given explicitly.
  void apply_implied_defaults();

  /// Nested JSON document, the same schema `merge_file` accepts.
  nlohmann::json to_json() const;
  /// Hash of the training-identity keys.
  std::string training_hash() const;
  /// Hash of every key.
  std::string hash() const;

  /// Every violated constraint; empty when the config is usable.
  std::vector<std::string> problems() const;
  /// Throws ConfigError listing every problem.
  void validate() const;

  ModelConfig model_config(InputKind kind, std::size_t input_dim) const;
  TrainConfig train_config() const;
  SinusoidOptions sinusoid_options() const;
  LoadOptions load_options() const;

 private:
  std::map<std::string, nlohmann::json> values_;
  std::set<std::string> explicit_;
};

/// Generated sinusoids or the file at data.path.
TaskCollection load_data(const ExperimentConfig& config,
                         const std::function<void(const std::string&)>& warn = {});
/// Short collection label for report rows.
std::string collection_name(const ExperimentConfig& config);
/// Input kind and width of a collection's samples.
std::pair<InputKind, std::size_t> input_signature(const TaskCollection& collection);

struct GradcheckOptions {
  ModelConfig model;
  double gamma = 0.1;
  std::size_t batch_size = 2;
  std::size_t support_size = 5;
  std::size_t query_size = 5;
  /// Coordinates checked per tensor; 0 checks all of them.
  std::size_t coords_per_tensor = 16;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  bool corrupt = false;  // scales the analytic gradient, for testing the checker
};

struct GradcheckReport {
  std::map<ParamGroup, double> worst;  // worst relative error per group
  std::map<ParamGroup, std::size_t> checked;
  std::string worst_name;
  double worst_error = 0.0;
  /// |meta_loss - reference_meta_loss| at the unperturbed parameters.
  double forward_gap = 0.0;
  bool passed = false;
};

/// |a - b| / max(|a|, |b|, kGradcheckFloor)
inline constexpr double kGradcheckFloor = 1e-8;
double relative_error(double analytic, double numeric);

/// Reverse-mode gradients of meta_loss against central differences of
/// reference_meta_loss.
GradcheckReport gradient_check(const GradcheckOptions& options);

/// Independent extended-precision evaluation of meta_loss for vector inputs.
long double reference_meta_loss(const Model& model, const ParamSet& params, std::span<const Episode> batch,
                                double gamma);

/// Entry point shared by the executable and the tests. Exit codes: 0 success,
/// 1 usage or configuration error, 2 runtime or numerical error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace adkl::cli
