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

// Neural maps of the adaptive deep kernel.
//
//   u  (= u')  input extractor: MLP for vectors, character CNN for SMILES
//   v          target encoder
//   r          pair encoder on Concat(u(x), v(y))
//   w          task head on Concat(mean, std) of the pair codes -> z
//   o          conditional embedding on Concat(u'(x), z)
//
// u and u' are one set of weights (a single ParamSet entry per tensor). The
// extractor and o form the theta group, v, r and w the eta group.

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "adkl/diffcore.hpp"
#include "adkl/kernels.hpp"
#include "adkl/solvers.hpp"
#include "adkl/tasks.hpp"

namespace adkl {

enum class Activation { relu, tanh };
enum class InputKind { vector, smiles };

struct NetShape {
  std::vector<std::size_t> input_hidden{120, 120};  // u / u'
  std::vector<std::size_t> target_hidden{16, 16};   // v; empty feeds y through unchanged
  std::size_t pair_hidden = 128;                    // r
  std::size_t pair_dim = 128;
  std::size_t task_hidden = 128;                    // w
  std::size_t task_dim = 64;
  std::size_t embed_hidden = 128;                   // o
  std::size_t embed_dim = 128;
  std::size_t char_dim = 32;                        // CNN
  std::vector<std::size_t> cnn_channels{128, 128};
  std::size_t cnn_kernel = 5;
  Activation activation = Activation::relu;
};

struct ModelConfig {
  InputKind input_kind = InputKind::vector;
  std::size_t input_dim = 1;
  NetShape net;
  KernelSpec kernel;
  SolverKind solver = SolverKind::krr;
  bool adaptive = true;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Character <-> index map for SMILES. Index 0 is padding, 1 is unknown;
/// known characters follow in ascending byte order.
class SmilesVocab {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnknown = 1;

  SmilesVocab() = default;
  explicit SmilesVocab(std::string_view characters);
  /// Every character that appears in a SMILES input of the given tasks.
  static SmilesVocab from_tasks(const TaskCollection& collection, std::span<const std::size_t> tasks);

  std::size_t size() const { return 2 + chars_.size(); }
  std::size_t index(char c) const;
  char character(std::size_t index) const;
  std::vector<std::size_t> encode(std::string_view smiles) const;
  const std::string& characters() const { return chars_; }

 private:
  std::string chars_;
  std::map<char, std::size_t> index_;
};

/// Tape-side view of a ParamSet: trainable bindings accumulate gradients into
/// the set on backward, frozen bindings never write to it.
class ParamBinding {
 public:
  ParamBinding(Tape& tape, ParamSet& params) : tape_(&tape), mutable_(&params), params_(&params) {}
  ParamBinding(Tape& tape, const ParamSet& params) : tape_(&tape), params_(&params) {}

  Var operator()(const std::string& name) const;
  Tape& tape() const { return *tape_; }
  const ParamSet& params() const { return *params_; }

 private:
  Tape* tape_;
  ParamSet* mutable_ = nullptr;
  const ParamSet* params_;
};

/// Fully connected stack. Weight tensors are [in x out].
class Mlp {
 public:
  Mlp() = default;
  /// widths = {in, h1, ..., out}; `activate_output` applies the activation
  /// after the last layer too.
  Mlp(std::string prefix, std::vector<std::size_t> widths, bool activate_output,
      Activation activation);

  void add_params(ParamSet& params, ParamGroup group, Rng& rng) const;
  Var forward(const ParamBinding& p, const Var& x) const;
  std::size_t in_dim() const { return widths_.front(); }
  std::size_t out_dim() const { return widths_.back(); }
  std::size_t layers() const { return widths_.size() - 1; }
  std::string weight_name(std::size_t layer) const;
  std::string bias_name(std::size_t layer) const;

 private:
  std::string prefix_;
  std::vector<std::size_t> widths_;
  bool activate_output_ = true;
  Activation activation_ = Activation::relu;
};

/// Per-episode result of the conditional embedding pipeline.
struct EpisodeEmbedding {
  Var support;      // [m x d_phi]
  Var query;        // [n x d_phi]
  Var y_support;    // [m x 1]
  Var y_query;      // [n x 1]
  Var z_support;    // [1 x d_z]; invalid in non-adaptive mode
  Var z_query;      // [1 x d_z]; only when requested
};

struct BatchEmbedding {
  std::vector<EpisodeEmbedding> episodes;
  Var z_support;  // [b x d_z]
  Var z_query;    // [b x d_z] when requested
};

/// Input extractor, task encoder and conditional embedding with He-style
/// uniform initialisation (bound sqrt(6 / fan_in), zero biases).
class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed, std::optional<SmilesVocab> vocab = std::nullopt);
  /// Rebuilds the architecture around existing parameter values.
  Model(ModelConfig config, ParamSet params, std::optional<SmilesVocab> vocab);

  const ModelConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  const std::optional<SmilesVocab>& vocab() const { return vocab_; }

  std::size_t feature_dim() const;    // width of u'(x)
  std::size_t embedding_dim() const;  // width fed to the kernel

  /// u'(x) for each input, stacked: [n x feature_dim].
  Var extract(const ParamBinding& p, std::span<const Input> inputs) const;
  Var extract_mlp(const ParamBinding& p, const Var& x) const;
  Var extract_cnn(const ParamBinding& p, std::string_view smiles) const;

  /// r(Concat(u(x_i), v(y_i))) for each row: [n x pair_dim].
  Var pair_codes(const ParamBinding& p, const Var& features, const Var& targets) const;
  /// w(Concat(mean, std)) of a set of pair codes: [1 x task_dim].
  Var task_head(const ParamBinding& p, const Var& codes) const;
  /// psi(D): permutation-invariant task embedding of a support set.
  Var encode_task(const ParamBinding& p, const Var& features, const Var& targets) const;
  /// o(Concat(u'(x), z)) for each row of `features`.
  Var conditional_embed(const ParamBinding& p, const Var& features, const Var& z) const;
  /// Embedding fed to the kernel: conditional when adaptive, u'(x) otherwise.
  Var embed(const ParamBinding& p, const Var& features, const Var& z) const;

  Kernel kernel(const ParamBinding& p) const;
  /// k(phi(x; z), phi(x'; z)) for two raw inputs under the task of `support`.
  Var adaptive_kernel(const ParamBinding& p, const Input& a, const Input& b,
                      std::span<const Sample> support) const;

  /// Batched forward of all episodes: one extractor pass over every sample,
  /// task embeddings per episode, conditional embeddings per row.
  BatchEmbedding embed_episodes(const ParamBinding& p, std::span<const Episode> episodes,
                                bool encode_queries) const;

  const Mlp& extractor_mlp() const { return extractor_; }
  const Mlp& embed_net() const { return embed_; }

 private:
  void build_architecture();
  void init_params(std::uint64_t seed);

  ModelConfig config_;
  ParamSet params_;
  std::optional<SmilesVocab> vocab_;
  Mlp extractor_, target_, pair_, task_, embed_;
};

/// Prefix of the extractor parameters shared by u and u'.
inline constexpr const char* kExtractorPrefix = "theta.extractor";

}  // namespace adkl
