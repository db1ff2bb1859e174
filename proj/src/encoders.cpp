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

#include "adkl/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "adkl/errors.hpp"

namespace adkl {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config serialization

namespace {

std::string activation_name(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "'");
}

}  // namespace

void to_json(json& j, const ModelConfig& c) {
  const NetShape& n = c.net;
  j = json{{"input_kind", c.input_kind == InputKind::vector ? "vector" : "smiles"},
           {"input_dim", c.input_dim},
           {"kernel", {{"family", std::string(to_string(c.kernel.family))},
                       {"normalized", c.kernel.normalized}}},
           {"solver", std::string(to_string(c.solver))},
           {"adaptive", c.adaptive},
           {"net",
            {{"input_hidden", n.input_hidden},
             {"target_hidden", n.target_hidden},
             {"pair_hidden", n.pair_hidden},
             {"pair_dim", n.pair_dim},
             {"task_hidden", n.task_hidden},
             {"task_dim", n.task_dim},
             {"embed_hidden", n.embed_hidden},
             {"embed_dim", n.embed_dim},
             {"char_dim", n.char_dim},
             {"cnn_channels", n.cnn_channels},
             {"cnn_kernel", n.cnn_kernel},
             {"activation", activation_name(n.activation)}}}};
}

void from_json(const json& j, ModelConfig& c) {
  const auto kind = j.at("input_kind").get<std::string>();
  if (kind != "vector" && kind != "smiles") throw ConfigError("unknown input kind '" + kind + "'");
  c.input_kind = kind == "vector" ? InputKind::vector : InputKind::smiles;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  const auto fam = parse_kernel_family(j.at("kernel").at("family").get<std::string>());
  if (!fam) throw ConfigError("unknown kernel family");
  c.kernel.family = *fam;
  c.kernel.normalized = j.at("kernel").at("normalized").get<bool>();
  const auto solver = parse_solver(j.at("solver").get<std::string>());
  if (!solver) throw ConfigError("unknown solver");
  c.solver = *solver;
  c.adaptive = j.at("adaptive").get<bool>();
  const json& n = j.at("net");
  c.net.input_hidden = n.at("input_hidden").get<std::vector<std::size_t>>();
  c.net.target_hidden = n.at("target_hidden").get<std::vector<std::size_t>>();
  c.net.pair_hidden = n.at("pair_hidden").get<std::size_t>();
  c.net.pair_dim = n.at("pair_dim").get<std::size_t>();
  c.net.task_hidden = n.at("task_hidden").get<std::size_t>();
  c.net.task_dim = n.at("task_dim").get<std::size_t>();
  c.net.embed_hidden = n.at("embed_hidden").get<std::size_t>();
  c.net.embed_dim = n.at("embed_dim").get<std::size_t>();
  c.net.char_dim = n.at("char_dim").get<std::size_t>();
  c.net.cnn_channels = n.at("cnn_channels").get<std::vector<std::size_t>>();
  c.net.cnn_kernel = n.at("cnn_kernel").get<std::size_t>();
  c.net.activation = parse_activation(n.at("activation").get<std::string>());
}

// ---------------------------------------------------------------------------
// SmilesVocab

SmilesVocab::SmilesVocab(std::string_view characters) {
  std::set<char> unique(characters.begin(), characters.end());
  chars_.assign(unique.begin(), unique.end());
  for (std::size_t i = 0; i < chars_.size(); ++i) index_[chars_[i]] = i + 2;
}

SmilesVocab SmilesVocab::from_tasks(const TaskCollection& collection,
                                    std::span<const std::size_t> tasks) {
  std::string all;
  for (auto t : tasks) {
    for (const auto& s : collection.tasks.at(t).samples) {
      if (const auto* str = std::get_if<std::string>(&s.input)) all += *str;
    }
  }
  return SmilesVocab(all);
}

std::size_t SmilesVocab::index(char c) const {
  auto it = index_.find(c);
  return it == index_.end() ? kUnknown : it->second;
}

char SmilesVocab::character(std::size_t index) const {
  if (index < 2 || index >= size()) throw ContractError("vocabulary index has no character");
  return chars_[index - 2];
}

std::vector<std::size_t> SmilesVocab::encode(std::string_view smiles) const {
  std::vector<std::size_t> out;
  out.reserve(smiles.size());
  for (char c : smiles) out.push_back(index(c));
  return out;
}

// ---------------------------------------------------------------------------
// ParamBinding / Mlp

Var ParamBinding::operator()(const std::string& name) const {
  if (mutable_) return tape_->param(*mutable_, name);
  return tape_->param(*params_, name);
}

Mlp::Mlp(std::string prefix, std::vector<std::size_t> widths, bool activate_output,
         Activation activation)
    : prefix_(std::move(prefix)),
      widths_(std::move(widths)),
      activate_output_(activate_output),
      activation_(activation) {
  if (widths_.size() < 2) throw ContractError("an MLP needs at least one layer");
  for (auto w : widths_) {
    if (w == 0) throw ContractError("zero-width layer in " + prefix_);
  }
}

std::string Mlp::weight_name(std::size_t layer) const {
  return prefix_ + "." + std::to_string(layer) + ".weight";
}

std::string Mlp::bias_name(std::size_t layer) const {
  return prefix_ + "." + std::to_string(layer) + ".bias";
}

namespace {

Array he_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> w(fan_in * fan_out);
  for (auto& v : w) v = u(rng);
  return Array::matrix(fan_in, fan_out, std::move(w));
}

Var activate(const Var& x, Activation a) { return a == Activation::relu ? relu(x) : tanh(x); }

}  // namespace

void Mlp::add_params(ParamSet& params, ParamGroup group, Rng& rng) const {
  for (std::size_t l = 0; l < layers(); ++l) {
    params.add(weight_name(l), group, he_uniform(widths_[l], widths_[l + 1], rng));
    params.add(bias_name(l), group, Array::zeros({1, widths_[l + 1]}));
  }
}

Var Mlp::forward(const ParamBinding& p, const Var& x) const {
  if (x.cols() != in_dim()) {
    throw DimensionError(prefix_ + " expects width " + std::to_string(in_dim()) + ", got " +
                         std::to_string(x.cols()));
  }
  Var h = x;
  for (std::size_t l = 0; l < layers(); ++l) {
    h = add_bias(matmul(h, p(weight_name(l))), p(bias_name(l)));
    if (l + 1 < layers() || activate_output_) h = activate(h, activation_);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Model

namespace {

std::vector<std::size_t> widths(std::size_t in, std::initializer_list<std::size_t> hidden,
                                std::size_t out) {
  std::vector<std::size_t> w{in};
  for (auto h : hidden) {
    if (h) w.push_back(h);
  }
  w.push_back(out);
  return w;
}

std::string conv_weight(std::size_t l) {
  return std::string(kExtractorPrefix) + ".conv" + std::to_string(l) + ".weight";
}
std::string conv_bias(std::size_t l) {
  return std::string(kExtractorPrefix) + ".conv" + std::to_string(l) + ".bias";
}
const std::string kCharEmbedding = std::string(kExtractorPrefix) + ".char_embedding";

}  // namespace

Model::Model(ModelConfig config, std::uint64_t seed, std::optional<SmilesVocab> vocab)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
  build_architecture();
  init_params(seed);
}

Model::Model(ModelConfig config, ParamSet params, std::optional<SmilesVocab> vocab)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
  build_architecture();
  Model reference(config_, 0, vocab_);
  for (const auto& [name, p] : reference.params()) {
    if (!params.contains(name)) throw CheckpointError("missing parameter '" + name + "'");
    if (params.at(name).value.shape() != p.value.shape()) {
      throw CheckpointError("parameter '" + name + "' has the wrong shape");
    }
  }
  if (params.size() != reference.params().size()) {
    throw CheckpointError("parameter set has unexpected entries");
  }
  params_ = std::move(params);
}

std::size_t Model::feature_dim() const {
  if (config_.input_kind == InputKind::smiles) return config_.net.cnn_channels.back();
  return config_.net.input_hidden.back();
}

std::size_t Model::embedding_dim() const {
  return config_.adaptive ? config_.net.embed_dim : feature_dim();
}

void Model::build_architecture() {
  const NetShape& n = config_.net;
  const Activation act = n.activation;
  if (config_.input_kind == InputKind::vector) {
    if (n.input_hidden.empty()) throw ConfigError("input extractor needs at least one layer");
    if (config_.input_dim == 0) throw ConfigError("input dimension must be positive");
    std::vector<std::size_t> w{config_.input_dim};
    w.insert(w.end(), n.input_hidden.begin(), n.input_hidden.end());
    extractor_ = Mlp(kExtractorPrefix, w, true, act);
  } else {
    if (n.cnn_channels.empty()) throw ConfigError("CNN extractor needs at least one layer");
    if (n.cnn_kernel == 0 || n.char_dim == 0) throw ConfigError("CNN kernel and char_dim must be positive");
    if (!vocab_) throw ConfigError("SMILES models need a vocabulary");
  }
  if (!config_.adaptive) return;
  const std::size_t dv = n.target_hidden.empty() ? 1 : n.target_hidden.back();
  if (!n.target_hidden.empty()) {
    std::vector<std::size_t> w{1};
    w.insert(w.end(), n.target_hidden.begin(), n.target_hidden.end());
    target_ = Mlp("eta.target", w, true, act);
  }
  pair_ = Mlp("eta.pair", widths(feature_dim() + dv, {n.pair_hidden}, n.pair_dim), false, act);
  task_ = Mlp("eta.task", widths(2 * n.pair_dim, {n.task_hidden}, n.task_dim), false, act);
  embed_ = Mlp("theta.embed", widths(feature_dim() + n.task_dim, {n.embed_hidden}, n.embed_dim),
               false, act);
}

void Model::init_params(std::uint64_t seed) {
  Rng rng(seed);
  const NetShape& n = config_.net;
  if (config_.input_kind == InputKind::vector) {
    extractor_.add_params(params_, ParamGroup::theta, rng);
  } else {
    params_.add(kCharEmbedding, ParamGroup::theta, he_uniform(vocab_->size(), n.char_dim, rng).reshaped({vocab_->size(), n.char_dim}));
    std::size_t in = n.char_dim;
    for (std::size_t l = 0; l < n.cnn_channels.size(); ++l) {
      params_.add(conv_weight(l), ParamGroup::theta,
                  he_uniform(n.cnn_kernel * in, n.cnn_channels[l], rng));
      params_.add(conv_bias(l), ParamGroup::theta, Array::zeros({1, n.cnn_channels[l]}));
      in = n.cnn_channels[l];
    }
  }
  if (config_.adaptive) {
    if (!n.target_hidden.empty()) target_.add_params(params_, ParamGroup::eta, rng);
    pair_.add_params(params_, ParamGroup::eta, rng);
    task_.add_params(params_, ParamGroup::eta, rng);
    embed_.add_params(params_, ParamGroup::theta, rng);
  }
  add_kernel_params(config_.kernel, params_);
}

Var Model::extract_mlp(const ParamBinding& p, const Var& x) const {
  if (config_.input_kind != InputKind::vector) throw ContractError("model expects SMILES inputs");
  return extractor_.forward(p, x);
}

Var Model::extract_cnn(const ParamBinding& p, std::string_view smiles) const {
  if (config_.input_kind != InputKind::smiles) throw ContractError("model expects vector inputs");
  if (smiles.empty()) throw ContractError("empty SMILES string");
  const NetShape& n = config_.net;
  Var h = gather_rows(p(kCharEmbedding), vocab_->encode(smiles));
  for (std::size_t l = 0; l < n.cnn_channels.size(); ++l) {
    h = add_bias(matmul(im2col(h, n.cnn_kernel), p(conv_weight(l))), p(conv_bias(l)));
    h = activate(h, n.activation);
  }
  return max_rows(h);
}

Var Model::extract(const ParamBinding& p, std::span<const Input> inputs) const {
  if (inputs.empty()) throw EmptySetError("no inputs to extract");
  Tape& t = p.tape();
  if (config_.input_kind == InputKind::vector) {
    const std::size_t d = config_.input_dim;
    std::vector<double> x;
    x.reserve(inputs.size() * d);
    for (const auto& in : inputs) {
      const auto* v = std::get_if<std::vector<double>>(&in);
      if (!v) throw ContractError("model expects vector inputs, got a string");
      if (v->size() != d) {
        throw DimensionError("input of width " + std::to_string(v->size()) + ", expected " +
                             std::to_string(d));
      }
      x.insert(x.end(), v->begin(), v->end());
    }
    return extract_mlp(p, t.constant(Array::matrix(inputs.size(), d, std::move(x))));
  }
  // Identical strings in one call share a single CNN pass.
  std::unordered_map<std::string, std::size_t> first;
  std::vector<Var> unique;
  std::vector<std::size_t> rows;
  rows.reserve(inputs.size());
  for (const auto& in : inputs) {
    const auto* s = std::get_if<std::string>(&in);
    if (!s) throw ContractError("model expects SMILES inputs, got a vector");
    auto [it, inserted] = first.emplace(*s, unique.size());
    if (inserted) unique.push_back(extract_cnn(p, *s));
    rows.push_back(it->second);
  }
  Var stacked = concat_rows(unique);
  if (unique.size() == inputs.size()) return stacked;
  return gather_rows(stacked, std::move(rows));
}

Var Model::pair_codes(const ParamBinding& p, const Var& features, const Var& targets) const {
  if (!config_.adaptive) throw ContractError("non-adaptive models have no task encoder");
  if (targets.cols() != 1 || targets.rows() != features.rows()) {
    throw DimensionError("targets must be one scalar per feature row");
  }
  Var v = config_.net.target_hidden.empty() ? targets : target_.forward(p, targets);
  return pair_.forward(p, concat(features, v, 1));
}

Var Model::task_head(const ParamBinding& p, const Var& codes) const {
  MeanStd ms = reduce_mean_std(codes);
  return task_.forward(p, concat(ms.mean, ms.std, 1));
}

Var Model::encode_task(const ParamBinding& p, const Var& features, const Var& targets) const {
  if (features.rows() == 0) throw ContractError("empty support set");
  return task_head(p, pair_codes(p, features, targets));
}

Var Model::conditional_embed(const ParamBinding& p, const Var& features, const Var& z) const {
  if (!config_.adaptive) throw ContractError("non-adaptive models have no conditional embedding");
  if (z.rows() != 1 || z.cols() != config_.net.task_dim) {
    throw DimensionError("task embedding must be [1 x " + std::to_string(config_.net.task_dim) + "]");
  }
  return embed_.forward(p, concat(features, repeat_rows(z, features.rows()), 1));
}

Var Model::embed(const ParamBinding& p, const Var& features, const Var& z) const {
  return config_.adaptive ? conditional_embed(p, features, z) : features;
}

Kernel Model::kernel(const ParamBinding& p) const {
  if (config_.kernel.family == KernelFamily::rbf) return Kernel(config_.kernel, p(kLogLengthscale));
  return Kernel(config_.kernel);
}

Var Model::adaptive_kernel(const ParamBinding& p, const Input& a, const Input& b,
                           std::span<const Sample> support) const {
  std::vector<Input> inputs{a, b};
  Var z;
  if (config_.adaptive) {
    if (support.empty()) throw ContractError("adaptive kernel needs a support set");
    std::vector<Input> sx;
    std::vector<double> sy;
    for (const auto& s : support) {
      sx.push_back(s.input);
      sy.push_back(s.target);
    }
    z = encode_task(p, extract(p, sx), p.tape().constant(Array::column(sy)));
  }
  Var phi = embed(p, extract(p, inputs), z);
  return kernel(p).eval(slice_rows(phi, 0, 1), slice_rows(phi, 1, 1));
}

BatchEmbedding Model::embed_episodes(const ParamBinding& p, std::span<const Episode> episodes,
                                     bool encode_queries) const {
  if (episodes.empty()) throw EmptySetError("no episodes");
  Tape& t = p.tape();
  std::vector<Input> inputs;
  std::vector<double> targets;
  struct Span {
    std::size_t support_begin, support_count, query_begin, query_count;
  };
  std::vector<Span> spans;
  for (const auto& e : episodes) {
    if (e.support.empty()) throw ContractError("episode with an empty support set");
    Span s{inputs.size(), e.support.size(), 0, e.query.size()};
    for (const auto& smp : e.support) {
      inputs.push_back(smp.input);
      targets.push_back(smp.target);
    }
    s.query_begin = inputs.size();
    for (const auto& smp : e.query) {
      inputs.push_back(smp.input);
      targets.push_back(smp.target);
    }
    spans.push_back(s);
  }
  const std::size_t total = inputs.size();
  Var features = extract(p, inputs);
  Var y = t.constant(Array::column(targets));

  BatchEmbedding out;
  out.episodes.resize(episodes.size());
  for (std::size_t e = 0; e < spans.size(); ++e) {
    out.episodes[e].y_support = slice_rows(y, spans[e].support_begin, spans[e].support_count);
    out.episodes[e].y_query = slice_rows(y, spans[e].query_begin, spans[e].query_count);
  }

  if (!config_.adaptive) {
    for (std::size_t e = 0; e < spans.size(); ++e) {
      out.episodes[e].support = slice_rows(features, spans[e].support_begin, spans[e].support_count);
      out.episodes[e].query = slice_rows(features, spans[e].query_begin, spans[e].query_count);
    }
    return out;
  }

  // Pair codes for the rows that enter a task encoding.
  std::vector<std::size_t> code_rows;
  if (encode_queries) {
    code_rows.resize(total);
    for (std::size_t i = 0; i < total; ++i) code_rows[i] = i;
  } else {
    for (const auto& s : spans) {
      for (std::size_t i = 0; i < s.support_count; ++i) code_rows.push_back(s.support_begin + i);
    }
  }
  Var codes = code_rows.size() == total
                  ? pair_codes(p, features, y)
                  : pair_codes(p, gather_rows(features, code_rows), gather_rows(y, code_rows));
  // Position of each original row inside `codes`.
  std::vector<std::size_t> code_pos(total, 0);
  for (std::size_t i = 0; i < code_rows.size(); ++i) code_pos[code_rows[i]] = i;

  auto moments = [&](std::size_t begin, std::size_t count) {
    MeanStd ms = reduce_mean_std(slice_rows(codes, code_pos[begin], count));
    return concat(ms.mean, ms.std, 1);
  };
  std::vector<Var> support_moments, query_moments;
  for (const auto& s : spans) {
    support_moments.push_back(moments(s.support_begin, s.support_count));
    if (encode_queries) {
      if (s.query_count == 0) throw ContractError("cannot encode an empty query set");
      query_moments.push_back(moments(s.query_begin, s.query_count));
    }
  }
  out.z_support = task_.forward(p, concat_rows(support_moments));
  if (encode_queries) out.z_query = task_.forward(p, concat_rows(query_moments));

  std::vector<std::size_t> episode_of_row(total);
  for (std::size_t e = 0; e < spans.size(); ++e) {
    const auto& s = spans[e];
    for (std::size_t i = 0; i < s.support_count; ++i) episode_of_row[s.support_begin + i] = e;
    for (std::size_t i = 0; i < s.query_count; ++i) episode_of_row[s.query_begin + i] = e;
  }
  Var conditioned =
      embed_.forward(p, concat(features, gather_rows(out.z_support, std::move(episode_of_row)), 1));
  for (std::size_t e = 0; e < spans.size(); ++e) {
    auto& ee = out.episodes[e];
    ee.support = slice_rows(conditioned, spans[e].support_begin, spans[e].support_count);
    ee.query = slice_rows(conditioned, spans[e].query_begin, spans[e].query_count);
    ee.z_support = slice_rows(out.z_support, e, 1);
    if (encode_queries) ee.z_query = slice_rows(out.z_query, e, 1);
  }
  return out;
}

}  // namespace adkl
