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
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "adkl/cli.hpp"
#include "adkl/errors.hpp"

namespace adkl::cli {

using nlohmann::json;

namespace {

std::vector<KeySpec> build_keys() {
  using K = KeyType;
  return {
      {"data.path", K::string, "", "task collection file (JSON lines); empty generates sinusoids", true},
      {"data.tasks", K::integer, 5000, "number of generated sinusoid tasks", true},
      {"data.samples", K::integer, 60, "samples per generated sinusoid task", true},
      {"data.seed", K::integer, 0, "seed of the sinusoid generator", true},
      {"data.noise", K::boolean, true, "add observation noise to generated sinusoids", true},
      {"data.scale_targets", K::string, "auto", "per-task min-max target scaling: auto, true or false", true},
      {"data.split_seed", K::integer, 0, "seed for splits of files without split labels", true},
      {"data.train_tasks", K::integer, 0, "meta-train tasks to subsample (T); 0 uses all", true},
      {"solver", K::string, "krr", "task solver: krr or gp", true},
      {"kernel", K::string, "linear", "kernel family: linear or rbf", true},
      {"normalized", K::boolean, false, "cosine-normalize the kernel", true},
      {"adaptive", K::boolean, true, "condition the embedding on a task encoding", true},
      {"gamma", K::real, 0.1, "weight of the contrastive regularizer; 0 by default when adaptive is false", true},
      {"net.input_hidden", K::integer_list, json::array({120, 120}), "input extractor widths", true},
      {"net.target_hidden", K::integer_list, json::array({16, 16}), "target encoder widths; empty passes y through", true},
      {"net.pair_hidden", K::integer, 128, "pair encoder hidden width; 0 for none", true},
      {"net.pair_dim", K::integer, 128, "pair code width", true},
      {"net.task_hidden", K::integer, 128, "task head hidden width; 0 for none", true},
      {"net.task_dim", K::integer, 64, "task embedding width", true},
      {"net.embed_hidden", K::integer, 128, "conditional embedding hidden width; 0 for none", true},
      {"net.embed_dim", K::integer, 128, "conditional embedding width", true},
      {"net.char_dim", K::integer, 32, "SMILES character embedding width", true},
      {"net.cnn_channels", K::integer_list, json::array({128, 128}), "SMILES convolution channels", true},
      {"net.cnn_kernel", K::integer, 5, "SMILES convolution width", true},
      {"net.activation", K::string, "relu", "hidden activation: relu or tanh", true},
      {"meta.batch_size", K::integer, 32, "episodes per meta-batch (b)", true},
      {"meta.support_size", K::integer, 10, "support samples per episode (m)", true},
      {"meta.query_size", K::integer, 10, "query samples per training episode", true},
      {"train.episodes", K::integer, 20000, "meta-batches to train on", true},
      {"train.eval_interval", K::integer, 250, "meta-batches between validation passes", true},
      {"train.val_episodes", K::integer, 320, "fixed meta-validation episodes", true},
      {"optim.lr", K::real, 1e-3, "Adam learning rate", true},
      {"optim.beta1", K::real, 0.9, "Adam first-moment decay", true},
      {"optim.beta2", K::real, 0.999, "Adam second-moment decay", true},
      {"optim.eps", K::real, 1e-8, "Adam epsilon", true},
      {"seed", K::integer, 0, "seed for initialization, sampling and evaluation", true},
      {"out_dir", K::string, "out", "directory for checkpoints, logs and reports"},
      {"workers", K::integer, 1, "threads for task evaluation; 1 is bitwise reproducible"},
      {"eval.partitions", K::integer, 20, "random partitions per task"},
      {"eval.support_size", K::integer, 0, "support size at evaluation; 0 uses meta.support_size"},
      {"active.init", K::integer, 5, "initial labelled points"},
      {"active.budget", K::integer, 20, "queries per run"},
      {"active.query_size", K::integer, 20, "held-out points scored after each query"},
      {"active.labeling", K::string, "predicted", "label of queried points: predicted or oracle"},
      {"active.strategies", K::string_list, json::array({"entropy", "random"}), "acquisition strategies"},
      {"active.tasks", K::integer, 0, "meta-test tasks to run; 0 uses all"},
      {"curves.points", K::integer, 200, "grid points per curve"},
      {"curves.tasks", K::integer, 5, "meta-test tasks to draw curves for; 0 uses all"},
      {"curves.support_size", K::integer, 0, "support points per curve; 0 uses meta.support_size"},
      {"gradcheck.coords", K::integer, 16, "coordinates checked per tensor; 0 checks all"},
      {"gradcheck.step", K::real, 1e-5, "central difference step"},
      {"gradcheck.tolerance", K::real, 1e-4, "largest accepted relative error"},
      {"grid.gammas", K::real_list, json::array({0.0, 0.01, 0.1}), "gamma values of the grid"},
      {"grid.kernels", K::string_list, json::array({"linear", "rbf"}), "kernel families of the grid"},
      {"grid.normalized", K::string_list, json::array({"false"}), "normalization flags of the grid"},
      {"grid.input_hidden", K::string_list, json::array(), "extractor widths of the grid, e.g. 64x64; empty uses net.input_hidden"},
  };
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::optional<bool> parse_bool(const std::string& text) {
  const auto t = lower(trim(text));
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  return std::nullopt;
}

json parse_integer(const std::string& key, const std::string& text) {
  const auto t = trim(text);
  if (t.empty() || !std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw ConfigError(key + ": '" + text + "' is not a non-negative integer");
  }
  try {
    return std::stoull(t);
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + text + "' is out of range");
  }
}

json parse_real(const std::string& key, const std::string& text) {
  const auto t = trim(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (t.empty() || used != t.size() || !std::isfinite(v)) {
    throw ConfigError(key + ": '" + text + "' is not a number");
  }
  return v;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

bool valid_scalar(KeyType type, const json& v) {
  switch (type) {
    case KeyType::integer: return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
    case KeyType::real: return v.is_number();
    case KeyType::boolean: return v.is_boolean();
    case KeyType::string: return v.is_string();
    default: return false;
  }
}

KeyType element_type(KeyType list) {
  switch (list) {
    case KeyType::integer_list: return KeyType::integer;
    case KeyType::real_list: return KeyType::real;
    default: return KeyType::string;
  }
}

bool is_list(KeyType t) {
  return t == KeyType::integer_list || t == KeyType::real_list || t == KeyType::string_list;
}

template <class T>
bool one_of(const T& v, std::initializer_list<T> options) {
  return std::find(options.begin(), options.end(), v) != options.end();
}

}  // namespace

const std::vector<KeySpec>& config_keys() {
  static const std::vector<KeySpec> keys = build_keys();
  return keys;
}

const KeySpec& key_spec(const std::string& key) {
  for (const auto& k : config_keys()) {
    if (k.key == key) return k;
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

std::string env_name(const std::string& key) {
  std::string out = "ADKL_";
  for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

ExperimentConfig::ExperimentConfig() {
  for (const auto& k : config_keys()) values_[k.key] = k.default_value;
}

void ExperimentConfig::set(const std::string& key, const json& value) {
  const KeySpec& spec = key_spec(key);
  json v = value;
  if (is_list(spec.type)) {
    if (!v.is_array()) throw ConfigError(key + ": expected a list");
    for (auto& e : v) {
      if (!valid_scalar(element_type(spec.type), e)) throw ConfigError(key + ": bad list element " + e.dump());
      if (spec.type == KeyType::real_list) e = e.get<double>();
    }
  } else {
    if (!valid_scalar(spec.type, v)) throw ConfigError(key + ": bad value " + v.dump());
    if (spec.type == KeyType::real) v = v.get<double>();
  }
  values_[key] = std::move(v);
  explicit_.insert(key);
}

void ExperimentConfig::set_text(const std::string& key, const std::string& text) {
  const KeySpec& spec = key_spec(key);
  switch (spec.type) {
    case KeyType::integer: set(key, parse_integer(key, text)); return;
    case KeyType::real: set(key, parse_real(key, text)); return;
    case KeyType::boolean: {
      const auto b = parse_bool(text);
      if (!b) throw ConfigError(key + ": '" + text + "' is not a boolean");
      set(key, *b);
      return;
    }
    case KeyType::string: set(key, text); return;
    default: break;
  }
  json list = json::array();
  for (const auto& item : split_list(text)) {
    switch (spec.type) {
      case KeyType::integer_list: list.push_back(parse_integer(key, item)); break;
      case KeyType::real_list: list.push_back(parse_real(key, item)); break;
      default: list.push_back(item); break;
    }
  }
  set(key, list);
}

void ExperimentConfig::merge_json(const json& doc, bool mark_explicit) {
  if (!doc.is_object()) throw ConfigError("configuration document must be a JSON object");
  std::function<void(const json&, const std::string&)> walk = [&](const json& node, const std::string& prefix) {
    for (const auto& [name, value] : node.items()) {
      const std::string key = prefix.empty() ? name : prefix + "." + name;
      const bool known = std::any_of(config_keys().begin(), config_keys().end(),
                                     [&](const KeySpec& k) { return k.key == key; });
      if (!known && value.is_object()) {
        walk(value, key);
        continue;
      }
      const bool was_explicit = is_explicit(key);
      set(key, value);
      if (!mark_explicit && !was_explicit) explicit_.erase(key);
    }
  };
  walk(doc, "");
}

void ExperimentConfig::merge_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
  merge_json(doc);
}

void ExperimentConfig::merge_env(const std::function<std::optional<std::string>(const std::string&)>& getenv) {
  for (const auto& k : config_keys()) {
    if (auto v = getenv(env_name(k.key))) set_text(k.key, *v);
  }
}

void ExperimentConfig::apply_implied_defaults() {
  if (!get<bool>("adaptive") && !is_explicit("gamma")) values_["gamma"] = 0.0;
}

const json& ExperimentConfig::at(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  return it->second;
}

json ExperimentConfig::to_json() const {
  json doc = json::object();
  for (const auto& [key, value] : values_) {
    json* node = &doc;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
    (*node)[parts.back()] = value;
  }
  return doc;
}

std::string ExperimentConfig::training_hash() const {
  json doc = json::object();
  for (const auto& k : config_keys()) {
    if (k.training) doc[k.key] = values_.at(k.key);
  }
  return hex64(fnv1a(doc.dump()));
}

std::string ExperimentConfig::hash() const { return hex64(fnv1a(json(values_).dump())); }

std::vector<std::string> ExperimentConfig::problems() const {
  std::vector<std::string> p;
  auto u = [&](const std::string& k) { return get<std::size_t>(k); };
  auto r = [&](const std::string& k) { return get<double>(k); };
  auto s = [&](const std::string& k) { return get<std::string>(k); };

  if (!one_of(s("solver"), {std::string("krr"), std::string("gp")})) {
    p.push_back("solver: unknown solver '" + s("solver") + "' (expected krr or gp)");
  }
  if (!parse_kernel_family(s("kernel"))) {
    p.push_back("kernel: unknown kernel '" + s("kernel") + "' (expected linear or rbf)");
  }
  if (!one_of(s("net.activation"), {std::string("relu"), std::string("tanh")})) {
    p.push_back("net.activation: unknown activation '" + s("net.activation") + "'");
  }
  if (!one_of(s("data.scale_targets"), {std::string("auto"), std::string("true"), std::string("false")})) {
    p.push_back("data.scale_targets: expected auto, true or false");
  }
  if (!parse_labeling(s("active.labeling"))) p.push_back("active.labeling: expected predicted or oracle");
  for (const auto& st : get<std::vector<std::string>>("active.strategies")) {
    if (!parse_strategy(st)) p.push_back("active.strategies: unknown strategy '" + st + "'");
  }
  for (const auto& k : get<std::vector<std::string>>("grid.kernels")) {
    if (!parse_kernel_family(k)) p.push_back("grid.kernels: unknown kernel '" + k + "'");
  }
  for (const auto& n : get<std::vector<std::string>>("grid.normalized")) {
    if (!parse_bool(n)) p.push_back("grid.normalized: '" + n + "' is not a boolean");
  }
  for (const auto& h : get<std::vector<std::string>>("grid.input_hidden")) {
    if (h.empty() || h.find_first_not_of("0123456789x") != std::string::npos) {
      p.push_back("grid.input_hidden: '" + h + "' is not a list of widths like 64x64");
    }
  }
  const double gamma = r("gamma");
  if (gamma < 0.0) p.push_back("gamma: must be >= 0");
  for (double g : get<std::vector<double>>("grid.gammas")) {
    if (g < 0.0) p.push_back("grid.gammas: values must be >= 0");
  }
  if (gamma > 0.0 && u("meta.batch_size") < 2) p.push_back("meta.batch_size: must be >= 2 when gamma > 0");
  if (gamma > 0.0 && !get<bool>("adaptive")) {
    p.push_back("gamma: must be 0 for a non-adaptive model (no task encoder to regularize)");
  }
  for (const char* k : {"meta.batch_size", "meta.support_size", "meta.query_size", "train.eval_interval",
                        "eval.partitions", "workers", "active.init", "active.query_size", "curves.points",
                        "net.pair_dim", "net.task_dim", "net.embed_dim", "net.char_dim", "net.cnn_kernel",
                        "data.samples"}) {
    if (u(k) == 0) p.push_back(std::string(k) + ": must be positive");
  }
  if (s("data.path").empty() && u("data.tasks") < 4) {
    p.push_back("data.tasks: at least 4 tasks are needed so that every split is non-empty");
  }
  if (s("data.path").empty() && u("data.samples") < 2) p.push_back("data.samples: must be >= 2");
  if (!(r("optim.lr") > 0.0)) p.push_back("optim.lr: must be positive");
  if (!(r("optim.beta1") >= 0.0 && r("optim.beta1") < 1.0)) p.push_back("optim.beta1: must be in [0, 1)");
  if (!(r("optim.beta2") >= 0.0 && r("optim.beta2") < 1.0)) p.push_back("optim.beta2: must be in [0, 1)");
  if (!(r("optim.eps") > 0.0)) p.push_back("optim.eps: must be positive");
  if (!(r("gradcheck.step") > 0.0)) p.push_back("gradcheck.step: must be positive");
  if (!(r("gradcheck.tolerance") > 0.0)) p.push_back("gradcheck.tolerance: must be positive");
  const auto hidden = get<std::vector<std::size_t>>("net.input_hidden");
  if (hidden.empty()) p.push_back("net.input_hidden: needs at least one layer");
  for (const char* k : {"net.input_hidden", "net.target_hidden", "net.cnn_channels"}) {
    for (auto w : get<std::vector<std::size_t>>(k)) {
      if (w == 0) p.push_back(std::string(k) + ": widths must be positive");
    }
  }
  if (get<std::vector<std::size_t>>("net.cnn_channels").empty()) {
    p.push_back("net.cnn_channels: needs at least one layer");
  }
  return p;
}

void ExperimentConfig::validate() const {
  const auto p = problems();
  if (p.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& line : p) msg += "\n  " + line;
  throw ConfigError(msg);
}

ModelConfig ExperimentConfig::model_config(InputKind kind, std::size_t input_dim) const {
  ModelConfig c;
  c.input_kind = kind;
  c.input_dim = input_dim;
  c.solver = *parse_solver(get<std::string>("solver"));
  c.kernel.family = *parse_kernel_family(get<std::string>("kernel"));
  c.kernel.normalized = get<bool>("normalized");
  c.adaptive = get<bool>("adaptive");
  NetShape& n = c.net;
  n.input_hidden = get<std::vector<std::size_t>>("net.input_hidden");
  n.target_hidden = get<std::vector<std::size_t>>("net.target_hidden");
  n.pair_hidden = get<std::size_t>("net.pair_hidden");
  n.pair_dim = get<std::size_t>("net.pair_dim");
  n.task_hidden = get<std::size_t>("net.task_hidden");
  n.task_dim = get<std::size_t>("net.task_dim");
  n.embed_hidden = get<std::size_t>("net.embed_hidden");
  n.embed_dim = get<std::size_t>("net.embed_dim");
  n.char_dim = get<std::size_t>("net.char_dim");
  n.cnn_channels = get<std::vector<std::size_t>>("net.cnn_channels");
  n.cnn_kernel = get<std::size_t>("net.cnn_kernel");
  n.activation = get<std::string>("net.activation") == "tanh" ? Activation::tanh : Activation::relu;
  return c;
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t;
  t.batch_size = get<std::size_t>("meta.batch_size");
  t.support_size = get<std::size_t>("meta.support_size");
  t.query_size = get<std::size_t>("meta.query_size");
  t.gamma = get<double>("gamma");
  t.episodes = get<std::size_t>("train.episodes");
  t.eval_interval = get<std::size_t>("train.eval_interval");
  t.val_episodes = get<std::size_t>("train.val_episodes");
  t.optim.lr = get<double>("optim.lr");
  t.optim.beta1 = get<double>("optim.beta1");
  t.optim.beta2 = get<double>("optim.beta2");
  t.optim.eps = get<double>("optim.eps");
  t.seed = get<std::uint64_t>("seed");
  return t;
}

SinusoidOptions ExperimentConfig::sinusoid_options() const {
  SinusoidOptions o;
  o.tasks = get<std::size_t>("data.tasks");
  o.samples_per_task = get<std::size_t>("data.samples");
  o.seed = get<std::uint64_t>("data.seed");
  o.noise = get<bool>("data.noise");
  return o;
}

LoadOptions ExperimentConfig::load_options() const {
  LoadOptions o;
  const auto scale = get<std::string>("data.scale_targets");
  if (scale != "auto") o.scale_targets = scale == "true";
  o.split_seed = get<std::uint64_t>("data.split_seed");
  return o;
}

TaskCollection load_data(const ExperimentConfig& config, const std::function<void(const std::string&)>& warn) {
  const auto path = config.get<std::string>("data.path");
  if (path.empty()) return gen_sinusoids(config.sinusoid_options());
  LoadOptions o = config.load_options();
  o.warn = warn;
  return load_collection(path, o);
}

std::string collection_name(const ExperimentConfig& config) {
  const auto path = config.get<std::string>("data.path");
  if (path.empty()) return "sinusoids";
  return std::filesystem::path(path).stem().string();
}

std::pair<InputKind, std::size_t> input_signature(const TaskCollection& collection) {
  for (const auto& t : collection.tasks) {
    for (const auto& s : t.samples) {
      if (const auto* v = std::get_if<std::vector<double>>(&s.input)) return {InputKind::vector, v->size()};
      return {InputKind::smiles, 0};
    }
  }
  throw ContractError("collection has no samples");
}

}  // namespace adkl::cli
