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

#include "adkl/meta.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "adkl/errors.hpp"

namespace adkl {

Var info_nce(const Var& z_trn, const Var& z_val) {
  if (z_trn.rows() != z_val.rows() || z_trn.cols() != z_val.cols()) {
    throw DimensionError("info_nce needs matching [b x d] embedding lists");
  }
  const std::size_t b = z_trn.rows();
  if (b < 2) throw ContractError("info_nce needs at least two tasks for negatives");
  Var s = matmul(z_trn, transpose(z_val));
  Array off = Array::filled({b, b}, 1.0);
  for (std::size_t i = 0; i < b; ++i) off(i, i) = 0.0;
  const double log_pairs = std::log(static_cast<double>(b * (b - 1)));
  return sub(mean(diag_part(s)), shift(logsumexp(s, off), -log_pairs));
}

Var episode_task_loss(const Model& model, const Kernel& kernel, const EpisodeEmbedding& e) {
  GramMatrix k_tt = kernel.gram(e.support, e.support, true);
  GramMatrix k_vt = kernel.gram(e.query, e.support, false);
  if (model.config().solver == SolverKind::krr) {
    return krr_task_loss(krr_fit(k_tt, e.y_support), k_vt, e.y_query);
  }
  GramMatrix k_vv = kernel.gram(e.query, e.query, true);
  return gp_task_loss(gp_predict(k_tt, k_vt, k_vv, e.y_support), e.y_query);
}

MetaLossResult meta_loss(const Model& model, const ParamBinding& p, std::span<const Episode> batch,
                         double gamma) {
  if (gamma < 0.0) throw ContractError("gamma must be non-negative");
  const bool contrastive = gamma > 0.0;
  if (contrastive && batch.size() < 2) {
    throw ContractError("gamma > 0 needs a meta-batch of at least two episodes");
  }
  if (contrastive && !model.config().adaptive) {
    throw ContractError("gamma > 0 needs an adaptive model");
  }
  BatchEmbedding emb = model.embed_episodes(p, batch, contrastive);
  Kernel kernel = model.kernel(p);

  MetaLossResult out;
  Var total;
  for (std::size_t i = 0; i < emb.episodes.size(); ++i) {
    Var loss;
    try {
      loss = episode_task_loss(model, kernel, emb.episodes[i]);
    } catch (const FactorizationError&) {
      out.skipped.push_back(i);
      continue;
    }
    total = total.valid() ? add(total, loss) : loss;
    ++out.solved;
  }
  if (out.solved == 0) throw NumericalError("every episode of the meta-batch failed to solve");
  total = scale(total, 1.0 / static_cast<double>(out.solved));
  out.task_loss = total.item();
  if (contrastive) {
    Var nce = info_nce(emb.z_support, emb.z_query);
    out.info_nce = nce.item();
    total = sub(total, scale(nce, gamma));
  }
  out.total = total;
  return out;
}

// ---------------------------------------------------------------------------
// Adam

void Adam::step(ParamSet& params) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    const std::size_t n = p.value.size();
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.size() != n) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
    }
    double* w = p.value.data().data();
    const double* g = p.grad.data().data();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      w[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
}

void Adam::restore(std::uint64_t t, std::map<std::string, std::vector<double>> m,
                   std::map<std::string, std::vector<double>> v) {
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

// ---------------------------------------------------------------------------
// Training

void validate(const TrainConfig& c) {
  if (c.batch_size == 0) throw ContractError("batch size must be positive");
  if (c.support_size == 0) throw ContractError("support size must be positive");
  if (c.query_size == 0) throw ContractError("query size must be positive");
  if (c.gamma < 0.0) throw ContractError("gamma must be non-negative");
  if (c.gamma > 0.0 && c.batch_size < 2) throw ContractError("gamma > 0 needs batch size >= 2");
  if (c.eval_interval == 0) throw ContractError("eval interval must be positive");
  if (!(c.optim.lr > 0.0)) throw ContractError("learning rate must be positive");
}

std::vector<std::size_t> trainable_tasks(const TaskCollection& collection,
                                         std::span<const std::size_t> candidates, std::size_t m,
                                         const std::function<void(const std::string&)>& warn) {
  std::vector<std::size_t> out;
  for (auto t : candidates) {
    const Task& task = collection.tasks.at(t);
    if (task.size() >= m + 1) {
      out.push_back(t);
    } else if (warn) {
      warn("task '" + task.id + "' has " + std::to_string(task.size()) +
           " sample(s), fewer than support + 1; excluded from training");
    }
  }
  return out;
}

std::vector<Episode> validation_episodes(const TaskCollection& collection, const TrainConfig& c) {
  std::vector<std::size_t> tasks;
  for (auto t : collection.indices(Split::valid)) {
    if (collection.tasks[t].eligible()) tasks.push_back(t);
  }
  std::vector<Episode> out;
  if (tasks.empty()) return out;
  Rng rng(c.seed ^ 0x7a11da7e5eedULL);
  std::uniform_int_distribution<std::size_t> pick(0, tasks.size() - 1);
  out.reserve(c.val_episodes);
  for (std::size_t i = 0; i < c.val_episodes; ++i) {
    out.push_back(sample_episode(collection.tasks[tasks[pick(rng)]], c.support_size, c.query_size, rng));
  }
  return out;
}

double evaluate_loss(const Model& model, const ParamSet& params, std::span<const Episode> episodes,
                     std::size_t chunk) {
  if (episodes.empty()) throw EmptySetError("no episodes to evaluate");
  if (chunk == 0) chunk = episodes.size();
  double total = 0.0;
  std::size_t solved = 0;
  for (std::size_t begin = 0; begin < episodes.size(); begin += chunk) {
    const auto part = episodes.subspan(begin, std::min(chunk, episodes.size() - begin));
    Tape tape;
    ParamBinding p(tape, params);
    BatchEmbedding emb = model.embed_episodes(p, part, false);
    Kernel kernel = model.kernel(p);
    for (const auto& e : emb.episodes) {
      try {
        total += episode_task_loss(model, kernel, e).item();
        ++solved;
      } catch (const FactorizationError&) {
      }
    }
  }
  if (solved == 0) throw NumericalError("no validation episode could be solved");
  return total / static_cast<double>(solved);
}

std::vector<Episode> sample_meta_batch(const TaskCollection& collection,
                                       std::span<const std::size_t> tasks, const TrainConfig& c,
                                       Rng& rng) {
  if (tasks.empty()) throw EmptySetError("no tasks to sample from");
  std::uniform_int_distribution<std::size_t> pick(0, tasks.size() - 1);
  std::vector<Episode> batch;
  batch.reserve(c.batch_size);
  for (std::size_t i = 0; i < c.batch_size; ++i) {
    batch.push_back(sample_episode(collection.tasks[tasks[pick(rng)]], c.support_size, c.query_size, rng));
  }
  return batch;
}

TrainState train(Model& model, const TaskCollection& collection, const TrainConfig& config) {
  validate(config);
  if (config.gamma > 0.0 && !model.config().adaptive) {
    throw ContractError("gamma > 0 needs an adaptive model");
  }
  const std::vector<std::size_t> candidates =
      config.train_tasks.empty() ? collection.indices(Split::train) : config.train_tasks;
  if (candidates.empty()) throw ContractError("meta-train split is empty");
  const auto tasks = trainable_tasks(collection, candidates, config.support_size, config.warn);
  if (tasks.empty()) throw ContractError("no meta-train task has enough samples for an episode");
  const auto val = validation_episodes(collection, config);
  if (val.empty() && config.warn) config.warn("no meta-validation tasks; keeping the final parameters");

  TrainState state;
  state.rng.seed(config.seed);
  state.optimizer = Adam(config.optim);
  const auto start = std::chrono::steady_clock::now();
  double interval_loss = 0.0;
  std::size_t interval_steps = 0;
  ParamSet& params = model.params();

  for (std::size_t step = 1; step <= config.episodes; ++step) {
    const auto batch = sample_meta_batch(collection, tasks, config, state.rng);
    params.zero_grad();
    Tape tape;
    ParamBinding p(tape, params);
    MetaLossResult r = meta_loss(model, p, batch, config.gamma);
    if (!r.skipped.empty() && config.warn) {
      config.warn("step " + std::to_string(step) + ": skipped " + std::to_string(r.skipped.size()) +
                  " episode(s) with a non-factorisable Gram matrix");
    }
    tape.backward(r.total);
    state.optimizer.step(params);
    interval_loss += r.total.item();
    ++interval_steps;
    state.episode = step;

    if (step % config.eval_interval == 0 || step == config.episodes) {
      TrainLogRecord rec;
      rec.episode = step;
      rec.train_loss = interval_loss / static_cast<double>(interval_steps);
      rec.gamma = config.gamma;
      if (!val.empty()) {
        rec.val_loss = evaluate_loss(model, params, val, config.batch_size);
        if (*rec.val_loss < state.best_val) {
          state.best_val = *rec.val_loss;
          state.best_episode = step;
          state.best_params = params;
        }
      }
      rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      state.log.push_back(rec);
      if (config.on_log) config.on_log(rec);
      interval_loss = 0.0;
      interval_steps = 0;
    }
  }
  state.params = params;
  if (state.best_params.size() == 0) {
    state.best_params = params;
    state.best_episode = state.episode;
  }
  params.assign_values(state.best_params);
  return state;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'A', 'D', 'K', 'L', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  template <class T>
  void pod(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void str(std::string_view s) {
    pod<std::uint64_t>(s.size());
    out_.append(s);
  }
  void doubles(std::span<const double> v) {
    pod<std::uint64_t>(v.size());
    out_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  void params(const ParamSet& set) {
    pod<std::uint64_t>(set.size());
    for (const auto& [name, p] : set) {
      str(name);
      pod<std::uint8_t>(static_cast<std::uint8_t>(p.group));
      pod<std::uint64_t>(p.value.shape().size());
      for (auto d : p.value.shape()) pod<std::uint64_t>(d);
      doubles(p.value.data());
    }
  }
  void moments(const std::map<std::string, std::vector<double>>& m) {
    pod<std::uint64_t>(m.size());
    for (const auto& [name, v] : m) {
      str(name);
      doubles(v);
    }
  }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::vector<double> doubles() {
    const auto n = pod<std::uint64_t>();
    if (n > (in_.size() - pos_) / sizeof(double)) throw CheckpointError("checkpoint is truncated");
    std::vector<double> v(n);
    std::memcpy(v.data(), in_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }
  ParamSet params() {
    ParamSet set;
    const auto count = pod<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
      const auto name = str();
      const auto group = pod<std::uint8_t>();
      if (group > 2) throw CheckpointError("bad parameter group in checkpoint");
      const auto rank = pod<std::uint64_t>();
      if (rank > 2) throw CheckpointError("bad parameter rank in checkpoint");
      Shape shape;
      for (std::uint64_t d = 0; d < rank; ++d) shape.push_back(pod<std::uint64_t>());
      auto values = doubles();
      try {
        set.add(name, static_cast<ParamGroup>(group), Array(shape, std::move(values)));
      } catch (const std::exception& e) {
        throw CheckpointError(std::string("bad parameter '") + name + "': " + e.what());
      }
    }
    return set;
  }
  std::map<std::string, std::vector<double>> moments() {
    std::map<std::string, std::vector<double>> m;
    const auto count = pod<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
      auto name = str();
      m[name] = doubles();
    }
    return m;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) throw CheckpointError("checkpoint is truncated");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  Writer w;
  w.bytes().append(kMagic, sizeof(kMagic));
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.str(nlohmann::json(c.model).dump());
  w.pod<std::uint8_t>(c.vocab ? 1 : 0);
  w.str(c.vocab ? c.vocab->characters() : std::string());
  w.str(c.config_json);
  w.str(c.config_hash);
  w.str(c.provenance);
  std::ostringstream rng;
  rng << c.state.rng;
  w.str(rng.str());
  w.pod<std::uint64_t>(c.state.episode);
  w.pod<std::uint64_t>(c.state.best_episode);
  w.pod<double>(c.state.best_val);
  w.params(c.state.params);
  w.params(c.state.best_params);
  const AdamConfig& ac = c.state.optimizer.config();
  w.pod<double>(ac.lr);
  w.pod<double>(ac.beta1);
  w.pod<double>(ac.beta2);
  w.pod<double>(ac.eps);
  w.pod<std::uint64_t>(c.state.optimizer.steps());
  w.moments(c.state.optimizer.first_moments());
  w.moments(c.state.optimizer.second_moments());
  const std::uint64_t sum = fnv1a(w.bytes());
  w.pod<std::uint64_t>(sum);
  return std::move(w.bytes());
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot write checkpoint '" + path + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("failed writing checkpoint '" + path + "'");
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t)) {
    throw CheckpointError("checkpoint is truncated");
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not an ADKL checkpoint");
  }
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + sizeof(kMagic), sizeof(version));
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto body = bytes.substr(0, bytes.size() - sizeof(std::uint64_t));
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), sizeof(stored));
  if (fnv1a(body) != stored) throw CheckpointError("checkpoint checksum mismatch");

  Reader r(body.substr(sizeof(kMagic) + sizeof(std::uint32_t)));
  Checkpoint c;
  try {
    c.model = nlohmann::json::parse(r.str()).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad model configuration: ") + e.what());
  }
  const bool has_vocab = r.pod<std::uint8_t>() != 0;
  auto chars = r.str();
  if (has_vocab) c.vocab = SmilesVocab(chars);
  c.config_json = r.str();
  c.config_hash = r.str();
  c.provenance = r.str();
  std::istringstream rng(r.str());
  rng >> c.state.rng;
  if (!rng) throw CheckpointError("bad rng state in checkpoint");
  c.state.episode = r.pod<std::uint64_t>();
  c.state.best_episode = r.pod<std::uint64_t>();
  c.state.best_val = r.pod<double>();
  c.state.params = r.params();
  c.state.best_params = r.params();
  AdamConfig ac;
  ac.lr = r.pod<double>();
  ac.beta1 = r.pod<double>();
  ac.beta2 = r.pod<double>();
  ac.eps = r.pod<double>();
  c.state.optimizer = Adam(ac);
  const auto t = r.pod<std::uint64_t>();
  auto m = r.moments();
  auto v = r.moments();
  c.state.optimizer.restore(t, std::move(m), std::move(v));
  if (!r.done()) throw CheckpointError("trailing bytes in checkpoint");
  return c;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  return deserialize_checkpoint(buf.str());
}

Model model_from_checkpoint(const Checkpoint& c) {
  return Model(c.model, c.state.best_params, c.vocab);
}

}  // namespace adkl
