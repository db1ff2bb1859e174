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

#include "adkl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>

#include "adkl/errors.hpp"

namespace adkl {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ index);
}

std::vector<double> values(const Var& v) { return v.value().values(); }

double mse(std::span<const double> pred, std::span<const Sample> truth) {
  if (pred.empty()) throw ContractError("mean squared error over an empty set");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i].target;
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void write_hash(std::ostream& out, const std::string& hash) {
  if (!hash.empty()) out << "# config_hash=" << hash << '\n';
}

}  // namespace

Prediction ModelPredictor::predict(std::span<const Sample> support, std::span<const Input> queries) const {
  if (support.empty()) throw ContractError("prediction needs a non-empty support set");
  Prediction out;
  if (queries.empty()) {
    if (has_variance()) out.variance.emplace();
    return out;
  }
  const Model& model = *model_;
  Tape tape;
  ParamBinding p(tape, static_cast<const ParamSet&>(model.params()));
  std::vector<Input> inputs;
  std::vector<double> y;
  inputs.reserve(support.size() + queries.size());
  for (const auto& s : support) {
    inputs.push_back(s.input);
    y.push_back(s.target);
  }
  inputs.insert(inputs.end(), queries.begin(), queries.end());
  Var features = model.extract(p, inputs);
  Var y_s = tape.constant(Array::column(y));
  const std::size_t m = support.size();
  Var z;
  if (model.config().adaptive) z = model.encode_task(p, slice_rows(features, 0, m), y_s);
  Var phi = model.embed(p, features, z);
  Var phi_s = slice_rows(phi, 0, m);
  Var phi_q = slice_rows(phi, m, queries.size());
  Kernel kernel = model.kernel(p);
  GramMatrix k_tt = kernel.gram(phi_s, phi_s, true);
  GramMatrix k_vt = kernel.gram(phi_q, phi_s, false);
  out.mean = values(krr_predict(krr_fit(k_tt, y_s, lambda_), k_vt));
  if (has_variance()) {
    out.variance = values(gp_predictive_variance(k_tt, k_vt, kernel.prior_variance(phi_q), lambda_));
  }
  return out;
}

TaskReport task_mse(const EpisodePredictor& predictor, const Task& task, std::size_t m,
                    std::size_t partitions, Rng& rng) {
  if (partitions == 0) throw ContractError("task_mse needs at least one partition");
  TaskReport r;
  r.task_id = task.id;
  for (std::size_t k = 0; k < partitions; ++k) {
    Episode e = sample_episode(task, m, std::nullopt, rng);
    std::vector<Input> q;
    q.reserve(e.query.size());
    for (const auto& s : e.query) q.push_back(s.input);
    const auto pred = predictor.predict(e.support, q);
    r.partition_mse.push_back(mse(pred.mean, e.query));
    r.support_size = e.support.size();
  }
  double s = 0.0;
  for (double v : r.partition_mse) s += v;
  r.mean_mse = s / static_cast<double>(partitions);
  return r;
}

std::vector<TaskReport> evaluate_tasks(const EpisodePredictor& predictor,
                                       const TaskCollection& collection,
                                       std::span<const std::size_t> tasks, std::size_t m,
                                       std::size_t partitions, std::uint64_t seed,
                                       std::size_t workers) {
  std::vector<TaskReport> out(tasks.size());
  auto run = [&](std::size_t i) {
    Rng rng(derive_seed(seed, tasks[i]));
    out[i] = task_mse(predictor, collection.tasks.at(tasks[i]), m, partitions, rng);
  };
  workers = std::max<std::size_t>(1, std::min(workers, tasks.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) run(i);
    return out;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < tasks.size(); i += workers) {
        try {
          run(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

double mean_of(const std::vector<TaskReport>& reports) {
  if (reports.empty()) throw EmptySetError("no task reports");
  double s = 0.0;
  for (const auto& r : reports) s += r.mean_mse;
  return s / static_cast<double>(reports.size());
}

std::string algorithm_name(const ModelConfig& c) {
  std::string head = c.solver == SolverKind::krr ? "KRR" : "GP";
  if (c.adaptive) return "ADKL-" + head;
  if (c.solver == SolverKind::krr && c.kernel.family == KernelFamily::linear) return "R2-D2";
  return "DKL-" + head;
}

ReportIdentity identity_of(const ModelConfig& c, double gamma, std::string collection) {
  return ReportIdentity{std::move(collection), algorithm_name(c), std::string(to_string(c.kernel.family)),
                        c.kernel.normalized, gamma};
}

std::vector<std::size_t> subsample_tasks(std::span<const std::size_t> tasks, std::size_t T,
                                         std::uint64_t seed) {
  if (T == 0 || T >= tasks.size()) return {tasks.begin(), tasks.end()};
  Rng rng(derive_seed(seed, 0x7a5c));
  auto pick = sample_without_replacement(tasks.size(), T, rng);
  std::sort(pick.begin(), pick.end());
  std::vector<std::size_t> out;
  out.reserve(T);
  for (auto i : pick) out.push_back(tasks[i]);
  return out;
}

std::vector<BenchmarkRow> benchmark(const BenchmarkSpec& spec, const TaskCollection& collection,
                                    const std::function<void(const BenchmarkRow&)>& on_row) {
  const auto train_split = collection.indices(Split::train);
  std::vector<std::size_t> test;
  for (auto t : collection.indices(Split::test)) {
    if (collection.tasks[t].eligible()) test.push_back(t);
  }
  if (test.empty()) throw ContractError("no episode-eligible meta-test tasks");
  std::vector<BenchmarkRow> rows;
  for (auto T : spec.T_list) {
    for (auto m : spec.m_list) {
      for (auto seed : spec.seeds) {
        TrainConfig tc = spec.train;
        tc.support_size = m;
        tc.query_size = m;
        tc.seed = seed;
        tc.train_tasks = subsample_tasks(train_split, T, seed);
        std::optional<SmilesVocab> vocab;
        if (spec.model.input_kind == InputKind::smiles) {
          vocab = SmilesVocab::from_tasks(collection, tc.train_tasks);
        }
        Model model(spec.model, seed, vocab);
        train(model, collection, tc);
        ModelPredictor predictor(model);
        BenchmarkRow row;
        row.identity = identity_of(spec.model, tc.gamma, spec.collection_name);
        row.T = tc.train_tasks.size();
        row.m = m;
        row.seed = seed;
        row.reports = evaluate_tasks(predictor, collection, test, m, spec.partitions, seed, spec.workers);
        row.mean_mse = mean_of(row.reports);
        if (on_row) on_row(row);
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Active learning

std::string_view to_string(Strategy s) { return s == Strategy::entropy ? "entropy" : "random"; }
std::string_view to_string(Labeling l) { return l == Labeling::predicted ? "predicted" : "oracle"; }

std::optional<Strategy> parse_strategy(std::string_view s) {
  if (s == "entropy") return Strategy::entropy;
  if (s == "random") return Strategy::random;
  return std::nullopt;
}

std::optional<Labeling> parse_labeling(std::string_view s) {
  if (s == "predicted") return Labeling::predicted;
  if (s == "oracle") return Labeling::oracle;
  return std::nullopt;
}

ActiveTrace active_run(const EpisodePredictor& predictor, const Task& task, const ActiveConfig& config,
                       Rng& rng) {
  if (config.strategy == Strategy::entropy && !predictor.has_variance()) {
    throw ContractError("entropy acquisition needs a predictor with posterior variance");
  }
  if (config.init == 0 || config.query_size == 0) {
    throw ContractError("active learning needs a non-empty initial support and query set");
  }
  const std::size_t n = task.size();
  if (n < config.init + config.query_size) {
    throw EpisodeError("task '" + task.id + "' has " + std::to_string(n) + " samples; need at least " +
                       std::to_string(config.init + config.query_size));
  }
  const auto drawn = sample_without_replacement(n, config.init + config.query_size, rng);
  std::vector<Sample> support, query;
  std::vector<Input> query_inputs;
  std::vector<bool> used(n, false);
  for (std::size_t i = 0; i < drawn.size(); ++i) {
    used[drawn[i]] = true;
    if (i < config.init) {
      support.push_back(task.samples[drawn[i]]);
    } else {
      query.push_back(task.samples[drawn[i]]);
      query_inputs.push_back(task.samples[drawn[i]].input);
    }
  }
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < n; ++i) {
    if (!used[i]) pool.push_back(i);
  }

  ActiveTrace trace;
  trace.task_id = task.id;
  trace.strategy = config.strategy;
  trace.labeling = config.labeling;
  auto score = [&] { return mse(predictor.predict(support, query_inputs).mean, query); };
  trace.mse.push_back(score());

  for (std::size_t step = 0; step < config.budget; ++step) {
    if (pool.empty()) {
      trace.truncated = true;
      break;
    }
    std::vector<Input> pool_inputs;
    pool_inputs.reserve(pool.size());
    for (auto i : pool) pool_inputs.push_back(task.samples[i].input);
    const Prediction pred = predictor.predict(support, pool_inputs);

    std::size_t pos = 0;
    if (config.strategy == Strategy::entropy) {
      const auto& var = *pred.variance;
      for (std::size_t i = 1; i < var.size(); ++i) {
        if (var[i] > var[pos]) pos = i;
      }
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      pos = pick(rng);
    }
    if (pred.variance) {
      const auto& var = *pred.variance;
      trace.selected_variance.push_back(var[pos]);
      trace.pool_max_variance.push_back(*std::max_element(var.begin(), var.end()));
    }
    const std::size_t chosen = pool[pos];
    const double label = config.labeling == Labeling::predicted ? pred.mean[pos] : task.samples[chosen].target;
    support.push_back(Sample{task.samples[chosen].input, label});
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pos));
    trace.selected.push_back(chosen);
    trace.mse.push_back(score());
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Curves

std::vector<double> uniform_grid(std::size_t points, double lo, double hi) {
  if (points == 0) return {};
  if (points == 1) return {lo};
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i) {
    g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return g;
}

std::vector<CurveRecord> emit_curves(const EpisodePredictor& predictor, const Task& task,
                                     std::span<const Sample> support, std::span<const double> grid) {
  for (const auto& s : task.samples) {
    const auto* v = std::get_if<std::vector<double>>(&s.input);
    if (!v || v->size() != 1) throw ContractError("prediction curves need scalar inputs");
  }
  std::vector<Input> inputs;
  inputs.reserve(grid.size());
  for (double x : grid) inputs.push_back(std::vector<double>{x});
  const Prediction pred = predictor.predict(support, inputs);
  std::vector<CurveRecord> out;
  out.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CurveRecord r;
    r.task_id = task.id;
    r.x = grid[i];
    if (task.params) r.y_true = (*task.params)(grid[i]);
    r.y_pred = pred.mean[i];
    if (pred.variance) r.y_std = std::sqrt(std::max(0.0, (*pred.variance)[i]));
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

void write_report_csv(std::ostream& out, std::span<const BenchmarkRow> rows, const std::string& config_hash) {
  write_hash(out, config_hash);
  out << "collection,algorithm,kernel,normalized,gamma,T,m,seed,task_id,mse\n";
  for (const auto& row : rows) {
    const auto& id = row.identity;
    for (const auto& r : row.reports) {
      out << id.collection << ',' << id.algorithm << ',' << id.kernel << ','
          << (id.normalized ? "true" : "false") << ',' << fmt(id.gamma) << ',' << row.T << ','
          << row.m << ',' << row.seed << ',' << r.task_id << ',' << fmt(r.mean_mse) << '\n';
    }
  }
}

void write_active_csv(std::ostream& out, std::span<const ActiveTrace> traces, const std::string& config_hash) {
  write_hash(out, config_hash);
  out << "task_id,strategy,labeling,step,mse\n";
  for (const auto& t : traces) {
    for (std::size_t s = 0; s < t.mse.size(); ++s) {
      out << t.task_id << ',' << to_string(t.strategy) << ',' << to_string(t.labeling) << ',' << s << ','
          << fmt(t.mse[s]) << '\n';
    }
  }
}

void write_curves_csv(std::ostream& out, std::span<const CurveRecord> records, const std::string& config_hash) {
  write_hash(out, config_hash);
  // KRR heads have no predictive std; the column is left out entirely.
  const bool with_std = std::any_of(records.begin(), records.end(), [](const auto& r) { return r.y_std.has_value(); });
  out << "task_id,x,y_true,y_pred" << (with_std ? ",y_std" : "") << '\n';
  for (const auto& r : records) {
    out << r.task_id << ',' << fmt(r.x) << ',' << (r.y_true ? fmt(*r.y_true) : "") << ',' << fmt(r.y_pred);
    if (with_std) out << ',' << (r.y_std ? fmt(*r.y_std) : "");
    out << '\n';
  }
}

}  // namespace adkl
