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

#include "adkl/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "adkl/errors.hpp"

namespace adkl {

using nlohmann::json;

double SinusoidParams::operator()(double x) const {
  return amplitude * std::sin(frequency * x + phase);
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  return std::nullopt;
}

std::vector<std::size_t> TaskCollection::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == s) out.push_back(i);
  }
  return out;
}

bool TaskCollection::has_smiles() const {
  for (const auto& t : tasks) {
    for (const auto& s : t.samples) {
      if (std::holds_alternative<std::string>(s.input)) return true;
    }
  }
  return false;
}

std::array<std::size_t, 3> split_counts(std::size_t total) {
  const double t = static_cast<double>(total);
  auto train = static_cast<std::size_t>(std::lround(0.5625 * t));
  auto valid = static_cast<std::size_t>(std::lround(0.1875 * t));
  if (train + valid > total) valid = total - train;
  return {train, valid, total - train - valid};
}

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  if (k > n) throw ContractError("cannot draw " + std::to_string(k) + " of " + std::to_string(n));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

std::vector<Split> assign_splits(std::size_t total, std::uint64_t seed) {
  const auto counts = split_counts(total);
  Rng rng(seed);
  const auto order = sample_without_replacement(total, total, rng);
  std::vector<Split> splits(total, Split::test);
  for (std::size_t r = 0; r < total; ++r) {
    const Split s = r < counts[0] ? Split::train : r < counts[0] + counts[1] ? Split::valid : Split::test;
    splits[order[r]] = s;
  }
  return splits;
}

TaskCollection gen_sinusoids(const SinusoidOptions& options) {
  if (options.tasks < 4) throw ContractError("sinusoid generator needs at least 4 tasks");
  if (options.samples_per_task < 2) throw ContractError("sinusoid tasks need at least 2 samples");
  Rng rng(options.seed);
  std::uniform_real_distribution<double> amp(kAmplitudeMin, kAmplitudeMax);
  std::uniform_real_distribution<double> freq(kFrequencyMin, kFrequencyMax);
  std::uniform_real_distribution<double> phase(kPhaseMin, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> xs(kInputMin, kInputMax);

  TaskCollection c;
  c.tasks.reserve(options.tasks);
  for (std::size_t t = 0; t < options.tasks; ++t) {
    SinusoidParams p;
    p.amplitude = amp(rng);
    p.frequency = freq(rng);
    p.phase = phase(rng);
    std::normal_distribution<double> noise(0.0, kNoiseFraction * p.amplitude);
    Task task;
    task.id = "sin" + std::to_string(t);
    task.params = p;
    task.samples.reserve(options.samples_per_task);
    for (std::size_t i = 0; i < options.samples_per_task; ++i) {
      const double x = xs(rng);
      const double eps = noise(rng);
      task.samples.push_back(Sample{std::vector<double>{x}, p(x) + (options.noise ? eps : 0.0)});
    }
    c.tasks.push_back(std::move(task));
  }
  c.splits = assign_splits(options.tasks, options.seed ^ 0x5eed5eed5eedULL);
  std::ostringstream prov;
  prov << "sinusoids:tasks=" << options.tasks << ",samples=" << options.samples_per_task
       << ",seed=" << options.seed << ",noise=" << (options.noise ? 1 : 0);
  c.provenance = prov.str();
  return c;
}

void min_max_scale(Task& task) {
  if (task.samples.empty()) return;
  double lo = task.samples.front().target, hi = lo;
  for (const auto& s : task.samples) {
    lo = std::min(lo, s.target);
    hi = std::max(hi, s.target);
  }
  for (auto& s : task.samples) s.target = hi > lo ? (s.target - lo) / (hi - lo) : 0.5;
}

namespace {

Input parse_input(const json& x, std::size_t line) {
  if (x.is_string()) {
    auto s = x.get<std::string>();
    if (s.empty()) throw ParseError("empty SMILES string", line);
    return s;
  }
  if (x.is_array()) {
    std::vector<double> v;
    v.reserve(x.size());
    for (const auto& e : x) {
      if (!e.is_number()) throw ParseError("x array must contain only numbers", line);
      const double d = e.get<double>();
      if (!std::isfinite(d)) throw ParseError("non-finite input value", line);
      v.push_back(d);
    }
    if (v.empty()) throw ParseError("empty x array", line);
    return v;
  }
  if (x.is_number()) return std::vector<double>{x.get<double>()};
  throw ParseError("field 'x' must be an array of numbers or a string", line);
}

}  // namespace

TaskCollection parse_collection(std::istream& in, const LoadOptions& options, std::string provenance) {
  TaskCollection c;
  c.provenance = std::move(provenance);
  std::unordered_map<std::string, std::size_t> position;
  std::vector<std::optional<Split>> labels;
  std::size_t labelled_lines = 0, lines = 0;
  std::optional<std::size_t> input_dim;

  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (std::all_of(text.begin(), text.end(), [](unsigned char ch) { return std::isspace(ch); })) {
      continue;
    }
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!rec.is_object()) throw ParseError("record must be a JSON object", line_no);
    if (!rec.contains("task_id") || !rec["task_id"].is_string()) {
      throw ParseError("missing string field 'task_id'", line_no);
    }
    if (!rec.contains("x")) throw ParseError("missing field 'x'", line_no);
    if (!rec.contains("y") || !rec["y"].is_number()) throw ParseError("missing numeric field 'y'", line_no);
    const double y = rec["y"].get<double>();
    if (!std::isfinite(y)) throw ParseError("non-finite target", line_no);
    Input x = parse_input(rec["x"], line_no);
    if (auto* v = std::get_if<std::vector<double>>(&x)) {
      if (input_dim && *input_dim != v->size()) throw ParseError("inconsistent x dimension", line_no);
      input_dim = v->size();
    }

    const auto id = rec["task_id"].get<std::string>();
    auto [it, inserted] = position.emplace(id, c.tasks.size());
    if (inserted) {
      Task t;
      t.id = id;
      c.tasks.push_back(std::move(t));
      labels.emplace_back();
    }
    Task& task = c.tasks[it->second];
    ++lines;
    if (rec.contains("split")) {
      if (!rec["split"].is_string()) throw ParseError("field 'split' must be a string", line_no);
      auto s = parse_split(rec["split"].get<std::string>());
      if (!s) throw ParseError("unknown split '" + rec["split"].get<std::string>() + "'", line_no);
      auto& label = labels[it->second];
      if (label && *label != *s) throw ParseError("task '" + id + "' has conflicting splits", line_no);
      label = s;
      ++labelled_lines;
    }
    if (rec.contains("params") && rec["params"].is_object()) {
      const auto& p = rec["params"];
      task.params = SinusoidParams{p.value("A", 1.0), p.value("w", 1.0), p.value("b", 0.0)};
    }
    task.samples.push_back(Sample{std::move(x), y});
  }
  if (c.tasks.empty()) throw ParseError("collection has no records");
  if (labelled_lines != 0 && labelled_lines != lines) {
    throw ParseError("split labels must be given on every line or on none");
  }

  const bool scale = options.scale_targets.value_or(c.has_smiles());
  for (auto& t : c.tasks) {
    if (scale) min_max_scale(t);
    if (!t.eligible() && options.warn) {
      options.warn("task '" + t.id + "' has " + std::to_string(t.size()) +
                   " sample(s) and is not episode-eligible");
    }
  }
  if (labelled_lines) {
    for (const auto& l : labels) c.splits.push_back(*l);
  } else {
    c.splits = assign_splits(c.tasks.size(), options.split_seed);
  }
  return c;
}

TaskCollection load_collection(const std::string& path, const LoadOptions& options) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open collection file '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  const std::string bytes = buf.str();
  std::istringstream in(bytes);
  return parse_collection(in, options, "file:" + hex64(fnv1a(bytes)));
}

void write_collection(const TaskCollection& collection, std::ostream& out) {
  for (std::size_t t = 0; t < collection.tasks.size(); ++t) {
    const Task& task = collection.tasks[t];
    for (const auto& s : task.samples) {
      json rec;
      rec["task_id"] = task.id;
      if (const auto* v = std::get_if<std::vector<double>>(&s.input)) {
        rec["x"] = *v;
      } else {
        rec["x"] = std::get<std::string>(s.input);
      }
      rec["y"] = s.target;
      if (t < collection.splits.size()) rec["split"] = std::string(to_string(collection.splits[t]));
      if (task.params) {
        rec["params"] = {{"A", task.params->amplitude},
                         {"w", task.params->frequency},
                         {"b", task.params->phase}};
      }
      out << rec.dump() << '\n';
    }
  }
}

Episode sample_episode(const Task& task, std::size_t m, std::optional<std::size_t> query_size,
                       Rng& rng) {
  const std::size_t n = task.size();
  if (n < 2) {
    throw EpisodeError("task '" + task.id + "' has " + std::to_string(n) +
                       " sample(s); an episode needs at least 2");
  }
  if (m == 0) throw ContractError("support size must be positive");
  std::size_t support, query;
  if (n < 2 * m) {
    support = n / 2;
    query = n - support;
  } else {
    support = m;
    query = query_size ? std::min(*query_size, n - m) : n - m;
    if (query == 0) throw EpisodeError("query set would be empty");
  }
  const auto idx = sample_without_replacement(n, support + query, rng);
  Episode e;
  e.support_index.assign(idx.begin(), idx.begin() + support);
  e.query_index.assign(idx.begin() + support, idx.end());
  for (auto i : e.support_index) e.support.push_back(task.samples[i]);
  for (auto i : e.query_index) e.query.push_back(task.samples[i]);
  return e;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

}  // namespace adkl
