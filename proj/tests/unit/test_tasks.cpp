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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "adkl/errors.hpp"
#include "adkl/tasks.hpp"

using namespace adkl;

namespace {

TaskCollection parse(const std::string& text, LoadOptions options = {}) {
  std::istringstream in(text);
  return parse_collection(in, options, "test");
}

Task numbered_task(std::size_t n) {
  Task t;
  t.id = "t";
  for (std::size_t i = 0; i < n; ++i) t.samples.push_back({std::vector<double>{double(i)}, double(i)});
  return t;
}

double x_of(const Sample& s) { return std::get<std::vector<double>>(s.input)[0]; }

}  // namespace

TEST_CASE("split counts follow 56.25 / 18.75 / 25") {
  CHECK(split_counts(100) == std::array<std::size_t, 3>{56, 19, 25});
  CHECK(split_counts(5000) == std::array<std::size_t, 3>{2813, 938, 1249});
  CHECK(split_counts(20) == std::array<std::size_t, 3>{11, 4, 5});
  for (std::size_t total = 16; total <= 400; ++total) {
    const auto c = split_counts(total);
    CHECK(c[0] + c[1] + c[2] == total);
    CHECK(std::abs(double(c[0]) - 0.5625 * total) <= 1.0);
    CHECK(std::abs(double(c[1]) - 0.1875 * total) <= 1.0);
    CHECK(std::abs(double(c[2]) - 0.25 * total) <= 1.0);
    CHECK(c[0] > 0);
    CHECK(c[1] > 0);
    CHECK(c[2] > 0);
  }
}

TEST_CASE("assigned splits are disjoint, complete and seeded") {
  const auto a = assign_splits(64, 5), b = assign_splits(64, 5), c = assign_splits(64, 6);
  CHECK(a == b);
  CHECK(a != c);
  const auto counts = split_counts(64);
  CHECK(std::count(a.begin(), a.end(), Split::train) == long(counts[0]));
  CHECK(std::count(a.begin(), a.end(), Split::valid) == long(counts[1]));
  CHECK(std::count(a.begin(), a.end(), Split::test) == long(counts[2]));
}

TEST_CASE("gen_sinusoids") {
  SinusoidOptions o;
  o.tasks = 5000;
  o.seed = 3;
  const TaskCollection c = gen_sinusoids(o);
  REQUIRE(c.size() == 5000);
  double worst = 0;
  for (const auto& t : c.tasks) {
    REQUIRE(t.params);
    CHECK(t.size() == 60);
    for (const auto& s : t.samples) {
      const double x = x_of(s);
      CHECK(x >= kInputMin);
      CHECK(x <= kInputMax);
      worst = std::max(worst, std::abs(s.target));
    }
  }
  CHECK(worst <= 5.3);
  CHECK(c.indices(Split::train).size() == 2813);
  CHECK(c.indices(Split::valid).size() == 938);
  CHECK(c.indices(Split::test).size() == 1249);
  CHECK_THROWS_AS(gen_sinusoids({3, 60, 0, true}), ContractError);
}

TEST_CASE("sinusoid identity without noise") {
  SinusoidParams p{1.0, 1.0, 0.0};
  CHECK(p(std::numbers::pi / 2) == 1.0);
  SinusoidOptions o;
  o.tasks = 8;
  o.noise = false;
  const TaskCollection c = gen_sinusoids(o);
  for (const auto& t : c.tasks) {
    for (const auto& s : t.samples) CHECK(s.target == (*t.params)(x_of(s)));
  }
}

TEST_CASE("noise scale is one percent of the amplitude") {
  SinusoidOptions o;
  o.tasks = 200;
  o.seed = 9;
  const TaskCollection c = gen_sinusoids(o);
  double ratio = 0;
  std::size_t n = 0;
  for (const auto& t : c.tasks) {
    for (const auto& s : t.samples) {
      const double e = (s.target - (*t.params)(x_of(s))) / t.params->amplitude;
      ratio += e * e;
      ++n;
    }
  }
  CHECK(std::sqrt(ratio / n) == doctest::Approx(0.01).epsilon(0.05));
}

TEST_CASE("generator is deterministic in the seed") {
  SinusoidOptions o;
  o.tasks = 50;
  o.seed = 11;
  std::ostringstream a, b, c;
  write_collection(gen_sinusoids(o), a);
  write_collection(gen_sinusoids(o), b);
  o.seed = 12;
  write_collection(gen_sinusoids(o), c);
  CHECK(a.str() == b.str());
  CHECK(a.str() != c.str());
}

TEST_CASE("generator marginals cover the declared ranges") {
  SinusoidOptions o;
  o.tasks = 10000;
  o.samples_per_task = 2;
  o.seed = 1;
  const TaskCollection c = gen_sinusoids(o);
  double lo[3] = {1e9, 1e9, 1e9}, hi[3] = {-1e9, -1e9, -1e9};
  for (const auto& t : c.tasks) {
    const double v[3] = {t.params->amplitude, t.params->frequency, t.params->phase};
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::min(lo[k], v[k]);
      hi[k] = std::max(hi[k], v[k]);
    }
  }
  const double range_lo[3] = {kAmplitudeMin, kFrequencyMin, kPhaseMin};
  const double range_hi[3] = {kAmplitudeMax, kFrequencyMax, 2 * std::numbers::pi};
  for (int k = 0; k < 3; ++k) {
    CHECK(lo[k] >= range_lo[k]);
    CHECK(hi[k] <= range_hi[k]);
    CHECK((hi[k] - lo[k]) >= 0.99 * (range_hi[k] - range_lo[k]));
  }
}

TEST_CASE("collection files round-trip through the line format") {
  SinusoidOptions o;
  o.tasks = 20;
  o.samples_per_task = 7;
  const TaskCollection c = gen_sinusoids(o);
  std::ostringstream out;
  write_collection(c, out);
  const TaskCollection back = parse(out.str());
  REQUIRE(back.size() == c.size());
  CHECK(back.splits == c.splits);
  for (std::size_t t = 0; t < c.size(); ++t) {
    CHECK(back.tasks[t].id == c.tasks[t].id);
    REQUIRE(back.tasks[t].size() == c.tasks[t].size());
    for (std::size_t i = 0; i < c.tasks[t].size(); ++i) {
      CHECK(back.tasks[t].samples[i].target == c.tasks[t].samples[i].target);
      CHECK(back.tasks[t].samples[i].input == c.tasks[t].samples[i].input);
    }
  }
}

TEST_CASE("load_collection") {
  SUBCASE("three-task toy file") {
    const TaskCollection c = parse(
        "{\"task_id\":\"a\",\"x\":\"CCO\",\"y\":3}\n{\"task_id\":\"a\",\"x\":\"CCN\",\"y\":5}\n"
        "{\"task_id\":\"b\",\"x\":\"c1ccccc1\",\"y\":-1}\n{\"task_id\":\"b\",\"x\":\"C\",\"y\":4}\n"
        "{\"task_id\":\"c\",\"x\":\"O\",\"y\":0.2}\n{\"task_id\":\"c\",\"x\":\"N\",\"y\":0.1}\n");
    CHECK(c.size() == 3);
    CHECK(c.has_smiles());
    for (const auto& t : c.tasks) {
      for (const auto& s : t.samples) {
        CHECK(s.target >= 0.0);
        CHECK(s.target <= 1.0);
      }
    }
  }
  SUBCASE("min-max arithmetic") {
    const TaskCollection c =
        parse("{\"task_id\":\"t\",\"x\":\"C\",\"y\":10}\n{\"task_id\":\"t\",\"x\":\"CC\",\"y\":20}\n"
              "{\"task_id\":\"t\",\"x\":\"CCC\",\"y\":30}\n");
    CHECK(c.tasks[0].samples[0].target == 0.0);
    CHECK(c.tasks[0].samples[1].target == 0.5);
    CHECK(c.tasks[0].samples[2].target == 1.0);
  }
  SUBCASE("constant targets map to one half") {
    Task t = numbered_task(3);
    for (auto& s : t.samples) s.target = 7.0;
    min_max_scale(t);
    for (const auto& s : t.samples) CHECK(s.target == 0.5);
  }
  SUBCASE("duplicate rows are kept") {
    const TaskCollection c = parse(
        "{\"task_id\":\"t\",\"x\":[1,2],\"y\":1}\n{\"task_id\":\"t\",\"x\":[1,2],\"y\":1.5}\n"
        "{\"task_id\":\"t\",\"x\":[1,2],\"y\":1}\n{\"task_id\":\"u\",\"x\":[0,0],\"y\":2}\n");
    CHECK(c.tasks[0].size() == 3);
    CHECK(c.tasks[1].size() == 1);
  }
  SUBCASE("scaling is idempotent") {
    const std::string text =
        "{\"task_id\":\"t\",\"x\":\"C\",\"y\":10}\n{\"task_id\":\"t\",\"x\":\"CC\",\"y\":25}\n"
        "{\"task_id\":\"t\",\"x\":\"CCC\",\"y\":30}\n";
    TaskCollection once = parse(text);
    std::ostringstream out;
    write_collection(once, out);
    TaskCollection twice = parse(out.str());
    for (std::size_t i = 0; i < 3; ++i) CHECK(twice.tasks[0].samples[i].target == once.tasks[0].samples[i].target);
  }
  SUBCASE("small tasks are kept but flagged") {
    std::vector<std::string> warnings;
    LoadOptions o;
    o.warn = [&](const std::string& w) { warnings.push_back(w); };
    const TaskCollection c = parse("{\"task_id\":\"one\",\"x\":[1],\"y\":1}\n{\"task_id\":\"two\",\"x\":[1],\"y\":1}\n"
                                   "{\"task_id\":\"two\",\"x\":[2],\"y\":3}\n",
                                   o);
    CHECK(c.size() == 2);
    CHECK_FALSE(c.tasks[0].eligible());
    CHECK(c.tasks[1].eligible());
    CHECK(warnings.size() == 1);
  }
  SUBCASE("explicit split labels are honoured") {
    const TaskCollection c = parse(
        "{\"task_id\":\"a\",\"x\":[1],\"y\":1,\"split\":\"test\"}\n{\"task_id\":\"b\",\"x\":[1],\"y\":1,\"split\":\"train\"}\n");
    CHECK(c.splits == std::vector<Split>{Split::test, Split::train});
  }
  SUBCASE("malformed lines report their line number") {
    try {
      parse("{\"task_id\":\"a\",\"x\":[1],\"y\":1}\n{\"task_id\":\"a\",\"x\":[1]}\n");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(parse("not json\n"), ParseError);
    CHECK_THROWS_AS(parse("{\"task_id\":\"a\",\"x\":\"\",\"y\":1}\n"), ParseError);
    CHECK_THROWS_AS(parse("{\"task_id\":\"a\",\"x\":[1],\"y\":1,\"split\":\"dev\"}\n"), ParseError);
    CHECK_THROWS_AS(load_collection("/nonexistent/collection.jsonl"), ParseError);
  }
}

TEST_CASE("load_collection records a content hash") {
  const auto path = std::filesystem::temp_directory_path() / "adkl_tasks_hash.jsonl";
  {
    std::ofstream f(path);
    f << "{\"task_id\":\"a\",\"x\":[1],\"y\":1}\n{\"task_id\":\"a\",\"x\":[2],\"y\":2}\n";
  }
  const TaskCollection a = load_collection(path.string()), b = load_collection(path.string());
  CHECK(a.provenance == b.provenance);
  CHECK(a.provenance.rfind("file:", 0) == 0);
  std::filesystem::remove(path);
}

TEST_CASE("sample_episode") {
  Rng rng(4);
  SUBCASE("query unset takes the remainder") {
    const Episode e = sample_episode(numbered_task(30), 10, std::nullopt, rng);
    CHECK(e.support.size() == 10);
    CHECK(e.query.size() == 20);
  }
  SUBCASE("small tasks split half and half") {
    const Episode e = sample_episode(numbered_task(9), 10, std::nullopt, rng);
    CHECK(e.support.size() == 4);
    CHECK(e.query.size() == 5);
  }
  SUBCASE("explicit query size") {
    const Episode e = sample_episode(numbered_task(60), 10, 10, rng);
    CHECK(e.support.size() == 10);
    CHECK(e.query.size() == 10);
  }
  SUBCASE("too small") {
    CHECK_THROWS_AS(sample_episode(numbered_task(1), 10, std::nullopt, rng), EpisodeError);
  }
  SUBCASE("disjoint over many draws") {
    const Task t = numbered_task(25);
    for (int draw = 0; draw < 1000; ++draw) {
      const Episode e = sample_episode(t, 10, 7, rng);
      std::set<std::size_t> seen(e.support_index.begin(), e.support_index.end());
      for (auto q : e.query_index) CHECK_FALSE(seen.count(q));
      for (std::size_t i = 0; i < e.support.size(); ++i) CHECK(x_of(e.support[i]) == double(e.support_index[i]));
    }
  }
}

TEST_CASE("sampling without replacement is uniform") {
  Rng rng(7);
  std::vector<int> hits(10, 0);
  for (int draw = 0; draw < 20000; ++draw) {
    for (auto i : sample_without_replacement(10, 3, rng)) ++hits[i];
  }
  for (int h : hits) CHECK(h == doctest::Approx(6000).epsilon(0.05));
}
