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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero when any selected criterion fails.
//
//   adkl_acceptance [--work DIR] [--fresh] [1 2 ... 9 | all]
//
// Trained models are cached under DIR/runs/<hash of the training flags>, so
// criteria that share a protocol (5 and 6) train each model once.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include "adkl/cli.hpp"
#include "adkl/errors.hpp"
#include "../unit/oracles.hpp"

using namespace adkl;
namespace fs = std::filesystem;
namespace o = adkl::oracle;

namespace {

fs::path g_work;
fs::path g_source;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void progress(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

// ---------------------------------------------------------------------------
// Cached train + eval through the command-line entry point.

struct TrainedRun {
  fs::path dir;
  double mean_mse = 0.0;
  double train_seconds = 0.0;
};

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& a : v) s += (s.empty() ? "" : " ") + a;
  return s;
}

double mean_mse_of(const fs::path& csv) {
  std::ifstream f(csv);
  std::string line;
  double sum = 0.0;
  std::size_t n = 0;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("collection,", 0) == 0) continue;
    sum += std::stod(line.substr(line.rfind(',') + 1));
    ++n;
  }
  if (n == 0) throw std::runtime_error("no rows in " + csv.string());
  return sum / static_cast<double>(n);
}

std::size_t rows_of(const fs::path& csv) {
  std::ifstream f(csv);
  std::string line;
  std::size_t n = 0;
  while (std::getline(f, line)) {
    if (!line.empty() && line[0] != '#' && line.rfind("collection,", 0) != 0) ++n;
  }
  return n;
}

void cli_or_throw(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (!out.str().empty()) progress(out.str().substr(0, out.str().find_last_not_of('\n') + 1));
  if (code != 0) throw std::runtime_error("`adkl " + join(args) + "` exited " + std::to_string(code) + ": " + err.str());
}

TrainedRun trained(const std::vector<std::string>& flags) {
  TrainedRun r;
  r.dir = g_work / "runs" / hex64(fnv1a(join(flags)));
  const fs::path done = r.dir / "eval.csv", timing = r.dir / "train_seconds.txt";
  if (!fs::exists(done)) {
    fs::remove_all(r.dir);
    fs::create_directories(r.dir);
    std::ofstream(r.dir / "flags.txt") << join(flags) << '\n';
    progress("training: " + join(flags));
    auto args = flags;
    args.insert(args.begin(), "train");
    args.insert(args.end(), {"--out", r.dir.string()});
    const auto t0 = std::chrono::steady_clock::now();
    cli_or_throw(args);
    std::ofstream(timing) << seconds_since(t0) << '\n';
    args[0] = "eval";
    cli_or_throw(args);
  } else {
    progress("reusing " + r.dir.string() + " (" + join(flags) + ")");
  }
  std::ifstream(timing) >> r.train_seconds;
  r.mean_mse = mean_mse_of(done);
  return r;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  struct Case {
    const char* name;
    SolverKind solver;
    KernelFamily kernel;
  };
  const Case cases[] = {{"ADKL-KRR-linear", SolverKind::krr, KernelFamily::linear},
                        {"ADKL-GP-linear", SolverKind::gp, KernelFamily::linear},
                        {"ADKL-KRR-rbf", SolverKind::krr, KernelFamily::rbf}};
  bool pass = true;
  std::string detail;
  for (const auto& c : cases) {
    cli::GradcheckOptions opt;
    opt.model = cli::ExperimentConfig().model_config(InputKind::vector, 1);
    opt.model.solver = c.solver;
    opt.model.kernel.family = c.kernel;
    opt.batch_size = 2;
    opt.support_size = 5;
    const cli::GradcheckReport r = cli::gradient_check(opt);
    bool groups = r.checked.count(ParamGroup::theta) && r.checked.count(ParamGroup::eta);
    if (c.kernel == KernelFamily::rbf) groups = groups && r.checked.count(ParamGroup::rho);
    bool below = true;
    for (const auto& [g, e] : r.worst) below = below && e < 1e-4;
    pass = pass && r.passed && groups && below;
    detail += fmt("%s %.1e; ", c.name, r.worst_error);
  }
  const double secs = seconds_since(t0);
  pass = pass && secs < 120.0;
  return {pass, "gradient check, worst relative error per config (< 1e-4): " + detail + fmt("%.1f s (< 120 s)", secs)};
}

Outcome criterion2() {
  std::mt19937_64 rng(2026);
  auto gram = [](Tape& t, const o::Dense& d, bool square) { return GramMatrix{t.constant(o::array(d)), square}; };
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng() % 10, n = 1 + rng() % 5;
    const auto phi_t = o::random_dense(m, 4, rng), phi_v = o::random_dense(n, 4, rng);
    const auto k_tt = o::matmul(phi_t, o::transpose(phi_t));
    const auto k_vt = o::matmul(phi_v, o::transpose(phi_t));
    auto k_vv = o::matmul(phi_v, o::transpose(phi_v));
    for (std::size_t i = 0; i < n; ++i) k_vv[i][i] += 1.0;
    const auto y_t = o::random_dense(m, 1, rng), y_v = o::random_dense(n, 1, rng);

    auto reg = k_tt;
    for (std::size_t i = 0; i < m; ++i) reg[i][i] += 1.0 / static_cast<double>(m);
    const auto inv = o::inverse(reg);
    const auto alpha = o::matmul(inv, y_t);
    const auto mean = o::matmul(k_vt, alpha);
    auto cov = k_vv;
    const auto red = o::matmul(k_vt, o::matmul(inv, o::transpose(k_vt)));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) cov[i][j] -= red[i][j];
    }
    o::Dense r(n, std::vector<double>(1));
    for (std::size_t i = 0; i < n; ++i) r[i][0] = y_v[i][0] - mean[i][0];
    double logdet = 0.0;
    for (double e : o::eigenvalues(cov)) logdet += std::log(e);
    const double nll = 0.5 * (o::matmul(o::transpose(r), o::matmul(o::inverse(cov), r))[0][0] + logdet +
                              static_cast<double>(n) * std::log(2 * std::numbers::pi));

    Tape t;
    const TaskSolution s = krr_fit(gram(t, k_tt, true), t.constant(o::array(y_t)));
    worst = std::max(worst, o::max_abs(s.alpha.value(), alpha));
    worst = std::max(worst, o::max_abs(krr_predict(s, gram(t, k_vt, false)).value(), mean));
    const GPPrediction p = gp_predict(gram(t, k_tt, true), gram(t, k_vt, false), gram(t, k_vv, true),
                                      t.constant(o::array(y_t)));
    worst = std::max(worst, o::max_abs(p.mean.value(), mean));
    worst = std::max(worst, o::max_abs(p.covariance.value(), cov));
    worst = std::max(worst, std::abs(gp_task_loss(p, t.constant(o::array(y_v))).item() - nll));
  }
  return {worst <= 1e-8, fmt("solver oracles, 50 instances (m <= 10, n <= 5): max-abs gap %.2e (<= 1e-8)", worst)};
}

Outcome criterion3() {
  std::mt19937_64 rng(3);
  Model model(cli::ExperimentConfig().model_config(InputKind::vector, 1), 3);
  std::uniform_real_distribution<double> u(-5, 5);
  std::vector<Sample> support;
  for (int i = 0; i < 10; ++i) support.push_back({std::vector<double>{u(rng)}, u(rng)});
  auto z_of = [&](const std::vector<Sample>& s) {
    Tape t;
    ParamBinding p(t, model.params());
    std::vector<Input> x;
    std::vector<double> y;
    for (const auto& e : s) {
      x.push_back(e.input);
      y.push_back(e.target);
    }
    return model.encode_task(p, model.extract(p, x), t.constant(Array::column(y))).value();
  };
  const Array z0 = z_of(support);
  double worst = 0.0;
  auto perm = support;
  for (int k = 0; k < 100; ++k) {
    std::shuffle(perm.begin(), perm.end(), rng);
    worst = std::max(worst, max_abs_diff(z_of(perm), z0));
  }

  // One parameter entry per extractor tensor, all in theta.
  std::size_t extractor_entries = 0, layers = model.config().net.input_hidden.size();
  bool single_group = true;
  for (const auto& [name, p] : model.params()) {
    if (name.find("extractor") != std::string::npos) {
      ++extractor_entries;
      single_group = single_group && p.group == ParamGroup::theta && name.rfind("theta.extractor.", 0) == 0;
    }
  }
  const bool single_entry = extractor_entries == 2 * layers && single_group;

  // Perturbing the shared weight moves both the task encoding and the
  // conditional embedding (at a fixed z).
  const std::vector<Input> queries{std::vector<double>{0.5}, std::vector<double>{-2.0}};
  const Array fixed_z = z0;
  auto phi_of = [&]() {
    Tape t;
    ParamBinding p(t, model.params());
    return model.conditional_embed(p, model.extract(p, queries), t.constant(fixed_z)).value();
  };
  const Array phi0 = phi_of();
  Array& w = model.params().at("theta.extractor.0.weight").value;
  const Array saved = w;
  for (auto& v : w.data()) v *= 1.05;
  const double dz = max_abs_diff(z_of(support), z0), dphi = max_abs_diff(phi_of(), phi0);
  w = saved;
  const bool live = dz > 1e-9 && dphi > 1e-9;
  return {worst < 1e-6 && single_entry && live,
          fmt("encoder invariants: permutation gap %.2e over 100 permutations (< 1e-6); %zu extractor entries for %zu "
              "layers in theta; perturbation moves z by %.2e and phi by %.2e",
              worst, extractor_entries, layers, dz, dphi)};
}

Outcome criterion4() {
  auto nce = [](const Array& a, const Array& b) {
    Tape t;
    return info_nce(t.constant(a), t.constant(b)).item();
  };
  const Array same = Array::matrix({{0.3, -1.2, 0.8}, {0.3, -1.2, 0.8}});
  const double identical = nce(same, same);
  const Array ortho = Array::matrix({{1, 0}, {0, 1}});
  const double matched = nce(ortho, ortho);
  const bool pass = std::abs(identical) <= 1e-12 && std::abs(matched - 1.0) <= 1e-12;
  return {pass, fmt("InfoNCE: identical batch %.3e (0 +- 1e-12), orthonormal b=2 %.15f (1 +- 1e-12)", identical, matched)};
}

Outcome criterion5() {
  const TrainedRun r = trained({"--seed", "0"});
  const bool pass = r.mean_mse <= 0.60 && r.train_seconds <= 45 * 60;
  return {pass, fmt("sinusoid headline (ADKL-KRR linear, gamma 0.1, T=5000, m=10, 20k episodes): mean meta-test MSE "
                    "%.4f (<= 0.60), training %.0f s (<= 2700 s)",
                    r.mean_mse, r.train_seconds)};
}

Outcome criterion6() {
  int wins = 0;
  std::string detail;
  for (int seed = 0; seed < 3; ++seed) {
    const auto s = std::to_string(seed);
    const TrainedRun lin = trained({"--seed", s});
    const TrainedRun rbf = trained({"--seed", s, "--kernel", "rbf"});
    wins += lin.mean_mse < rbf.mean_mse;
    detail += fmt("seed %d linear %.4f rbf %.4f; ", seed, lin.mean_mse, rbf.mean_mse);
  }
  return {wins >= 2, fmt("kernel ordering, linear < rbf in %d of 3 seeds (>= 2): ", wins) + detail};
}

Outcome criterion7() {
  bool pass = true;
  std::string detail;
  for (const char* m : {"5", "10"}) {
    int wins = 0;
    for (int seed = 0; seed < 3; ++seed) {
      const auto s = std::to_string(seed);
      const std::vector<std::string> common{"--seed", s, "--data.train_tasks", "1000", "-m", m, "--meta.query_size", m,
                                            "--gamma", "0"};
      auto adaptive = common, baseline = common;
      baseline.insert(baseline.end(), {"--adaptive=false"});
      const TrainedRun a = trained(adaptive), b = trained(baseline);
      wins += a.mean_mse <= b.mean_mse;
      detail += fmt("m=%s seed %d ADKL %.4f R2-D2 %.4f; ", m, seed, a.mean_mse, b.mean_mse);
    }
    pass = pass && wins >= 2;
    detail += fmt("m=%s wins %d of 3; ", m, wins);
  }
  return {pass, "adaptivity gain at T=1000 (ADKL-KRR <= R2-D2 in >= 2 of 3 seeds per m): " + detail};
}

Outcome criterion8() {
  const TrainedRun run = trained({"--seed", "0", "--solver", "gp"});
  const Checkpoint ck = load_checkpoint((run.dir / "checkpoint.bin").string());
  const Model model = model_from_checkpoint(ck);
  const ModelPredictor predictor(model);
  const TaskCollection data = cli::load_data(cli::ExperimentConfig());
  if (data.provenance != ck.provenance) throw std::runtime_error("collection does not match the checkpoint");

  std::vector<std::size_t> tasks;
  for (auto t : data.indices(Split::test)) {
    if (tasks.size() < 30 && data.tasks[t].size() >= 5 + 20 + 20) tasks.push_back(t);
  }
  ActiveConfig cfg;  // init 5, budget 20, query 20
  double entropy_sum = 0.0, random_sum = 0.0;
  std::size_t runs = 0, steps = 0, violations = 0;
  auto check_argmax = [&](const ActiveTrace& tr) {
    for (std::size_t s = 0; s < tr.selected_variance.size(); ++s) {
      ++steps;
      if (tr.selected_variance[s] < tr.pool_max_variance[s]) ++violations;
    }
  };
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    for (auto t : tasks) {
      const std::uint64_t run_seed = fnv1a(std::to_string(seed) + ":" + std::to_string(t));
      for (Strategy s : {Strategy::entropy, Strategy::random}) {
        ActiveConfig c = cfg;
        c.strategy = s;
        Rng rng(run_seed);
        const ActiveTrace tr = active_run(predictor, data.tasks[t], c, rng);
        if (tr.mse.size() != c.budget + 1) throw std::runtime_error("short active-learning trace");
        (s == Strategy::entropy ? entropy_sum : random_sum) += tr.mse.back();
        if (s == Strategy::entropy) check_argmax(tr);
      }
      ActiveConfig oracle = cfg;
      oracle.labeling = Labeling::oracle;
      Rng rng(run_seed);
      check_argmax(active_run(predictor, data.tasks[t], oracle, rng));
      ++runs;
    }
  }
  const double entropy = entropy_sum / static_cast<double>(runs), random = random_sum / static_cast<double>(runs);
  const bool pass = tasks.size() >= 20 && entropy <= random && violations == 0 && steps > 0;
  return {pass, fmt("active learning (ADKL-GP, init 5, budget 20, %zu tasks x 3 seeds): entropy final MSE %.4f, random "
                    "%.4f (entropy <= random); argmax-variance violations %zu of %zu steps",
                    tasks.size(), entropy, random, violations, steps)};
}

Outcome criterion9() {
  const fs::path toy = g_source / "tests" / "data" / "toy_smiles.jsonl";
  const TaskCollection c = load_collection(toy.string());
  bool in_range = true;
  for (const auto& t : c.tasks) {
    for (const auto& s : t.samples) in_range = in_range && s.target >= 0.0 && s.target <= 1.0;
  }
  // Round trip: written collections parse to the same tasks, targets and splits.
  std::stringstream buf;
  write_collection(c, buf);
  const TaskCollection back = parse_collection(buf, {}, c.provenance);
  bool round_trip = back.size() == c.size() && back.splits == c.splits;
  for (std::size_t i = 0; round_trip && i < c.size(); ++i) {
    round_trip = back.tasks[i].id == c.tasks[i].id && back.tasks[i].size() == c.tasks[i].size();
    for (std::size_t j = 0; round_trip && j < c.tasks[i].size(); ++j) {
      round_trip = back.tasks[i].samples[j].input == c.tasks[i].samples[j].input &&
                   std::abs(back.tasks[i].samples[j].target - c.tasks[i].samples[j].target) <= 1e-12;
    }
  }
  const double ideal[3] = {0.5625 * 20, 0.1875 * 20, 0.25 * 20};
  const std::size_t counts[3] = {c.indices(Split::train).size(), c.indices(Split::valid).size(),
                                 c.indices(Split::test).size()};
  bool proportions = c.size() == 20;
  for (int i = 0; i < 3; ++i) proportions = proportions && std::abs(double(counts[i]) - ideal[i]) <= 1.0;

  const TrainedRun run = trained({"--seed", "0", "--data", toy.string(), "--train.episodes", "200",
                                  "--train.eval_interval", "50"});
  bool finite = true;
  std::size_t records = 0;
  {
    std::ifstream log(run.dir / "train_log.jsonl");
    for (std::string line; std::getline(log, line);) {
      const auto rec = nlohmann::json::parse(line);
      finite = finite && rec["train_loss"].is_number() && std::isfinite(rec["train_loss"].get<double>()) &&
               rec["val_loss"].is_number() && std::isfinite(rec["val_loss"].get<double>());
      ++records;
    }
  }
  std::size_t eligible_tests = 0;
  for (auto t : c.indices(Split::test)) eligible_tests += c.tasks[t].eligible();
  const std::size_t rows = rows_of(run.dir / "eval.csv");

  // The half/half rule on small meta-test tasks, through the trained model.
  const Model model = model_from_checkpoint(load_checkpoint((run.dir / "checkpoint.bin").string()));
  const auto tests = c.indices(Split::test);
  const auto reports = evaluate_tasks(ModelPredictor(model), c, tests, 10, 20, 0);
  std::size_t small = 0;
  bool half = true;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    const std::size_t n = c.tasks[tests[i]].size();
    if (n < 20) {
      ++small;
      half = half && reports[i].support_size == n / 2;
    } else {
      half = half && reports[i].support_size == 10;
    }
  }
  const bool pass = in_range && round_trip && proportions && finite && records == 4 && rows == eligible_tests &&
                    small > 0 && half;
  return {pass, fmt("toy SMILES: targets in [0,1] %s, round trip %s, splits %zu/%zu/%zu, 200 episodes with %zu finite "
                    "log records %s, %zu report rows for %zu test tasks, half/half on %zu small tasks %s",
                    in_range ? "yes" : "no", round_trip ? "yes" : "no", counts[0], counts[1], counts[2], records,
                    finite ? "yes" : "no", rows, eligible_tests, small, half ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ADKL acceptance criteria"};
  std::string work = "acceptance_work";
  std::string source = ADKL_SOURCE_DIR;
  bool fresh = false;
  std::vector<std::string> which;
  app.add_option("--work", work, "directory for trained models and reports");
  app.add_option("--source", source, "repository root (for bundled data)");
  app.add_flag("--fresh", fresh, "discard cached models first");
  app.add_option("criteria", which, "criterion numbers 1-9, or all");
  CLI11_PARSE(app, argc, argv);
  g_work = fs::absolute(work);
  g_source = source;
  if (fresh) fs::remove_all(g_work / "runs");
  fs::create_directories(g_work);

  using Fn = Outcome (*)();
  const Fn criteria[] = {criterion1, criterion2, criterion3, criterion4, criterion5,
                         criterion6, criterion7, criterion8, criterion9};
  std::vector<int> selected;
  if (which.empty() || (which.size() == 1 && which[0] == "all")) {
    for (int i = 1; i <= 9; ++i) selected.push_back(i);
  } else {
    for (const auto& w : which) {
      const int i = std::atoi(w.c_str());
      if (i < 1 || i > 9) {
        std::cerr << "unknown criterion '" << w << "'\n";
        return 1;
      }
      selected.push_back(i);
    }
  }
  int failed = 0;
  for (int i : selected) {
    Outcome r;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r = criteria[i - 1]();
    } catch (const std::exception& e) {
      r = {false, std::string("error: ") + e.what()};
    }
    std::cout << "criterion " << i << ": " << (r.pass ? "PASS" : "FAIL") << "  " << r.detail
              << fmt(" [%.0f s]", seconds_since(t0)) << std::endl;
    failed += !r.pass;
  }
  return failed ? 1 : 0;
}
