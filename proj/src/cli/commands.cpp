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

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "adkl/cli.hpp"
#include "adkl/errors.hpp"

namespace adkl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string display(const KeySpec& k) {
  if (k.type == KeyType::string) return "\"" + k.default_value.get<std::string>() + "\"";
  if (k.default_value.is_array()) {
    std::string s;
    for (const auto& e : k.default_value) {
      if (!s.empty()) s += ",";
      s += e.is_string() ? e.get<std::string>() : e.dump();
    }
    return "[" + s + "]";
  }
  return k.default_value.dump();
}

/// Options of one subcommand: every config key plus aliases.
struct Options {
  std::map<std::string, CLI::Option*> keys;    // config key -> option
  std::map<std::string, CLI::Option*> aliases;  // config key -> alias option
  std::string config_file;
};

void add_config_options(CLI::App* app, Options& o, const std::map<std::string, std::string>& aliases,
                        const std::set<std::string>& hidden = {}) {
  app->add_option("--config", o.config_file, "JSON config file (defaults < file < ADKL_* env < flags)");
  for (const auto& [key, alias] : aliases) {
    auto* opt = app->add_option(alias)->description("alias of --" + key)->expected(0, 1)->multi_option_policy(
        CLI::MultiOptionPolicy::TakeAll);
    o.aliases[key] = opt;
  }
  for (const auto& k : config_keys()) {
    if (hidden.count(k.key)) continue;
    auto* opt = app->add_option("--" + k.key)
                    ->description(k.help + " (default: " + display(k) + ", env " + env_name(k.key) + ")")
                    ->expected(0, 1)
                    ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
                    ->group("Configuration");
    o.keys[k.key] = opt;
  }
}

void apply_option(ExperimentConfig& c, const std::string& key, const CLI::Option* opt) {
  if (!opt || opt->count() == 0) return;
  const KeySpec& spec = key_spec(key);
  const auto& results = opt->results();
  if (spec.type == KeyType::integer_list || spec.type == KeyType::real_list || spec.type == KeyType::string_list) {
    std::string joined;
    for (const auto& r : results) {
      if (r.empty()) continue;
      if (!joined.empty()) joined += ",";
      joined += r;
    }
    c.set_text(key, joined);
    return;
  }
  std::string last = results.empty() ? std::string() : results.back();
  if (last.empty() && spec.type == KeyType::boolean) last = "true";
  c.set_text(key, last);
}

std::optional<std::string> env_lookup(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

ExperimentConfig build_config(const Options& o) {
  ExperimentConfig c;
  if (!o.config_file.empty()) c.merge_file(o.config_file);
  c.merge_env(env_lookup);
  for (const auto& [key, opt] : o.keys) apply_option(c, key, opt);
  for (const auto& [key, opt] : o.aliases) apply_option(c, key, opt);
  c.apply_implied_defaults();
  return c;
}

void ensure_dir(const fs::path& p) {
  if (p.empty()) return;
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw std::runtime_error("cannot create directory '" + p.string() + "': " + ec.message());
}

std::ofstream open_output(const fs::path& p) {
  ensure_dir(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
  return f;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t h = fnv1a(std::to_string(seed) + ":" + std::to_string(a) + ":" + std::to_string(b));
  return h;
}

std::vector<std::size_t> eligible_tests(const TaskCollection& c, std::size_t min_size = 2) {
  std::vector<std::size_t> out;
  for (auto t : c.indices(Split::test)) {
    if (c.tasks[t].size() >= min_size) out.push_back(t);
  }
  return out;
}

std::vector<std::size_t> train_subset(const ExperimentConfig& c, const TaskCollection& data) {
  return subsample_tasks(data.indices(Split::train), c.get<std::size_t>("data.train_tasks"),
                         c.get<std::uint64_t>("seed"));
}

auto warner(std::ostream& err) {
  return [&err](const std::string& msg) { err << "warning: " << msg << '\n'; };
}

// ---------------------------------------------------------------------------

struct Trained {
  Model model;
  TrainState state;
  std::size_t train_tasks;
};

Trained train_model(const ExperimentConfig& c, const TaskCollection& data, std::ostream& err,
                    const std::function<void(const TrainLogRecord&)>& on_log) {
  const auto [kind, dim] = input_signature(data);
  TrainConfig tc = c.train_config();
  tc.train_tasks = train_subset(c, data);
  tc.warn = warner(err);
  tc.on_log = on_log;
  std::optional<SmilesVocab> vocab;
  if (kind == InputKind::smiles) vocab = SmilesVocab::from_tasks(data, tc.train_tasks);
  Model model(c.model_config(kind, dim), c.get<std::uint64_t>("seed"), vocab);
  TrainState state = train(model, data, tc);
  return Trained{std::move(model), std::move(state), tc.train_tasks.size()};
}

fs::path checkpoint_path(const ExperimentConfig& c, const std::string& flag) {
  if (!flag.empty()) return flag;
  return fs::path(c.get<std::string>("out_dir")) / "checkpoint.bin";
}

int cmd_gen(const ExperimentConfig& c, const std::string& output, std::ostream& out) {
  if (output.empty()) throw ConfigError("gen: --output is required");
  const TaskCollection data = gen_sinusoids(c.sinusoid_options());
  auto f = open_output(output);
  write_collection(data, f);
  const auto counts = split_counts(data.size());
  out << "wrote " << data.size() << " tasks (train " << counts[0] << ", valid " << counts[1] << ", test "
      << counts[2] << ") to " << output << '\n';
  return 0;
}

int cmd_train(const ExperimentConfig& c, const std::string& ckpt_flag, std::ostream& out, std::ostream& err) {
  const TaskCollection data = load_data(c, warner(err));
  const fs::path dir = c.get<std::string>("out_dir");
  ensure_dir(dir);
  const std::string hash = c.training_hash();
  {
    auto snap = open_output(dir / "config.json");
    json doc = c.to_json();
    doc["config_hash"] = hash;
    snap << doc.dump(2) << '\n';
  }
  auto log = open_output(dir / "train_log.jsonl");
  auto trained = train_model(c, data, err, [&](const TrainLogRecord& r) {
    json rec{{"episode", r.episode}, {"train_loss", r.train_loss}, {"gamma", r.gamma},
             {"wall_time", r.wall_time}, {"config_hash", hash}};
    rec["val_loss"] = r.val_loss ? json(*r.val_loss) : json(nullptr);
    log << rec.dump() << '\n' << std::flush;
  });
  Checkpoint ck;
  ck.model = trained.model.config();
  ck.vocab = trained.model.vocab();
  ck.config_json = c.to_json().dump();
  ck.config_hash = hash;
  ck.provenance = data.provenance;
  ck.state = std::move(trained.state);
  const fs::path path = checkpoint_path(c, ckpt_flag);
  ensure_dir(path.parent_path());
  save_checkpoint(ck, path.string());
  out << "trained " << ck.state.episode << " episodes on " << trained.train_tasks << " tasks; ";
  if (std::isfinite(ck.state.best_val)) {
    out << "best validation loss " << ck.state.best_val << " at episode " << ck.state.best_episode;
  } else {
    out << "no validation split";
  }
  out << "\ncheckpoint " << path.string() << " (config " << hash << ")\n";
  return 0;
}

/// Checkpoint plus the effective configuration: the training config stored
/// in the checkpoint overlaid with every explicitly given key. Training keys
/// that disagree with the checkpoint are refused.
struct Loaded {
  Checkpoint checkpoint;
  ExperimentConfig config;
  TaskCollection data;
};

Loaded load_trained(const ExperimentConfig& cli, const std::string& ckpt_flag, std::ostream& err) {
  Loaded l;
  l.checkpoint = load_checkpoint(checkpoint_path(cli, ckpt_flag).string());
  try {
    l.config.merge_json(json::parse(l.checkpoint.config_json), false);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("bad configuration in checkpoint: ") + e.what());
  }
  std::vector<std::string> clashes;
  for (const auto& key : cli.explicit_keys()) {
    if (key_spec(key).training && cli.at(key) != l.config.at(key)) {
      clashes.push_back(key + " = " + cli.at(key).dump() + " (checkpoint: " + l.config.at(key).dump() + ")");
    }
    l.config.set(key, cli.at(key));
  }
  if (!clashes.empty() || l.config.training_hash() != l.checkpoint.config_hash) {
    std::string msg = "configuration does not match the checkpoint (config hash " + l.checkpoint.config_hash + ")";
    for (const auto& cl : clashes) msg += "\n  " + cl;
    throw ConfigError(msg);
  }
  l.config.validate();
  l.data = load_data(l.config, warner(err));
  if (l.data.provenance != l.checkpoint.provenance) {
    throw ConfigError("collection '" + l.data.provenance + "' is not the one the checkpoint was trained on ('" +
                      l.checkpoint.provenance + "')");
  }
  return l;
}

std::size_t or_default(const ExperimentConfig& c, const std::string& key, const std::string& fallback) {
  const auto v = c.get<std::size_t>(key);
  return v ? v : c.get<std::size_t>(fallback);
}

fs::path output_path(const ExperimentConfig& c, const std::string& flag, const std::string& name) {
  if (!flag.empty()) return flag;
  return fs::path(c.get<std::string>("out_dir")) / name;
}

int cmd_eval(const ExperimentConfig& cli, const std::string& ckpt, const std::string& output, std::ostream& out,
             std::ostream& err) {
  Loaded l = load_trained(cli, ckpt, err);
  const ExperimentConfig& c = l.config;
  const Model model = model_from_checkpoint(l.checkpoint);
  const ModelPredictor predictor(model);
  const std::size_t m = or_default(c, "eval.support_size", "meta.support_size");
  const auto tests = eligible_tests(l.data);
  if (tests.empty()) throw ContractError("no episode-eligible meta-test tasks");
  BenchmarkRow row;
  row.identity = identity_of(model.config(), c.get<double>("gamma"), collection_name(c));
  row.T = train_subset(c, l.data).size();
  row.m = m;
  row.seed = c.get<std::uint64_t>("seed");
  row.reports = evaluate_tasks(predictor, l.data, tests, m, c.get<std::size_t>("eval.partitions"), row.seed,
                               c.get<std::size_t>("workers"));
  row.mean_mse = mean_of(row.reports);
  const fs::path path = output_path(c, output, "eval.csv");
  auto f = open_output(path);
  write_report_csv(f, std::span(&row, 1), l.checkpoint.config_hash);
  out << "meta-test mean task MSE " << std::setprecision(6) << row.mean_mse << " over " << row.reports.size()
      << " tasks -> " << path.string() << '\n';
  return 0;
}

int cmd_active(const ExperimentConfig& cli, const std::string& ckpt, const std::string& output, std::ostream& out,
               std::ostream& err) {
  Loaded l = load_trained(cli, ckpt, err);
  const ExperimentConfig& c = l.config;
  const Model model = model_from_checkpoint(l.checkpoint);
  const ModelPredictor predictor(model);
  ActiveConfig ac;
  ac.init = c.get<std::size_t>("active.init");
  ac.budget = c.get<std::size_t>("active.budget");
  ac.query_size = c.get<std::size_t>("active.query_size");
  ac.labeling = *parse_labeling(c.get<std::string>("active.labeling"));
  std::vector<Strategy> strategies;
  for (const auto& s : c.get<std::vector<std::string>>("active.strategies")) strategies.push_back(*parse_strategy(s));
  if (strategies.empty()) throw ConfigError("active.strategies: at least one strategy is needed");
  auto tasks = eligible_tests(l.data, ac.init + ac.query_size);
  if (tasks.empty()) throw ContractError("no meta-test task is large enough for the active-learning protocol");
  if (const auto limit = c.get<std::size_t>("active.tasks"); limit && limit < tasks.size()) tasks.resize(limit);
  const auto seed = c.get<std::uint64_t>("seed");
  std::vector<ActiveTrace> traces;
  std::map<Strategy, std::pair<double, std::size_t>> finals;
  for (auto t : tasks) {
    for (auto s : strategies) {
      ActiveConfig run = ac;
      run.strategy = s;
      Rng rng(mix_seed(seed, t));
      traces.push_back(active_run(predictor, l.data.tasks[t], run, rng));
      auto& f = finals[s];
      f.first += traces.back().mse.back();
      ++f.second;
    }
  }
  const fs::path path = output_path(c, output, "active.csv");
  auto f = open_output(path);
  write_active_csv(f, traces, l.checkpoint.config_hash);
  for (const auto& [s, v] : finals) {
    out << to_string(s) << ": mean final MSE " << v.first / static_cast<double>(v.second) << " over " << v.second
        << " tasks\n";
  }
  out << "traces -> " << path.string() << '\n';
  return 0;
}

int cmd_curves(const ExperimentConfig& cli, const std::string& ckpt, const std::string& output, std::ostream& out,
               std::ostream& err) {
  Loaded l = load_trained(cli, ckpt, err);
  const ExperimentConfig& c = l.config;
  const Model model = model_from_checkpoint(l.checkpoint);
  const ModelPredictor predictor(model);
  const std::size_t m = or_default(c, "curves.support_size", "meta.support_size");
  auto tasks = eligible_tests(l.data);
  if (tasks.empty()) throw ContractError("no episode-eligible meta-test tasks");
  if (const auto limit = c.get<std::size_t>("curves.tasks"); limit && limit < tasks.size()) tasks.resize(limit);
  const auto grid = uniform_grid(c.get<std::size_t>("curves.points"));
  std::vector<CurveRecord> records;
  for (auto t : tasks) {
    Rng rng(mix_seed(c.get<std::uint64_t>("seed"), t, 1));
    const Episode e = sample_episode(l.data.tasks[t], m, std::nullopt, rng);
    auto r = emit_curves(predictor, l.data.tasks[t], e.support, grid);
    records.insert(records.end(), r.begin(), r.end());
  }
  const fs::path path = output_path(c, output, "curves.csv");
  auto f = open_output(path);
  write_curves_csv(f, records, l.checkpoint.config_hash);
  out << records.size() << " curve points for " << tasks.size() << " tasks -> " << path.string() << '\n';
  return 0;
}

int cmd_gradcheck(const ExperimentConfig& c, bool corrupt, std::ostream& out) {
  GradcheckOptions o;
  o.model = c.model_config(InputKind::vector, 1);
  o.gamma = c.get<double>("gamma");
  o.coords_per_tensor = c.get<std::size_t>("gradcheck.coords");
  o.step = c.get<double>("gradcheck.step");
  o.tolerance = c.get<double>("gradcheck.tolerance");
  o.seed = c.get<std::uint64_t>("seed");
  o.corrupt = corrupt;
  const GradcheckReport r = gradient_check(o);
  out << algorithm_name(o.model) << " " << to_string(o.model.kernel.family) << " gamma=" << o.gamma << '\n';
  for (const auto& [group, worst] : r.worst) {
    char line[128];
    std::snprintf(line, sizeof(line), "  %-5s worst relative error %.3e over %zu coordinates\n",
                  std::string(to_string(group)).c_str(), worst, r.checked.at(group));
    out << line;
  }
  out << (r.passed ? "PASS" : "FAIL") << " (tolerance " << o.tolerance << ", worst " << r.worst_name << ")\n";
  return r.passed ? 0 : 2;
}

std::vector<std::size_t> parse_widths(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, 'x')) out.push_back(std::stoull(part));
  return out;
}

double read_cell(const fs::path& p) {
  std::ifstream f(p);
  std::string line;
  double sum = 0.0;
  std::size_t n = 0;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("collection,", 0) == 0) continue;
    sum += std::stod(line.substr(line.rfind(',') + 1));
    ++n;
  }
  if (n == 0) throw std::runtime_error("empty grid cell file '" + p.string() + "'");
  return sum / static_cast<double>(n);
}

int cmd_grid(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  const TaskCollection data = load_data(c, warner(err));
  const fs::path dir = c.get<std::string>("out_dir");
  ensure_dir(dir / "cells");
  std::vector<std::string> hidden = c.get<std::vector<std::string>>("grid.input_hidden");
  if (hidden.empty()) {
    std::string s;
    for (auto w : c.get<std::vector<std::size_t>>("net.input_hidden")) s += (s.empty() ? "" : "x") + std::to_string(w);
    hidden.push_back(s);
  }
  std::vector<std::vector<std::string>> rows;
  std::size_t computed = 0;
  for (const auto& kernel : c.get<std::vector<std::string>>("grid.kernels")) {
    for (const auto& norm : c.get<std::vector<std::string>>("grid.normalized")) {
      for (const auto& h : hidden) {
        for (double gamma : c.get<std::vector<double>>("grid.gammas")) {
          ExperimentConfig cell = c;
          cell.set("kernel", kernel);
          cell.set_text("normalized", norm);
          cell.set("gamma", gamma);
          json widths = json::array();
          for (auto w : parse_widths(h)) widths.push_back(w);
          cell.set("net.input_hidden", widths);
          cell.validate();
          const std::string hash = cell.training_hash();
          const fs::path file = dir / "cells" / (hash + ".csv");
          if (!fs::exists(file)) {
            auto trained = train_model(cell, data, err, {});
            const ModelPredictor predictor(trained.model);
            const std::size_t m = or_default(cell, "eval.support_size", "meta.support_size");
            BenchmarkRow row;
            row.identity = identity_of(trained.model.config(), gamma, collection_name(cell));
            row.T = trained.train_tasks;
            row.m = m;
            row.seed = cell.get<std::uint64_t>("seed");
            row.reports = evaluate_tasks(predictor, data, eligible_tests(data), m,
                                         cell.get<std::size_t>("eval.partitions"), row.seed,
                                         cell.get<std::size_t>("workers"));
            const fs::path tmp = file.string() + ".tmp";
            {
              auto f = open_output(tmp);
              write_report_csv(f, std::span(&row, 1), hash);
            }
            fs::rename(tmp, file);
            ++computed;
          }
          char mse[32];
          std::snprintf(mse, sizeof(mse), "%.6f", read_cell(file));
          char g[32];
          std::snprintf(g, sizeof(g), "%g", gamma);
          rows.push_back({g, kernel, cell.get<bool>("normalized") ? "true" : "false", h, hash, mse});
        }
      }
    }
  }
  auto f = open_output(dir / "grid.csv");
  f << "# config_hash=" << c.training_hash() << '\n';
  f << "gamma,kernel,normalized,input_hidden,config_hash,mean_mse\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) f << (i ? "," : "") << r[i];
    f << '\n';
    out << std::left << std::setw(6) << r[0] << std::setw(8) << r[1] << std::setw(7) << r[2] << std::setw(10)
        << r[3] << r[5] << '\n';
  }
  out << rows.size() << " cells (" << computed << " computed) -> " << (dir / "grid.csv").string() << '\n';
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive deep kernel learning for few-shot regression"};
  app.require_subcommand(1);
  app.footer("Every configuration key can also be set through ADKL_<KEY> (dots become underscores).");

  Options gen_o, train_o, eval_o, active_o, curves_o, grad_o, grid_o;
  std::string gen_output, ckpt, output;
  bool corrupt = false;

  auto* gen = app.add_subcommand("gen", "write a generated sinusoid collection");
  gen->add_flag("--sinusoids", "generate the sinusoid collection (the only generator)");
  gen->add_option("-o,--output", gen_output, "collection file to write")->required();
  add_config_options(gen, gen_o, {{"data.tasks", "--tasks"}, {"data.seed", "--seed"}, {"data.samples", "--samples"}},
                     {"seed"});

  const std::map<std::string, std::string> common{
      {"data.path", "--data"}, {"out_dir", "--out"}, {"train.episodes", "--episodes"},
      {"meta.support_size", "-m"}, {"meta.batch_size", "-b"}};
  auto* train = app.add_subcommand("train", "meta-train a model and write a checkpoint");
  train->add_option("--checkpoint", ckpt, "checkpoint to write (default: <out_dir>/checkpoint.bin)");
  add_config_options(train, train_o, common);

  auto trained_cmd = [&](const char* name, const char* help, Options& o, std::map<std::string, std::string> extra) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--checkpoint", ckpt, "checkpoint to read (default: <out_dir>/checkpoint.bin)");
    sub->add_option("--output", output, "report file (default: <out_dir>/<command>.csv)");
    auto aliases = common;
    aliases.insert(extra.begin(), extra.end());
    add_config_options(sub, o, aliases);
    return sub;
  };
  auto* eval = trained_cmd("eval", "meta-test task MSE report", eval_o, {{"eval.partitions", "--partitions"}});
  auto* active = trained_cmd("active", "active-learning traces", active_o,
                             {{"active.strategies", "--strategy"}, {"active.labeling", "--labeling"},
                              {"active.budget", "--budget"}});
  auto* curves = trained_cmd("curves", "prediction curves of meta-test tasks", curves_o, {{"curves.points", "--points"}});

  auto* grad = app.add_subcommand("gradcheck", "compare reverse-mode gradients with central differences");
  grad->add_flag("--corrupt-gradient", corrupt, "perturb the analytic gradient (checker self-test)")->group("");
  add_config_options(grad, grad_o, {});

  auto* grid = app.add_subcommand("grid", "train and evaluate every cell of an ablation grid");
  add_config_options(grid, grid_o, common);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help(app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    auto configured = [&](const Options& o) {
      ExperimentConfig c = build_config(o);
      c.validate();
      return c;
    };
    if (gen->parsed()) return cmd_gen(configured(gen_o), gen_output, out);
    if (train->parsed()) return cmd_train(configured(train_o), ckpt, out, err);
    if (eval->parsed()) return cmd_eval(configured(eval_o), ckpt, output, out, err);
    if (active->parsed()) return cmd_active(configured(active_o), ckpt, output, out, err);
    if (curves->parsed()) return cmd_curves(configured(curves_o), ckpt, output, out, err);
    if (grad->parsed()) return cmd_gradcheck(configured(grad_o), corrupt, out);
    if (grid->parsed()) return cmd_grid(configured(grid_o), out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace adkl::cli
