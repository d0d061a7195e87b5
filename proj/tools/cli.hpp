// Copyright 2026 The wcshift Authors
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

// Command-line front end. Every subcommand writes its primary outputs plus a
// manifest; `wcshift --config <manifest>` replays the recorded run.

#pragma once

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "wcshift/wcshift.hpp"

#ifndef WCSHIFT_VERSION
#define WCSHIFT_VERSION "0.0.0"
#endif

namespace wcshift::cli {

using nlohmann::json;

enum ExitCode : int { kOk = 0, kOther = 1, kConfigExit = 2, kDataExit = 3, kNumericalExit = 4 };

inline int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kConfig:
      return kConfigExit;
    case ErrorCategory::kData:
      return kDataExit;
    case ErrorCategory::kNumerical:
      return kNumericalExit;
  }
  return kOther;
}

inline std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot read '" + path + "' for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

// Smallest label in a regression cohort; the default utility constant.
inline double min_income(const Cohort& c) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& p : c.pools)
    for (const auto& r : p.individuals) m = std::min(m, r.label);
  if (!(m > 0.0) || !std::isfinite(m))
    throw ConfigError("utility: cohort has a non-positive income; pass c explicitly");
  return m;
}

// "name" or "name:key=value,key=value", or a JSON object. Without a cohort
// the utility constant c defaults to 1; with one, to its smallest income.
inline LossSpec parse_loss(const std::string& text, const Cohort* cohort = nullptr) {
  if (!text.empty() && text.front() == '{') {
    try {
      return loss_from_json(json::parse(text));
    } catch (const json::exception& e) {
      throw ConfigError("loss '" + text + "': " + e.what());
    }
  }
  auto colon = text.find(':');
  std::string name = text.substr(0, colon);
  std::map<std::string, double> kv;
  if (colon != std::string::npos) {
    std::stringstream ss(text.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("loss '" + text + "': expected key=value, got '" + item + "'");
      auto v = detail::parse_double(item.substr(eq + 1));
      if (!v) throw ConfigError("loss '" + text + "': non-numeric value in '" + item + "'");
      kv[item.substr(0, eq)] = *v;
    }
  }
  auto take = [&](const std::string& key, double fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    double v = it->second;
    kv.erase(it);
    return v;
  };
  LossSpec spec;
  if (name == "topk") {
    spec = TopK{static_cast<int>(take("k", 1))};
  } else if (name == "knapsack") {
    Knapsack k;
    if (kv.count("budget")) k.budget = take("budget", 0.0);
    k.use_costs = take("unit", 0.0) == 0.0;
    spec = k;
  } else if (name == "fairness") {
    spec = FairnessGini{static_cast<int>(take("k", 1))};
  } else if (name == "utility") {
    double budget = take("budget", 1.0);
    double c = kv.count("c") ? take("c", 1.0) : (cohort ? min_income(*cohort) : 1.0);
    spec = NashWelfare{budget, c};
  } else if (name == "acc") {
    spec = MisclassRate{take("threshold", 0.5)};
  } else if (name == "ce") {
    spec = CrossEntropy{take("eps", kLossEps)};
  } else if (name == "mse") {
    spec = Mse{take("scale", 10.0)};
  } else {
    throw ConfigError("unknown loss '" + name + "' (expected topk, knapsack, fairness, utility, acc, ce or mse)");
  }
  if (!kv.empty()) throw ConfigError("loss '" + text + "': unknown parameter '" + kv.begin()->first + "'");
  validate(spec);
  return spec;
}

// Registers options on a CLI11 app and mirrors them into a JSON config, so
// a run can be replayed from the config recorded in its manifest.
class Binder {
 public:
  explicit Binder(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* add(const std::string& key, T& target, const std::string& help) {
    auto* opt = app_->add_option("--" + dashed(key), target, help);
    entries_.push_back({key, opt, [&target](const json& j) { target = j.get<T>(); },
                        [&target] { return json(target); }});
    return opt;
  }

  template <typename T>
  CLI::Option* add(const std::string& key, std::optional<T>& target, const std::string& help) {
    auto* opt = app_->add_option("--" + dashed(key), target, help);
    entries_.push_back({key, opt,
                        [&target](const json& j) {
                          if (j.is_null())
                            target.reset();
                          else
                            target = j.get<T>();
                        },
                        [&target] { return target ? json(*target) : json(nullptr); }});
    return opt;
  }

  CLI::Option* flag(const std::string& key, bool& target, const std::string& help, bool negatable = false) {
    std::string names = "--" + dashed(key);
    if (negatable) names += ",!--no-" + dashed(key);
    auto* opt = app_->add_flag(names, target, help);
    entries_.push_back({key, opt, [&target](const json& j) { target = j.get<bool>(); }, [&target] { return json(target); }});
    return opt;
  }

  // Fills every option not given on the command line from `cfg`.
  void apply(const json& cfg) {
    if (!cfg.is_object()) throw ConfigError("config must be a JSON object");
    for (auto it = cfg.begin(); it != cfg.end(); ++it) {
      bool known = false;
      for (const auto& e : entries_) known = known || e.key == it.key();
      if (!known) throw ConfigError("config: unknown key '" + it.key() + "'");
    }
    for (auto& e : entries_) {
      if (e.option->count() > 0 || !cfg.contains(e.key)) continue;
      try {
        e.from_json(cfg.at(e.key));
      } catch (const json::exception& ex) {
        throw ConfigError("config key '" + e.key + "': " + ex.what());
      }
      given_.push_back(e.key);
    }
  }

  bool given(const std::string& key) const {
    for (const auto& e : entries_)
      if (e.key == key && e.option->count() > 0) return true;
    return std::find(given_.begin(), given_.end(), key) != given_.end();
  }

  void require(std::initializer_list<const char*> keys) const {
    for (const char* k : keys)
      if (!given(k)) throw ConfigError("missing required option --" + dashed(k));
  }

  json resolved() const {
    json j = json::object();
    for (const auto& e : entries_) j[e.key] = e.to_json();
    return j;
  }

 private:
  static std::string dashed(std::string s) {
    std::replace(s.begin(), s.end(), '_', '-');
    return s;
  }
  struct Entry {
    std::string key;
    CLI::Option* option;
    std::function<void(const json&)> from_json;
    std::function<json()> to_json;
  };
  CLI::App* app_;
  std::vector<Entry> entries_;
  std::vector<std::string> given_;
};

inline Cohort load_any_cohort(const std::string& path, const std::string& schema_path) {
  if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0) return read_cohort_json(path);
  if (schema_path.empty()) throw ConfigError("cohort '" + path + "' is not JSON, so --schema is required");
  return load_cohort(path, load_schema(schema_path));
}

inline double default_rho_ind(const Cohort& c) {
  std::size_t m = 0;
  for (const auto& p : c.pools) m = std::max(m, p.size());
  return static_cast<double>(m);
}

inline void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write '" + path + "'");
  out << j.dump(1) << '\n';
  if (!out) throw FileError("failed writing '" + path + "'");
}

inline void ensure_parent(const std::string& path) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

inline std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Options shared by the subcommands that run Frank-Wolfe.
struct FwOptions {
  FwParams params;
  std::optional<double> rho_ind;
  double rho_xi = 6.25;
  std::string divergence = "chi_square";

  void bind(Binder& b) {
    b.add("rho_ind", rho_ind, "within-instance radius (default: largest pool size)");
    b.add("rho_xi", rho_xi, "across-instance radius")->capture_default_str();
    b.add("divergence", divergence, "chi_square, or chi_square_half to measure radii against half the divergence")
        ->capture_default_str();
    b.add("iterations", params.iterations, "Frank-Wolfe iterations T")->capture_default_str();
    b.add("samples", params.num_samples, "Monte-Carlo samples per gradient")->capture_default_str();
    b.add("samples2", params.num_samples2, "Monte-Carlo samples per instance loss")->capture_default_str();
    b.add("momentum", params.momentum, "momentum weight p_t on the new gradient")->capture_default_str();
    b.add("draw_size", params.draw_size, "individuals drawn per problem (default: pool size)");
    b.add("seed", params.seed, "random seed")->capture_default_str();
    b.flag("literal_sign", params.literal_sign, "feed the negated gradient to gradmax");
    b.flag("baseline", params.baseline, "subtract a baseline in the gradient estimator (--no-baseline disables)", true);
  }
  UncertaintyBudget budget(const Cohort& c) {
    if (!rho_ind) rho_ind = default_rho_ind(c);
    UncertaintyBudget b{*rho_ind, rho_xi, divergence_from_string(divergence)};
    validate(b);
    return b;
  }
};

struct Outputs {
  std::vector<std::string> paths;
  json extra = json::object();
};

using Handler = std::function<Outputs()>;

struct Command {
  CLI::App* app = nullptr;
  std::unique_ptr<Binder> binder;
  std::string config_path;
  std::string manifest_path;
  Handler handler;
  std::function<std::string()> default_manifest;
};

inline json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return j;
}

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Worst-case distribution shifts for predict-then-optimize allocation", "wcshift"};
  app.set_version_flag("--version", WCSHIFT_VERSION);
  app.require_subcommand(0, 1);
  std::string top_config;
  app.add_option("--config", top_config, "replay the run recorded in a manifest");
  std::size_t workers = default_workers();
  app.add_option("--workers", workers, "worker threads (results do not depend on it)")->capture_default_str();

  std::map<std::string, Command> commands;
  auto make = [&](const std::string& name, const std::string& help) -> Command& {
    Command& c = commands[name];
    c.app = app.add_subcommand(name, help);
    c.binder = std::make_unique<Binder>(c.app);
    c.app->add_option("--config", c.config_path, "JSON config or manifest; command-line options take precedence");
    c.binder->add("manifest", c.manifest_path, "manifest path (default: next to the primary output)");
    c.app->add_option("--workers", workers, "worker threads (results do not depend on it)")->capture_default_str();
    return c;
  };

  // --- synth -------------------------------------------------------------
  SyntheticSpec synth_spec;
  std::string synth_task = "binary", synth_out;
  std::uint64_t synth_seed = 0;
  {
    auto& c = make("synth", "generate a synthetic two-level cohort");
    auto& b = *c.binder;
    b.add("k", synth_spec.k, "instances")->capture_default_str();
    b.add("m", synth_spec.m, "individuals per instance")->capture_default_str();
    b.add("d", synth_spec.d, "numeric features")->capture_default_str();
    b.add("task", synth_task, "binary or regression")->capture_default_str();
    b.add("groups", synth_spec.num_groups, "protected groups")->capture_default_str();
    b.add("categories", synth_spec.num_categories, "levels of one categorical feature (0: none)")->capture_default_str();
    b.add("max_cost", synth_spec.max_cost, "largest integer cost")->capture_default_str();
    b.add("label_noise", synth_spec.label_noise, "label noise scale")->capture_default_str();
    b.add("seed", synth_seed, "random seed")->capture_default_str();
    b.add("out", synth_out, "output cohort JSON");
    c.default_manifest = [&] { return synth_out + ".manifest.json"; };
    c.handler = [&]() -> Outputs {
      commands["synth"].binder->require({"out"});
      synth_spec.task = task_from_string(synth_task);
      auto cohort = generate_synthetic(synth_spec, synth_seed);
      ensure_parent(synth_out);
      write_cohort(cohort, synth_out);
      out << "wrote " << cohort.num_instances() << " instances, " << cohort.num_individuals() << " individuals to "
          << synth_out << '\n';
      return {{synth_out}};
    };
  }

  // --- train -------------------------------------------------------------
  std::string train_cohort, train_schema, train_kind = "logistic", train_out, train_history;
  TrainConfig train_cfg;
  std::uint64_t train_seed = 0;
  {
    auto& c = make("train", "train a logistic or MLP predictor");
    auto& b = *c.binder;
    b.add("cohort", train_cohort, "training cohort (.json, or delimited text with --schema)");
    b.add("schema", train_schema, "schema JSON for delimited cohorts");
    b.add("kind", train_kind, "logistic or mlp")->capture_default_str();
    b.add("epochs", train_cfg.epochs, "full-batch epochs")->capture_default_str();
    b.add("learning_rate", train_cfg.learning_rate, "initial step size")->capture_default_str();
    b.add("hidden", train_cfg.hidden, "hidden layer widths (mlp)")->capture_default_str();
    b.add("embedding_width", train_cfg.embedding_width, "embedding width (mlp)")->capture_default_str();
    b.add("seed", train_seed, "initialization seed")->capture_default_str();
    b.add("out", train_out, "output predictor JSON");
    b.add("history", train_history, "optional CSV of the per-epoch training loss");
    c.default_manifest = [&] { return train_out + ".manifest.json"; };
    c.handler = [&]() -> Outputs {
      commands["train"].binder->require({"cohort", "out"});
      auto cohort = load_any_cohort(train_cohort, train_schema);
      auto res = train(cohort, predictor_kind_from_string(train_kind), train_cfg, train_seed);
      ensure_parent(train_out);
      save_predictor(res.predictor, train_out);
      Outputs o{{train_out}};
      if (!train_history.empty()) {
        std::ofstream h(train_history, std::ios::binary);
        if (!h) throw FileError("cannot write '" + train_history + "'");
        h << "epoch,loss\n";
        for (std::size_t e = 0; e < res.loss_history.size(); ++e)
          h << e + 1 << ',' << format_number(res.loss_history[e]) << '\n';
        o.paths.push_back(train_history);
      }
      if (!res.loss_history.empty()) out << "final training loss " << res.loss_history.back() << '\n';
      return o;
    };
  }

  // Cohort + predictor inputs shared by the analysis subcommands.
  struct Inputs {
    std::string cohort, schema, model;
    void bind(Binder& b) {
      b.add("cohort", cohort, "cohort (.json, or delimited text with --schema)");
      b.add("schema", schema, "schema JSON for delimited cohorts");
      b.add("model", model, "predictor JSON or (id,score) CSV table");
    }
    std::pair<Cohort, ScoreCache> load() const {
      auto c = load_any_cohort(cohort, schema);
      auto p = load_predictor(model, c.task);
      auto s = precompute_scores(c, p);
      return {std::move(c), std::move(s)};
    }
  };

  // --- find-worst --------------------------------------------------------
  Inputs fw_in;
  FwOptions fw_opt;
  std::string fw_loss, fw_out, fw_trace;
  {
    auto& c = make("find-worst", "find the worst-case hierarchical shift for one metric");
    auto& b = *c.binder;
    fw_in.bind(b);
    b.add("loss", fw_loss, "metric, e.g. topk:k=2, knapsack, fairness:k=2, utility:budget=5, acc, ce, mse:scale=10");
    fw_opt.bind(b);
    b.add("out", fw_out, "output report JSON");
    b.add("trace", fw_trace, "optional per-iteration objective trace CSV");
    c.default_manifest = [&] { return fw_out + ".manifest.json"; };
    c.handler = [&]() -> Outputs {
      commands["find-worst"].binder->require({"cohort", "model", "loss", "out"});
      auto [cohort, scores] = fw_in.load();
      auto budget = fw_opt.budget(cohort);
      fw_opt.params.workers = workers;
      auto rep = find_worst_case(cohort, scores, parse_loss(fw_loss, &cohort), budget, fw_opt.params);
      ensure_parent(fw_out);
      write_json_file(to_json(rep), fw_out);
      Outputs o{{fw_out}};
      if (!fw_trace.empty()) {
        emit_trace_csv(rep, fw_trace);
        o.paths.push_back(fw_trace);
      }
      out << rep.loss.metric_name() << " worst-case E[DL] = " << rep.value << '\n';
      return o;
    };
  }

  // --- evaluate ----------------------------------------------------------
  Inputs ev_in;
  std::string ev_report, ev_metric, ev_out;
  EvalConfig ev_cfg;
  {
    auto& c = make("evaluate", "evaluate a stored shift under a metric");
    auto& b = *c.binder;
    ev_in.bind(b);
    b.add("report", ev_report, "report JSON from find-worst");
    b.add("metric", ev_metric, "metric to evaluate (default: the report's own)");
    b.add("instances", ev_cfg.instances, "instance draws")->capture_default_str();
    b.add("problems", ev_cfg.problems, "problems per instance draw")->capture_default_str();
    b.add("seed", ev_cfg.seed, "random seed")->capture_default_str();
    b.add("out", ev_out, "output JSON");
    c.default_manifest = [&] { return ev_out + ".manifest.json"; };
    c.handler = [&]() -> Outputs {
      commands["evaluate"].binder->require({"cohort", "model", "report", "out"});
      auto [cohort, scores] = ev_in.load();
      auto rep = report_from_json(read_config_file(ev_report));
      LossSpec metric = ev_metric.empty() ? rep.loss : parse_loss(ev_metric, &cohort);
      if (!applicable(metric, cohort.task))
        throw ArgumentError("metric '" + metric.metric_name() + "' does not apply to a " + to_string(cohort.task) + " cohort");
      EvalConfig cfg = ev_cfg;
      cfg.workers = workers;
      cfg.draw_size = rep.params.draw_size;
      auto ev = evaluate_shift(cohort, scores, metric, rep.shift, cfg, &rep.budget);
      ensure_parent(ev_out);
      write_json_file({{"metric", metric.metric_name()},
                       {"shift_metric", rep.loss.metric_name()},
                       {"mean", ev.mean},
                       {"std_error", ev.std_error}},
                      ev_out);
      out << metric.metric_name() << " under the " << rep.loss.metric_name() << " shift: " << ev.mean << " +- "
          << ev.std_error << '\n';
      return {{ev_out}};
    };
  }

  // --- oracle ------------------------------------------------------------
  Inputs or_in;
  std::string or_loss, or_out;
  std::optional<double> or_rho;
  std::optional<int> or_draw;
  std::size_t or_cap = kDefaultEnumerationCap;
  OracleConfig or_cfg;
  {
    auto& c = make("oracle", "exact per-instance worst case by enumeration (tiny pools)");
    auto& b = *c.binder;
    or_in.bind(b);
    b.add("loss", or_loss, "metric");
    b.add("rho_ind", or_rho, "within-instance radius (default: largest pool size)");
    b.add("draw_size", or_draw, "individuals drawn per problem (default: pool size)");
    b.add("cap", or_cap, "largest number of multisets to enumerate")->capture_default_str();
    b.add("restarts", or_cfg.restarts, "ascent starting points")->capture_default_str();
    b.add("seed", or_cfg.seed, "random seed for starting points")->capture_default_str();
    b.add("out", or_out, "output JSON");
    c.default_manifest = [&] { return or_out + ".manifest.json"; };
    c.handler = [&]() -> Outputs {
      commands["oracle"].binder->require({"cohort", "model", "loss", "out"});
      auto [cohort, scores] = or_in.load();
      auto spec = parse_loss(or_loss, &cohort);
      if (!applicable(spec, cohort.task))
        throw ArgumentError("metric '" + spec.metric_name() + "' does not apply to a " + to_string(cohort.task) + " cohort");
      if (!or_rho) or_rho = default_rho_ind(cohort);
      auto pools = prepare_pools(cohort, scores);
      OracleConfig cfg = or_cfg;
      cfg.workers = workers;
      json res = json::array();
      for (std::size_t j = 0; j < pools.size(); ++j) {
        std::size_t n = or_draw ? static_cast<std::size_t>(*or_draw) : pools[j].size();
        auto e = enumerate_problems(pools[j], spec, n, or_cap, LossForm::kShifted, workers);
        auto r = oracle_maximize(e, *or_rho, cfg);
        res.push_back({{"instance_id", cohort.pools[j].instance_id},
                       {"value", r.value + 1.0},
                       {"q", r.q},
                       {"multisets", e.multisets.size()},
                       {"grid_certified", r.grid_certified}});
        out << cohort.pools[j].instance_id << ": exact worst-case E[DL] = " << r.value + 1.0 << '\n';
      }
      ensure_parent(or_out);
      write_json_file({{"metric", spec.metric_name()}, {"rho_ind", *or_rho}, {"instances", res}}, or_out);
      return {{or_out}};
    };
  }

  // --- fig2 --------------------------------------------------------------
  Inputs f2_in;
  std::vector<std::string> f2_metrics;
  std::vector<int> f2_grid = {10, 50, 250, 1000, 3000};
  std::vector<std::uint64_t> f2_seeds = {0, 1, 2};
  std::optional<double> f2_rho;
  FwParams f2_params;
  std::size_t f2_cap = kDefaultEnumerationCap;
  std::string f2_out;
  {
    auto& c = make("fig2", "Frank-Wolfe over oracle ratio against the sample count");
    auto& b = *c.binder;
    f2_in.bind(b);
    b.add("metrics", f2_metrics, "metrics to trace");
    b.add("grid", f2_grid, "sample counts")->capture_default_str();
    b.add("seeds", f2_seeds, "seeds averaged at each grid point")->capture_default_str();
    b.add("rho_ind", f2_rho, "within-instance radius (default: largest pool size)");
    b.add("iterations", f2_params.iterations, "Frank-Wolfe iterations T")->capture_default_str();
    b.add("momentum", f2_params.momentum, "momentum weight")->capture_default_str();
    b.flag("baseline", f2_params.baseline, "subtract a baseline in the gradient estimator (--no-baseline disables)", true);
    b.add("draw_size", f2_params.draw_size, "individuals drawn per problem (default: pool size)");
    b.add("cap", f2_cap, "largest number of multisets to enumerate")->capture_default_str();
    b.add("out", f2_out, "output CSV (one row per run); a summary CSV is written next to it");
    c.default_manifest = [&] { return f2_out + ".manifest.json"; };
    c.handler = [&]() -> Outputs {
      commands["fig2"].binder->require({"cohort", "model", "metrics", "out"});
      auto [cohort, scores] = f2_in.load();
      if (!f2_rho) f2_rho = default_rho_ind(cohort);
      FwParams params = f2_params;
      params.workers = workers;
      RatioCurveConfig cfg{f2_grid, f2_seeds, f2_cap, OracleConfig{}};
      cfg.oracle.workers = workers;
      ensure_parent(f2_out);
      std::ofstream all(f2_out, std::ios::binary);
      if (!all) throw FileError("cannot write '" + f2_out + "'");
      all << "metric,instance_id,seed,num_samples,fw_value,oracle_value,ratio\n";
      std::string summary_path = f2_out + ".summary.csv";
      std::ofstream summary(summary_path, std::ios::binary);
      if (!summary) throw FileError("cannot write '" + summary_path + "'");
      summary << "metric,num_samples,mean_ratio\n";
      for (const auto& name : f2_metrics) {
        auto curve = oracle_ratio_curve(cohort, scores, parse_loss(name, &cohort), *f2_rho, params, cfg);
        for (const auto& p : curve.points)
          all << curve.metric << ',' << p.instance_id << ',' << p.seed << ',' << p.num_samples << ','
              << format_number(p.fw_value) << ',' << format_number(p.oracle_value) << ','
              << format_number(p.ratio) << '\n';
        for (std::size_t g = 0; g < curve.grid.size(); ++g) {
          summary << curve.metric << ',' << curve.grid[g] << ',' << format_number(curve.mean_ratio[g]) << '\n';
          out << curve.metric << " @ " << curve.grid[g] << " samples: mean ratio " << curve.mean_ratio[g] << '\n';
        }
      }
      return {{f2_out, summary_path}};
    };
  }

  // --- report ------------------------------------------------------------
  Inputs rp_in;
  std::vector<std::string> rp_metrics;
  FwOptions rp_opt;
  EvalConfig rp_eval;
  int rp_replicates = 5;
  std::string rp_dir;
  {
    auto& c = make("report", "cross-metric matrix, diagonal normalization and heat map");
    auto& b = *c.binder;
    rp_in.bind(b);
    b.add("metrics", rp_metrics, "metrics (rows and columns)");
    rp_opt.bind(b);
    b.add("instances", rp_eval.instances, "evaluation instance draws")->capture_default_str();
    b.add("problems", rp_eval.problems, "evaluation problems per instance draw")->capture_default_str();
    b.add("replicates", rp_replicates, "independent replicates (seeds seed, seed+1, ...)")->capture_default_str();
    b.add("out_dir", rp_dir, "output directory");
    c.default_manifest = [&] { return (std::filesystem::path(rp_dir) / "manifest.json").string(); };
    c.handler = [&]() -> Outputs {
      commands["report"].binder->require({"cohort", "model", "metrics", "out_dir"});
      if (rp_replicates < 1) throw ConfigError("replicates must be >= 1");
      auto [cohort, scores] = rp_in.load();
      auto budget = rp_opt.budget(cohort);
      std::vector<LossSpec> metrics;
      for (const auto& m : rp_metrics) metrics.push_back(parse_loss(m, &cohort));
      std::vector<CrossMetricMatrix> raw, norm;
      for (int r = 0; r < rp_replicates; ++r) {
        FwParams p = rp_opt.params;
        p.seed += static_cast<std::uint64_t>(r);
        p.workers = workers;
        EvalConfig e = rp_eval;
        e.seed = p.seed;
        e.workers = workers;
        auto res = cross_metric_matrix(cohort, scores, metrics, budget, p, e);
        raw.push_back(res.matrix);
        norm.push_back(diagonal_normalize(res.matrix));
      }
      auto raw_agg = aggregate_replicates(raw);
      auto norm_agg = aggregate_replicates(norm);
      norm_agg.mean.normalized = true;
      std::filesystem::create_directories(rp_dir);
      auto path = [&](const char* f) { return (std::filesystem::path(rp_dir) / f).string(); };
      emit_csv(raw_agg.mean, path("matrix.csv"));
      emit_csv(norm_agg.mean, path("normalized.csv"));
      render_heatmap(norm_agg.mean, path("heatmap.svg"));
      // each off-diagonal cell: the fraction of the column metric's own worst
      // case reached by the row metric's shift
      double min_off = std::numeric_limits<double>::infinity();
      json cells = json::array();
      for (std::size_t i = 0; i < metrics.size(); ++i)
        for (std::size_t j = 0; j < metrics.size(); ++j) {
          if (i == j) continue;
          min_off = std::min(min_off, norm_agg.mean.values[i][j]);
          cells.push_back({{"shift_metric", norm_agg.mean.row_metrics[i]},
                           {"evaluated_metric", norm_agg.mean.col_metrics[j]},
                           {"fraction_of_worst_case", norm_agg.mean.values[i][j]},
                           {"half_width", norm_agg.half_width[i][j]}});
        }
      json summary{{"metrics", norm_agg.mean.col_metrics},
                   {"raw", raw_agg.mean.values},
                   {"normalized", norm_agg.mean.values},
                   {"normalized_half_width", norm_agg.half_width},
                   {"off_diagonal", std::move(cells)},
                   {"replicates", rp_replicates}};
      if (rp_replicates == 1) summary["normalized_std_error"] = norm[0].std_errors;
      if (std::isfinite(min_off)) summary["min_off_diagonal"] = min_off;
      write_json_file(summary, path("summary.json"));
      out << "wrote " << rp_dir << "/{matrix.csv,normalized.csv,heatmap.svg,summary.json}\n";
      return {{path("matrix.csv"), path("normalized.csv"), path("heatmap.svg"), path("summary.json")}};
    };
  }

  const auto started = std::chrono::steady_clock::now();
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigExit;
  }

  try {
    std::string sub;
    for (auto& [name, c] : commands)
      if (c.app->parsed()) sub = name;
    if (sub.empty()) {
      if (top_config.empty()) {
        out << app.help();
        return kConfigExit;
      }
      auto manifest = read_config_file(top_config);
      if (!manifest.contains("subcommand")) throw ConfigError("'" + top_config + "' is not a manifest (no subcommand)");
      return run({manifest.at("subcommand").get<std::string>(), "--config", top_config, "--workers",
                  std::to_string(workers)},
                 out, err);
    }
    Command& cmd = commands[sub];
    if (!cmd.config_path.empty()) {
      auto cfg = read_config_file(cmd.config_path);
      if (cfg.contains("subcommand") && cfg.at("subcommand") != sub)
        throw ConfigError("manifest '" + cmd.config_path + "' belongs to '" + cfg.at("subcommand").get<std::string>() + "'");
      cmd.binder->apply(cfg.contains("config") ? cfg.at("config") : cfg);
    }
    Outputs outputs = cmd.handler();
    json resolved = cmd.binder->resolved();
    // fill in defaults that were resolved from the data
    if (sub == "find-worst") resolved["rho_ind"] = *fw_opt.rho_ind;
    if (sub == "report") resolved["rho_ind"] = *rp_opt.rho_ind;
    if (sub == "oracle") resolved["rho_ind"] = *or_rho;
    if (sub == "fig2") resolved["rho_ind"] = *f2_rho;
    std::string manifest_path = cmd.manifest_path.empty() ? cmd.default_manifest() : cmd.manifest_path;
    resolved["manifest"] = manifest_path;
    json files = json::array();
    for (const auto& p : outputs.paths) files.push_back({{"path", p}, {"sha256", sha256_file(p)}});
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    json manifest{{"subcommand", sub},
                  {"config", resolved},
                  {"version", WCSHIFT_VERSION},
                  {"started_utc", utc_timestamp()},
                  {"wall_clock_seconds", seconds},
                  {"workers", workers},
                  {"outputs", files}};
    ensure_parent(manifest_path);
    write_json_file(manifest, manifest_path);
    return kOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kOther;
  }
}

}  // namespace wcshift::cli
