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

// Instance-grouped individuals: domain types, delimiter-separated ingestion,
// canonical JSON caching and a synthetic two-level cohort generator.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "wcshift/error.hpp"

namespace wcshift {

enum class Task { kBinary, kRegression };

inline std::string to_string(Task task) {
  return task == Task::kBinary ? "binary" : "regression";
}

inline Task task_from_string(const std::string& s) {
  if (s == "binary" || s == "binary-classification") return Task::kBinary;
  if (s == "regression") return Task::kRegression;
  throw ConfigError("unknown task '" + s + "' (expected binary or regression)");
}

struct IndividualRecord {
  std::string id;
  std::vector<double> numeric_features;  // standardized
  std::vector<int> categorical_features;
  double label = 0.0;
  double cost = 1.0;
  int group = 0;

  bool operator==(const IndividualRecord&) const = default;
};

struct InstancePool {
  std::string instance_id;
  std::vector<IndividualRecord> individuals;

  std::size_t size() const { return individuals.size(); }
  bool operator==(const InstancePool&) const = default;
};

// Column metadata shared by every pool: standardization constants and the
// string vocabularies behind categorical and group codes (code = position).
struct FeatureSchema {
  std::vector<std::string> numeric_names;
  std::vector<double> means;
  std::vector<double> scales;
  std::vector<std::string> categorical_names;
  std::vector<std::vector<std::string>> categorical_vocab;
  std::vector<std::string> group_vocab;

  std::size_t numeric_dim() const { return numeric_names.size(); }
  std::size_t num_groups() const { return std::max<std::size_t>(1, group_vocab.size()); }
  bool operator==(const FeatureSchema&) const = default;
};

struct Cohort {
  std::vector<InstancePool> pools;
  Task task = Task::kBinary;
  FeatureSchema schema;

  std::size_t num_instances() const { return pools.size(); }
  std::size_t num_individuals() const {
    std::size_t n = 0;
    for (const auto& p : pools) n += p.size();
    return n;
  }
  bool operator==(const Cohort&) const = default;
};

// Names the columns of a delimiter-separated source file.
struct SchemaConfig {
  std::string instance_id;
  std::string label;
  std::optional<std::string> id;  // row number within the file when absent
  std::vector<std::string> numeric_features;
  std::vector<std::string> categorical_features;
  std::optional<std::string> cost;
  std::optional<std::string> group;
  Task task = Task::kBinary;
  char delimiter = ',';
};

inline SchemaConfig schema_from_json(const nlohmann::json& j) {
  SchemaConfig s;
  try {
    s.instance_id = j.at("instance_id").get<std::string>();
    s.label = j.at("label").get<std::string>();
    if (j.contains("id")) s.id = j.at("id").get<std::string>();
    if (j.contains("numeric_features"))
      s.numeric_features = j.at("numeric_features").get<std::vector<std::string>>();
    if (j.contains("categorical_features"))
      s.categorical_features = j.at("categorical_features").get<std::vector<std::string>>();
    if (j.contains("cost")) s.cost = j.at("cost").get<std::string>();
    if (j.contains("group")) s.group = j.at("group").get<std::string>();
    if (j.contains("task")) s.task = task_from_string(j.at("task").get<std::string>());
    if (j.contains("delimiter")) {
      auto d = j.at("delimiter").get<std::string>();
      if (d.size() != 1) throw ConfigError("schema: delimiter must be a single character");
      s.delimiter = d[0];
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schema: ") + e.what());
  }
  return s;
}

inline SchemaConfig load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open schema file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("schema file '" + path + "': " + e.what());
  }
  return schema_from_json(j);
}

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Splits one line; double-quoted fields may contain the delimiter and "".
inline std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      out.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(trim(field));
  return out;
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline int intern(std::vector<std::string>& vocab, std::map<std::string, int>& index,
                  const std::string& key) {
  auto it = index.find(key);
  if (it != index.end()) return it->second;
  int code = static_cast<int>(vocab.size());
  vocab.push_back(key);
  index.emplace(key, code);
  return code;
}

}  // namespace detail

// Standardizes numeric features in place over all individuals and records
// the constants. Constant columns keep scale 1.
inline void standardize(Cohort& cohort) {
  auto& schema = cohort.schema;
  std::size_t d = schema.numeric_dim();
  schema.means.assign(d, 0.0);
  schema.scales.assign(d, 1.0);
  std::size_t n = cohort.num_individuals();
  if (n == 0) return;
  for (std::size_t c = 0; c < d; ++c) {
    double sum = 0.0;
    for (const auto& p : cohort.pools)
      for (const auto& r : p.individuals) sum += r.numeric_features[c];
    double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& p : cohort.pools)
      for (const auto& r : p.individuals) ss += (r.numeric_features[c] - mean) * (r.numeric_features[c] - mean);
    double sd = std::sqrt(ss / static_cast<double>(n));
    schema.means[c] = mean;
    schema.scales[c] = sd > 1e-12 ? sd : 1.0;
  }
  for (auto& p : cohort.pools)
    for (auto& r : p.individuals)
      for (std::size_t c = 0; c < d; ++c)
        r.numeric_features[c] = (r.numeric_features[c] - schema.means[c]) / schema.scales[c];
}

// Reads a delimiter-separated file with a header row. One pool per distinct
// instance id, pools in first-appearance order, row order kept within a
// pool. When `reference` is given its standardization constants and
// vocabularies are reused (held-out data); otherwise they are fitted here.
inline Cohort load_cohort(const std::string& path, const SchemaConfig& cfg,
                          const FeatureSchema* reference = nullptr) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open cohort file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty())
    throw EmptyCohortError("cohort file '" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = detail::split_fields(line, cfg.delimiter);
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col.emplace(header[i], i);
  auto need = [&](const std::string& name) -> std::size_t {
    auto it = col.find(name);
    if (it == col.end()) throw SchemaError("cohort file '" + path + "': missing column '" + name + "'");
    return it->second;
  };

  std::size_t inst_col = need(cfg.instance_id);
  std::size_t label_col = need(cfg.label);
  std::optional<std::size_t> id_col, cost_col, group_col;
  if (cfg.id) id_col = need(*cfg.id);
  if (cfg.cost) cost_col = need(*cfg.cost);
  if (cfg.group) group_col = need(*cfg.group);
  std::vector<std::size_t> num_cols, cat_cols;
  for (const auto& n : cfg.numeric_features) num_cols.push_back(need(n));
  for (const auto& n : cfg.categorical_features) cat_cols.push_back(need(n));

  Cohort cohort;
  cohort.task = cfg.task;
  auto& schema = cohort.schema;
  schema.numeric_names = cfg.numeric_features;
  schema.categorical_names = cfg.categorical_features;
  schema.categorical_vocab.resize(cat_cols.size());
  std::vector<std::map<std::string, int>> cat_index(cat_cols.size());
  std::map<std::string, int> group_index;
  if (reference) {
    if (reference->numeric_names != cfg.numeric_features ||
        reference->categorical_names != cfg.categorical_features)
      throw SchemaError("cohort file '" + path + "': columns differ from the reference schema");
    schema = *reference;
    for (std::size_t c = 0; c < cat_cols.size(); ++c)
      for (std::size_t k = 0; k < schema.categorical_vocab[c].size(); ++k)
        cat_index[c].emplace(schema.categorical_vocab[c][k], static_cast<int>(k));
    for (std::size_t k = 0; k < schema.group_vocab.size(); ++k)
      group_index.emplace(schema.group_vocab[k], static_cast<int>(k));
  }

  std::map<std::string, std::size_t> pool_of;
  std::vector<std::set<std::string>> ids_seen;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    ++row;
    auto f = detail::split_fields(line, cfg.delimiter);
    auto where = [&](const std::string& column) {
      return "cohort file '" + path + "', row " + std::to_string(row) + ", column '" + column + "'";
    };
    if (f.size() != header.size())
      throw ParseError("cohort file '" + path + "', row " + std::to_string(row) + ": expected " +
                       std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
    auto numeric = [&](std::size_t c, const std::string& name) {
      auto v = detail::parse_double(f[c]);
      if (!v) throw ParseError(where(name) + ": non-numeric value '" + f[c] + "'");
      return *v;
    };

    IndividualRecord r;
    r.id = id_col ? f[*id_col] : std::to_string(row);
    r.label = numeric(label_col, cfg.label);
    if (cfg.task == Task::kBinary && r.label != 0.0 && r.label != 1.0)
      throw ParseError(where(cfg.label) + ": binary label must be 0 or 1, got '" + f[label_col] + "'");
    for (std::size_t c = 0; c < num_cols.size(); ++c)
      r.numeric_features.push_back(numeric(num_cols[c], cfg.numeric_features[c]));
    for (std::size_t c = 0; c < cat_cols.size(); ++c)
      r.categorical_features.push_back(
          detail::intern(schema.categorical_vocab[c], cat_index[c], f[cat_cols[c]]));
    if (cost_col) {
      r.cost = numeric(*cost_col, *cfg.cost);
      if (r.cost < 0.0) throw ParseError(where(*cfg.cost) + ": negative cost");
    }
    if (group_col) r.group = detail::intern(schema.group_vocab, group_index, f[*group_col]);

    const std::string& inst = f[inst_col];
    auto [it, inserted] = pool_of.emplace(inst, cohort.pools.size());
    if (inserted) {
      cohort.pools.push_back(InstancePool{inst, {}});
      ids_seen.emplace_back();
    }
    if (!ids_seen[it->second].insert(r.id).second)
      throw ParseError("cohort file '" + path + "', row " + std::to_string(row) +
                       ": duplicate individual id '" + r.id + "' in instance '" + inst + "'");
    cohort.pools[it->second].individuals.push_back(std::move(r));
  }
  if (cohort.pools.empty()) throw EmptyCohortError("cohort file '" + path + "' has no data rows");
  if (!cfg.group && schema.group_vocab.empty()) schema.group_vocab = {"all"};

  if (reference) {
    for (auto& p : cohort.pools)
      for (auto& r : p.individuals)
        for (std::size_t c = 0; c < r.numeric_features.size(); ++c)
          r.numeric_features[c] = (r.numeric_features[c] - schema.means[c]) / schema.scales[c];
  } else {
    standardize(cohort);
  }
  return cohort;
}

// Canonical JSON form of a cohort, used for caching.
inline nlohmann::json to_json(const Cohort& c) {
  nlohmann::json j;
  j["task"] = to_string(c.task);
  const auto& s = c.schema;
  j["schema"] = {{"numeric", s.numeric_names},
                 {"means", s.means},
                 {"scales", s.scales},
                 {"categorical", s.categorical_names},
                 {"categorical_vocab", s.categorical_vocab},
                 {"groups", s.group_vocab}};
  nlohmann::json pools = nlohmann::json::array();
  for (const auto& p : c.pools) {
    nlohmann::json ind = nlohmann::json::array();
    for (const auto& r : p.individuals)
      ind.push_back({{"id", r.id},
                     {"x", r.numeric_features},
                     {"c", r.categorical_features},
                     {"y", r.label},
                     {"cost", r.cost},
                     {"group", r.group}});
    pools.push_back({{"instance_id", p.instance_id}, {"individuals", std::move(ind)}});
  }
  j["pools"] = std::move(pools);
  return j;
}

inline Cohort cohort_from_json(const nlohmann::json& j) {
  Cohort c;
  try {
    c.task = task_from_string(j.at("task").get<std::string>());
    const auto& s = j.at("schema");
    c.schema.numeric_names = s.at("numeric").get<std::vector<std::string>>();
    c.schema.means = s.at("means").get<std::vector<double>>();
    c.schema.scales = s.at("scales").get<std::vector<double>>();
    c.schema.categorical_names = s.at("categorical").get<std::vector<std::string>>();
    c.schema.categorical_vocab = s.at("categorical_vocab").get<std::vector<std::vector<std::string>>>();
    c.schema.group_vocab = s.at("groups").get<std::vector<std::string>>();
    for (const auto& pj : j.at("pools")) {
      InstancePool p;
      p.instance_id = pj.at("instance_id").get<std::string>();
      for (const auto& rj : pj.at("individuals")) {
        IndividualRecord r;
        r.id = rj.at("id").get<std::string>();
        r.numeric_features = rj.at("x").get<std::vector<double>>();
        r.categorical_features = rj.at("c").get<std::vector<int>>();
        r.label = rj.at("y").get<double>();
        r.cost = rj.at("cost").get<double>();
        r.group = rj.at("group").get<int>();
        p.individuals.push_back(std::move(r));
      }
      c.pools.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("cohort json: ") + e.what());
  }
  if (c.pools.empty()) throw EmptyCohortError("cohort json has no pools");
  return c;
}

inline void write_cohort(const Cohort& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FileError("cannot write cohort file '" + path + "'");
  out << to_json(c).dump(1) << '\n';
}

inline Cohort read_cohort_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open cohort file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("cohort file '" + path + "': " + e.what());
  }
  return cohort_from_json(j);
}

// Parameters of the synthetic two-level generator. Each instance draws a
// latent shift xi_j uniformly from [latent_lo, latent_hi]; individuals are
// then drawn iid given xi_j.
struct SyntheticSpec {
  int k = 2;
  int m = 8;
  int d = 2;
  Task task = Task::kBinary;
  double latent_lo = -1.0;
  double latent_hi = 1.0;
  int num_groups = 2;
  int num_categories = 0;  // one categorical column when > 0
  int max_cost = 5;
  double label_noise = 1.0;
};

inline nlohmann::json to_json(const SyntheticSpec& s) {
  return {{"k", s.k}, {"m", s.m}, {"d", s.d}, {"task", to_string(s.task)},
          {"latent_lo", s.latent_lo}, {"latent_hi", s.latent_hi},
          {"num_groups", s.num_groups}, {"num_categories", s.num_categories},
          {"max_cost", s.max_cost}, {"label_noise", s.label_noise}};
}

inline Cohort generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.k <= 0 || spec.m <= 0 || spec.d <= 0 || spec.num_groups <= 0 || spec.max_cost <= 0 ||
      spec.num_categories < 0)
    throw ArgumentError("synthetic spec: sizes must be positive");
  if (spec.latent_hi < spec.latent_lo) throw ArgumentError("synthetic spec: latent_hi < latent_lo");

  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Cohort cohort;
  cohort.task = spec.task;
  auto& schema = cohort.schema;
  for (int c = 0; c < spec.d; ++c) schema.numeric_names.push_back("x" + std::to_string(c));
  if (spec.num_categories > 0) {
    schema.categorical_names = {"cat"};
    schema.categorical_vocab.resize(1);
    for (int v = 0; v < spec.num_categories; ++v)
      schema.categorical_vocab[0].push_back("c" + std::to_string(v));
  }
  for (int g = 0; g < spec.num_groups; ++g) schema.group_vocab.push_back("g" + std::to_string(g));

  for (int j = 0; j < spec.k; ++j) {
    double xi = spec.latent_lo + (spec.latent_hi - spec.latent_lo) * unif(gen);
    InstancePool pool;
    pool.instance_id = "inst" + std::to_string(j);
    for (int i = 0; i < spec.m; ++i) {
      IndividualRecord r;
      r.id = pool.instance_id + "-" + std::to_string(i);
      for (int c = 0; c < spec.d; ++c) r.numeric_features.push_back(xi + normal(gen));
      if (spec.num_categories > 0)
        r.categorical_features.push_back(static_cast<int>(unif(gen) * spec.num_categories) %
                                         spec.num_categories);
      // Group membership leans with the latent draw.
      double lean = 1.0 / (1.0 + std::exp(-xi));
      r.group = unif(gen) < lean ? 0 : static_cast<int>(unif(gen) * spec.num_groups) % spec.num_groups;
      double signal = 0.0;
      for (int c = 0; c < spec.d; ++c) signal += (c % 2 == 0 ? 1.0 : -0.5) * r.numeric_features[c];
      double noise = spec.label_noise * normal(gen);
      if (spec.task == Task::kBinary) {
        double p = 1.0 / (1.0 + std::exp(-(1.5 * signal - 0.5 * xi + noise)));
        r.label = unif(gen) < p ? 1.0 : 0.0;
      } else {
        r.label = 20.0 * std::exp(0.3 * signal + 0.2 * xi + 0.3 * noise);
      }
      double cost_u = 0.5 * unif(gen) + 0.5 / (1.0 + std::exp(-r.numeric_features[0]));
      r.cost = 1.0 + std::floor(cost_u * spec.max_cost);
      r.cost = std::min<double>(r.cost, spec.max_cost);
      pool.individuals.push_back(std::move(r));
    }
    cohort.pools.push_back(std::move(pool));
  }
  standardize(cohort);
  return cohort;
}

}  // namespace wcshift
