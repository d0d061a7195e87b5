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

// Black-box score providers. Downstream code only ever sees the per-individual
// score cache built by precompute_scores().

#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wcshift/data_model.hpp"
#include "wcshift/error.hpp"

namespace wcshift {

enum class PredictorKind { kLogistic, kMlp, kTable };

inline std::string to_string(PredictorKind k) {
  switch (k) {
    case PredictorKind::kLogistic: return "logistic";
    case PredictorKind::kMlp: return "mlp";
    case PredictorKind::kTable: return "table";
  }
  return "?";
}

inline PredictorKind predictor_kind_from_string(const std::string& s) {
  if (s == "logistic") return PredictorKind::kLogistic;
  if (s == "mlp") return PredictorKind::kMlp;
  if (s == "table") return PredictorKind::kTable;
  throw ConfigError("unknown predictor kind '" + s + "' (expected logistic, mlp or table)");
}

// Row-major rows x cols weight matrix plus bias of length rows.
struct DenseLayer {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  bool operator==(const DenseLayer&) const = default;
};

struct Embedding {
  std::size_t vocab = 0;
  std::size_t width = 0;
  std::vector<double> values;  // vocab x width, row-major
  bool operator==(const Embedding&) const = default;
};

struct Predictor {
  PredictorKind kind = PredictorKind::kLogistic;
  Task task = Task::kBinary;
  std::size_t numeric_dim = 0;
  std::vector<Embedding> embeddings;
  std::vector<DenseLayer> layers;  // hidden layers use ReLU; last layer is scalar
  std::map<std::string, double> table;

  std::size_t input_dim() const {
    std::size_t n = numeric_dim;
    for (const auto& e : embeddings) n += e.width;
    return n;
  }
  bool operator==(const Predictor&) const = default;
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

namespace detail {

inline std::vector<double> model_input(const Predictor& p, const IndividualRecord& x) {
  if (x.numeric_features.size() != p.numeric_dim)
    throw ArgumentError("predictor expects " + std::to_string(p.numeric_dim) +
                        " numeric features, record '" + x.id + "' has " +
                        std::to_string(x.numeric_features.size()));
  if (x.categorical_features.size() != p.embeddings.size())
    throw ArgumentError("predictor expects " + std::to_string(p.embeddings.size()) +
                        " categorical features, record '" + x.id + "' has " +
                        std::to_string(x.categorical_features.size()));
  std::vector<double> in(x.numeric_features);
  in.reserve(p.input_dim());
  for (std::size_t c = 0; c < p.embeddings.size(); ++c) {
    const auto& e = p.embeddings[c];
    int code = x.categorical_features[c];
    if (code < 0 || static_cast<std::size_t>(code) >= e.vocab)
      throw LookupError("unknown categorical code " + std::to_string(code) + " in feature " +
                        std::to_string(c) + " of record '" + x.id + "'");
    for (std::size_t w = 0; w < e.width; ++w) in.push_back(e.values[code * e.width + w]);
  }
  return in;
}

// Forward pass keeping every layer's activations (activations[0] = input).
inline double forward(const Predictor& p, const std::vector<double>& input,
                      std::vector<std::vector<double>>* activations = nullptr) {
  std::vector<double> a = input;
  if (activations) activations->assign(1, a);
  double out = 0.0;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& L = p.layers[l];
    std::vector<double> z(L.rows);
    for (std::size_t r = 0; r < L.rows; ++r) {
      double s = L.bias[r];
      for (std::size_t c = 0; c < L.cols; ++c) s += L.weights[r * L.cols + c] * a[c];
      z[r] = s;
    }
    if (l + 1 == p.layers.size()) {
      out = z[0];
    } else {
      for (auto& v : z) v = std::max(0.0, v);
      a = std::move(z);
      if (activations) activations->push_back(a);
    }
  }
  return out;
}

}  // namespace detail

inline double predict(const Predictor& p, const IndividualRecord& x) {
  if (p.kind == PredictorKind::kTable) {
    auto it = p.table.find(x.id);
    if (it == p.table.end()) throw LookupError("table predictor has no score for id '" + x.id + "'");
    return it->second;
  }
  double z = detail::forward(p, detail::model_input(p, x));
  return p.task == Task::kBinary ? sigmoid(z) : z;
}

// One score per individual, computed exactly once.
using ScoreCache = std::vector<std::vector<double>>;

inline ScoreCache precompute_scores(const Cohort& cohort, const Predictor& p) {
  ScoreCache cache;
  cache.reserve(cohort.pools.size());
  for (const auto& pool : cohort.pools) {
    std::vector<double> s;
    s.reserve(pool.size());
    for (const auto& r : pool.individuals) s.push_back(predict(p, r));
    cache.push_back(std::move(s));
  }
  return cache;
}

struct TrainConfig {
  int epochs = 500;
  double learning_rate = 0.1;
  std::vector<std::size_t> hidden = {16, 16};
  std::size_t embedding_width = 4;
  double init_scale = 1.0;
  std::optional<std::size_t> numeric_dim;  // checked against the cohort when set
  std::optional<std::string> loss;         // "ce" or "mse"; checked against the task
};

struct TrainResult {
  Predictor predictor;
  std::vector<double> loss_history;  // full-batch loss after each epoch
};

namespace detail {

struct Example {
  std::vector<double> numeric;
  std::vector<int> codes;
  double label;
};

inline double example_loss(Task task, double z, double y) {
  if (task == Task::kBinary) {
    // Stable binary cross-entropy on the logit.
    return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  return (z - y) * (z - y);
}

inline double dataset_loss(const Predictor& p, const std::vector<Example>& data) {
  double total = 0.0;
  for (const auto& ex : data) {
    IndividualRecord r;
    r.numeric_features = ex.numeric;
    r.categorical_features = ex.codes;
    total += example_loss(p.task, forward(p, model_input(p, r)), ex.label);
  }
  return total / static_cast<double>(data.size());
}

// Gradient of the mean loss, laid out like the predictor's parameters.
inline Predictor dataset_gradient(const Predictor& p, const std::vector<Example>& data) {
  Predictor g = p;
  for (auto& L : g.layers) {
    std::fill(L.weights.begin(), L.weights.end(), 0.0);
    std::fill(L.bias.begin(), L.bias.end(), 0.0);
  }
  for (auto& e : g.embeddings) std::fill(e.values.begin(), e.values.end(), 0.0);
  double inv_n = 1.0 / static_cast<double>(data.size());
  std::vector<std::vector<double>> acts;
  for (const auto& ex : data) {
    IndividualRecord r;
    r.numeric_features = ex.numeric;
    r.categorical_features = ex.codes;
    double z = forward(p, model_input(p, r), &acts);
    double dz = p.task == Task::kBinary ? sigmoid(z) - ex.label : 2.0 * (z - ex.label);
    std::vector<double> delta{dz * inv_n};
    for (std::size_t l = p.layers.size(); l-- > 0;) {
      const auto& L = p.layers[l];
      auto& G = g.layers[l];
      const auto& a = acts[l];
      std::vector<double> back(L.cols, 0.0);
      for (std::size_t r2 = 0; r2 < L.rows; ++r2) {
        G.bias[r2] += delta[r2];
        for (std::size_t c = 0; c < L.cols; ++c) {
          G.weights[r2 * L.cols + c] += delta[r2] * a[c];
          back[c] += L.weights[r2 * L.cols + c] * delta[r2];
        }
      }
      if (l > 0) {
        for (std::size_t c = 0; c < L.cols; ++c)
          if (a[c] <= 0.0) back[c] = 0.0;  // ReLU
      }
      delta = std::move(back);
    }
    std::size_t off = p.numeric_dim;
    for (std::size_t c = 0; c < p.embeddings.size(); ++c) {
      auto& E = g.embeddings[c];
      for (std::size_t w = 0; w < E.width; ++w)
        E.values[ex.codes[c] * E.width + w] += delta[off + w];
      off += E.width;
    }
  }
  return g;
}

inline Predictor axpy(const Predictor& p, double step, const Predictor& g) {
  Predictor out = p;
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    for (std::size_t i = 0; i < out.layers[l].weights.size(); ++i)
      out.layers[l].weights[i] -= step * g.layers[l].weights[i];
    for (std::size_t i = 0; i < out.layers[l].bias.size(); ++i)
      out.layers[l].bias[i] -= step * g.layers[l].bias[i];
  }
  for (std::size_t c = 0; c < out.embeddings.size(); ++c)
    for (std::size_t i = 0; i < out.embeddings[c].values.size(); ++i)
      out.embeddings[c].values[i] -= step * g.embeddings[c].values[i];
  return out;
}

}  // namespace detail

// Full-batch gradient descent. A step that would raise the training loss is
// halved until it does not, so the recorded history never increases.
inline TrainResult train(const Cohort& cohort, PredictorKind kind, const TrainConfig& cfg,
                         std::uint64_t seed) {
  if (kind == PredictorKind::kTable)
    throw ArgumentError("table predictors are loaded, not trained");
  if (cfg.numeric_dim && *cfg.numeric_dim != cohort.schema.numeric_dim())
    throw ArgumentError("train config expects " + std::to_string(*cfg.numeric_dim) +
                        " numeric features, cohort has " + std::to_string(cohort.schema.numeric_dim()));
  if (cfg.loss) {
    bool ok = (*cfg.loss == "ce" && cohort.task == Task::kBinary) ||
              (*cfg.loss == "mse" && cohort.task == Task::kRegression);
    if (!ok) throw ArgumentError("loss '" + *cfg.loss + "' does not match a " + to_string(cohort.task) + " cohort");
  }
  if (cfg.epochs < 0 || !(cfg.learning_rate > 0.0)) throw ArgumentError("train config: epochs >= 0 and learning_rate > 0 required");

  std::vector<detail::Example> data;
  double label_sum = 0.0;
  for (const auto& pool : cohort.pools)
    for (const auto& r : pool.individuals) {
      data.push_back({r.numeric_features, r.categorical_features, r.label});
      label_sum += r.label;
    }
  if (data.empty()) throw EmptyCohortError("cannot train on an empty cohort");
  double label_mean = label_sum / static_cast<double>(data.size());

  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Predictor p;
  p.kind = kind;
  p.task = cohort.task;
  p.numeric_dim = cohort.schema.numeric_dim();
  std::size_t emb_width = kind == PredictorKind::kLogistic ? 1 : cfg.embedding_width;
  for (std::size_t c = 0; c < cohort.schema.categorical_names.size(); ++c) {
    Embedding e;
    e.vocab = cohort.schema.categorical_vocab[c].size();
    e.width = emb_width;
    e.values.resize(e.vocab * e.width);
    for (auto& v : e.values) v = kind == PredictorKind::kLogistic ? 0.0 : 0.1 * normal(gen);
    p.embeddings.push_back(std::move(e));
  }
  std::vector<std::size_t> widths;
  if (kind == PredictorKind::kMlp) widths = cfg.hidden;
  widths.push_back(1);
  std::size_t in = p.input_dim();
  for (std::size_t w : widths) {
    if (w == 0) throw ArgumentError("train config: hidden widths must be positive");
    DenseLayer L;
    L.rows = w;
    L.cols = in;
    L.weights.assign(w * in, 0.0);
    L.bias.assign(w, 0.0);
    if (kind == PredictorKind::kMlp) {
      double scale = cfg.init_scale * std::sqrt(2.0 / static_cast<double>(std::max<std::size_t>(in, 1)));
      for (auto& v : L.weights) v = scale * normal(gen);
    }
    p.layers.push_back(std::move(L));
    in = w;
  }
  // Start the output at the base rate so constant targets are immediate.
  if (p.task == Task::kBinary) {
    double rate = std::clamp(label_mean, 1e-6, 1.0 - 1e-6);
    p.layers.back().bias[0] = std::log(rate / (1.0 - rate));
  } else {
    p.layers.back().bias[0] = label_mean;
  }

  TrainResult result;
  double loss = detail::dataset_loss(p, data);
  double step = cfg.learning_rate;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Predictor grad = detail::dataset_gradient(p, data);
    double trial_step = step;
    for (int attempt = 0; attempt < 40; ++attempt) {
      Predictor cand = detail::axpy(p, trial_step, grad);
      double cand_loss = detail::dataset_loss(cand, data);
      if (cand_loss <= loss) {
        p = std::move(cand);
        loss = cand_loss;
        break;
      }
      trial_step *= 0.5;
    }
    result.loss_history.push_back(loss);
  }
  result.predictor = std::move(p);
  return result;
}

inline nlohmann::json to_json(const Predictor& p) {
  nlohmann::json j;
  j["kind"] = to_string(p.kind);
  j["task"] = to_string(p.task);
  if (p.kind == PredictorKind::kTable) {
    j["table"] = p.table;
    return j;
  }
  j["numeric_dim"] = p.numeric_dim;
  j["embeddings"] = nlohmann::json::array();
  for (const auto& e : p.embeddings)
    j["embeddings"].push_back({{"shape", {e.vocab, e.width}}, {"values", e.values}});
  j["layers"] = nlohmann::json::array();
  for (const auto& L : p.layers)
    j["layers"].push_back({{"shape", {L.rows, L.cols}}, {"weights", L.weights}, {"bias", L.bias}});
  return j;
}

inline Predictor predictor_from_json(const nlohmann::json& j) {
  Predictor p;
  try {
    p.kind = predictor_kind_from_string(j.at("kind").get<std::string>());
    p.task = task_from_string(j.at("task").get<std::string>());
    if (p.kind == PredictorKind::kTable) {
      p.table = j.at("table").get<std::map<std::string, double>>();
      return p;
    }
    p.numeric_dim = j.at("numeric_dim").get<std::size_t>();
    for (const auto& ej : j.at("embeddings")) {
      Embedding e;
      auto shape = ej.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) throw ParseError("predictor json: embedding shape must have 2 entries");
      e.vocab = shape[0];
      e.width = shape[1];
      e.values = ej.at("values").get<std::vector<double>>();
      if (e.values.size() != e.vocab * e.width) throw ParseError("predictor json: embedding size mismatch");
      p.embeddings.push_back(std::move(e));
    }
    std::size_t in = p.input_dim();
    for (const auto& lj : j.at("layers")) {
      DenseLayer L;
      auto shape = lj.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) throw ParseError("predictor json: layer shape must have 2 entries");
      L.rows = shape[0];
      L.cols = shape[1];
      L.weights = lj.at("weights").get<std::vector<double>>();
      L.bias = lj.at("bias").get<std::vector<double>>();
      if (L.cols != in || L.weights.size() != L.rows * L.cols || L.bias.size() != L.rows)
        throw ParseError("predictor json: layer shape mismatch");
      in = L.rows;
      p.layers.push_back(std::move(L));
    }
    if (p.layers.empty() || p.layers.back().rows != 1)
      throw ParseError("predictor json: last layer must have one output");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("predictor json: ") + e.what());
  }
  return p;
}

inline void save_predictor(const Predictor& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FileError("cannot write predictor file '" + path + "'");
  out << to_json(p).dump(1) << '\n';
}

// Reads either predictor JSON or a two-column (id, score) table with header.
inline Predictor load_predictor(const std::string& path, Task task = Task::kBinary) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open predictor file '" + path + "'");
  bool is_json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
  if (is_json) {
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("predictor file '" + path + "': " + e.what());
    }
    return predictor_from_json(j);
  }
  Predictor p;
  p.kind = PredictorKind::kTable;
  p.task = task;
  std::string line;
  if (!std::getline(in, line)) throw EmptyCohortError("prediction table '" + path + "' is empty");
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    ++row;
    auto f = detail::split_fields(line, ',');
    if (f.size() != 2) throw ParseError("prediction table '" + path + "', row " + std::to_string(row) + ": expected 2 fields");
    auto v = detail::parse_double(f[1]);
    if (!v) throw ParseError("prediction table '" + path + "', row " + std::to_string(row) + ": non-numeric score '" + f[1] + "'");
    if (task == Task::kBinary && (*v < 0.0 || *v > 1.0))
      throw ParseError("prediction table '" + path + "', row " + std::to_string(row) + ": binary score outside [0,1]");
    p.table[f[0]] = *v;
  }
  return p;
}

}  // namespace wcshift
