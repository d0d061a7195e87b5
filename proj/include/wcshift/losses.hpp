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

// Decision losses over a drawn allocation problem, and the exact downstream
// solvers they are defined through. Every loss is scaled so that DL <= 1,
// which makes the shifted loss DL' = DL - 1 non-positive.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "wcshift/data_model.hpp"
#include "wcshift/error.hpp"

namespace wcshift {

inline constexpr double kLossEps = 1e-12;

// ---------------------------------------------------------------------------
// Exact solvers
// ---------------------------------------------------------------------------

// Indices of the k largest scores, ascending. Ties go to the smaller index.
inline std::vector<int> solve_topk(std::span<const double> scores, std::size_t k) {
  if (k > scores.size())
    throw ArgumentError("solve_topk: k = " + std::to_string(k) + " exceeds n = " + std::to_string(scores.size()));
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

// True when sorted index list `a` precedes `b`: compared element by element,
// with a missing element ranking after every index. Under this order the
// optimal set that takes each smaller index whenever possible comes first.
inline bool selection_precedes(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i)
    if (a[i] != b[i]) return a[i] < b[i];
  return a.size() > b.size();
}

inline double knapsack_tolerance(double best) { return 1e-9 * std::max(1.0, std::abs(best)); }

// 0/1 knapsack by dynamic programming over integer capacity. Returns the
// optimal index set (ascending) that precedes all other optima under
// selection_precedes().
inline std::vector<int> solve_knapsack(std::span<const double> values, std::span<const std::int64_t> costs,
                                       std::int64_t budget) {
  if (values.size() != costs.size()) throw ArgumentError("solve_knapsack: values and costs differ in length");
  if (budget < 0) throw ArgumentError("solve_knapsack: negative budget");
  for (std::size_t i = 0; i < costs.size(); ++i)
    if (costs[i] < 0) throw ArgumentError("solve_knapsack: negative cost at item " + std::to_string(i));
  const std::size_t n = values.size();
  const std::size_t cap = static_cast<std::size_t>(budget);
  // best[i][w]: optimum over items i..n-1 with capacity w.
  std::vector<double> best((n + 1) * (cap + 1), 0.0);
  auto at = [&](std::size_t i, std::size_t w) -> double& { return best[i * (cap + 1) + w]; };
  for (std::size_t i = n; i-- > 0;) {
    const auto c = static_cast<std::size_t>(costs[i]);
    for (std::size_t w = 0; w <= cap; ++w) {
      double skip = at(i + 1, w);
      at(i, w) = (c <= w) ? std::max(skip, values[i] + at(i + 1, w - c)) : skip;
    }
  }
  std::vector<int> chosen;
  std::size_t w = cap;
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(costs[i]);
    if (c <= w && values[i] + at(i + 1, w - c) >= at(i, w) - knapsack_tolerance(at(i, w))) {
      chosen.push_back(static_cast<int>(i));
      w -= c;
    }
  }
  return chosen;
}

// Maximizes sum_i log(income_i + z_i) subject to sum z = budget, z >= 0.
// The optimum raises the poorest incomes to a common level.
inline std::vector<double> allocate_waterfill(std::span<const double> incomes, double budget) {
  if (budget < 0.0) throw ArgumentError("allocate_waterfill: negative budget");
  for (std::size_t i = 0; i < incomes.size(); ++i)
    if (!(incomes[i] > 0.0)) throw ArgumentError("allocate_waterfill: non-positive income at index " + std::to_string(i));
  const std::size_t n = incomes.size();
  std::vector<double> z(n, 0.0);
  if (n == 0 || budget == 0.0) return z;
  std::vector<double> sorted(incomes.begin(), incomes.end());
  std::sort(sorted.begin(), sorted.end());
  double prefix = 0.0, level = 0.0;
  for (std::size_t r = 1; r <= n; ++r) {
    prefix += sorted[r - 1];
    level = (budget + prefix) / static_cast<double>(r);
    if (r == n || level <= sorted[r]) break;
  }
  for (std::size_t i = 0; i < n; ++i) z[i] = std::max(0.0, level - incomes[i]);
  return z;
}

// Gini coefficient sum_a sum_b |v_a - v_b| / (2 g^2 mean); 0 for a zero mean.
inline double gini(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("gini: empty input");
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] < 0.0) throw ArgumentError("gini: negative value at index " + std::to_string(i));
  const double g = static_cast<double>(v.size());
  double mean = std::accumulate(v.begin(), v.end(), 0.0) / g;
  if (mean <= 0.0) return 0.0;
  double diff = 0.0;
  for (double a : v)
    for (double b : v) diff += std::abs(a - b);
  return diff / (2.0 * g * g * mean);
}

// ---------------------------------------------------------------------------
// Loss specifications
// ---------------------------------------------------------------------------

struct TopK {
  int k = 1;
  bool operator==(const TopK&) const = default;
};
// Budget absent: half of the drawn problem's total (integer) cost.
struct Knapsack {
  std::optional<double> budget;
  bool use_costs = true;
  bool operator==(const Knapsack&) const = default;
};
struct FairnessGini {
  int k = 1;
  bool operator==(const FairnessGini&) const = default;
};
// Income is divided by c inside the log; c <= min income keeps welfare >= 0.
struct NashWelfare {
  double budget = 1.0;
  double c = 1.0;
  bool operator==(const NashWelfare&) const = default;
};
struct MisclassRate {
  double threshold = 0.5;
  bool operator==(const MisclassRate&) const = default;
};
struct CrossEntropy {
  double eps = kLossEps;
  bool operator==(const CrossEntropy&) const = default;
};
struct Mse {
  double scale = 10.0;
  bool operator==(const Mse&) const = default;
};

using LossVariant = std::variant<TopK, Knapsack, FairnessGini, NashWelfare, MisclassRate, CrossEntropy, Mse>;

struct LossSpec {
  LossVariant variant;
  std::string label;  // display name; defaults to metric_name()

  LossSpec() = default;
  template <typename V>
    requires(!std::is_same_v<std::decay_t<V>, LossSpec> && std::is_constructible_v<LossVariant, V>)
  LossSpec(V v, std::string name = {}) : variant(std::move(v)), label(std::move(name)) {}

  std::string metric_name() const {
    if (!label.empty()) return label;
    return std::visit(
        [](const auto& v) -> std::string {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, TopK>) return "topk";
          if constexpr (std::is_same_v<T, Knapsack>) return "knapsack";
          if constexpr (std::is_same_v<T, FairnessGini>) return "fairness";
          if constexpr (std::is_same_v<T, NashWelfare>) return "utility";
          if constexpr (std::is_same_v<T, MisclassRate>) return "acc";
          if constexpr (std::is_same_v<T, CrossEntropy>) return "ce";
          if constexpr (std::is_same_v<T, Mse>) return "mse";
        },
        variant);
  }
  bool is_cross_entropy() const { return std::holds_alternative<CrossEntropy>(variant); }
  bool operator==(const LossSpec&) const = default;
};

inline void validate(const LossSpec& spec) {
  std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, TopK> || std::is_same_v<T, FairnessGini>) {
          if (v.k < 1) throw ConfigError("loss: k must be >= 1");
        } else if constexpr (std::is_same_v<T, Knapsack>) {
          if (v.budget && !(*v.budget > 0.0)) throw ConfigError("loss: knapsack budget must be > 0");
        } else if constexpr (std::is_same_v<T, NashWelfare>) {
          if (!(v.budget > 0.0)) throw ConfigError("loss: nash budget must be > 0");
          if (!(v.c > 0.0)) throw ConfigError("loss: nash constant c must be > 0");
        } else if constexpr (std::is_same_v<T, MisclassRate>) {
          if (!(v.threshold > 0.0 && v.threshold < 1.0)) throw ConfigError("loss: threshold must lie in (0,1)");
        } else if constexpr (std::is_same_v<T, CrossEntropy>) {
          if (!(v.eps > 0.0)) throw ConfigError("loss: eps must be > 0");
        } else if constexpr (std::is_same_v<T, Mse>) {
          if (!(v.scale > 0.0)) throw ConfigError("loss: mse scale must be > 0");
        }
      },
      spec.variant);
}

// Which metrics make sense for a task: CE and accuracy need binary labels,
// MSE and utility need real-valued incomes, fairness needs positives.
inline bool applicable(const LossSpec& spec, Task task) {
  return std::visit(
      [task](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, FairnessGini> || std::is_same_v<T, MisclassRate> ||
                      std::is_same_v<T, CrossEntropy>)
          return task == Task::kBinary;
        else if constexpr (std::is_same_v<T, NashWelfare> || std::is_same_v<T, Mse>)
          return task == Task::kRegression;
        else
          return true;
      },
      spec.variant);
}

inline nlohmann::json to_json(const LossSpec& spec) {
  nlohmann::json j = std::visit(
      [](const auto& v) -> nlohmann::json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, TopK>) return {{"type", "topk"}, {"k", v.k}};
        if constexpr (std::is_same_v<T, Knapsack>) {
          nlohmann::json o{{"type", "knapsack"}, {"use_costs", v.use_costs}};
          if (v.budget) o["budget"] = *v.budget;
          return o;
        }
        if constexpr (std::is_same_v<T, FairnessGini>) return {{"type", "fairness_gini"}, {"k", v.k}};
        if constexpr (std::is_same_v<T, NashWelfare>) return {{"type", "nash_welfare"}, {"budget", v.budget}, {"c", v.c}};
        if constexpr (std::is_same_v<T, MisclassRate>) return {{"type", "misclass"}, {"threshold", v.threshold}};
        if constexpr (std::is_same_v<T, CrossEntropy>) return {{"type", "cross_entropy"}, {"eps", v.eps}};
        if constexpr (std::is_same_v<T, Mse>) return {{"type", "mse"}, {"scale", v.scale}};
      },
      spec.variant);
  if (!spec.label.empty()) j["label"] = spec.label;
  return j;
}

inline LossSpec loss_from_json(const nlohmann::json& j) {
  LossSpec spec;
  try {
    const auto type = j.at("type").get<std::string>();
    if (type == "topk") {
      spec.variant = TopK{j.at("k").get<int>()};
    } else if (type == "knapsack") {
      Knapsack v;
      if (j.contains("budget") && !j.at("budget").is_null()) v.budget = j.at("budget").get<double>();
      v.use_costs = j.value("use_costs", true);
      spec.variant = v;
    } else if (type == "fairness_gini") {
      spec.variant = FairnessGini{j.at("k").get<int>()};
    } else if (type == "nash_welfare") {
      spec.variant = NashWelfare{j.at("budget").get<double>(), j.at("c").get<double>()};
    } else if (type == "misclass") {
      spec.variant = MisclassRate{j.value("threshold", 0.5)};
    } else if (type == "cross_entropy") {
      spec.variant = CrossEntropy{j.value("eps", kLossEps)};
    } else if (type == "mse") {
      spec.variant = Mse{j.at("scale").get<double>()};
    } else {
      throw ConfigError("loss: unknown type '" + type + "'");
    }
    if (j.contains("label")) spec.label = j.at("label").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("loss: ") + e.what());
  }
  validate(spec);
  return spec;
}

// ---------------------------------------------------------------------------
// Drawn problems
// ---------------------------------------------------------------------------

// Per-pool columns needed by the losses, with predictions from the cache.
struct PreparedPool {
  std::vector<double> predictions;
  std::vector<double> labels;
  std::vector<double> costs;
  std::vector<int> groups;
  std::size_t num_groups = 1;
  Task task = Task::kBinary;

  std::size_t size() const { return labels.size(); }
};

inline PreparedPool prepare_pool(const InstancePool& pool, std::span<const double> scores, Task task,
                                 std::size_t num_groups) {
  if (scores.size() != pool.size()) throw ArgumentError("prepare_pool: score count differs from pool size");
  PreparedPool p;
  p.predictions.assign(scores.begin(), scores.end());
  for (const auto& r : pool.individuals) {
    p.labels.push_back(r.label);
    p.costs.push_back(r.cost);
    p.groups.push_back(r.group);
  }
  p.num_groups = num_groups;
  p.task = task;
  return p;
}

// One sampled allocation problem: n draws with replacement from a pool.
// `indices` are pool positions; the other columns are gathered from them.
struct DrawnProblem {
  std::vector<int> indices;
  std::vector<double> predictions;
  std::vector<double> labels;
  std::vector<double> costs;
  std::vector<int> groups;
  std::size_t num_groups = 1;
  Task task = Task::kBinary;

  std::size_t size() const { return labels.size(); }
};

// Gathers the problem with its draws sorted by pool position. Sorting makes
// every loss a function of the multiset of individuals drawn.
inline DrawnProblem make_problem(const PreparedPool& pool, std::vector<int> indices) {
  std::sort(indices.begin(), indices.end());
  DrawnProblem p;
  p.num_groups = pool.num_groups;
  p.task = pool.task;
  p.predictions.reserve(indices.size());
  p.labels.reserve(indices.size());
  p.costs.reserve(indices.size());
  p.groups.reserve(indices.size());
  for (int i : indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= pool.size())
      throw ArgumentError("make_problem: index " + std::to_string(i) + " outside pool");
    p.predictions.push_back(pool.predictions[i]);
    p.labels.push_back(pool.labels[i]);
    p.costs.push_back(pool.costs[i]);
    p.groups.push_back(pool.groups[i]);
  }
  p.indices = std::move(indices);
  return p;
}

namespace detail {

inline double utility_of(const std::vector<int>& chosen, std::span<const double> labels) {
  double s = 0.0;
  for (int i : chosen) s += labels[i];
  return s;
}

inline double topk_loss(const TopK& v, const DrawnProblem& p) {
  std::size_t k = std::min<std::size_t>(v.k, p.size());
  auto predicted = solve_topk(p.predictions, k);
  auto ideal = solve_topk(p.labels, k);
  double best = utility_of(ideal, p.labels);
  double regret = best - utility_of(predicted, p.labels);
  double norm = p.task == Task::kBinary ? static_cast<double>(v.k) : std::max(best, 1.0);
  return std::clamp(regret / norm, 0.0, 1.0);
}

inline double knapsack_loss(const Knapsack& v, const DrawnProblem& p) {
  std::vector<std::int64_t> costs(p.size(), 1);
  if (v.use_costs)
    for (std::size_t i = 0; i < p.size(); ++i) costs[i] = std::llround(p.costs[i]);
  std::int64_t budget = 0;
  if (v.budget) {
    budget = static_cast<std::int64_t>(std::floor(*v.budget));
  } else {
    budget = std::accumulate(costs.begin(), costs.end(), std::int64_t{0}) / 2;
  }
  auto predicted = solve_knapsack(p.predictions, costs, budget);
  auto ideal = solve_knapsack(p.labels, costs, budget);
  double best = utility_of(ideal, p.labels);
  double regret = best - utility_of(predicted, p.labels);
  return std::clamp(regret / std::max(best, 1.0), 0.0, 1.0);
}

inline double fairness_loss(const FairnessGini& v, const DrawnProblem& p) {
  if (p.num_groups == 0) throw ArgumentError("fairness loss: problem has no groups");
  auto chosen = solve_topk(p.predictions, std::min<std::size_t>(v.k, p.size()));
  std::vector<double> positives(p.num_groups, 0.0), hits(p.num_groups, 0.0);
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p.labels[i] >= 0.5) positives[p.groups[i]] += 1.0;
  for (int i : chosen)
    if (p.labels[i] >= 0.5) hits[p.groups[i]] += 1.0;
  std::vector<double> tpr;
  for (std::size_t g = 0; g < p.num_groups; ++g)
    if (positives[g] > 0.0) tpr.push_back(hits[g] / positives[g]);
  if (tpr.size() < 2) return 0.0;
  return gini(tpr);
}

inline double welfare(std::span<const double> incomes, std::span<const double> z, double c) {
  double f = 0.0;
  for (std::size_t i = 0; i < incomes.size(); ++i) f += std::log((incomes[i] + z[i]) / c);
  return f;
}

inline double nash_loss(const NashWelfare& v, const DrawnProblem& p) {
  std::vector<double> predicted_income(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) predicted_income[i] = std::max(p.predictions[i], kLossEps);
  auto z_hat = allocate_waterfill(predicted_income, v.budget);
  auto z_star = allocate_waterfill(p.labels, v.budget);
  double best = welfare(p.labels, z_star, v.c);
  if (best <= kLossEps) return 0.0;
  double achieved = welfare(p.labels, z_hat, v.c);
  return std::clamp(1.0 - achieved / best, 0.0, 1.0);
}

inline double misclass_loss(const MisclassRate& v, const DrawnProblem& p) {
  double wrong = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    bool predicted_positive = p.predictions[i] >= v.threshold;
    bool positive = p.labels[i] >= 0.5;
    if (predicted_positive != positive) wrong += 1.0;
  }
  return wrong / static_cast<double>(p.size());
}

inline double mean_cross_entropy(const DrawnProblem& p, double eps) {
  double ce = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double q = std::clamp(p.predictions[i], eps, 1.0 - eps);
    ce -= p.labels[i] * std::log(q) + (1.0 - p.labels[i]) * std::log(1.0 - q);
  }
  return ce / static_cast<double>(p.size());
}

inline double mean_squared_error(const DrawnProblem& p) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p.predictions[i] - p.labels[i]) * (p.predictions[i] - p.labels[i]);
  return s / static_cast<double>(p.size());
}

}  // namespace detail

// DL for one drawn problem. Regret variants lie in [0,1]; CE maps to
// -1/CE <= 0; MSE maps to min(1, log2(MSE)/C).
inline double decision_loss(const LossSpec& spec, const DrawnProblem& p) {
  if (p.size() == 0) throw ArgumentError("decision_loss: empty problem");
  return std::visit(
      [&p](const auto& v) -> double {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, TopK>) return detail::topk_loss(v, p);
        if constexpr (std::is_same_v<T, Knapsack>) return detail::knapsack_loss(v, p);
        if constexpr (std::is_same_v<T, FairnessGini>) return detail::fairness_loss(v, p);
        if constexpr (std::is_same_v<T, NashWelfare>) return detail::nash_loss(v, p);
        if constexpr (std::is_same_v<T, MisclassRate>) return detail::misclass_loss(v, p);
        if constexpr (std::is_same_v<T, CrossEntropy>)
          return -1.0 / std::max(detail::mean_cross_entropy(p, v.eps), v.eps);
        if constexpr (std::is_same_v<T, Mse>)
          return std::min(1.0, std::log2(std::max(detail::mean_squared_error(p), kLossEps)) / v.scale);
      },
      spec.variant);
}

// DL' = DL - 1 <= 0.
inline double shifted_loss(const LossSpec& spec, const DrawnProblem& p) { return decision_loss(spec, p) - 1.0; }

}  // namespace wcshift
