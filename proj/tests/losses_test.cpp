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

#include <gtest/gtest.h>

#include <unistd.h>

#include <numeric>

#include "fixtures.hpp"

namespace wcshift {
namespace {

using testing::Person;
using testing::table_pool;

DrawnProblem whole_pool(Task task, const std::vector<Person>& people, int groups = 1) {
  auto pool = table_pool(task, people, groups);
  std::vector<int> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  return make_problem(pool, idx);
}

TEST(SolveTopk, PicksLargestWithLowIndexTies) {
  std::vector<double> s{0.5, 0.9, 0.5, 0.1};
  EXPECT_EQ(solve_topk(s, 2), (std::vector<int>{0, 1}));
  EXPECT_EQ(solve_topk(s, 0), std::vector<int>{});
  EXPECT_THROW(solve_topk(s, 5), ArgumentError);
}

TEST(SolveKnapsack, SmallExample) {
  std::vector<double> v{3.0, 4.0, 5.0};
  std::vector<std::int64_t> c{2, 3, 4};
  // budget 5: {0,1} gives 7, {0} 3, {2} 5
  EXPECT_EQ(solve_knapsack(v, c, 5), (std::vector<int>{0, 1}));
  EXPECT_EQ(solve_knapsack(v, c, 1), std::vector<int>{});
}

TEST(SolveKnapsack, PrefersLowIndicesAmongTies) {
  std::vector<double> v{1.0, 1.0, 1.0};
  std::vector<std::int64_t> c{1, 1, 1};
  EXPECT_EQ(solve_knapsack(v, c, 2), (std::vector<int>{0, 1}));
}

TEST(SolveKnapsack, RejectsBadInput) {
  std::vector<double> v{1.0};
  std::vector<std::int64_t> c{-1};
  EXPECT_THROW(solve_knapsack(v, c, 3), ArgumentError);
  std::vector<std::int64_t> ok{1};
  EXPECT_THROW(solve_knapsack(v, ok, -1), ArgumentError);
}

TEST(Waterfill, RaisesThePoorest) {
  std::vector<double> inc{1.0, 3.0};
  auto z = allocate_waterfill(inc, 2.0);
  EXPECT_DOUBLE_EQ(z[0], 2.0);
  EXPECT_DOUBLE_EQ(z[1], 0.0);
  auto z2 = allocate_waterfill(inc, 4.0);
  EXPECT_DOUBLE_EQ(z2[0], 3.0);
  EXPECT_DOUBLE_EQ(z2[1], 1.0);
}

TEST(Gini, KnownValues) {
  std::vector<double> a{0.0, 0.0, 1.0}, b{0.5, 0.5}, z{0.0, 0.0};
  EXPECT_NEAR(gini(a), 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(gini(b), 0.0);
  EXPECT_DOUBLE_EQ(gini(z), 0.0);
}

TEST(DecisionLoss, TopkRegret) {
  auto p = whole_pool(Task::kBinary, {{0, 0.9}, {1, 0.1}, {1, 0.8}});
  EXPECT_DOUBLE_EQ(decision_loss(TopK{2}, p), 0.5);
  EXPECT_DOUBLE_EQ(shifted_loss(TopK{2}, p), -0.5);
}

TEST(DecisionLoss, TopkRegressionNormalizesByOptimum) {
  auto p = whole_pool(Task::kRegression, {{4, 1}, {1, 2}});
  // predicted picks label 1, ideal picks 4
  EXPECT_DOUBLE_EQ(decision_loss(TopK{1}, p), 0.75);
}

TEST(DecisionLoss, KnapsackUsesHalfTheCostByDefault) {
  auto p = whole_pool(Task::kBinary, {{0, 0.9, 2}, {1, 0.2, 1}, {1, 0.1, 1}});
  // budget 2: predicted {0} (utility 0), ideal {1,2} (utility 2)
  EXPECT_DOUBLE_EQ(decision_loss(Knapsack{}, p), 1.0);
  EXPECT_DOUBLE_EQ(decision_loss(Knapsack{.budget = 4.0}, p), 0.0);
}

TEST(DecisionLoss, FairnessGiniOverGroupTprs) {
  auto p = whole_pool(Task::kBinary, {{1, 0.9, 1, 0}, {1, 0.1, 1, 0}, {1, 0.5, 1, 1}}, 2);
  // TPRs (1/2, 0)
  EXPECT_DOUBLE_EQ(decision_loss(FairnessGini{1}, p), 0.5);
  auto single = whole_pool(Task::kBinary, {{1, 0.9, 1, 0}, {0, 0.5, 1, 1}}, 2);
  EXPECT_DOUBLE_EQ(decision_loss(FairnessGini{1}, single), 0.0);
}

TEST(DecisionLoss, NashWelfareRelativeRegret) {
  auto p = whole_pool(Task::kRegression, {{1, 3}, {3, 1}});
  EXPECT_NEAR(decision_loss(NashWelfare{2.0, 1.0}, p), 0.26751323964103657, 1e-14);
}

TEST(DecisionLoss, DecisionBlindVariants) {
  auto p = whole_pool(Task::kBinary, {{1, 0.8}, {0, 0.4}});
  EXPECT_NEAR(decision_loss(CrossEntropy{}, p), -2.7249100751151585, 1e-13);
  auto q = whole_pool(Task::kBinary, {{0, 0.6}, {0, 0.4}});
  EXPECT_DOUBLE_EQ(decision_loss(MisclassRate{}, q), 0.5);
  auto r = whole_pool(Task::kRegression, {{0, 0}, {0, 4}});
  EXPECT_NEAR(decision_loss(Mse{10.0}, r), 0.3, 1e-15);
  auto big = whole_pool(Task::kRegression, {{0, 0}, {0, 1e6}});
  EXPECT_DOUBLE_EQ(decision_loss(Mse{10.0}, big), 1.0);
}

TEST(DecisionLoss, ShiftedLossIsNonPositive) {
  std::mt19937_64 gen(1);
  for (Task task : {Task::kBinary, Task::kRegression})
    for (int trial = 0; trial < 30; ++trial) {
      auto pool = testing::random_pool(gen, task, 5);
      std::vector<int> idx{0, 1, 2, 3, 4};
      auto p = make_problem(pool, idx);
      for (const auto& spec : testing::variants_for(task)) EXPECT_LE(shifted_loss(spec, p), 0.0);
    }
}

TEST(DecisionLoss, InvariantToDrawOrder) {
  auto pool = table_pool(Task::kBinary, {{1, 0.3}, {0, 0.7}, {1, 0.5}});
  auto a = make_problem(pool, {2, 0, 1, 0});
  auto b = make_problem(pool, {0, 0, 1, 2});
  for (const auto& spec : testing::variants_for(Task::kBinary))
    EXPECT_DOUBLE_EQ(decision_loss(spec, a), decision_loss(spec, b));
}

TEST(LossSpecJson, RoundTripsEveryVariant) {
  auto all = testing::variants_for(Task::kBinary);
  for (auto& s : testing::variants_for(Task::kRegression)) all.push_back(s);
  all.push_back(LossSpec(Knapsack{.budget = 3.0, .use_costs = false}, "unit-knapsack"));
  for (const auto& s : all) EXPECT_EQ(loss_from_json(to_json(s)), s);
  EXPECT_THROW(loss_from_json(nlohmann::json::parse(R"({"type":"nope"})")), ConfigError);
  EXPECT_THROW(loss_from_json(nlohmann::json::parse(R"({"type":"topk","k":0})")), ConfigError);
}

TEST(LossSpec, Applicability) {
  EXPECT_TRUE(applicable(TopK{1}, Task::kRegression));
  EXPECT_FALSE(applicable(CrossEntropy{}, Task::kRegression));
  EXPECT_FALSE(applicable(Mse{}, Task::kBinary));
  EXPECT_EQ(LossSpec(NashWelfare{}).metric_name(), "utility");
}

}  // namespace
}  // namespace wcshift
