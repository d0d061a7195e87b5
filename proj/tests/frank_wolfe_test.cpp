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

#include "fixtures.hpp"

namespace wcshift {
namespace {

using testing::Person;

// Instance p0 holds one badly predicted individual (DL clamps at 1) and one
// perfect one; instance p1 sits at DL = 0.5. The worst case puts all mass on
// the bad individual of p0.
testing::TableCohort mse_cohort() {
  return testing::table_cohort(Task::kRegression, {{{0.0, 40.0}, {1.0, 1.0}}, {{0.0, std::sqrt(32.0)}}});
}

TEST(IndexSampler, NeverDrawsZeroMass) {
  std::vector<double> q{0.0, 0.5, 0.0, 0.5, 0.0};
  IndexSampler s(q);
  CounterRng rng{1};
  std::vector<int> hist(5, 0);
  for (int i = 0; i < 20000; ++i) ++hist[s.draw(rng)];
  EXPECT_EQ(hist[0] + hist[2] + hist[4], 0);
  EXPECT_NEAR(hist[1] / 20000.0, 0.5, 0.02);
}

TEST(CounterRng, StreamsAreIndependentOfOrder) {
  StreamId id{7, Stream::kGradient, 2, 3};
  auto a = id.rng_for(10);
  auto b = id.rng_for(10);
  auto c = id.rng_for(11);
  EXPECT_EQ(a(), b());
  EXPECT_NE(id.rng_for(10)(), c());
  double u = CounterRng{5}.uniform();
  EXPECT_GE(u, 0.0);
  EXPECT_LT(u, 1.0);
}

TEST(EstimateGradient, WorkerCountDoesNotChangeResult) {
  std::mt19937_64 gen(2);
  auto pool = testing::random_pool(gen, Task::kBinary, 6);
  auto q = uniform_distribution(6);
  StreamId id{3, Stream::kGradient, 0, 0};
  auto a = estimate_gradient(pool, Knapsack{}, q, 3000, 4, id, 1);
  auto b = estimate_gradient(pool, Knapsack{}, q, 3000, 4, id, 4);
  EXPECT_EQ(a.gradient, b.gradient);
  EXPECT_EQ(a.mean_shifted_loss, b.mean_shifted_loss);
}

TEST(EstimateGradient, ApproachesExactGradient) {
  std::mt19937_64 gen(3);
  auto pool = testing::random_pool(gen, Task::kBinary, 3);
  auto q = testing::random_interior_point(gen, 3, 0.5);
  LossSpec spec = TopK{1};
  auto e = enumerate_problems(pool, spec, 2);
  auto exact = exact_gradient(e, q);
  auto est = estimate_gradient(pool, spec, q, 200000, 2, StreamId{1, Stream::kGradient, 0, 0});
  for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(est.gradient[a], exact[a], 0.05 * std::abs(exact[a]) + 1e-3);
  EXPECT_NEAR(est.mean_shifted_loss, exact_objective(e, q), 0.01);
}

TEST(EstimateGradient, TwoPointExampleMatchesExactGradient) {
  // A is misclassified (DL' = 0), B is correct (DL' = -1).
  auto pool = testing::table_pool(Task::kBinary, {{1.0, 0.1}, {0.0, 0.1}});
  LossSpec spec = MisclassRate{};
  auto q = uniform_distribution(2);
  auto exact = exact_gradient(enumerate_problems(pool, spec, 1), q);
  EXPECT_DOUBLE_EQ(exact[0], 0.0);
  EXPECT_DOUBLE_EQ(exact[1], -1.0);
  auto est = estimate_gradient(pool, spec, q, 100000, 1, StreamId{4, Stream::kGradient, 0, 0});
  EXPECT_DOUBLE_EQ(est.gradient[0], 0.0);
  EXPECT_NEAR(est.gradient[1], -1.0, 0.02);
}

TEST(EstimateGradient, ConstantLossGivesMinusDrawSize) {
  // Every prediction is wrong, so DL' = 0; a baseline of 1 turns the weights
  // into the constant -1, whose estimate is -n per coordinate.
  auto pool = testing::table_pool(Task::kBinary, {{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.2}});
  std::mt19937_64 gen(5);
  auto q = testing::random_interior_point(gen, 3, 0.3);
  auto est = estimate_gradient(pool, MisclassRate{}, q, 200000, 2, StreamId{5, Stream::kGradient, 0, 0}, 1, 1.0);
  for (double g : est.gradient) EXPECT_NEAR(g, -2.0, 0.05);
}

TEST(EstimateGradient, BaselineShiftsEveryCoordinateAlike) {
  std::mt19937_64 gen(6);
  auto pool = testing::random_pool(gen, Task::kBinary, 4);
  auto q = testing::random_interior_point(gen, 4, 0.5);
  StreamId id{6, Stream::kGradient, 0, 0};
  auto plain = estimate_gradient(pool, TopK{2}, q, 200000, 3, id);
  auto shifted = estimate_gradient(pool, TopK{2}, q, 200000, 3, id, 1, -0.5);
  for (std::size_t a = 0; a < 4; ++a) EXPECT_NEAR(shifted.gradient[a] - plain.gradient[a], 0.5 * 3.0, 0.05);
  EXPECT_EQ(shifted.mean_shifted_loss, plain.mean_shifted_loss);
}

TEST(FwInner, IteratesStayFeasible) {
  std::mt19937_64 gen(4);
  auto pool = testing::random_pool(gen, Task::kBinary, 6);
  FwParams params{.iterations = 6, .num_samples = 500, .record_offsets = true};
  const double rho = 0.7;
  auto res = fw_inner(pool, TopK{2}, rho, params);
  ASSERT_EQ(res.diagnostics.offsets.size(), 7u);
  EXPECT_EQ(res.diagnostics.objective_trace.size(), 7u);
  EXPECT_EQ(res.diagnostics.gradient_norms.size(), 6u);
  for (const auto& w : res.diagnostics.offsets) EXPECT_TRUE(is_feasible_offset(w, rho).feasible);
  EXPECT_EQ(res.diagnostics.offsets.back(), res.w);
}

TEST(FwInner, ZeroRadiusKeepsUniform) {
  std::mt19937_64 gen(5);
  auto pool = testing::random_pool(gen, Task::kBinary, 4);
  auto res = fw_inner(pool, TopK{1}, 0.0, FwParams{.iterations = 3, .num_samples = 100});
  for (double w : res.w) EXPECT_EQ(w, 0.0);
}

TEST(FwInner, AscentRaisesLossAndLiteralSignLowersIt) {
  std::mt19937_64 gen(6);
  auto pool = testing::random_pool(gen, Task::kBinary, 5);
  LossSpec spec = Knapsack{};
  auto e = enumerate_problems(pool, spec, 5);
  double base = exact_objective(e, uniform_distribution(5));
  FwParams params{.iterations = 10, .num_samples = 4000};
  auto up = fw_inner(pool, spec, 1.0, params);
  params.literal_sign = true;
  auto down = fw_inner(pool, spec, 1.0, params);
  EXPECT_GT(exact_objective(e, induced_distribution(up.w)), base);
  EXPECT_LT(exact_objective(e, induced_distribution(down.w)), base);
}

TEST(FwOuter, ConcentratesOnWorstInstance) {
  std::vector<double> lambda{-0.9, -0.2, -0.6};
  auto w = fw_outer(lambda, 6.25);
  auto q = induced_distribution(w);
  EXPECT_NEAR(q[1], 1.0, 1e-12);
  auto w0 = fw_outer(lambda, 0.0);
  for (double x : w0) EXPECT_EQ(x, 0.0);
}

TEST(FindWorstCase, MseExampleReachesTheClamp) {
  auto t = mse_cohort();
  FwParams params{.iterations = 15, .num_samples = 2000, .num_samples2 = 2000, .draw_size = 1};
  auto rep = find_worst_case(t.cohort, t.scores, Mse{10.0}, UncertaintyBudget{2.0, 6.25}, params);
  EXPECT_GE(rep.value, 0.95);
  EXPECT_TRUE(is_feasible(rep.shift, rep.budget).feasible);
  EXPECT_EQ(rep.shift.instance_ids, (std::vector<std::string>{"p0", "p1"}));
  EXPECT_NEAR(rep.lambda[1], -0.5, 1e-12);
}

TEST(FindWorstCase, WorkersDoNotChangeReport) {
  auto c = generate_synthetic(SyntheticSpec{.k = 3, .m = 6}, 1);
  Predictor p;
  p.kind = PredictorKind::kLogistic;
  p.task = Task::kBinary;
  p.numeric_dim = 2;
  p.layers.push_back(DenseLayer{1, 2, {1.0, -0.5}, {0.0}});
  auto scores = precompute_scores(c, p);
  FwParams params{.iterations = 4, .num_samples = 1500, .num_samples2 = 600};
  UncertaintyBudget b{6.0, 2.0};
  auto a = find_worst_case(c, scores, TopK{2}, b, params);
  params.workers = 3;
  auto r = find_worst_case(c, scores, TopK{2}, b, params);
  params.workers = 2;
  auto s = find_worst_case(c, scores, TopK{2}, b, params);
  EXPECT_EQ(to_json(a).at("shift"), to_json(r).at("shift"));
  EXPECT_EQ(a.value, r.value);
  EXPECT_EQ(a.value, s.value);
}

TEST(FindWorstCase, RejectsInapplicableMetric) {
  auto t = mse_cohort();
  EXPECT_THROW(find_worst_case(t.cohort, t.scores, CrossEntropy{}, UncertaintyBudget{1, 1}, FwParams{}), ArgumentError);
  EXPECT_THROW(find_worst_case(t.cohort, t.scores, Mse{}, UncertaintyBudget{-1, 1}, FwParams{}), ConfigError);
  EXPECT_THROW(find_worst_case(t.cohort, t.scores, Mse{}, UncertaintyBudget{1, 1}, FwParams{.iterations = 0}),
               ConfigError);
}

TEST(ReportJson, RoundTrip) {
  auto t = mse_cohort();
  FwParams params{.iterations = 3, .num_samples = 100, .num_samples2 = 100, .draw_size = 1, .seed = 9};
  auto rep = find_worst_case(t.cohort, t.scores, Mse{10.0}, UncertaintyBudget{2.0, 6.25}, params);
  auto back = report_from_json(nlohmann::json::parse(to_json(rep).dump()));
  EXPECT_EQ(back.value, rep.value);
  EXPECT_EQ(back.shift, rep.shift);
  EXPECT_EQ(back.loss, rep.loss);
  EXPECT_EQ(back.budget, rep.budget);
  EXPECT_EQ(back.params.seed, 9u);
  EXPECT_EQ(back.params.draw_size, 1);
}

}  // namespace
}  // namespace wcshift
