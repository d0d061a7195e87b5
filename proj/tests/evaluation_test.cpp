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

testing::TableCohort mse_cohort() {
  return testing::table_cohort(Task::kRegression, {{{0.0, 40.0}, {1.0, 1.0}}, {{0.0, std::sqrt(32.0)}}});
}

CrossMetricMatrix two_by_two() {
  CrossMetricMatrix m;
  m.row_metrics = {"topk", "ce"};
  m.col_metrics = {"topk", "ce"};
  m.col_is_ce = {false, true};
  m.values = {{0.4, -2.0}, {0.2, -4.0}};
  m.std_errors = {{0.01, 0.1}, {0.02, 0.2}};
  return m;
}

TEST(EvaluateShift, WorstCaseShiftGivesClampedLoss) {
  auto t = mse_cohort();
  HierarchicalShift s{{"p0", "p1"}, {0.5, -0.5}, {{0.5, -0.5}, {0.0}}};
  UncertaintyBudget b{2.0, 6.25};
  auto ev = evaluate_shift(t.cohort, t.scores, Mse{10.0}, s, EvalConfig{.instances = 20, .problems = 50, .draw_size = 1}, &b);
  EXPECT_DOUBLE_EQ(ev.mean, 1.0);
  EXPECT_DOUBLE_EQ(ev.std_error, 0.0);
}

TEST(EvaluateShift, RejectsInfeasibleOrMismatchedShift) {
  auto t = mse_cohort();
  HierarchicalShift s{{"p0", "p1"}, {0.5, -0.5}, {{0.5, -0.5}, {0.0}}};
  UncertaintyBudget tight{0.1, 6.25};
  EXPECT_THROW(evaluate_shift(t.cohort, t.scores, Mse{}, s, EvalConfig{}, &tight), InfeasibleOffsetError);
  HierarchicalShift short_shift{{"p0"}, {0.0}, {{0.0, 0.0}}};
  EXPECT_THROW(evaluate_shift(t.cohort, t.scores, Mse{}, short_shift, EvalConfig{}), InfeasibleOffsetError);
}

TEST(EvaluateShift, UniformShiftMatchesExactMean) {
  auto t = mse_cohort();
  HierarchicalShift s{{"p0", "p1"}, {0.0, 0.0}, {{0.0, 0.0}, {0.0}}};
  auto ev = evaluate_shift(t.cohort, t.scores, Mse{10.0}, s,
                           EvalConfig{.instances = 400, .problems = 200, .draw_size = 1, .seed = 2});
  // p0: (1 + log2(1e-12)/10) / 2, p1: 0.5
  double exact = 0.5 * (0.5 * (1.0 + std::log2(1e-12) / 10.0)) + 0.5 * 0.5;
  EXPECT_NEAR(ev.mean, exact, 4.0 * ev.std_error + 1e-9);
  EXPECT_GT(ev.std_error, 0.0);
}

TEST(EvaluateShift, ReproducesReportValue) {
  auto c = generate_synthetic(SyntheticSpec{.k = 3, .m = 6}, 21);
  Predictor p;
  p.kind = PredictorKind::kLogistic;
  p.task = Task::kBinary;
  p.numeric_dim = 2;
  p.layers.push_back(DenseLayer{1, 2, {1.0, -0.5}, {0.0}});
  auto scores = precompute_scores(c, p);
  UncertaintyBudget b{2.0, 1.0};
  FwParams params{.iterations = 5, .num_samples = 2000, .num_samples2 = 20000, .draw_size = 4};
  auto rep = find_worst_case(c, scores, TopK{2}, b, params);
  auto ev = evaluate_shift(c, scores, TopK{2}, rep.shift,
                           EvalConfig{.instances = 400, .problems = 500, .draw_size = 4, .seed = 9}, &b);
  // the report's value carries its own Monte-Carlo error through lambda
  auto q_xi = induced_distribution(rep.shift.w_xi);
  double rep_var = 0.0;
  for (std::size_t j = 0; j < q_xi.size(); ++j) rep_var += std::pow(q_xi[j] * rep.lambda_std_error[j], 2);
  EXPECT_NEAR(ev.mean, rep.value, 2.0 * std::sqrt(ev.std_error * ev.std_error + rep_var));
}

TEST(DiagonalNormalize, StandardAndCrossEntropyColumns) {
  auto n = diagonal_normalize(two_by_two());
  EXPECT_TRUE(n.normalized);
  EXPECT_DOUBLE_EQ(n.values[0][0], 1.0);
  EXPECT_DOUBLE_EQ(n.values[1][0], 0.5);
  EXPECT_DOUBLE_EQ(n.values[0][1], 2.0);
  EXPECT_DOUBLE_EQ(n.values[1][1], 1.0);
  EXPECT_DOUBLE_EQ(n.std_errors[1][0], 0.05);
}

TEST(DiagonalNormalize, ZeroDiagonalNamesColumn) {
  auto m = two_by_two();
  m.values[1][1] = 0.0;
  try {
    diagonal_normalize(m);
    FAIL();
  } catch (const NormalizationError& e) {
    EXPECT_NE(std::string(e.what()).find("'ce'"), std::string::npos);
  }
}

TEST(AggregateReplicates, MeanAndInterval) {
  auto a = two_by_two(), b = two_by_two();
  b.values[0][0] = 0.6;
  auto agg = aggregate_replicates({a, b});
  EXPECT_DOUBLE_EQ(agg.mean.values[0][0], 0.5);
  EXPECT_NEAR(agg.half_width[0][0], 1.96 * 0.1, 1e-12);
  EXPECT_DOUBLE_EQ(agg.half_width[1][1], 0.0);
}

TEST(OracleRatio, SignRule) {
  EXPECT_DOUBLE_EQ(oracle_ratio(0.3, 0.6), 0.5);
  EXPECT_DOUBLE_EQ(oracle_ratio(-4.0, -2.0), 0.5);
  EXPECT_DOUBLE_EQ(oracle_ratio(0.0, 0.0), 1.0);
}

TEST(OracleRatioCurve, RatiosAreBoundedByOne) {
  auto c = generate_synthetic(SyntheticSpec{.k = 2, .m = 4}, 3);
  Predictor p;
  p.kind = PredictorKind::kLogistic;
  p.task = Task::kBinary;
  p.numeric_dim = 2;
  p.layers.push_back(DenseLayer{1, 2, {1.0, 0.3}, {0.0}});
  auto scores = precompute_scores(c, p);
  RatioCurveConfig cfg{.grid = {20, 200}, .seeds = {0, 1}};
  auto curve = oracle_ratio_curve(c, scores, TopK{1}, 4.0, FwParams{.iterations = 5, .draw_size = 3}, cfg);
  EXPECT_EQ(curve.points.size(), 8u);
  for (const auto& pt : curve.points) {
    EXPECT_LE(pt.ratio, 1.0 + 1e-6);
    EXPECT_GT(pt.ratio, 0.0);
  }
  EXPECT_EQ(curve.mean_ratio.size(), 2u);
}

TEST(CrossMetricMatrix, ShapeAndApplicability) {
  auto t = testing::table_cohort(Task::kBinary, {{{1, 0.2}, {0, 0.9}, {1, 0.6}}, {{0, 0.1}, {1, 0.7}}});
  std::vector<LossSpec> metrics{TopK{1}, MisclassRate{}};
  FwParams params{.iterations = 3, .num_samples = 300, .num_samples2 = 300, .draw_size = 2};
  auto res = cross_metric_matrix(t.cohort, t.scores, metrics, UncertaintyBudget{3.0, 1.0}, params,
                                 EvalConfig{.instances = 10, .problems = 50});
  EXPECT_EQ(res.reports.size(), 2u);
  EXPECT_EQ(res.matrix.values.size(), 2u);
  EXPECT_EQ(res.matrix.col_metrics, (std::vector<std::string>{"topk", "acc"}));
  std::vector<LossSpec> bad{TopK{1}, Mse{}};
  EXPECT_THROW(cross_metric_matrix(t.cohort, t.scores, bad, UncertaintyBudget{1, 1}, params, EvalConfig{}),
               ArgumentError);
}

TEST(Emission, CsvRoundTripsExactly) {
  testing::TempDir dir;
  auto m = two_by_two();
  m.values[0][0] = 0.1 + 0.2;
  emit_csv(m, dir.file("m.csv"));
  auto back = read_matrix_csv(dir.file("m.csv"));
  EXPECT_EQ(back.values, m.values);
  EXPECT_EQ(back.row_metrics, m.row_metrics);
  EXPECT_EQ(back.col_is_ce, m.col_is_ce);
}

TEST(Emission, RejectsNanWithCoordinates) {
  testing::TempDir dir;
  auto m = two_by_two();
  m.values[1][0] = std::nan("");
  try {
    emit_csv(m, dir.file("m.csv"));
    FAIL();
  } catch (const ArgumentError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("column 0"), std::string::npos);
  }
  EXPECT_THROW(render_heatmap(m, dir.file("m.svg")), ArgumentError);
}

TEST(Emission, HeatmapIsDeterministicAndAnnotated) {
  testing::TempDir dir;
  auto m = diagonal_normalize(two_by_two());
  render_heatmap(m, dir.file("a.svg"));
  render_heatmap(m, dir.file("b.svg"));
  auto a = testing::read_text(dir.file("a.svg"));
  EXPECT_EQ(a, testing::read_text(dir.file("b.svg")));
  EXPECT_NE(a.find(">0.50<"), std::string::npos);
  EXPECT_NE(a.find(">2.00<"), std::string::npos);
}

}  // namespace
}  // namespace wcshift
