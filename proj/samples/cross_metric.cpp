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

// Worst cases for three metrics, each evaluated under every metric.

#include <cstdio>

#include "wcshift/wcshift.hpp"

int main() {
  using namespace wcshift;
  Cohort cohort = generate_synthetic(SyntheticSpec{.k = 4, .m = 8}, 7);
  TrainResult model = train(cohort, PredictorKind::kLogistic, TrainConfig{.epochs = 200}, 0);
  ScoreCache scores = precompute_scores(cohort, model.predictor);

  std::vector<LossSpec> metrics{TopK{2}, MisclassRate{}, CrossEntropy{}};
  FwParams params{.num_samples = 3000, .num_samples2 = 1000};
  auto res = cross_metric_matrix(cohort, scores, metrics, UncertaintyBudget{8.0, 6.25}, params,
                                 EvalConfig{.instances = 50, .problems = 400});
  auto norm = diagonal_normalize(res.matrix);
  std::printf("%-8s", "shift");
  for (const auto& c : norm.col_metrics) std::printf("%8s", c.c_str());
  std::printf("\n");
  for (std::size_t r = 0; r < norm.values.size(); ++r) {
    std::printf("%-8s", norm.row_metrics[r].c_str());
    for (double v : norm.values[r]) std::printf("%8.2f", v);
    std::printf("\n");
  }
  return 0;
}
