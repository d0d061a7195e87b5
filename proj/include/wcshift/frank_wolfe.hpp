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

// Worst-case search over the two-level shift set.
//
// Within each instance the expected shifted loss E_{q}[DL'] is a polynomial
// in q with non-positive Hessian entries, so it is maximized with a
// non-monotone Frank-Wolfe scheme over offsets from uniform: T steps of size
// 1/T towards the gradmax point of a momentum-averaged score-function
// gradient estimate. The across-instance distribution is then a single
// linear maximization over the per-instance loss estimates.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wcshift/data_model.hpp"
#include "wcshift/error.hpp"
#include "wcshift/losses.hpp"
#include "wcshift/parallel.hpp"
#include "wcshift/predictors.hpp"
#include "wcshift/rng.hpp"
#include "wcshift/uncertainty.hpp"

namespace wcshift {

struct FwParams {
  int iterations = 15;
  int num_samples = 35000;
  int num_samples2 = 4000;
  double momentum = 0.7;
  std::optional<int> draw_size;  // defaults to the pool size
  std::uint64_t seed = 0;
  // Feed -gradient to gradmax, as the published pseudocode is written.
  // Off by default: that variant descends rather than ascends.
  bool literal_sign = false;
  // Subtract a control-variate baseline from DL' in the gradient weights.
  // The baseline never uses the current batch, so the estimate stays
  // unbiased up to a multiple of the all-ones vector, which gradmax ignores.
  bool baseline = true;
  std::size_t workers = 1;
  bool record_offsets = false;

  bool operator==(const FwParams&) const = default;
};

inline void validate(const FwParams& p) {
  if (p.iterations < 1) throw ConfigError("iterations must be >= 1");
  if (p.num_samples < 1) throw ConfigError("num_samples must be >= 1");
  if (p.num_samples2 < 1) throw ConfigError("num_samples2 must be >= 1");
  if (!(p.momentum >= 0.0 && p.momentum <= 1.0)) throw ConfigError("momentum must lie in [0,1]");
  if (p.draw_size && *p.draw_size < 1) throw ConfigError("draw_size must be >= 1");
}

inline nlohmann::json to_json(const FwParams& p) {
  nlohmann::json j{{"iterations", p.iterations},   {"num_samples", p.num_samples},
                   {"num_samples2", p.num_samples2}, {"momentum", p.momentum},
                   {"seed", p.seed},               {"literal_sign", p.literal_sign},
                   {"baseline", p.baseline}};
  j["draw_size"] = p.draw_size ? nlohmann::json(*p.draw_size) : nlohmann::json(nullptr);
  return j;
}

// Inverse-CDF sampler over a probability vector.
class IndexSampler {
 public:
  explicit IndexSampler(std::span<const double> q) : cdf_(q.size()) {
    if (q.empty()) throw ArgumentError("sampler: empty distribution");
    double total = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      if (!(q[i] >= 0.0) || !std::isfinite(q[i]))
        throw InfeasibleOffsetError("sampler: invalid probability at index " + std::to_string(i));
      total += q[i];
      cdf_[i] = total;
      if (q[i] > 0.0) last_ = static_cast<int>(i);
    }
    if (std::abs(total - 1.0) > kSumTol)
      throw InfeasibleOffsetError("sampler: probabilities sum to " + std::to_string(total));
  }

  int draw(CounterRng& rng) const {
    double u = rng.uniform();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    int i = static_cast<int>(it - cdf_.begin());
    return std::min(i, last_);
  }

 private:
  std::vector<double> cdf_;
  int last_ = 0;
};

inline DrawnProblem sample_problem(const PreparedPool& pool, const IndexSampler& sampler, int n, CounterRng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (auto& i : idx) i = sampler.draw(rng);
  return make_problem(pool, std::move(idx));
}

inline DrawnProblem sample_problem(const PreparedPool& pool, std::span<const double> q, int n, CounterRng& rng) {
  if (q.size() != pool.size()) throw ArgumentError("sample_problem: distribution length differs from pool size");
  if (n < 1) throw ArgumentError("sample_problem: n must be >= 1");
  return sample_problem(pool, IndexSampler(q), n, rng);
}

// Identifies one stream of Monte-Carlo draws.
struct StreamId {
  std::uint64_t seed = 0;
  Stream stream = Stream::kGradient;
  std::uint64_t instance = 0;
  std::uint64_t iteration = 0;

  CounterRng rng_for(std::uint64_t sample) const {
    return CounterRng{seed, static_cast<std::uint64_t>(stream), instance, iteration, sample};
  }
};

inline constexpr std::size_t kSampleBlock = 512;

struct GradientEstimate {
  std::vector<double> gradient;  // d E_q[DL'] / d q
  double mean_shifted_loss = 0.0;
};

// Score-function estimate of the gradient of E_{X ~ q^n}[DL'] in q:
// coordinate a averages DL' * count(a) / q_a over the sampled problems.
// Samples are grouped in fixed blocks and blocks reduced in order, so the
// result does not depend on the number of workers.
inline GradientEstimate estimate_gradient(const PreparedPool& pool, const LossSpec& spec, std::span<const double> q,
                                          int num_samples, int n, const StreamId& id, std::size_t workers = 1,
                                          double baseline = 0.0) {
  if (num_samples < 1) throw ArgumentError("estimate_gradient: num_samples must be >= 1");
  if (n < 1) throw ArgumentError("estimate_gradient: n must be >= 1");
  if (q.size() != pool.size()) throw ArgumentError("estimate_gradient: distribution length differs from pool size");
  const std::size_t m = pool.size();
  IndexSampler sampler(q);
  const std::size_t total = static_cast<std::size_t>(num_samples);
  const std::size_t blocks = (total + kSampleBlock - 1) / kSampleBlock;
  std::vector<std::vector<double>> block_grad(blocks, std::vector<double>(m, 0.0));
  std::vector<double> block_loss(blocks, 0.0);
  parallel_for(blocks, workers, [&](std::size_t b) {
    auto& g = block_grad[b];
    double loss_sum = 0.0;
    const std::size_t end = std::min(total, (b + 1) * kSampleBlock);
    for (std::size_t s = b * kSampleBlock; s < end; ++s) {
      CounterRng rng = id.rng_for(s);
      DrawnProblem prob = sample_problem(pool, sampler, n, rng);
      double l = shifted_loss(spec, prob);
      loss_sum += l;
      // indices are sorted, so equal draws are adjacent
      for (std::size_t i = 0; i < prob.indices.size();) {
        std::size_t j = i;
        while (j < prob.indices.size() && prob.indices[j] == prob.indices[i]) ++j;
        int a = prob.indices[i];
        g[a] += (l - baseline) * static_cast<double>(j - i) / q[a];
        i = j;
      }
    }
    block_loss[b] = loss_sum;
  });
  GradientEstimate est;
  est.gradient.assign(m, 0.0);
  double loss = 0.0;
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t a = 0; a < m; ++a) est.gradient[a] += block_grad[b][a];
    loss += block_loss[b];
  }
  for (auto& g : est.gradient) g /= static_cast<double>(total);
  est.mean_shifted_loss = loss / static_cast<double>(total);
  return est;
}

struct LossEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// Monte-Carlo mean of `fn(problem)` over problems drawn from q.
template <typename Fn>
LossEstimate monte_carlo_mean(const PreparedPool& pool, std::span<const double> q, int num_samples, int n,
                              const StreamId& id, std::size_t workers, Fn&& fn) {
  if (num_samples < 1) throw ArgumentError("monte_carlo_mean: num_samples must be >= 1");
  IndexSampler sampler(q);
  const std::size_t total = static_cast<std::size_t>(num_samples);
  const std::size_t blocks = (total + kSampleBlock - 1) / kSampleBlock;
  std::vector<double> sums(blocks, 0.0), squares(blocks, 0.0);
  parallel_for(blocks, workers, [&](std::size_t b) {
    const std::size_t end = std::min(total, (b + 1) * kSampleBlock);
    for (std::size_t s = b * kSampleBlock; s < end; ++s) {
      CounterRng rng = id.rng_for(s);
      double l = fn(sample_problem(pool, sampler, n, rng));
      sums[b] += l;
      squares[b] += l * l;
    }
  });
  double sum = 0.0, sq = 0.0;
  for (std::size_t b = 0; b < blocks; ++b) {
    sum += sums[b];
    sq += squares[b];
  }
  LossEstimate e;
  e.mean = sum / static_cast<double>(total);
  if (total > 1) {
    double var = std::max(0.0, (sq - sum * e.mean) / static_cast<double>(total - 1));
    e.std_error = std::sqrt(var / static_cast<double>(total));
  }
  return e;
}

struct InnerDiagnostics {
  std::vector<double> objective_trace;  // estimated E[DL] at each iterate, final point last
  std::vector<double> gradient_norms;
  std::vector<std::vector<double>> offsets;  // every iterate, when requested
};

struct InnerResult {
  std::vector<double> w;  // offset from uniform
  InnerDiagnostics diagnostics;
};

inline int resolved_draw_size(const FwParams& params, const PreparedPool& pool) {
  return params.draw_size ? *params.draw_size : static_cast<int>(pool.size());
}

// Distribution induced by an offset, with round-off dust on exhausted
// coordinates removed.
inline std::vector<double> induced_distribution(std::span<const double> w) {
  auto q = offset_to_distribution(w);
  double total = 0.0;
  for (auto& x : q) {
    if (x < 1e-14) x = 0.0;
    total += x;
  }
  for (auto& x : q) x /= total;
  return q;
}

inline InnerResult fw_inner(const PreparedPool& pool, const LossSpec& spec, double rho_ind, const FwParams& params,
                            std::uint64_t instance = 0) {
  validate(params);
  if (!(rho_ind >= 0.0)) throw ArgumentError("fw_inner: rho_ind must be >= 0");
  if (pool.size() == 0) throw ArgumentError("fw_inner: empty pool");
  const std::size_t m = pool.size();
  const int n = resolved_draw_size(params, pool);
  const auto center = uniform_distribution(m);
  const double step = 1.0 / static_cast<double>(params.iterations);

  InnerResult res;
  res.w.assign(m, 0.0);
  std::vector<double> momentum(m, 0.0);
  if (params.record_offsets) res.diagnostics.offsets.push_back(res.w);
  double baseline = 0.0;
  if (params.baseline) {
    StreamId pilot{params.seed, Stream::kBaseline, instance, 0};
    baseline = monte_carlo_mean(pool, center, std::min(params.num_samples, params.num_samples2), n, pilot,
                                params.workers, [&](const DrawnProblem& p) { return shifted_loss(spec, p); })
                   .mean;
  }
  for (int t = 0; t < params.iterations; ++t) {
    auto q = induced_distribution(res.w);
    StreamId id{params.seed, Stream::kGradient, instance, static_cast<std::uint64_t>(t)};
    auto est = estimate_gradient(pool, spec, q, params.num_samples, n, id, params.workers, baseline);
    if (params.baseline) baseline = est.mean_shifted_loss;
    res.diagnostics.objective_trace.push_back(est.mean_shifted_loss + 1.0);
    double norm = 0.0;
    for (double g : est.gradient) norm += g * g;
    res.diagnostics.gradient_norms.push_back(std::sqrt(norm));
    const double sign = params.literal_sign ? -1.0 : 1.0;
    for (std::size_t a = 0; a < m; ++a)
      momentum[a] = params.momentum * sign * est.gradient[a] + (1.0 - params.momentum) * momentum[a];
    auto target = gradmax(momentum, center, rho_ind);
    for (std::size_t a = 0; a < m; ++a) res.w[a] += step * (target[a] - center[a]);
    if (params.record_offsets) res.diagnostics.offsets.push_back(res.w);
  }
  auto q = induced_distribution(res.w);
  StreamId id{params.seed, Stream::kFinalObjective, instance, 0};
  auto final_est = monte_carlo_mean(pool, q, params.num_samples, n, id, params.workers,
                                    [&](const DrawnProblem& p) { return shifted_loss(spec, p); });
  res.diagnostics.objective_trace.push_back(final_est.mean + 1.0);
  return res;
}

// lambda_j: Monte-Carlo mean of DL' under the instance's shifted distribution.
inline LossEstimate estimate_instance_loss(const PreparedPool& pool, const LossSpec& spec, std::span<const double> w,
                                           int num_samples2, int n, std::uint64_t seed, std::uint64_t instance,
                                           std::size_t workers = 1) {
  auto q = induced_distribution(w);
  StreamId id{seed, Stream::kInstanceLoss, instance, 0};
  return monte_carlo_mean(pool, q, num_samples2, n, id, workers,
                          [&](const DrawnProblem& p) { return shifted_loss(spec, p); });
}

inline std::vector<double> fw_outer(std::span<const double> lambda, double rho_xi) {
  if (lambda.empty()) throw ArgumentError("fw_outer: no instances");
  for (double l : lambda)
    if (!std::isfinite(l)) throw ArgumentError("fw_outer: non-finite instance loss");
  auto center = uniform_distribution(lambda.size());
  auto q = gradmax(lambda, center, rho_xi);
  std::vector<double> w(q.size());
  for (std::size_t j = 0; j < q.size(); ++j) w[j] = q[j] - center[j];
  return w;
}

struct WorstCaseReport {
  LossSpec loss;
  UncertaintyBudget budget;
  FwParams params;
  HierarchicalShift shift;
  std::vector<double> lambda;
  std::vector<double> lambda_std_error;
  double value = 0.0;  // <Q_xi, lambda> + 1
  std::vector<InnerDiagnostics> diagnostics;
  nlohmann::json config;  // caller-supplied echo (paths, etc.)
};

inline std::vector<PreparedPool> prepare_pools(const Cohort& cohort, const ScoreCache& scores) {
  if (scores.size() != cohort.pools.size()) throw ArgumentError("score cache does not match cohort");
  std::vector<PreparedPool> out;
  out.reserve(cohort.pools.size());
  for (std::size_t j = 0; j < cohort.pools.size(); ++j)
    out.push_back(prepare_pool(cohort.pools[j], scores[j], cohort.task, cohort.schema.num_groups()));
  return out;
}

inline WorstCaseReport find_worst_case(const Cohort& cohort, const ScoreCache& scores, const LossSpec& spec,
                                       const UncertaintyBudget& budget, const FwParams& params) {
  validate(params);
  validate(budget);
  validate(spec);
  if (!applicable(spec, cohort.task))
    throw ArgumentError("metric '" + spec.metric_name() + "' does not apply to a " + to_string(cohort.task) + " cohort");
  const auto pools = prepare_pools(cohort, scores);
  const std::size_t k = pools.size();

  WorstCaseReport rep;
  rep.loss = spec;
  rep.budget = budget;
  rep.params = params;
  rep.shift.w_ind.resize(k);
  rep.diagnostics.resize(k);
  rep.lambda.assign(k, 0.0);
  rep.lambda_std_error.assign(k, 0.0);
  for (const auto& p : cohort.pools) rep.shift.instance_ids.push_back(p.instance_id);

  // Fan out over instances when there are enough of them, otherwise over
  // sample blocks inside each instance. Either way the numbers are the same.
  const bool across = params.workers > 1 && k >= params.workers;
  FwParams inner = params;
  inner.workers = across ? 1 : params.workers;
  parallel_for(k, across ? params.workers : 1, [&](std::size_t j) {
    try {
      auto res = fw_inner(pools[j], spec, budget.ind_radius(), inner, j);
      int n = resolved_draw_size(params, pools[j]);
      auto est = estimate_instance_loss(pools[j], spec, res.w, params.num_samples2, n, params.seed, j, inner.workers);
      rep.shift.w_ind[j] = std::move(res.w);
      rep.diagnostics[j] = std::move(res.diagnostics);
      rep.lambda[j] = est.mean;
      rep.lambda_std_error[j] = est.std_error;
    } catch (const Error& e) {
      throw Error(e.category(), "instance '" + cohort.pools[j].instance_id + "': " + e.what());
    }
  });
  rep.shift.w_xi = fw_outer(rep.lambda, budget.xi_radius());
  auto q_xi = induced_distribution(rep.shift.w_xi);
  double v = 0.0;
  for (std::size_t j = 0; j < k; ++j) v += q_xi[j] * rep.lambda[j];
  rep.value = v + 1.0;
  return rep;
}

inline nlohmann::json to_json(const WorstCaseReport& r) {
  nlohmann::json diag = nlohmann::json::array();
  for (std::size_t j = 0; j < r.diagnostics.size(); ++j)
    diag.push_back({{"instance_id", r.shift.instance_ids[j]},
                    {"objective_trace", r.diagnostics[j].objective_trace},
                    {"gradient_norms", r.diagnostics[j].gradient_norms}});
  return {{"value", r.value},
          {"lambda", r.lambda},
          {"lambda_std_error", r.lambda_std_error},
          {"loss", to_json(r.loss)},
          {"params", to_json(r.params)},
          {"shift", to_json(r.shift, r.budget)},
          {"diagnostics", std::move(diag)},
          {"config", r.config}};
}

inline WorstCaseReport report_from_json(const nlohmann::json& j) {
  WorstCaseReport r;
  try {
    r.value = j.at("value").get<double>();
    r.lambda = j.at("lambda").get<std::vector<double>>();
    if (j.contains("lambda_std_error")) r.lambda_std_error = j.at("lambda_std_error").get<std::vector<double>>();
    r.loss = loss_from_json(j.at("loss"));
    r.budget = budget_from_json(j.at("shift").at("budget"));
    r.shift = shift_from_json(j.at("shift"));
    const auto& pj = j.at("params");
    r.params.iterations = pj.at("iterations").get<int>();
    r.params.num_samples = pj.at("num_samples").get<int>();
    r.params.num_samples2 = pj.at("num_samples2").get<int>();
    r.params.momentum = pj.at("momentum").get<double>();
    r.params.seed = pj.at("seed").get<std::uint64_t>();
    r.params.literal_sign = pj.value("literal_sign", false);
    r.params.baseline = pj.value("baseline", true);
    if (!pj.at("draw_size").is_null()) r.params.draw_size = pj.at("draw_size").get<int>();
    if (j.contains("config")) r.config = j.at("config");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report json: ") + e.what());
  }
  return r;
}

}  // namespace wcshift
