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

// Cross-metric evaluation of worst-case shifts, oracle ratio curves, and
// CSV / SVG emission.

#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wcshift/data_model.hpp"
#include "wcshift/error.hpp"
#include "wcshift/frank_wolfe.hpp"
#include "wcshift/losses.hpp"
#include "wcshift/oracle.hpp"
#include "wcshift/uncertainty.hpp"

namespace wcshift {

struct EvalConfig {
  int instances = 200;
  int problems = 4000;
  std::optional<int> draw_size;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct ShiftEvaluation {
  double mean = 0.0;
  double std_error = 0.0;  // across drawn instances
};

// Expected DL (not DL') when instances are drawn from Q_xi and problems from
// the drawn instance's Q_j.
inline ShiftEvaluation evaluate_shift(const Cohort& cohort, const ScoreCache& scores, const LossSpec& spec,
                                      const HierarchicalShift& shift, const EvalConfig& cfg,
                                      const UncertaintyBudget* budget = nullptr) {
  if (cfg.instances < 1 || cfg.problems < 1) throw ArgumentError("evaluate_shift: sample counts must be >= 1");
  if (shift.w_ind.size() != cohort.pools.size())
    throw InfeasibleOffsetError("evaluate_shift: shift covers " + std::to_string(shift.w_ind.size()) +
                                " instances, cohort has " + std::to_string(cohort.pools.size()));
  for (std::size_t j = 0; j < shift.w_ind.size(); ++j)
    if (shift.w_ind[j].size() != cohort.pools[j].size())
      throw InfeasibleOffsetError("evaluate_shift: offset for instance '" + cohort.pools[j].instance_id +
                                  "' does not match the pool size");
  if (budget) {
    auto f = is_feasible(shift, *budget);
    if (!f.feasible) throw InfeasibleOffsetError("evaluate_shift: infeasible shift: " + f.violation);
  }
  const auto pools = prepare_pools(cohort, scores);
  const auto q_xi = induced_distribution(shift.w_xi);
  std::vector<std::vector<double>> q_ind;
  for (const auto& w : shift.w_ind) q_ind.push_back(induced_distribution(w));
  IndexSampler instance_sampler(q_xi);

  std::vector<double> means(static_cast<std::size_t>(cfg.instances));
  for (int d = 0; d < cfg.instances; ++d) {
    CounterRng rng{cfg.seed, static_cast<std::uint64_t>(Stream::kEvaluation), 0, static_cast<std::uint64_t>(d)};
    int j = instance_sampler.draw(rng);
    int n = cfg.draw_size ? *cfg.draw_size : static_cast<int>(pools[j].size());
    StreamId id{cfg.seed, Stream::kEvaluation, static_cast<std::uint64_t>(j) + 1, static_cast<std::uint64_t>(d)};
    means[d] = monte_carlo_mean(pools[j], q_ind[j], cfg.problems, n, id, cfg.workers,
                                [&](const DrawnProblem& p) { return decision_loss(spec, p); })
                   .mean;
  }
  ShiftEvaluation out;
  for (double v : means) out.mean += v;
  out.mean /= static_cast<double>(means.size());
  if (means.size() > 1) {
    double ss = 0.0;
    for (double v : means) ss += (v - out.mean) * (v - out.mean);
    out.std_error = std::sqrt(ss / static_cast<double>(means.size() - 1) / static_cast<double>(means.size()));
  }
  return out;
}

// Rows: the metric each shift maximizes. Columns: the metric evaluated.
struct CrossMetricMatrix {
  std::vector<std::string> row_metrics;
  std::vector<std::string> col_metrics;
  std::vector<bool> col_is_ce;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<double>> std_errors;
  bool normalized = false;
};

struct CrossMetricResult {
  CrossMetricMatrix matrix;
  std::vector<WorstCaseReport> reports;  // one per row
};

inline void check_applicable(const std::vector<LossSpec>& metrics, Task task) {
  for (const auto& m : metrics)
    if (!applicable(m, task))
      throw ArgumentError("metric '" + m.metric_name() + "' does not apply to a " + to_string(task) + " cohort");
}

// Evaluates already-computed worst-case reports on every column metric.
inline CrossMetricMatrix evaluate_reports(const Cohort& cohort, const ScoreCache& scores,
                                          const std::vector<WorstCaseReport>& reports,
                                          const std::vector<LossSpec>& columns, const EvalConfig& cfg) {
  check_applicable(columns, cohort.task);
  CrossMetricMatrix mat;
  for (const auto& r : reports) mat.row_metrics.push_back(r.loss.metric_name());
  for (const auto& c : columns) {
    mat.col_metrics.push_back(c.metric_name());
    mat.col_is_ce.push_back(c.is_cross_entropy());
  }
  mat.values.assign(reports.size(), std::vector<double>(columns.size(), 0.0));
  mat.std_errors = mat.values;
  for (std::size_t r = 0; r < reports.size(); ++r)
    for (std::size_t c = 0; c < columns.size(); ++c) {
      EvalConfig ec = cfg;
      if (!ec.draw_size) ec.draw_size = reports[r].params.draw_size;
      auto ev = evaluate_shift(cohort, scores, columns[c], reports[r].shift, ec, &reports[r].budget);
      mat.values[r][c] = ev.mean;
      mat.std_errors[r][c] = ev.std_error;
    }
  return mat;
}

inline CrossMetricResult cross_metric_matrix(const Cohort& cohort, const ScoreCache& scores,
                                             const std::vector<LossSpec>& metrics, const UncertaintyBudget& budget,
                                             const FwParams& params, const EvalConfig& cfg) {
  if (metrics.empty()) throw ArgumentError("cross_metric_matrix: no metrics");
  check_applicable(metrics, cohort.task);
  CrossMetricResult res;
  for (const auto& m : metrics) res.reports.push_back(find_worst_case(cohort, scores, m, budget, params));
  res.matrix = evaluate_reports(cohort, scores, res.reports, metrics, cfg);
  return res;
}

// Divides each column by its diagonal entry. Cross-entropy columns hold
// negative values, so there each entry becomes diagonal / value instead.
inline CrossMetricMatrix diagonal_normalize(const CrossMetricMatrix& in) {
  const std::size_t n = std::min(in.values.size(), in.col_metrics.size());
  CrossMetricMatrix out = in;
  for (std::size_t c = 0; c < n; ++c) {
    double diag = in.values[c][c];
    if (diag == 0.0) throw NormalizationError("diagonal_normalize: zero diagonal in column '" + in.col_metrics[c] + "'");
    bool ce = c < in.col_is_ce.size() && in.col_is_ce[c];
    for (std::size_t r = 0; r < in.values.size(); ++r) {
      double v = in.values[r][c];
      double se = in.std_errors.empty() ? 0.0 : in.std_errors[r][c];
      if (r == c) {
        out.values[r][c] = 1.0;
      } else if (ce) {
        if (v == 0.0) throw NormalizationError("diagonal_normalize: zero entry in cross-entropy column '" + in.col_metrics[c] + "'");
        out.values[r][c] = diag / v;
      } else {
        out.values[r][c] = v / diag;
      }
      if (!out.std_errors.empty())
        out.std_errors[r][c] = ce ? std::abs(diag) * se / (v * v) : se / std::abs(diag);
    }
  }
  out.normalized = true;
  return out;
}

// Mean and normal-approximation 95% half-width across replicate matrices.
struct AggregatedMatrix {
  CrossMetricMatrix mean;
  std::vector<std::vector<double>> half_width;
};

inline AggregatedMatrix aggregate_replicates(const std::vector<CrossMetricMatrix>& reps) {
  if (reps.empty()) throw ArgumentError("aggregate_replicates: no replicates");
  AggregatedMatrix agg;
  agg.mean = reps[0];
  const std::size_t R = reps.size(), rows = reps[0].values.size();
  agg.half_width.assign(rows, std::vector<double>(reps[0].col_metrics.size(), 0.0));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < reps[0].col_metrics.size(); ++c) {
      double s = 0.0;
      for (const auto& m : reps) s += m.values[r][c];
      double mean = s / static_cast<double>(R);
      double ss = 0.0;
      for (const auto& m : reps) ss += (m.values[r][c] - mean) * (m.values[r][c] - mean);
      agg.mean.values[r][c] = mean;
      agg.half_width[r][c] = R > 1 ? 1.96 * std::sqrt(ss / static_cast<double>(R - 1) / static_cast<double>(R)) : 0.0;
    }
  agg.mean.std_errors.clear();
  return agg;
}

// FW value over oracle value, in E[DL] units. For negative optima (cross
// entropy) the ratio is inverted so that 1 still means "matches the oracle".
inline double oracle_ratio(double fw_value, double oracle_value) {
  if (std::abs(oracle_value) <= 1e-12) return std::abs(fw_value) <= 1e-12 ? 1.0 : 0.0;
  if (oracle_value > 0.0) return fw_value / oracle_value;
  return oracle_value / fw_value;
}

struct RatioPoint {
  std::string instance_id;
  std::uint64_t seed = 0;
  int num_samples = 0;
  double fw_value = 0.0;      // exact E[DL] at the FW point
  double oracle_value = 0.0;  // exact E[DL] at the oracle point
  double ratio = 0.0;
};

struct OracleRatioCurve {
  std::string metric;
  std::vector<int> grid;
  std::vector<double> mean_ratio;  // per grid point, over instances and seeds
  std::vector<RatioPoint> points;
};

struct RatioCurveConfig {
  std::vector<int> grid = {10, 50, 250, 1000, 3000};
  std::vector<std::uint64_t> seeds = {0};
  std::size_t cap = kDefaultEnumerationCap;
  OracleConfig oracle;
};

// Runs fw_inner per pool, grid point and seed, and scores each converged
// point exactly against the oracle optimum for that pool.
inline OracleRatioCurve oracle_ratio_curve(const Cohort& cohort, const ScoreCache& scores, const LossSpec& spec,
                                           double rho_ind, const FwParams& base, const RatioCurveConfig& cfg) {
  validate(base);
  if (cfg.grid.empty() || cfg.seeds.empty()) throw ArgumentError("oracle_ratio_curve: empty grid or seed list");
  check_applicable({spec}, cohort.task);
  const auto pools = prepare_pools(cohort, scores);
  OracleRatioCurve curve;
  curve.metric = spec.metric_name();
  curve.grid = cfg.grid;
  curve.mean_ratio.assign(cfg.grid.size(), 0.0);
  for (std::size_t j = 0; j < pools.size(); ++j) {
    const int n = resolved_draw_size(base, pools[j]);
    auto en = enumerate_problems(pools[j], spec, static_cast<std::size_t>(n), cfg.cap, LossForm::kShifted, base.workers);
    OracleConfig oc = cfg.oracle;
    oc.workers = base.workers;
    auto best = oracle_maximize(en, rho_ind, oc);
    const double oracle_value = best.value + 1.0;
    for (std::size_t g = 0; g < cfg.grid.size(); ++g)
      for (auto seed : cfg.seeds) {
        FwParams p = base;
        p.num_samples = cfg.grid[g];
        p.seed = seed;
        auto res = fw_inner(pools[j], spec, rho_ind, p, j);
        double fw_value = exact_objective(en, induced_distribution(res.w)) + 1.0;
        RatioPoint pt{cohort.pools[j].instance_id, seed, cfg.grid[g], fw_value, oracle_value,
                      oracle_ratio(fw_value, oracle_value)};
        curve.mean_ratio[g] += pt.ratio;
        curve.points.push_back(std::move(pt));
      }
  }
  const double per_point = static_cast<double>(pools.size() * cfg.seeds.size());
  for (auto& r : curve.mean_ratio) r /= per_point;
  return curve;
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void check_finite(const CrossMetricMatrix& m) {
  for (std::size_t r = 0; r < m.values.size(); ++r)
    for (std::size_t c = 0; c < m.values[r].size(); ++c)
      if (!std::isfinite(m.values[r][c]))
        throw ArgumentError("matrix has a non-finite value at row " + std::to_string(r) + " ('" + m.row_metrics[r] +
                            "'), column " + std::to_string(c) + " ('" + m.col_metrics[c] + "')");
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write '" + path + "'");
  return out;
}

// Header "metric,<col>..." then one row per shift metric.
inline void emit_csv(const CrossMetricMatrix& m, const std::string& path) {
  check_finite(m);
  auto out = open_output(path);
  out << "metric";
  for (const auto& c : m.col_metrics) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < m.values.size(); ++r) {
    out << m.row_metrics[r];
    for (double v : m.values[r]) out << ',' << format_number(v);
    out << '\n';
  }
  if (!out) throw FileError("failed writing '" + path + "'");
}

inline CrossMetricMatrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open '" + path + "'");
  CrossMetricMatrix m;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("matrix csv '" + path + "' is empty");
  auto header = detail::split_fields(line, ',');
  m.col_metrics.assign(header.begin() + 1, header.end());
  for (const auto& c : m.col_metrics) m.col_is_ce.push_back(c == "ce");
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    auto f = detail::split_fields(line, ',');
    if (f.size() != header.size())
      throw ParseError("matrix csv '" + path + "', row " + std::to_string(row) + ": wrong field count");
    m.row_metrics.push_back(f[0]);
    std::vector<double> vals;
    for (std::size_t i = 1; i < f.size(); ++i) {
      auto v = detail::parse_double(f[i]);
      if (!v) throw ParseError("matrix csv '" + path + "', row " + std::to_string(row) + ": bad number '" + f[i] + "'");
      vals.push_back(*v);
    }
    m.values.push_back(std::move(vals));
  }
  return m;
}

inline void emit_curve_csv(const OracleRatioCurve& curve, const std::string& path) {
  auto out = open_output(path);
  out << "metric,instance_id,seed,num_samples,fw_value,oracle_value,ratio\n";
  for (const auto& p : curve.points) {
    if (!std::isfinite(p.ratio) || !std::isfinite(p.fw_value) || !std::isfinite(p.oracle_value))
      throw ArgumentError("curve has a non-finite value at instance '" + p.instance_id + "', num_samples " +
                          std::to_string(p.num_samples));
    out << curve.metric << ',' << p.instance_id << ',' << p.seed << ',' << p.num_samples << ','
        << format_number(p.fw_value) << ',' << format_number(p.oracle_value) << ',' << format_number(p.ratio) << '\n';
  }
}

inline void emit_trace_csv(const WorstCaseReport& r, const std::string& path) {
  auto out = open_output(path);
  out << "instance_id,iteration,objective,gradient_norm\n";
  for (std::size_t j = 0; j < r.diagnostics.size(); ++j) {
    const auto& d = r.diagnostics[j];
    for (std::size_t t = 0; t < d.objective_trace.size(); ++t) {
      if (!std::isfinite(d.objective_trace[t]))
        throw ArgumentError("trace has a non-finite objective at instance " + std::to_string(j) + ", iteration " +
                            std::to_string(t));
      out << r.shift.instance_ids[j] << ',' << t << ',' << format_number(d.objective_trace[t]) << ',';
      if (t < d.gradient_norms.size()) out << format_number(d.gradient_norms[t]);
      out << '\n';
    }
  }
}

// SVG heat map, one annotated cell per entry (value to 2 decimals).
inline void render_heatmap(const CrossMetricMatrix& m, const std::string& path) {
  check_finite(m);
  const int cell = 64, left = 96, top = 48;
  const int width = left + cell * static_cast<int>(m.col_metrics.size()) + 16;
  const int height = top + cell * static_cast<int>(m.row_metrics.size()) + 16;
  double lo = 0.0, hi = 1.0;
  bool first = true;
  for (const auto& row : m.values)
    for (double v : row) {
      if (first) {
        lo = hi = v;
        first = false;
      }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  for (std::size_t c = 0; c < m.col_metrics.size(); ++c)
    svg << "<text x=\"" << left + cell * c + cell / 2 << "\" y=\"" << top - 8 << "\" text-anchor=\"middle\">"
        << m.col_metrics[c] << "</text>\n";
  for (std::size_t r = 0; r < m.values.size(); ++r) {
    svg << "<text x=\"" << left - 8 << "\" y=\"" << top + cell * r + cell / 2 + 4 << "\" text-anchor=\"end\">"
        << m.row_metrics[r] << "</text>\n";
    for (std::size_t c = 0; c < m.values[r].size(); ++c) {
      double v = m.values[r][c];
      double t = hi > lo ? (v - lo) / (hi - lo) : 1.0;
      int red = 255, green = static_cast<int>(std::lround(255 * (1.0 - 0.75 * t))),
          blue = static_cast<int>(std::lround(255 * (1.0 - 0.9 * t)));
      char value[32], color[16];
      std::snprintf(value, sizeof value, "%.2f", v);
      std::snprintf(color, sizeof color, "#%02x%02x%02x", red, green, blue);
      svg << "<rect x=\"" << left + cell * c << "\" y=\"" << top + cell * r << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"" << color << "\" stroke=\"#ffffff\"/>\n";
      svg << "<text x=\"" << left + cell * c + cell / 2 << "\" y=\"" << top + cell * r + cell / 2 + 4
          << "\" text-anchor=\"middle\">" << value << "</text>\n";
    }
  }
  svg << "</svg>\n";
  auto out = open_output(path);
  out << svg.str();
  if (!out) throw FileError("failed writing '" + path + "'");
}

}  // namespace wcshift
