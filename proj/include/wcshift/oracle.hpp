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

// Exact small-instance machinery. With m individuals and draws of size n
// the per-instance objective is the polynomial
//
//   F(q) = sum_{multisets c} multinomial(n; c) * prod_i q_i^{c_i} * DL'(c),
//
// which is enumerated once and then evaluated, differentiated and maximized
// without sampling.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wcshift/error.hpp"
#include "wcshift/losses.hpp"
#include "wcshift/parallel.hpp"
#include "wcshift/rng.hpp"
#include "wcshift/uncertainty.hpp"

namespace wcshift {

inline constexpr std::size_t kDefaultEnumerationCap = 100000;

struct Multiset {
  std::vector<std::pair<int, int>> counts;  // (individual, count), count > 0, ascending
  double coefficient = 1.0;                 // number of ordered draws giving this multiset
};

struct ProblemEnumeration {
  std::size_t m = 0;
  std::size_t n = 0;
  std::vector<Multiset> multisets;
  std::vector<double> losses;  // one per multiset
};

// C(m + n - 1, n), saturating at the largest double.
inline double multiset_count(std::size_t m, std::size_t n) {
  if (m == 0) return 0.0;
  double c = 1.0;
  for (std::size_t i = 1; i <= n; ++i) {
    c = c * static_cast<double>(m - 1 + i) / static_cast<double>(i);
    if (!std::isfinite(c)) return std::numeric_limits<double>::max();
  }
  return std::round(c);
}

inline double binomial(std::size_t n, std::size_t k) {
  double c = 1.0;
  for (std::size_t i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(c);
}

// All multisets of size n over {0..m-1} in lexicographic order of count
// vectors (largest count on individual 0 first).
inline std::vector<Multiset> enumerate_multisets(std::size_t m, std::size_t n,
                                                 std::size_t cap = kDefaultEnumerationCap) {
  if (m == 0) throw ArgumentError("enumerate_multisets: empty pool");
  double total = multiset_count(m, n);
  if (total > static_cast<double>(cap))
    throw SizeError("enumeration needs C(m+n-1, n) = C(" + std::to_string(m + n - 1) + ", " + std::to_string(n) +
                    ") = " + std::to_string(static_cast<long double>(total)) + " multisets, above the cap of " +
                    std::to_string(cap));
  std::vector<Multiset> out;
  out.reserve(static_cast<std::size_t>(total));
  std::vector<int> counts(m, 0);
  // Recursive fill: individual a takes c of the remaining draws.
  auto rec = [&](auto&& self, std::size_t a, std::size_t remaining, double coef) -> void {
    if (a + 1 == m) {
      counts[a] = static_cast<int>(remaining);
      Multiset ms;
      for (std::size_t i = 0; i < m; ++i)
        if (counts[i] > 0) ms.counts.emplace_back(static_cast<int>(i), counts[i]);
      ms.coefficient = coef;  // last binomial C(remaining, remaining) = 1
      out.push_back(std::move(ms));
      return;
    }
    for (std::size_t c = remaining + 1; c-- > 0;) {
      counts[a] = static_cast<int>(c);
      self(self, a + 1, remaining - c, coef * binomial(remaining, c));
    }
  };
  rec(rec, 0, n, 1.0);
  return out;
}

enum class LossForm { kShifted, kRaw };

// Evaluates DL' (or DL) once per multiset of n draws from the pool.
inline ProblemEnumeration enumerate_problems(const PreparedPool& pool, const LossSpec& spec, std::size_t n,
                                             std::size_t cap = kDefaultEnumerationCap,
                                             LossForm form = LossForm::kShifted, std::size_t workers = 1) {
  if (n < 1) throw ArgumentError("enumerate_problems: n must be >= 1");
  ProblemEnumeration e;
  e.m = pool.size();
  e.n = n;
  e.multisets = enumerate_multisets(e.m, n, cap);
  e.losses.assign(e.multisets.size(), 0.0);
  parallel_for(e.multisets.size(), workers, [&](std::size_t s) {
    std::vector<int> idx;
    idx.reserve(n);
    for (auto [i, c] : e.multisets[s].counts) idx.insert(idx.end(), static_cast<std::size_t>(c), i);
    auto prob = make_problem(pool, std::move(idx));
    e.losses[s] = form == LossForm::kShifted ? shifted_loss(spec, prob) : decision_loss(spec, prob);
  });
  return e;
}

namespace detail {

// powers[a * (n + 1) + c] = q_a^c
inline std::vector<double> power_table(std::span<const double> q, std::size_t n) {
  std::vector<double> pw(q.size() * (n + 1));
  for (std::size_t a = 0; a < q.size(); ++a) {
    double v = 1.0;
    for (std::size_t c = 0; c <= n; ++c) {
      pw[a * (n + 1) + c] = v;
      v *= q[a];
    }
  }
  return pw;
}

inline void check_point(const ProblemEnumeration& e, std::span<const double> q) {
  if (q.size() != e.m)
    throw ArgumentError("oracle: point has " + std::to_string(q.size()) + " entries, pool has " + std::to_string(e.m));
}

}  // namespace detail

// sum over multisets of coefficient * prod q^count * loss (any q, not only
// probability vectors, so completeness can be checked with unit losses).
inline double polynomial_value(const ProblemEnumeration& e, std::span<const double> q,
                               std::span<const double> losses) {
  detail::check_point(e, q);
  const auto pw = detail::power_table(q, e.n);
  const std::size_t stride = e.n + 1;
  double total = 0.0;
  for (std::size_t s = 0; s < e.multisets.size(); ++s) {
    double term = e.multisets[s].coefficient * losses[s];
    for (auto [a, c] : e.multisets[s].counts) term *= pw[a * stride + c];
    total += term;
  }
  return total;
}

inline double exact_objective(const ProblemEnumeration& e, std::span<const double> q) {
  return polynomial_value(e, q, e.losses);
}

inline std::vector<double> exact_gradient(const ProblemEnumeration& e, std::span<const double> q) {
  detail::check_point(e, q);
  const auto pw = detail::power_table(q, e.n);
  const std::size_t stride = e.n + 1;
  std::vector<double> grad(e.m, 0.0);
  std::vector<double> prefix, factors;
  for (std::size_t s = 0; s < e.multisets.size(); ++s) {
    const auto& cs = e.multisets[s].counts;
    const double scale = e.multisets[s].coefficient * e.losses[s];
    if (scale == 0.0) continue;
    factors.resize(cs.size());
    for (std::size_t r = 0; r < cs.size(); ++r) factors[r] = pw[cs[r].first * stride + cs[r].second];
    // product of all factors except r, without dividing by q
    prefix.assign(cs.size() + 1, 1.0);
    for (std::size_t r = 0; r < cs.size(); ++r) prefix[r + 1] = prefix[r] * factors[r];
    double suffix = 1.0;
    for (std::size_t r = cs.size(); r-- > 0;) {
      auto [a, c] = cs[r];
      grad[a] += scale * c * pw[a * stride + (c - 1)] * prefix[r] * suffix;
      suffix *= factors[r];
    }
  }
  return grad;
}

// Row-major m x m.
inline std::vector<double> exact_hessian(const ProblemEnumeration& e, std::span<const double> q) {
  detail::check_point(e, q);
  const auto pw = detail::power_table(q, e.n);
  const std::size_t stride = e.n + 1;
  const std::size_t m = e.m;
  std::vector<double> h(m * m, 0.0);
  for (std::size_t s = 0; s < e.multisets.size(); ++s) {
    const auto& cs = e.multisets[s].counts;
    const double scale = e.multisets[s].coefficient * e.losses[s];
    if (scale == 0.0) continue;
    for (std::size_t r1 = 0; r1 < cs.size(); ++r1) {
      for (std::size_t r2 = r1; r2 < cs.size(); ++r2) {
        auto [a, ca] = cs[r1];
        auto [b, cb] = cs[r2];
        double term = scale;
        if (r1 == r2) {
          if (ca < 2) continue;
          term *= static_cast<double>(ca) * (ca - 1) * pw[a * stride + (ca - 2)];
        } else {
          term *= static_cast<double>(ca) * cb * pw[a * stride + (ca - 1)] * pw[b * stride + (cb - 1)];
        }
        for (std::size_t r = 0; r < cs.size(); ++r)
          if (r != r1 && r != r2) term *= pw[cs[r].first * stride + cs[r].second];
        h[a * m + b] += term;
        if (a != b) h[b * m + a] += term;
      }
    }
  }
  return h;
}

// True iff every Hessian entry is <= 1e-9 at q.
inline bool check_dr_submodular(const ProblemEnumeration& e, std::span<const double> q) {
  for (double x : exact_hessian(e, q))
    if (x > 1e-9) return false;
  return true;
}

struct OracleResult {
  std::vector<double> q;
  double value = 0.0;  // exact objective (in DL' units) at q
  bool grid_certified = false;
  int restarts_run = 0;
};

struct OracleConfig {
  int restarts = 20;
  int max_iterations = 500;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  double grid_step = 1e-3;  // used when m <= 3
};

namespace detail {

// Projected gradient ascent with backtracking on the exact polynomial.
inline std::pair<std::vector<double>, double> ascend(const ProblemEnumeration& e, std::vector<double> x,
                                                     std::span<const double> center, double rho, int max_iter) {
  double f = exact_objective(e, x);
  double eta = 1.0;
  for (int it = 0; it < max_iter; ++it) {
    auto g = exact_gradient(e, x);
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      std::vector<double> y(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + eta * g[i];
      y = project_to_ball(y, center, rho);
      double fy = exact_objective(e, y);
      double lin = 0.0, step = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        lin += g[i] * (y[i] - x[i]);
        step = std::max(step, std::abs(y[i] - x[i]));
      }
      if (step < 1e-13) break;
      if (fy >= f + 1e-4 * lin && fy > f) {
        moved = fy - f > 1e-15 * std::max(1.0, std::abs(f));
        x = std::move(y);
        f = fy;
        eta *= 2.0;
        break;
      }
      eta *= 0.5;
    }
    if (!moved) break;
  }
  return {std::move(x), f};
}

}  // namespace detail

// Multi-start projected gradient ascent over the chi-square ball around
// uniform, plus an exhaustive grid when m <= 3. Starts: the center, the
// farthest feasible point towards each vertex, then projected Dirichlet(1)
// draws.
inline OracleResult oracle_maximize(const ProblemEnumeration& e, double rho, const OracleConfig& cfg = {}) {
  if (cfg.restarts < 1) throw ArgumentError("oracle_maximize: restarts must be >= 1");
  if (!(rho >= 0.0)) throw ArgumentError("oracle_maximize: rho must be >= 0");
  const std::size_t m = e.m;
  const auto center = uniform_distribution(m);
  OracleResult best;
  if (rho == 0.0 || m == 1) {
    best.q = center;
    best.value = exact_objective(e, center);
    best.grid_certified = true;
    best.restarts_run = 0;
    return best;
  }

  std::vector<std::vector<double>> starts;
  starts.push_back(center);
  for (std::size_t i = 0; i < m && starts.size() < static_cast<std::size_t>(cfg.restarts); ++i) {
    std::vector<double> vertex(m, 0.0);
    vertex[i] = 1.0;
    double alpha = std::min(1.0, std::sqrt(rho / chi_square_div(vertex, center)));
    std::vector<double> s(m);
    for (std::size_t a = 0; a < m; ++a) s[a] = center[a] + alpha * (vertex[a] - center[a]);
    starts.push_back(project_to_ball(s, center, rho));
  }
  for (std::uint64_t r = 0; starts.size() < static_cast<std::size_t>(cfg.restarts); ++r) {
    CounterRng rng{cfg.seed, static_cast<std::uint64_t>(Stream::kOracleRestart), r};
    std::vector<double> s(m);
    double total = 0.0;
    for (auto& x : s) {
      x = -std::log(1.0 - rng.uniform());
      total += x;
    }
    for (auto& x : s) x /= total;
    starts.push_back(project_to_ball(s, center, rho));
  }

  std::vector<std::pair<std::vector<double>, double>> results(starts.size());
  parallel_for(starts.size(), cfg.workers,
               [&](std::size_t i) { results[i] = detail::ascend(e, starts[i], center, rho, cfg.max_iterations); });
  best.q = results[0].first;
  best.value = results[0].second;
  for (std::size_t i = 1; i < results.size(); ++i)
    if (results[i].second > best.value) {
      best.q = results[i].first;
      best.value = results[i].second;
    }
  best.restarts_run = static_cast<int>(starts.size());

  if (m <= 3) {
    const int steps = static_cast<int>(std::lround(1.0 / cfg.grid_step));
    auto consider = [&](const std::vector<double>& q) {
      if (chi_square_div(q, center) > rho) return;
      double v = exact_objective(e, q);
      if (v > best.value) {
        best.value = v;
        best.q = q;
      }
    };
    std::vector<double> q(m);
    if (m == 2) {
      for (int i = 0; i <= steps; ++i) {
        q = {i / static_cast<double>(steps), (steps - i) / static_cast<double>(steps)};
        consider(q);
      }
    } else {
      for (int i = 0; i <= steps; ++i)
        for (int j = 0; i + j <= steps; ++j) {
          q = {i / static_cast<double>(steps), j / static_cast<double>(steps),
               (steps - i - j) / static_cast<double>(steps)};
          consider(q);
        }
    }
    best.grid_certified = true;
  }
  return best;
}

}  // namespace wcshift
