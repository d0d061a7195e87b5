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

// The two-level chi-square shift set. Distributions are stored as offsets
// from the uniform empirical center so that the zero vector is feasible.
//
// Divergence convention: D(q, p) = sum_i (q_i - p_i)^2 / p_i (no 1/2).

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wcshift/error.hpp"

namespace wcshift {

inline constexpr double kSumTol = 1e-9;
inline constexpr double kFeasTol = 1e-9;

// kChiSquareHalf measures radii against D/2, so it is the same ball as
// kChiSquare with both radii doubled.
enum class Divergence { kChiSquare, kChiSquareHalf };

struct UncertaintyBudget {
  double rho_ind = 0.0;  // within-instance radius
  double rho_xi = 0.0;   // across-instance radius
  Divergence divergence = Divergence::kChiSquare;

  // Radii in the D(q, p) convention used by the geometry routines.
  double ind_radius() const { return divergence == Divergence::kChiSquareHalf ? 2.0 * rho_ind : rho_ind; }
  double xi_radius() const { return divergence == Divergence::kChiSquareHalf ? 2.0 * rho_xi : rho_xi; }

  bool operator==(const UncertaintyBudget&) const = default;
};

inline void validate(const UncertaintyBudget& b) {
  if (!(b.rho_ind >= 0.0) || !std::isfinite(b.rho_ind)) throw ConfigError("rho_ind must be a finite value >= 0");
  if (!(b.rho_xi >= 0.0) || !std::isfinite(b.rho_xi)) throw ConfigError("rho_xi must be a finite value >= 0");
}

// Offsets from uniform: w_xi over instances, w_ind[j] over pool j.
struct HierarchicalShift {
  std::vector<std::string> instance_ids;
  std::vector<double> w_xi;
  std::vector<std::vector<double>> w_ind;

  bool operator==(const HierarchicalShift&) const = default;
};

inline double chi_square_div(std::span<const double> q, std::span<const double> p) {
  if (q.size() != p.size())
    throw ArgumentError("chi_square_div: length mismatch (" + std::to_string(q.size()) + " vs " +
                        std::to_string(p.size()) + ")");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] > 0.0)) throw ArgumentError("chi_square_div: center has non-positive entry at index " + std::to_string(i));
    d += (q[i] - p[i]) * (q[i] - p[i]) / p[i];
  }
  return d;
}

inline std::vector<double> uniform_distribution(std::size_t m) {
  return std::vector<double>(m, 1.0 / static_cast<double>(m));
}

inline std::vector<double> offset_to_distribution(std::span<const double> w) {
  if (w.empty()) throw InfeasibleOffsetError("offset_to_distribution: empty offset");
  const double base = 1.0 / static_cast<double>(w.size());
  double sum = std::accumulate(w.begin(), w.end(), 0.0);
  if (std::abs(sum) > kSumTol)
    throw InfeasibleOffsetError("offset_to_distribution: offsets sum to " + std::to_string(sum) + ", not 0");
  std::vector<double> q(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] < -base - kSumTol)
      throw InfeasibleOffsetError("offset_to_distribution: offset " + std::to_string(w[i]) + " at index " +
                                  std::to_string(i) + " is below -1/m");
    q[i] = std::max(0.0, w[i] + base);
  }
  return q;
}

inline std::vector<double> distribution_to_offset(std::span<const double> q) {
  const double base = 1.0 / static_cast<double>(q.size());
  std::vector<double> w(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) w[i] = q[i] - base;
  return w;
}

namespace detail {

// Solves sum_i max(0, a_i - b_i s) = 1 for s (b_i > 0) and returns the
// resulting vector. Exact: walks the breakpoints a_i / b_i in decreasing
// order, growing the active set until the threshold is consistent.
inline std::vector<double> threshold_to_unit_mass(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x] / b[x] > a[y] / b[y]; });
  double sa = 0.0, sb = 0.0, s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    sa += a[order[j]];
    sb += b[order[j]];
    s = (sa - 1.0) / sb;
    if (j + 1 == n || s >= a[order[j + 1]] / b[order[j + 1]]) break;
  }
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) q[i] = std::max(0.0, a[i] - b[i] * s);
  return q;
}

inline void check_center(std::span<const double> p, double rho, const char* who) {
  if (p.empty()) throw ArgumentError(std::string(who) + ": empty center");
  for (std::size_t i = 0; i < p.size(); ++i)
    if (!(p[i] > 0.0)) throw ArgumentError(std::string(who) + ": center must be strictly positive");
  if (!(rho >= 0.0)) throw ArgumentError(std::string(who) + ": rho must be >= 0");
}

}  // namespace detail

// Linear maximization oracle over {q in simplex : D(q, p) <= rho}.
//
// Stationarity gives q_i = p_i * max(0, 1 + t (v_i - mu)) with t = 1/(2 lambda);
// mu is fixed exactly by the unit-mass condition and t by bisection on the
// divergence constraint. The returned point is always on the feasible side.
inline std::vector<double> gradmax(std::span<const double> v, std::span<const double> p, double rho) {
  detail::check_center(p, rho, "gradmax");
  if (v.size() != p.size()) throw ArgumentError("gradmax: gradient and center differ in length");
  const std::size_t n = p.size();
  auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double vmin = *lo_it, vmax = *hi_it;
  std::vector<double> center(p.begin(), p.end());
  if (!(vmax > vmin) || rho == 0.0) return center;

  // Best face: every maximizer of <v, q> over the simplex lives on it.
  std::size_t first = static_cast<std::size_t>(hi_it - v.begin());
  for (std::size_t i = 0; i < n; ++i)
    if (v[i] == vmax) {
      first = i;
      break;
    }
  std::vector<double> vertex(n, 0.0);
  vertex[first] = 1.0;
  if (chi_square_div(vertex, p) <= rho) return vertex;
  std::vector<double> face(n, 0.0);
  double face_mass = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (v[i] == vmax) face_mass += p[i];
  for (std::size_t i = 0; i < n; ++i)
    if (v[i] == vmax) face[i] = p[i] / face_mass;
  if (chi_square_div(face, p) <= rho) return face;

  // Scale-free gradient in [-1, 0].
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = (v[i] - vmax) / (vmax - vmin);
  std::vector<double> a(n);
  auto point = [&](double t) {
    for (std::size_t i = 0; i < n; ++i) a[i] = p[i] * (1.0 + t * g[i]);
    return detail::threshold_to_unit_mass(a, p);
  };
  double t_lo = 0.0, t_hi = 1.0;
  std::vector<double> q_lo = center;
  for (int i = 0; i < 200; ++i) {
    auto q = point(t_hi);
    if (chi_square_div(q, p) > rho) break;
    t_lo = t_hi;
    q_lo = std::move(q);
    t_hi *= 2.0;
  }
  for (int it = 0; it < 200 && t_hi - t_lo > 1e-10 * std::max(1.0, t_hi); ++it) {
    double t = 0.5 * (t_lo + t_hi);
    auto q = point(t);
    if (chi_square_div(q, p) <= rho) {
      t_lo = t;
      q_lo = std::move(q);
    } else {
      t_hi = t;
    }
  }
  return q_lo;
}

// Euclidean projection of y onto {q in simplex : D(q, p) <= rho}, from the
// same stationarity argument: q_i = max(0, (y_i + lambda - mu) p_i / (p_i + lambda)).
inline std::vector<double> project_to_ball(std::span<const double> y, std::span<const double> p, double rho) {
  detail::check_center(p, rho, "project_to_ball");
  if (y.size() != p.size()) throw ArgumentError("project_to_ball: point and center differ in length");
  const std::size_t n = p.size();
  std::vector<double> center(p.begin(), p.end());
  if (rho == 0.0) return center;
  std::vector<double> a(n), b(n);
  auto point = [&](double lambda) {
    for (std::size_t i = 0; i < n; ++i) {
      b[i] = p[i] / (p[i] + lambda);
      a[i] = (y[i] + lambda) * b[i];
    }
    return detail::threshold_to_unit_mass(a, b);
  };
  auto q0 = point(0.0);
  if (chi_square_div(q0, p) <= rho) return q0;
  double l_lo = 0.0, l_hi = 1.0;
  std::vector<double> q_hi;
  for (int i = 0; i < 200; ++i) {
    q_hi = point(l_hi);
    if (chi_square_div(q_hi, p) <= rho) break;
    l_lo = l_hi;
    l_hi *= 2.0;
  }
  if (chi_square_div(q_hi, p) > rho) return center;
  for (int it = 0; it < 200 && l_hi - l_lo > 1e-12 * std::max(1.0, l_hi); ++it) {
    double l = 0.5 * (l_lo + l_hi);
    auto q = point(l);
    if (chi_square_div(q, p) <= rho) {
      l_hi = l;
      q_hi = std::move(q);
    } else {
      l_lo = l;
    }
  }
  return q_hi;
}

struct FeasibilityResult {
  bool feasible = true;
  std::string violation;  // first violated constraint, empty when feasible
};

namespace detail {

inline std::string check_offset(std::span<const double> w, double rho, const std::string& name,
                                const char* radius_name) {
  if (w.empty()) return name + ": empty offset vector";
  const double base = 1.0 / static_cast<double>(w.size());
  double sum = std::accumulate(w.begin(), w.end(), 0.0);
  if (std::abs(sum) > kSumTol) return name + ": offsets sum to " + std::to_string(sum);
  for (std::size_t i = 0; i < w.size(); ++i)
    if (w[i] < -base - kSumTol) return name + "[" + std::to_string(i) + "]: negative probability";
  if (rho == 0.0) {
    for (std::size_t i = 0; i < w.size(); ++i)
      if (std::abs(w[i]) > 1e-15) return name + ": nonzero offset with " + radius_name + " = 0";
    return {};
  }
  std::vector<double> q(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) q[i] = w[i] + base;
  double d = chi_square_div(q, uniform_distribution(w.size()));
  if (d > rho + kFeasTol)
    return name + ": chi-square divergence " + std::to_string(d) + " exceeds " + radius_name + " = " +
           std::to_string(rho);
  return {};
}

}  // namespace detail

inline FeasibilityResult is_feasible_offset(std::span<const double> w, double rho) {
  auto v = detail::check_offset(w, rho, "w", "rho");
  return {v.empty(), v};
}

inline FeasibilityResult is_feasible(const HierarchicalShift& shift, const UncertaintyBudget& budget) {
  if (shift.w_xi.size() != shift.w_ind.size())
    return {false, "w_xi has " + std::to_string(shift.w_xi.size()) + " entries for " +
                       std::to_string(shift.w_ind.size()) + " instances"};
  if (auto v = detail::check_offset(shift.w_xi, budget.xi_radius(), "w_xi", "rho_xi"); !v.empty()) return {false, v};
  for (std::size_t j = 0; j < shift.w_ind.size(); ++j) {
    std::string name = "w_ind[" + (j < shift.instance_ids.size() ? shift.instance_ids[j] : std::to_string(j)) + "]";
    if (auto v = detail::check_offset(shift.w_ind[j], budget.ind_radius(), name, "rho_ind"); !v.empty()) return {false, v};
  }
  return {};
}

inline std::string to_string(Divergence d) { return d == Divergence::kChiSquareHalf ? "chi_square_half" : "chi_square"; }

inline Divergence divergence_from_string(const std::string& s) {
  if (s == "chi_square") return Divergence::kChiSquare;
  if (s == "chi_square_half") return Divergence::kChiSquareHalf;
  throw ConfigError("unknown divergence '" + s + "' (expected chi_square or chi_square_half)");
}

inline nlohmann::json to_json(const UncertaintyBudget& b) {
  return {{"rho_ind", b.rho_ind}, {"rho_xi", b.rho_xi}, {"divergence", to_string(b.divergence)}};
}

inline UncertaintyBudget budget_from_json(const nlohmann::json& j) {
  UncertaintyBudget b;
  try {
    b.rho_ind = j.at("rho_ind").get<double>();
    b.rho_xi = j.at("rho_xi").get<double>();
    if (j.contains("divergence")) b.divergence = divergence_from_string(j.at("divergence").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("budget: ") + e.what());
  }
  validate(b);
  return b;
}

inline nlohmann::json to_json(const HierarchicalShift& s, const UncertaintyBudget& b) {
  nlohmann::json inst = nlohmann::json::array();
  for (std::size_t j = 0; j < s.w_ind.size(); ++j)
    inst.push_back({{"instance_id", j < s.instance_ids.size() ? s.instance_ids[j] : std::to_string(j)},
                    {"w_xi", s.w_xi[j]},
                    {"w_ind", s.w_ind[j]}});
  return {{"budget", to_json(b)}, {"instances", std::move(inst)}};
}

inline HierarchicalShift shift_from_json(const nlohmann::json& j) {
  HierarchicalShift s;
  try {
    for (const auto& ij : j.at("instances")) {
      s.instance_ids.push_back(ij.at("instance_id").get<std::string>());
      s.w_xi.push_back(ij.at("w_xi").get<double>());
      s.w_ind.push_back(ij.at("w_ind").get<std::vector<double>>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("shift json: ") + e.what());
  }
  return s;
}

}  // namespace wcshift
