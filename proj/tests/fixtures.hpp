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

#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "wcshift/wcshift.hpp"

namespace wcshift::testing {

struct Person {
  double label;
  double score;
  double cost = 1.0;
  int group = 0;
};

// Cohort whose predictions are given directly, one pool per inner vector.
struct TableCohort {
  Cohort cohort;
  ScoreCache scores;
};

inline TableCohort table_cohort(Task task, const std::vector<std::vector<Person>>& pools, int num_groups = 1) {
  TableCohort t;
  t.cohort.task = task;
  for (int g = 0; g < num_groups; ++g) t.cohort.schema.group_vocab.push_back("g" + std::to_string(g));
  for (std::size_t j = 0; j < pools.size(); ++j) {
    InstancePool pool;
    pool.instance_id = "p" + std::to_string(j);
    std::vector<double> s;
    for (std::size_t i = 0; i < pools[j].size(); ++i) {
      IndividualRecord r;
      r.id = pool.instance_id + "_" + std::to_string(i);
      r.label = pools[j][i].label;
      r.cost = pools[j][i].cost;
      r.group = pools[j][i].group;
      pool.individuals.push_back(r);
      s.push_back(pools[j][i].score);
    }
    t.cohort.pools.push_back(std::move(pool));
    t.scores.push_back(std::move(s));
  }
  return t;
}

inline PreparedPool table_pool(Task task, const std::vector<Person>& people, int num_groups = 1) {
  auto t = table_cohort(task, {people}, num_groups);
  return prepare_pool(t.cohort.pools[0], t.scores[0], task, static_cast<std::size_t>(num_groups));
}

// Random tiny pool with labels, scores, integer costs and two groups.
inline PreparedPool random_pool(std::mt19937_64& gen, Task task, std::size_t m) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Person> people;
  for (std::size_t i = 0; i < m; ++i) {
    Person p{};
    if (task == Task::kBinary) {
      p.label = u(gen) < 0.5 ? 1.0 : 0.0;
      p.score = u(gen);
    } else {
      p.label = 1.0 + 9.0 * u(gen);
      p.score = 1.0 + 9.0 * u(gen);
    }
    p.cost = 1.0 + std::floor(3.0 * u(gen));
    p.group = static_cast<int>(i % 2);
    people.push_back(p);
  }
  return table_pool(task, people, 2);
}

// Random strictly positive point of the simplex inside the chi-square ball
// of radius rho around uniform.
inline std::vector<double> random_interior_point(std::mt19937_64& gen, std::size_t m, double rho) {
  std::gamma_distribution<double> g(1.0, 1.0);
  std::vector<double> y(m);
  double s = 0.0;
  for (auto& v : y) s += (v = g(gen));
  for (auto& v : y) v /= s;
  auto p = uniform_distribution(m);
  double div = chi_square_div(y, p);
  double t = div > 0.0 ? std::min(1.0, 0.9 * std::sqrt(rho / div)) : 1.0;
  for (std::size_t i = 0; i < m; ++i) y[i] = p[i] + t * (y[i] - p[i]);
  for (auto& v : y) v = std::max(v, 1e-6);
  s = 0.0;
  for (double v : y) s += v;
  for (auto& v : y) v /= s;
  return y;
}

inline std::vector<LossSpec> variants_for(Task task) {
  if (task == Task::kBinary)
    return {LossSpec(TopK{2}), LossSpec(Knapsack{}), LossSpec(FairnessGini{2}), LossSpec(MisclassRate{}),
            LossSpec(CrossEntropy{})};
  return {LossSpec(TopK{2}), LossSpec(Knapsack{}), LossSpec(NashWelfare{5.0, 1.0}), LossSpec(Mse{10.0})};
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("wcshift_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace wcshift::testing
