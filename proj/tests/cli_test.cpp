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

#include "cli.hpp"
#include "fixtures.hpp"

namespace wcshift::cli {
namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = run(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

TEST(ParseLoss, ShortForms) {
  EXPECT_EQ(parse_loss("topk:k=3"), LossSpec(TopK{3}));
  EXPECT_EQ(parse_loss("utility:budget=5,c=2"), LossSpec(NashWelfare{5.0, 2.0}));
  EXPECT_EQ(parse_loss("acc"), LossSpec(MisclassRate{0.5}));
  auto k = std::get<Knapsack>(parse_loss("knapsack:budget=4,unit=1").variant);
  EXPECT_EQ(k.budget, 4.0);
  EXPECT_FALSE(k.use_costs);
  EXPECT_EQ(parse_loss(R"({"type":"mse","scale":5})"), LossSpec(Mse{5.0}));
}

TEST(ParseLoss, UtilityConstantDefaultsToSmallestIncome) {
  auto t = testing::table_cohort(Task::kRegression, {{{4.0, 1.0}, {2.5, 1.0}}, {{7.0, 1.0}}});
  EXPECT_EQ(parse_loss("utility:budget=3", &t.cohort), LossSpec(NashWelfare{3.0, 2.5}));
  EXPECT_EQ(parse_loss("utility:budget=3,c=1", &t.cohort), LossSpec(NashWelfare{3.0, 1.0}));
  t.cohort.pools[0].individuals[0].label = 0.0;
  EXPECT_THROW(parse_loss("utility", &t.cohort), ConfigError);
}

TEST(ParseLoss, RejectsUnknownNamesAndKeys) {
  EXPECT_THROW(parse_loss("regret"), ConfigError);
  EXPECT_THROW(parse_loss("topk:n=2"), ConfigError);
  EXPECT_THROW(parse_loss("topk:k"), ConfigError);
  EXPECT_THROW(parse_loss("topk:k=x"), ConfigError);
  EXPECT_THROW(parse_loss("topk:k=0"), ConfigError);
}

TEST(Run, HelpAndVersionSucceed) {
  EXPECT_EQ(invoke({"--help"}).code, kOk);
  auto v = invoke({"--version"});
  EXPECT_EQ(v.code, kOk);
  EXPECT_NE(v.out.find(WCSHIFT_VERSION), std::string::npos);
  EXPECT_EQ(invoke({"find-worst", "--help"}).code, kOk);
}

TEST(Run, ExitCodesByErrorKind) {
  testing::TempDir dir;
  EXPECT_EQ(invoke({}).code, kConfigExit);
  EXPECT_EQ(invoke({"bogus"}).code, kConfigExit);
  auto missing = invoke({"find-worst", "--cohort", dir.file("c.json")});
  EXPECT_EQ(missing.code, kConfigExit);
  EXPECT_NE(missing.err.find("--model"), std::string::npos);
  auto nofile = invoke({"train", "--cohort", dir.file("absent.json"), "--out", dir.file("m.json")});
  EXPECT_EQ(nofile.code, kDataExit);
}

TEST(Run, UnknownConfigKeyIsConfigError) {
  testing::TempDir dir;
  testing::write_text(dir.file("cfg.json"), R"({"k": 2, "colour": "red"})");
  auto r = invoke({"synth", "--config", dir.file("cfg.json"), "--out", dir.file("c.json")});
  EXPECT_EQ(r.code, kConfigExit);
  EXPECT_NE(r.err.find("colour"), std::string::npos);
}

TEST(Run, CommandLineOverridesConfig) {
  testing::TempDir dir;
  testing::write_text(dir.file("cfg.json"), R"({"k": 2, "m": 3})");
  ASSERT_EQ(invoke({"synth", "--config", dir.file("cfg.json"), "--m", "4", "--out", dir.file("c.json")}).code, kOk);
  auto c = read_cohort_json(dir.file("c.json"));
  EXPECT_EQ(c.num_instances(), 2u);
  EXPECT_EQ(c.pools[0].size(), 4u);
}

TEST(Manifest, RecordsConfigAndReplaysIdentically) {
  testing::TempDir dir;
  ASSERT_EQ(invoke({"synth", "--k", "2", "--m", "4", "--out", dir.file("c.json")}).code, kOk);
  ASSERT_EQ(invoke({"train", "--cohort", dir.file("c.json"), "--epochs", "5", "--out", dir.file("m.json")}).code, kOk);
  auto r = invoke({"find-worst", "--cohort", dir.file("c.json"), "--model", dir.file("m.json"), "--loss", "topk:k=1",
                   "--iterations", "2", "--samples", "100", "--samples2", "100", "--out", dir.file("r.json")});
  ASSERT_EQ(r.code, kOk) << r.err;
  auto manifest = read_config_file(dir.file("r.json.manifest.json"));
  EXPECT_EQ(manifest.at("subcommand"), "find-worst");
  EXPECT_EQ(manifest.at("config").at("rho_ind"), 4.0);
  EXPECT_EQ(manifest.at("config").at("baseline"), true);
  auto hash = manifest.at("outputs").at(0).at("sha256").get<std::string>();
  EXPECT_EQ(hash, sha256_file(dir.file("r.json")));

  std::filesystem::remove(dir.file("r.json"));
  ASSERT_EQ(invoke({"--config", dir.file("r.json.manifest.json"), "--workers", "2"}).code, kOk);
  EXPECT_EQ(sha256_file(dir.file("r.json")), hash);
}

TEST(Demo, BundledConfigRunsAndReplays) {
  testing::TempDir dir;
  const std::string data = WCSHIFT_DATA_DIR;
  std::vector<std::string> args{"find-worst", "--config", data + "/demo_find_worst.json", "--cohort",
                                data + "/demo_cohort.csv", "--schema", data + "/demo_schema.json", "--model",
                                data + "/demo_scores.csv", "--samples", "500", "--out", dir.file("report.json")};
  auto r = invoke(args);
  ASSERT_EQ(r.code, kOk) << r.err;
  auto report = read_config_file(dir.file("report.json"));
  EXPECT_EQ(report.at("shift").at("instances").size(), 2u);
  auto first = sha256_file(dir.file("report.json"));
  ASSERT_EQ(invoke(args).code, kOk);
  EXPECT_EQ(sha256_file(dir.file("report.json")), first);
}

TEST(Demo, NegativeRadiusIsConfigError) {
  testing::TempDir dir;
  const std::string data = WCSHIFT_DATA_DIR;
  auto r = invoke({"find-worst", "--cohort", data + "/demo_cohort.csv", "--schema", data + "/demo_schema.json",
                   "--model", data + "/demo_scores.csv", "--loss", "acc", "--rho-ind", "-1", "--out",
                   dir.file("r.json")});
  EXPECT_EQ(r.code, kConfigExit);
  EXPECT_NE(r.err.find("rho_ind"), std::string::npos);
}

TEST(Manifest, RejectsManifestOfAnotherSubcommand) {
  testing::TempDir dir;
  ASSERT_EQ(invoke({"synth", "--k", "1", "--m", "2", "--out", dir.file("c.json")}).code, kOk);
  auto r = invoke({"train", "--config", dir.file("c.json.manifest.json")});
  EXPECT_EQ(r.code, kConfigExit);
}

TEST(Sha256, KnownDigest) {
  testing::TempDir dir;
  testing::write_text(dir.file("abc"), "abc");
  EXPECT_EQ(sha256_file(dir.file("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}  // namespace
}  // namespace wcshift::cli
