// p13n/tests/experiment_test.cc
//
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
//
// Copyright 2026 The p13n-fusion Authors.

#include "p13n/experiment.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "p13n/errors.h"
#include "p13n/util.h"

namespace p13n {
namespace {

namespace fs = std::filesystem;

ExperimentConfig Small() {
  ExperimentConfig c;
  c.seed = 3;
  c.vocab_size = 512;
  c.synthetic.users_per_split = 3;
  c.synthetic.utterances_per_user = 12;
  c.synthetic.lm_sentences_per_user = 700;
  c.synthetic.general_sentences = 4000;
  c.limited_sizes = {100, 300, 600};
  c.bootstrap.resamples = 500;
  return c;
}

fs::path TempDir(const std::string &name) {
  auto d = fs::temp_directory_path() / ("p13n_experiment_test_" + name);
  fs::remove_all(d);
  return d;
}

TEST(ExperimentConfig, RoundTripAndHash) {
  auto c = Small();
  c.decoder.ext_weight = 0.22;
  c.sweep_weights = {0, 0.15};
  c.preset = Preset::kLimited;
  c.capacity = Capacity::kL;
  auto back = ExperimentConfig::Parse(c.Serialize());
  EXPECT_EQ(back.Serialize(), c.Serialize());
  EXPECT_EQ(back.Hash(), c.Hash());
  EXPECT_EQ(back.decoder.ext_weight, 0.22);
  EXPECT_EQ(back.limited_sizes, c.limited_sizes);
  EXPECT_NE(Small().Hash(), c.Hash());
  EXPECT_NE(c.Serialize().find("ext_weight = 0.22\n"), std::string::npos);
}

TEST(ExperimentConfig, PartialTextKeepsDefaults) {
  auto c = ExperimentConfig::Parse("# comment\n[run]\npreset = BL2\nseed = 9\n\n[lm]\ncapacity = S\n");
  EXPECT_EQ(c.preset, Preset::kBL2);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.capacity, Capacity::kS);
  EXPECT_EQ(c.decoder.ext_weight, 0.15);
  EXPECT_EQ(c.synthetic.users_per_split, 20u);
}

TEST(ExperimentConfig, RejectsUnknownAndMalformed) {
  EXPECT_THROW(ExperimentConfig::Parse("[run]\nprest = BL1\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::Parse("[nope]\nseed = 1\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::Parse("[run]\nseed = abc\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::Parse("[run]\npreset = BL9\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::Parse("[limited]\nsizes = 500,200\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::Load("/nonexistent/p13n.ini"), Error);
}

TEST(Preset, NamesRoundTrip) {
  for (auto p : {Preset::kBL1, Preset::kBL2, Preset::kBL3, Preset::kP13N, Preset::kLimited,
                 Preset::kAdapt})
    EXPECT_EQ(ParsePreset(PresetName(p)), p);
  EXPECT_THROW(ParsePreset("bogus"), ConfigError);
}

class SmallExperiment : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { exp_ = new Experiment(Small()); }
  static void TearDownTestSuite() { delete exp_; }
  static Experiment *exp_;
};
Experiment *SmallExperiment::exp_ = nullptr;

TEST_F(SmallExperiment, Shape) {
  EXPECT_EQ(exp_->splits(), (std::vector<std::string>{"clean", "other"}));
  EXPECT_EQ(exp_->num_users(), 6u);
  for (std::size_t u = 0; u < exp_->num_users(); ++u) {
    EXPECT_EQ(exp_->lattices(u).size(), 12u);
    EXPECT_EQ(exp_->references(u).size(), 12u);
  }
  EXPECT_EQ(exp_->wpm().size(), 512u);
  EXPECT_TRUE(exp_->InputsRead().empty());
}

TEST_F(SmallExperiment, DecoderConfigsPerSystem) {
  EXPECT_EQ(exp_->DecoderFor({System::kBL1}).ext_weight, 0.0);
  EXPECT_EQ(exp_->DecoderFor({System::kBL1}).ilm_weight, 0.0);
  EXPECT_EQ(exp_->DecoderFor({System::kP13N}).ext_weight, 0.15);
  SystemSpec zero{System::kP13N};
  zero.ext_weight = 0.0;
  EXPECT_EQ(exp_->DecoderFor(zero).ilm_weight, 0.0);
  SystemSpec s{System::kP13N};
  s.capacity = Capacity::kS;
  s.lm_size = 200;
  s.ext_weight = 0.22;
  EXPECT_EQ(s.Label(), "P13N-S@200/w0.22");
}

TEST_F(SmallExperiment, WeightZeroEqualsNoFusion) {
  auto bl1 = exp_->Evaluate({System::kBL1});
  SystemSpec zero{System::kP13N};
  zero.ext_weight = 0.0;
  auto p0 = exp_->Evaluate(zero);
  ASSERT_EQ(bl1.splits.size(), p0.splits.size());
  for (std::size_t s = 0; s < bl1.splits.size(); ++s) {
    EXPECT_EQ(bl1.splits[s].macro.mean, p0.splits[s].macro.mean);
    EXPECT_EQ(bl1.splits[s].pooled, p0.splits[s].pooled);
    for (std::size_t u = 0; u < bl1.splits[s].users.size(); ++u)
      for (std::size_t k = 0; k < bl1.splits[s].users[u].outputs.size(); ++k)
        EXPECT_EQ(bl1.splits[s].users[u].outputs[k].hypothesis,
                  p0.splits[s].users[u].outputs[k].hypothesis);
  }
}

TEST_F(SmallExperiment, PersonalLmHelps) {
  auto bl1 = exp_->Evaluate({System::kBL1});
  auto p13n = exp_->Evaluate({System::kP13N});
  for (const auto &split : exp_->splits())
    EXPECT_LT(p13n.Split(split).macro.mean, bl1.Split(split).macro.mean) << split;
}

TEST_F(SmallExperiment, LimitedUsersAndNestedSizes) {
  auto users = exp_->LimitedUsers();
  EXPECT_FALSE(users.empty());
  for (auto u : users) EXPECT_GE(exp_->PersonalSentences(u).size(), 600u);
  auto a = exp_->PersonalLm(users[0], Capacity::kM, 100);
  auto b = exp_->PersonalLm(users[0], Capacity::kM, 100);
  EXPECT_EQ(a.get(), b.get());
  EXPECT_NE(exp_->PersonalLm(users[0], Capacity::kM, 300)->Hash(), a->Hash());
}

TEST_F(SmallExperiment, AdaptUsersHaveEnoughUtterances) {
  auto users = exp_->AdaptUsers();
  EXPECT_EQ(users.size(), exp_->num_users());
  auto r = exp_->Evaluate({System::kAdaptP13N}, users);
  EXPECT_EQ(r.splits.size(), 2u);
}

TEST(Experiment, RunIsDeterministic) {
  auto c = Small();
  c.preset = Preset::kBL2;
  const auto d1 = TempDir("det1"), d2 = TempDir("det2");
  Experiment e1(c);
  auto o1 = RunPreset(e1, d1);
  Experiment e2(c);
  auto o2 = RunPreset(e2, d2);
  ASSERT_EQ(o1.files, o2.files);
  for (const auto &f : o1.files) {
    if (f == "manifest.json") continue;
    EXPECT_EQ(ReadFile(d1 / f), ReadFile(d2 / f)) << f;
  }
  for (const char *name : {"report.tsv", "per_user.tsv", "table.txt", "config.ini",
                           "histogram_markers.tsv", "manifest.json"})
    EXPECT_NE(std::find(o1.files.begin(), o1.files.end(), fs::path(name)), o1.files.end()) << name;
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(Experiment, BaselinesNeverReadPersonalText) {
  const auto data = TempDir("data");
  auto c = Small();
  WriteSyntheticDataset(GenerateSynthetic(c.synthetic, c.seed), data);
  c.dataset = data.string();

  auto lm_files = [](const std::vector<fs::path> &paths) {
    return std::count_if(paths.begin(), paths.end(), [](const fs::path &p) {
      return p.string().find("lm_data") != std::string::npos;
    });
  };
  for (auto preset : {Preset::kBL1, Preset::kBL2}) {
    c.preset = preset;
    Experiment e(c);
    const auto out = TempDir("bl_out");
    RunPreset(e, out);
    EXPECT_EQ(lm_files(e.InputsRead()), 0) << PresetName(preset);
    EXPECT_EQ(ReadFile(out / "manifest.json").find("lm_data"), std::string::npos);
    EXPECT_NE(ReadFile(out / "manifest.json").find("metadata.tsv"), std::string::npos);
    fs::remove_all(out);
  }
  c.preset = Preset::kP13N;
  Experiment e(c);
  const auto out = TempDir("p13n_out");
  RunPreset(e, out);
  EXPECT_GT(lm_files(e.InputsRead()), 0);
  EXPECT_TRUE(fs::exists(out / "winloss.tsv"));
  fs::remove_all(out);
  fs::remove_all(data);
}

TEST(Experiment, LimitedAndSweepReports) {
  auto c = Small();
  c.sweep_weights = {0, 0.15, 0.55};
  Experiment e(c);
  const auto out = TempDir("limited");
  RunLimited(e, out / "limited");
  const auto trend = ReadFile(out / "limited" / "trend.tsv");
  // Header, then per split: BL1, BL2, three sizes and "all".
  EXPECT_EQ(std::count(trend.begin(), trend.end(), '\n'), 1 + 2 * 6);
  EXPECT_NE(trend.find("\tp13n\tall\t"), std::string::npos);
  EXPECT_NE(trend.find("\tp13n\t300\t"), std::string::npos);

  RunSweep(e, out / "sweep");
  const auto sweep = ReadFile(out / "sweep" / "sweep.tsv");
  EXPECT_EQ(std::count(sweep.begin(), sweep.end(), '\n'), 1 + 2 * 5);

  auto bl1 = e.Evaluate({System::kBL1});
  const std::string none_row =
      "clean\tnone\t0\t3\t" + FixedDouble(100 * bl1.Split("clean").macro.mean, 4) + "\t";
  EXPECT_NE(sweep.find(none_row), std::string::npos) << sweep;
  fs::remove_all(out);
}

TEST(Experiment, SweepRejectsEmptyWeights) {
  auto c = Small();
  c.sweep_weights = {};
  Experiment e(c);
  EXPECT_THROW(RunSweep(e, TempDir("empty")), ConfigError);
}

}  // namespace
}  // namespace p13n
