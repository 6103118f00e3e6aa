// Copyright 2026 The cupul Authors.
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


#include <gtest/gtest.h>

#include "test_util.hpp"

namespace cupul {
namespace {

TEST(Config, MinimalConfigGetsDefaults) {
  const auto c = PipelineConfig::from_json({{"train", "t.conll"}, {"dict", "d.tsv"}, {"test", "x.conll"}}, "/data");
  EXPECT_EQ(c.voters.count, 5);
  EXPECT_EQ(c.curriculum.eta, 5);
  EXPECT_EQ(c.schedule.stage_epochs, 2);
  EXPECT_EQ(c.schedule.learning_rate, 1e-3);
  EXPECT_EQ(c.mode, Mode::kCupul);
  EXPECT_EQ(c.resolve(c.train), std::filesystem::path("/data/t.conll"));
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, JsonRoundTrip) {
  PipelineConfig c;
  c.train = "a";
  c.test = "b";
  c.mode = Mode::kSoftLabelCurriculum;
  c.voters.count = 7;
  c.schedule.conf_mpu.gamma = 3.0;
  c.schedule.conf_mpu.clamp = ClampMode::kAggregate;
  c.priors = std::vector<double>{0.1, 0.2};
  const auto back = PipelineConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(Config, RejectsBadInput) {
  using nlohmann::json;
  EXPECT_THROW(PipelineConfig::from_json({{"train", "a"}, {"bogus", 1}}), FormatError);
  EXPECT_THROW(PipelineConfig::from_json({{"train", "a"}, {"voters", {{"cuont", 1}}}}), FormatError);
  EXPECT_THROW(PipelineConfig::from_json({{"train", "a"}, {"mode", "fast"}}), FormatError);
  EXPECT_THROW(PipelineConfig::from_json({{"train", "a"}, {"seed", "x"}}), FormatError);
  EXPECT_THROW(PipelineConfig::from_json({{"train", "a"}, {"conf_mpu", {{"loss", "hinge"}}}}), FormatError);
  EXPECT_THROW(PipelineConfig::from_json(json::array()), FormatError);
  EXPECT_THROW(PipelineConfig::from_json(json::object()).validate(), FormatError);
  EXPECT_THROW(PipelineConfig::from_json({{"train", "a"}, {"curriculum", {{"tau", 1.5}}}}).validate(), FormatError);

  auto same = PipelineConfig::from_json({{"train", "a"}, {"valid", "v.conll"}, {"test", "./v.conll"}});
  EXPECT_THROW(same.validate(), FormatError);
  same.allow_same_split = true;
  EXPECT_NO_THROW(same.validate());
}

TEST(Config, ModeNames) {
  for (auto m : {Mode::kCupul, Mode::kCupulSt, Mode::kNoCurriculum, Mode::kNoConfMpu, Mode::kVoterEnsemble,
                 Mode::kSoftLabelCurriculum}) {
    EXPECT_EQ(parse_mode(to_string(m)), m);
  }
}

PipelineConfig small_config() {
  PipelineConfig c;
  c.train = "in-memory";
  c.voters.count = 3;
  c.voters.epochs = 2;
  c.voters.learning_rate = 1e-2;
  c.curriculum.eta = 3;
  c.schedule.learning_rate = 1e-2;
  c.model.embed_dim = 8;
  c.model.hidden_dim = 16;
  c.self_train.rounds = 1;
  return c;
}

PipelineInputs small_inputs(uint64_t seed) {
  BenchmarkSpec spec;
  spec.n_train = 200;
  spec.n_valid = 30;
  spec.n_test = 60;
  const auto b = make_benchmark(spec, seed);
  return {b.train, b.valid, b.test, std::nullopt};
}

TEST(Pipeline, EveryModeRuns) {
  const auto in = small_inputs(1);
  for (auto m : {Mode::kCupul, Mode::kCupulSt, Mode::kNoCurriculum, Mode::kNoConfMpu, Mode::kVoterEnsemble,
                 Mode::kSoftLabelCurriculum}) {
    auto cfg = small_config();
    cfg.mode = m;
    const auto r = run_pipeline(cfg, in);
    ASSERT_TRUE(r.test_report) << to_string(m);
    EXPECT_EQ(r.model.has_value(), m != Mode::kVoterEnsemble);
    EXPECT_EQ(r.self_train_log.has_value(), m == Mode::kCupulSt);
    EXPECT_EQ(r.test_report_before_self_train.has_value(), m == Mode::kCupulSt);
    if (m != Mode::kVoterEnsemble) {
      EXPECT_EQ(r.log.epochs.size(), 6u) << to_string(m);
      EXPECT_EQ(r.log.extra.size(), m == Mode::kNoCurriculum ? 1u : 3u) << to_string(m);
    }
    EXPECT_GT(r.test_report->strict.overall.n_gold, 0u);
  }
}

TEST(Pipeline, SameSeedSameResult) {
  const auto in = small_inputs(2);
  const auto cfg = small_config();
  const auto a = run_pipeline(cfg, in);
  const auto b = run_pipeline(cfg, in);
  EXPECT_EQ(a.model->params(), b.model->params());
  EXPECT_EQ(a.plan.curricula, b.plan.curricula);
  EXPECT_EQ(a.test_report->to_json(in.train.labels), b.test_report->to_json(in.train.labels));
  auto other = cfg;
  other.seed = cfg.seed + 1;
  EXPECT_NE(run_pipeline(other, in).model->params(), a.model->params());
}

TEST(Pipeline, DictionaryReannotatesTrain) {
  BenchmarkSpec spec;
  spec.n_train = 50;
  spec.n_valid = 0;
  spec.n_test = 20;
  const auto b = make_benchmark(spec, 4);
  auto cfg = small_config();
  const auto r = run_pipeline(cfg, {b.train, std::nullopt, b.test, b.dictionary});
  const auto index = compile_dictionary(b.dictionary);
  for (const auto& s : r.train.sentences) EXPECT_EQ(s.distant_labels(), annotate(s, index));
}

TEST(Pipeline, MismatchedTestLabelsAreIncompatible) {
  auto in = small_inputs(5);
  in.test->labels = LabelSet({"A", "B"});
  EXPECT_THROW(run_pipeline(small_config(), in), CompatibilityError);
}

// Without noise, plain supervised staging should solve the synthetic task.
TEST(Pipeline, CleanCorpusSanity) {
  BenchmarkSpec spec;
  spec.noise = {0, 0, 0};
  const auto b = make_benchmark(spec, 1);
  PipelineConfig cfg;
  cfg.train = "in-memory";
  cfg.mode = Mode::kNoConfMpu;
  const auto r = run_pipeline(cfg, {b.train, b.valid, b.test, std::nullopt});
  EXPECT_GE(r.test_report->strict.overall.f1(), 0.95);
}

}  // namespace
}  // namespace cupul
