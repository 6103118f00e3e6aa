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

#include <sstream>

#include "test_util.hpp"

namespace cupul {
namespace {

using Labels = std::vector<std::vector<LabelId>>;

Corpus gold_corpus(const Labels& gold, int k = 2) {
  Corpus c;
  std::vector<std::string> names;
  for (int i = 1; i <= k; ++i) names.push_back("T" + std::to_string(i));
  c.labels = LabelSet(names);
  for (const auto& s : gold) {
    Sentence sent;
    for (auto l : s) sent.tokens.push_back({"w", kUnlabeled, l});
    c.sentences.push_back(sent);
  }
  return c;
}

TEST(Metrics, BoundaryMismatch) {
  const Labels gold = {{0, 1, 1, 0}}, pred = {{0, 0, 1, 1}};
  const auto r = evaluate_labels(pred, gold_corpus(gold));
  EXPECT_EQ(r.strict.overall.f1(), 0.0);
  EXPECT_EQ(r.relaxed.overall.precision(), 1.0);
  EXPECT_EQ(r.relaxed.overall.recall(), 1.0);
  EXPECT_EQ(r.relaxed.overall.f1(), 1.0);
}

TEST(Metrics, PerfectAndEmptyPredictions) {
  Rng rng(1);
  Labels gold;
  size_t spans = 0;
  while (spans < 10) {
    gold.push_back(testing::random_labels(rng, 6, 2));
    spans += extract_spans(gold.back()).size();
  }
  const auto c = gold_corpus(gold);
  const auto perfect = evaluate_labels(gold, c);
  EXPECT_EQ(perfect.strict.overall.f1(), 1.0);
  EXPECT_EQ(perfect.relaxed.overall.f1(), 1.0);

  Labels none;
  for (const auto& s : gold) none.emplace_back(s.size(), 0);
  const auto empty = evaluate_labels(none, c);
  for (const auto* m : {&empty.strict, &empty.relaxed}) {
    EXPECT_EQ(m->overall.precision(), 0.0);
    EXPECT_EQ(m->overall.recall(), 0.0);
    EXPECT_EQ(m->overall.f1(), 0.0);
  }
}

TEST(Metrics, RelaxedSidesCountedIndependently) {
  // One prediction covering two gold spans.
  const Labels gold = {{1, 0, 1}}, pred = {{1, 1, 1}};
  const auto r = evaluate_labels(pred, gold_corpus(gold));
  EXPECT_EQ(r.relaxed.overall.tp_precision, 1u);
  EXPECT_EQ(r.relaxed.overall.tp_recall, 2u);
  EXPECT_EQ(r.relaxed.overall.n_pred, 1u);
  EXPECT_EQ(r.relaxed.overall.n_gold, 2u);

  const Labels disjoint_gold = {{1, 0, 0}}, disjoint_pred = {{0, 0, 1}};
  const auto d = evaluate_labels(disjoint_pred, gold_corpus(disjoint_gold));
  EXPECT_EQ(d.relaxed.overall.f1(), 0.0);
}

TEST(Metrics, RelaxedTypeSwitch) {
  const Labels gold = {{1, 1}}, pred = {{2, 2}};
  EXPECT_EQ(evaluate_labels(pred, gold_corpus(gold), true).relaxed.overall.f1(), 0.0);
  EXPECT_EQ(evaluate_labels(pred, gold_corpus(gold), false).relaxed.overall.f1(), 1.0);
}

TEST(Metrics, MatchOracleOnMicroCorpora) {
  Rng rng(31);
  for (int n = 0; n < 200; ++n) {
    const int k = 1 + static_cast<int>(rng.below(3));
    Labels gold, pred;
    std::vector<std::vector<int>> gi, pi;
    for (size_t s = 0, ns = 1 + rng.below(5); s < ns; ++s) {
      const size_t len = 1 + rng.below(8);
      gold.push_back(testing::random_labels(rng, len, k, 0.4));
      pred.push_back(testing::random_labels(rng, len, k, 0.4));
      gi.emplace_back(gold.back().begin(), gold.back().end());
      pi.emplace_back(pred.back().begin(), pred.back().end());
    }
    const auto c = gold_corpus(gold, k);
    for (bool typed : {true, false}) {
      const auto r = evaluate_labels(pred, c, typed);
      const auto o = testing::oracle_metrics(pi, gi, typed);
      ASSERT_EQ(r.strict.overall.precision(), o.sp);
      ASSERT_EQ(r.strict.overall.recall(), o.sr);
      ASSERT_NEAR(r.strict.overall.f1(), o.sf, 1e-15);
      ASSERT_EQ(r.relaxed.overall.precision(), o.rp);
      ASSERT_EQ(r.relaxed.overall.recall(), o.rr);
      ASSERT_NEAR(r.relaxed.overall.f1(), o.rf, 1e-15);
      ASSERT_LE(r.strict.overall.tp_precision, r.relaxed.overall.tp_precision);
    }

    // Sentence order does not matter.
    std::vector<size_t> perm(gold.size());
    std::iota(perm.begin(), perm.end(), size_t{0});
    rng.shuffle(perm);
    Labels g2, p2;
    for (size_t i : perm) {
      g2.push_back(gold[i]);
      p2.push_back(pred[i]);
    }
    const auto a = evaluate_labels(pred, c), b = evaluate_labels(p2, gold_corpus(g2, k));
    ASSERT_EQ(a.to_json(c.labels), b.to_json(c.labels));
  }
}

TEST(Metrics, RejectsShapeMismatch) {
  const auto c = gold_corpus({{1, 0}});
  EXPECT_THROW(evaluate_labels({{1}}, c), std::invalid_argument);
  EXPECT_THROW(evaluate_labels({{1, 0}, {0}}, c), std::invalid_argument);
  Corpus no_gold = c;
  no_gold.sentences[0].tokens[0].gold.reset();
  EXPECT_THROW(evaluate_labels({{1, 0}}, no_gold), FormatError);
}

TEST(Metrics, ModelEvaluation) {
  Rng rng(3);
  auto c = testing::random_corpus(rng, 6, 6, 2, true);
  const auto vocab = build_vocab(c);
  TokenClassifier m(testing::small_model_config(static_cast<int>(vocab.size()), 3, 1), vocab.fingerprint());
  const auto r = evaluate(m, c, vocab);
  const auto direct = evaluate_labels(predict(m, encode(c, vocab)), c);
  EXPECT_EQ(r.to_json(c.labels), direct.to_json(c.labels));
}

// Two curricula: C_1 = {u, p_ok}, C_2 = {p_ok, p_bad}.
TEST(Analysis, HandBuiltRates) {
  Corpus c;
  c.labels = LabelSet({"X"});
  c.sentences.push_back({{{"u", 0, 0}, {"a", 1, 1}, {"b", 1, 1}, {"c", 1, 0}}});
  DifficultyTable h(c, 0.0);
  h.at(0, 1) = 0.1;
  h.at(0, 2) = 0.2;
  h.at(0, 3) = 0.4;
  CurriculumPlan plan;
  plan.eta = 2;
  plan.curricula = {{{0, 0}, {0, 1}}, {{0, 2}, {0, 3}}};
  plan.positive_counts = {1, 2};
  const auto a = curriculum_error_analysis(plan, c, h);
  ASSERT_EQ(a.rows.size(), 2u);
  EXPECT_EQ(*a.rows[0].error_rate, 0.0);
  EXPECT_EQ(*a.rows[1].error_rate, 0.5);
  EXPECT_NEAR(*a.rows[1].mean_difficulty, 0.3, 1e-15);
  std::ostringstream csv;
  a.write_csv(csv);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "curriculum,positives,errors,error_rate,mean_difficulty");
}

TEST(Analysis, CleanCorpusAndOrdering) {
  Rng rng(12);
  for (int n = 0; n < 50; ++n) {
    auto c = testing::random_corpus(rng, 10, 8, 2, true);
    for (auto& s : c.sentences) {
      for (auto& t : s.tokens) t.distant = *t.gold;
    }
    DifficultyTable h(c, 0.0);
    for (const auto& r : c.refs()) h[r] = rng.uniform();
    const auto plan = build_plan(h, c, 0.5, 4);
    const auto a = curriculum_error_analysis(plan, c, h);
    double prev = -1.0;
    for (const auto& row : a.rows) {
      if (!row.error_rate) {
        EXPECT_EQ(row.positives, 0u);
        continue;
      }
      EXPECT_EQ(*row.error_rate, 0.0);
      EXPECT_GE(*row.mean_difficulty, prev);
      prev = *row.mean_difficulty;
    }
  }
}

TEST(Histogram, Basics) {
  const std::vector<double> zeros(7, 0.0);
  const auto z = difficulty_histogram(zeros, 5);
  size_t occupied = 0, total = 0;
  for (const auto& b : z.bins) {
    occupied += b.count > 0;
    total += b.count;
  }
  EXPECT_EQ(occupied, 1u);
  EXPECT_EQ(total, 7u);

  Rng rng(2);
  std::vector<double> v;
  for (int i = 0; i < 1000; ++i) v.push_back(-std::log(1.0 - rng.uniform()));  // exponential: long tail
  const auto h = difficulty_histogram(v, 20);
  total = 0;
  for (const auto& b : h.bins) total += b.count;
  EXPECT_EQ(total, v.size());
  EXPECT_TRUE(h.long_tail());
  EXPECT_EQ(h.bins.back().count > 0, true);
  EXPECT_THROW(difficulty_histogram(std::vector<double>{-1.0}, 3), NumericError);
  EXPECT_EQ(median_of({3.0, 1.0, 2.0, 10.0}), 2.5);
}

TEST(Spearman, KnownValues) {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  EXPECT_NEAR(*spearman(x, std::vector<double>{2, 4, 6, 8, 10}), 1.0, 1e-15);
  EXPECT_NEAR(*spearman(x, std::vector<double>{5, 4, 3, 2, 1}), -1.0, 1e-15);
  // Ties: ranks (1, 2.5, 2.5, 4).
  EXPECT_EQ(ranks(std::vector<double>{0.1, 0.3, 0.3, 0.9}), (std::vector<double>{1, 2.5, 2.5, 4}));
  EXPECT_FALSE(spearman(x, std::vector<double>(5, 1.0)).has_value());
  EXPECT_FALSE(spearman(std::vector<double>{1}, std::vector<double>{2}).has_value());
}

}  // namespace
}  // namespace cupul
