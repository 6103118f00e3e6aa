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

#include <cmath>
#include <sstream>

#include "test_util.hpp"

namespace cupul {
namespace {

double kl_by_definition(const std::vector<double>& p, const std::vector<double>& q) {
  double d = 0.0;
  for (size_t j = 0; j < p.size(); ++j) d += p[j] * std::log(p[j] / q[j]);
  return d;
}

TEST(Disagreement, WorkedValue) {
  const ClassDistribution p{{0.5, 0.5}}, q{{0.9, 0.1}};
  const double expected = 0.5 * (kl_by_definition(p.probs, q.probs) + kl_by_definition(q.probs, p.probs));
  EXPECT_NEAR(pairwise_disagreement(p, q), expected, 1e-12);
  EXPECT_NEAR(pairwise_disagreement(p, q), 0.4394, 5e-5);
}

TEST(Disagreement, FuzzProperties) {
  Rng rng(21);
  for (int n = 0; n < 2000; ++n) {
    const size_t c = 2 + rng.below(4);
    const auto p = testing::random_distribution(rng, c);
    const auto q = testing::random_distribution(rng, c);
    const double pq = pairwise_disagreement(p, q);
    EXPECT_EQ(pq, pairwise_disagreement(q, p));
    EXPECT_GE(pq, 0.0);
    EXPECT_EQ(pairwise_disagreement(p, p), 0.0);
    EXPECT_NEAR(pq, 0.5 * (kl_by_definition(p.probs, q.probs) + kl_by_definition(q.probs, p.probs)), 1e-12);
  }
}

TEST(Difficulty, MeanOverPairs) {
  Rng rng(4);
  for (int n = 0; n < 300; ++n) {
    const size_t v = 2 + rng.below(5), c = 2 + rng.below(3);
    std::vector<ClassDistribution> outs;
    for (size_t i = 0; i < v; ++i) outs.push_back(testing::random_distribution(rng, c));
    double sum = 0.0;
    int pairs = 0;
    for (size_t i = 0; i < v; ++i) {
      for (size_t j = i + 1; j < v; ++j, ++pairs) sum += pairwise_disagreement(outs[i], outs[j]);
    }
    const double h = difficulty(outs);
    EXPECT_NEAR(h, sum / pairs, 1e-12);
    EXPECT_GE(h, 0.0);
    if (v == 2) {
      EXPECT_EQ(h, pairwise_disagreement(outs[0], outs[1]));
    }

    // Permuting voters leaves H unchanged.
    auto shuffled = outs;
    rng.shuffle(shuffled);
    EXPECT_NEAR(difficulty(shuffled), h, 1e-12);

    std::vector<ClassDistribution> same(v, outs[0]);
    EXPECT_EQ(difficulty(same), 0.0);
  }
  EXPECT_THROW(difficulty(std::vector<ClassDistribution>(1, ClassDistribution{{0.5, 0.5}})), std::invalid_argument);
}

TEST(Difficulty, ThreePairExample) {
  // Pair scores 0.1, 0.2, 0.3 average to 0.2.
  EXPECT_NEAR((0.1 + 0.2 + 0.3) / 3.0, 0.2, 1e-15);
  const ClassDistribution a{{0.5, 0.5}}, b{{0.9, 0.1}}, c{{0.2, 0.8}};
  const double expected = (pairwise_disagreement(a, b) + pairwise_disagreement(a, c) + pairwise_disagreement(b, c)) / 3;
  const std::vector<ClassDistribution> outs = {a, b, c};
  EXPECT_NEAR(difficulty(outs), expected, 1e-15);
}

TEST(Ensemble, MeanAndConfidence) {
  const std::vector<ClassDistribution> outs = {ClassDistribution{{1.0, 0.0}}, ClassDistribution{{0.0, 1.0}}};
  const auto e = ensemble_distribution(outs);
  EXPECT_EQ(e.probs, (std::vector<double>{0.5, 0.5}));
  EXPECT_NEAR(confidence(ClassDistribution{{0.2, 0.5, 0.3}}), 0.8, 1e-15);
  EXPECT_EQ(confidence(ClassDistribution{{1.0, 0.0, 0.0}}), 0.0);
  Rng rng(6);
  for (int n = 0; n < 200; ++n) {
    std::vector<ClassDistribution> o;
    for (int v = 0; v < 4; ++v) o.push_back(testing::random_distribution(rng, 3));
    const auto m = ensemble_distribution(o);
    EXPECT_TRUE(m.valid(1e-12));
    EXPECT_NEAR(confidence(m) + m[0], 1.0, 1e-12);
  }
}

struct Small {
  Corpus corpus;
  Vocab vocab;
  EncodedCorpus enc;
  ModelConfig mc;
};

Small small_benchmark(uint64_t seed, int n_train = 200) {
  BenchmarkSpec spec;
  spec.n_train = n_train;
  spec.n_valid = 0;
  spec.n_test = 0;
  spec.noise = {0, 0, 0};
  spec.world.dictionary_size = 60;
  spec.world.entity_words_per_type = 30;
  spec.world.context_vocab_size = 60;
  Small s;
  s.corpus = make_benchmark(spec, seed).train;
  s.vocab = build_vocab(s.corpus);
  s.enc = encode(s.corpus, s.vocab);
  s.mc.vocab_size = static_cast<int>(s.vocab.size());
  s.mc.n_classes = s.corpus.labels.num_classes();
  s.mc.embed_dim = 8;
  s.mc.hidden_dim = 16;
  return s;
}

VoterConfig quick_voters(int count) {
  VoterConfig vc;
  vc.count = count;
  vc.epochs = 2;
  vc.learning_rate = 1e-2;
  return vc;
}

TEST(Voters, DistinctSeedsGiveDistinctModels) {
  auto s = small_benchmark(1);
  const auto ens = train_voters(s.corpus, s.enc, s.mc, quick_voters(5), 77);
  for (size_t i = 0; i < ens.size(); ++i) {
    EXPECT_EQ(ens.seeds[i], 77u ^ i);
    for (size_t j = i + 1; j < ens.size(); ++j) EXPECT_NE(ens.voters[i].params(), ens.voters[j].params());
  }
}

TEST(Voters, IdenticalSeedsGiveZeroDifficulty) {
  auto s = small_benchmark(2);
  auto vc = quick_voters(2);
  vc.distinct_seeds = false;
  const auto ens = train_voters(s.corpus, s.enc, s.mc, vc, 5);
  const auto table = difficulty_scores(ens, s.enc);
  for (double h : table.values()) EXPECT_EQ(h, 0.0);
}

TEST(Voters, BeatMajorityBaseline) {
  auto s = small_benchmark(3, 400);
  const auto ens = train_voters(s.corpus, s.enc, s.mc, quick_voters(3), 9);
  size_t majority = 0, total = 0;
  for (const auto& r : s.corpus.refs()) {
    majority += s.corpus.at(r).distant == kUnlabeled;
    ++total;
  }
  const double baseline = static_cast<double>(std::max(majority, total - majority)) / static_cast<double>(total);
  for (const auto& v : ens.voters) {
    const auto pred = predict(v, s.enc);
    size_t hit = 0;
    for (const auto& r : s.corpus.refs()) hit += pred[r.sentence][r.token] == s.corpus.at(r).distant;
    EXPECT_GT(static_cast<double>(hit) / static_cast<double>(total), baseline);
  }
}

TEST(Voters, ResultIndependentOfThreadsAndCount) {
  auto s = small_benchmark(4);
  const auto one = train_voters(s.corpus, s.enc, s.mc, quick_voters(4), 31, 1);
  const auto many = train_voters(s.corpus, s.enc, s.mc, quick_voters(4), 31, 3);
  const auto fewer = train_voters(s.corpus, s.enc, s.mc, quick_voters(2), 31, 1);
  for (size_t v = 0; v < 4; ++v) EXPECT_EQ(one.voters[v].params(), many.voters[v].params());
  for (size_t v = 0; v < 2; ++v) EXPECT_EQ(one.voters[v].params(), fewer.voters[v].params());
}

TEST(Scores, DumpRoundTrip) {
  auto s = small_benchmark(5, 40);
  const auto ens = train_voters(s.corpus, s.enc, s.mc, quick_voters(3), 2);
  const auto scores = score_tokens(ens, s.enc);
  std::stringstream ss;
  write_token_scores(ss, s.corpus, scores);
  const auto back = read_token_scores(ss, s.corpus);
  EXPECT_EQ(back.difficulty.values(), scores.difficulty.values());
  EXPECT_EQ(back.confidence.lambda.values(), scores.confidence.lambda.values());
  for (size_t i = 0; i < scores.confidence.ensemble.size(); ++i) {
    EXPECT_EQ(back.confidence.ensemble.values()[i].probs, scores.confidence.ensemble.values()[i].probs);
  }

  Corpus other = s.corpus;
  other.sentences.pop_back();
  std::stringstream again(ss.str());
  EXPECT_THROW(read_token_scores(again, other), CompatibilityError);
}

}  // namespace
}  // namespace cupul
