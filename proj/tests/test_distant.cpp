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
#include <map>
#include <sstream>

#include "test_util.hpp"

namespace cupul {
namespace {

Sentence sentence_of(const std::vector<std::string>& words) {
  Sentence s;
  for (const auto& w : words) s.tokens.push_back({w, kUnlabeled, std::nullopt});
  return s;
}

MatcherIndex index_of(const std::vector<std::pair<std::string, std::string>>& rows, const LabelSet& labels) {
  std::vector<RawDictionaryEntry> raw;
  for (const auto& [surface, type] : rows) raw.push_back({surface, type});
  return compile_dictionary(raw, labels);
}

TEST(Matcher, IndexBucketsByFirstToken) {
  const LabelSet labels({"T"});
  const auto idx = index_of({{"milk fat", "T"}, {"Milk  fat", "T"}}, labels);
  EXPECT_EQ(idx.size(), 1u);
  const auto* bucket = idx.candidates("milk");
  ASSERT_NE(bucket, nullptr);
  EXPECT_EQ(idx.entry(bucket->front()).tokens.size(), 2u);
  EXPECT_EQ(idx.candidates("fat"), nullptr);
  EXPECT_THROW(index_of({{"x", "NOPE"}}, labels), FormatError);
}

TEST(Matcher, EveryEntryFindableByFirstToken) {
  Rng rng(5);
  Dictionary dict;
  for (int i = 0; i < 1000; ++i) {
    std::vector<std::string> toks;
    for (size_t j = 0, n = 1 + rng.below(4); j < n; ++j) toks.push_back("w" + std::to_string(rng.below(200)));
    dict.add(toks, static_cast<LabelId>(1 + rng.below(3)));
  }
  const MatcherIndex idx(dict);
  for (const auto& e : dict.entries()) {
    const auto* bucket = idx.candidates(e.tokens.front());
    ASSERT_NE(bucket, nullptr);
    bool found = false;
    for (uint32_t id : *bucket) found |= idx.entry(id) == e;
    EXPECT_TRUE(found);
  }
}

TEST(Annotate, PrefersFullCoverage) {
  const LabelSet labels({"T"});
  const auto idx = index_of({{"milk fat", "T"}, {"fat percentage", "T"}, {"milk fat percentage", "T"}}, labels);
  const auto s = sentence_of({"milk", "fat", "percentage"});
  EXPECT_EQ(annotate(s, idx), (std::vector<LabelId>{1, 1, 1}));
  const auto chosen = select_matches(find_matches(s, idx), s.size());
  ASSERT_EQ(chosen.size(), 1u);
  EXPECT_EQ(chosen[0].length, 3u);
}

TEST(Annotate, CoverageTieGoesLeftmost) {
  const LabelSet labels({"X", "Y"});
  const auto idx = index_of({{"a b", "X"}, {"b c", "Y"}}, labels);
  EXPECT_EQ(annotate(sentence_of({"a", "b", "c"}), idx), (std::vector<LabelId>{1, 1, 0}));
  EXPECT_EQ(annotate(sentence_of({"q", "r"}), idx), (std::vector<LabelId>{0, 0}));
}

TEST(Annotate, CaseFolded) {
  const LabelSet labels({"X"});
  const auto idx = index_of({{"New York", "X"}}, labels);
  EXPECT_EQ(annotate(sentence_of({"in", "NEW", "york"}), idx), (std::vector<LabelId>{0, 1, 1}));
}

// Leftmost-longest optimum by exhaustive enumeration.
std::vector<int> oracle_labeling(const std::vector<std::string>& words,
                                 const std::vector<std::pair<std::vector<std::string>, int>>& entries,
                                 int* coverage) {
  std::vector<std::vector<std::string>> surfaces;
  for (const auto& e : entries) surfaces.push_back(e.first);
  const auto cands = testing::oracle_candidates(words, surfaces);
  *coverage = testing::oracle_best_coverage(cands);
  std::vector<std::pair<int, int>> best_key;
  bool have = false;
  std::vector<testing::Candidate> best;
  for (uint64_t mask = 0; mask < (uint64_t{1} << cands.size()); ++mask) {
    std::vector<testing::Candidate> pick;
    int cover = 0;
    int last_end = -1;
    bool ok = true;
    for (size_t i = 0; i < cands.size(); ++i) {  // cands sorted by (start, length)
      if (!(mask >> i & 1)) continue;
      if (cands[i].start <= last_end) ok = false;
      last_end = std::max(last_end, cands[i].start + cands[i].length - 1);
      cover += cands[i].length;
      pick.push_back(cands[i]);
    }
    if (!ok || cover != *coverage) continue;
    std::vector<std::pair<int, int>> key;
    for (const auto& c : pick) key.emplace_back(c.start, -c.length);
    if (!have || key < best_key) {
      best_key = key;
      best = pick;
      have = true;
    }
  }
  std::vector<int> out(words.size(), 0);
  for (const auto& c : best) {
    int type = 1 << 30;
    for (const auto& [surface, t] : entries) {
      if (static_cast<int>(surface.size()) != c.length) continue;
      bool eq = true;
      for (int j = 0; j < c.length; ++j) eq &= fold_case(words[static_cast<size_t>(c.start + j)]) == surface[static_cast<size_t>(j)];
      if (eq) type = std::min(type, t);
    }
    for (int j = 0; j < c.length; ++j) out[static_cast<size_t>(c.start + j)] = type;
  }
  return out;
}

TEST(Annotate, MatchesExhaustiveOracle) {
  Rng rng(17);
  const LabelSet labels({"A", "B", "C"});
  const std::vector<std::string> alphabet = {"a", "b", "c", "D"};
  int checked = 0;
  while (checked < 500) {
    std::vector<std::pair<std::vector<std::string>, int>> entries;
    Dictionary dict;
    for (size_t i = 0, n = 1 + rng.below(6); i < n; ++i) {
      std::vector<std::string> toks;
      for (size_t j = 0, len = 1 + rng.below(3); j < len; ++j) toks.push_back(fold_case(alphabet[rng.below(3)]));
      const int type = 1 + static_cast<int>(rng.below(3));
      if (dict.add(toks, type)) entries.emplace_back(toks, type);
    }
    std::vector<std::string> words;
    for (size_t j = 0, n = 1 + rng.below(10); j < n; ++j) words.push_back(alphabet[rng.below(alphabet.size())]);

    std::vector<std::vector<std::string>> surfaces;
    for (const auto& e : entries) surfaces.push_back(e.first);
    if (testing::oracle_candidates(words, surfaces).size() > 12) continue;
    ++checked;

    int coverage = 0;
    const auto expected = oracle_labeling(words, entries, &coverage);
    const auto got = annotate(sentence_of(words), MatcherIndex(dict));
    int got_cover = 0;
    for (auto l : got) got_cover += l != 0;
    ASSERT_EQ(got_cover, coverage);
    ASSERT_EQ(std::vector<int>(got.begin(), got.end()), expected);
  }
}

TEST(Annotate, CorpusKeepsGold) {
  const LabelSet labels({"X"});
  Corpus c;
  c.labels = labels;
  c.sentences.push_back(sentence_of({"x", "y"}));
  c.sentences[0].tokens[1].gold = 1;
  c.sentences[0].tokens[0].gold = 0;
  const auto out = annotate_corpus(c, index_of({{"x", "X"}}, labels));
  EXPECT_EQ(out.sentences[0].distant_labels(), (std::vector<LabelId>{1, 0}));
  EXPECT_EQ(out.sentences[0].gold_labels(), (std::vector<LabelId>{0, 1}));
}

Corpus pair_corpus(const std::vector<LabelId>& gold, const std::vector<LabelId>& distant) {
  Corpus c;
  c.labels = LabelSet({"A", "B"});
  Sentence s;
  for (size_t i = 0; i < gold.size(); ++i) s.tokens.push_back({"w", distant[i], gold[i]});
  c.sentences.push_back(s);
  return c;
}

TEST(Noise, ReportCountsPerToken) {
  const auto clean = noise_report(pair_corpus({1, 0, 2}, {1, 0, 2}));
  EXPECT_EQ(clean.disagreements(), 0u);
  EXPECT_EQ(clean.positive_error_rate(), 0.0);

  const auto fn = noise_report(pair_corpus({1, 0}, {0, 0}));
  EXPECT_EQ(fn.false_negative, 1u);
  EXPECT_EQ(fn.false_positive + fn.type_error, 0u);
  EXPECT_EQ(fn.false_negative_rate(), 1.0);

  const auto mixed = noise_report(pair_corpus({1, 0, 2}, {2, 1, 0}));
  EXPECT_EQ(mixed.type_error, 1u);
  EXPECT_EQ(mixed.false_positive, 1u);
  EXPECT_EQ(mixed.false_negative, 1u);
  EXPECT_DOUBLE_EQ(mixed.positive_error_rate(), 1.0);

  auto no_gold = pair_corpus({1}, {1});
  no_gold.sentences[0].tokens[0].gold.reset();
  EXPECT_THROW(noise_report(no_gold), std::invalid_argument);
}

Corpus span_corpus(int spans) {
  Corpus c;
  c.labels = LabelSet({"A", "B"});
  for (int i = 0; i < spans; ++i) {
    Sentence s;
    s.tokens.push_back({"o", 0, 0});
    s.tokens.push_back({"e", 1, LabelId{1 + i % 2}});
    s.tokens.push_back({"e", 1, LabelId{1 + i % 2}});
    s.tokens.push_back({"o", 0, 0});
    c.sentences.push_back(s);
  }
  return c;
}

TEST(Noise, InjectionExtremes) {
  const auto gold = span_corpus(50);
  Rng rng(1);
  const auto same = inject_noise(gold, {0, 0, 0}, rng);
  for (const auto& s : same.sentences) EXPECT_EQ(s.distant_labels(), s.gold_labels());
  const auto erased = inject_noise(gold, {1, 0, 0}, rng);
  for (const auto& s : erased.sentences) {
    for (const auto& t : s.tokens) EXPECT_EQ(t.distant, kUnlabeled);
  }
  const auto flipped = inject_noise(gold, {0, 0, 1}, rng);
  EXPECT_EQ(noise_report(flipped).type_error, 100u);
  EXPECT_THROW(inject_noise(gold, {1.5, 0, 0}, rng), std::invalid_argument);
  EXPECT_THROW(inject_noise(gold, {0.6, 0, 0.6}, rng), std::invalid_argument);
}

TEST(Noise, ErasureRateIsBinomial) {
  const auto gold = span_corpus(1000);
  Rng rng(99);
  const auto noisy = inject_noise(gold, {0.4, 0, 0}, rng);
  int erased = 0;
  for (const auto& s : noisy.sentences) erased += s.tokens[1].distant == kUnlabeled;
  const double sigma = std::sqrt(1000 * 0.4 * 0.6);
  EXPECT_LT(std::fabs(erased - 400.0), 3 * sigma) << erased;
}

TEST(Noise, DeterministicGivenSeed) {
  const auto gold = span_corpus(100);
  Rng a(3), b(3);
  EXPECT_TRUE(inject_noise(gold, {0.3, 0.2, 0.1}, a) == inject_noise(gold, {0.3, 0.2, 0.1}, b));
}

TEST(Dictionary, TsvRoundTrip) {
  const LabelSet labels({"X", "Y"});
  std::istringstream in("New York\tX\nparis\tY\nnew york\tX\n");
  const auto dict = make_dictionary(read_dictionary_tsv(in), labels);
  EXPECT_EQ(dict.size(), 2u);
  std::stringstream out;
  write_dictionary_tsv(dict, labels, out);
  const auto back = make_dictionary(read_dictionary_tsv(out), labels);
  EXPECT_EQ(back.entries(), dict.entries());
  std::istringstream bad("only-one-column\n");
  EXPECT_THROW(read_dictionary_tsv(bad), FormatError);
}

TEST(Synthetic, ConstructionProperties) {
  Rng tr(4);
  SyntheticSpec spec;
  spec.k = 2;
  spec.n_sentences = 10;
  spec.templates = make_template_pool(10, 2, tr);
  Rng a(8), b(8);
  const auto x = generate_synthetic(spec, a);
  const auto y = generate_synthetic(spec, b);
  EXPECT_TRUE(x.corpus == y.corpus);
  EXPECT_EQ(x.corpus.sentences.size(), 10u);
  std::set<std::string> dict_words;
  for (const auto& e : x.dictionary.entries()) dict_words.insert(e.tokens.begin(), e.tokens.end());
  for (const auto& s : x.corpus.sentences) {
    for (const auto& t : s.tokens) {
      ASSERT_TRUE(t.gold);
      EXPECT_GE(*t.gold, 0);
      EXPECT_LE(*t.gold, 2);
      if (*t.gold != 0) {
        EXPECT_TRUE(dict_words.count(fold_case(t.surface)));
      }
    }
  }
  spec.templates.clear();
  EXPECT_THROW(generate_synthetic(spec, a), std::invalid_argument);
}

}  // namespace
}  // namespace cupul
