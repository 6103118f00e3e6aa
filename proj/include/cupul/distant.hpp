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

// Dictionary-based distant annotation, annotation-noise diagnostics and a
// synthetic noisy-corpus generator.

#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cupul/common.hpp"
#include "cupul/corpus.hpp"

namespace cupul {

struct DictionaryEntry {
  std::vector<std::string> tokens;  // case-folded
  LabelId type = 1;

  friend auto operator<=>(const DictionaryEntry&, const DictionaryEntry&) = default;
};

// Entity surfaces with their types; (surface, type) pairs are unique.
class Dictionary {
 public:
  // Returns false when the pair was already present.
  bool add(std::vector<std::string> tokens, LabelId type) {
    if (tokens.empty()) throw std::invalid_argument("Dictionary: empty surface");
    if (type < 1) throw std::invalid_argument("Dictionary: entry type must be an entity type");
    for (auto& t : tokens) {
      if (t.empty()) throw std::invalid_argument("Dictionary: empty token in surface");
      t = fold_case(t);
    }
    DictionaryEntry e{std::move(tokens), type};
    if (!seen_.insert(e).second) return false;
    entries_.push_back(std::move(e));
    return true;
  }

  const std::vector<DictionaryEntry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }

 private:
  std::vector<DictionaryEntry> entries_;
  std::set<DictionaryEntry> seen_;
};

// One raw TSV row: surface (may contain spaces) and type name.
struct RawDictionaryEntry {
  std::string surface;
  std::string type_name;
};

inline std::vector<RawDictionaryEntry> read_dictionary_tsv(std::istream& in) {
  std::vector<RawDictionaryEntry> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cols = split(line, '\t');
    if (cols.size() != 2 || cols[0].empty() || cols[1].empty()) {
      throw FormatError("dictionary line " + std::to_string(line_no) +
                        ": expected surface<TAB>type_name");
    }
    out.push_back({cols[0], cols[1]});
  }
  return out;
}

inline std::vector<std::string> tokenize_surface(const std::string& surface) {
  std::vector<std::string> tokens;
  for (auto& part : split(surface, ' ')) {
    if (!part.empty()) tokens.push_back(std::move(part));
  }
  return tokens;
}

inline Dictionary make_dictionary(const std::vector<RawDictionaryEntry>& raw,
                                  const LabelSet& labels) {
  Dictionary dict;
  for (const auto& r : raw) {
    auto id = labels.find(r.type_name);
    if (!id || *id == kUnlabeled) {
      throw FormatError("dictionary: unknown entity type '" + r.type_name + "'");
    }
    auto tokens = tokenize_surface(r.surface);
    if (tokens.empty()) throw FormatError("dictionary: blank surface");
    dict.add(std::move(tokens), *id);
  }
  return dict;
}

inline void write_dictionary_tsv(const Dictionary& dict, const LabelSet& labels,
                                 std::ostream& out) {
  for (const auto& e : dict.entries()) {
    for (size_t i = 0; i < e.tokens.size(); ++i) out << (i ? " " : "") << e.tokens[i];
    out << '\t' << labels.name(e.type) << '\n';
  }
}

// Entries bucketed by their first token, longest first within a bucket.
class MatcherIndex {
 public:
  MatcherIndex() = default;

  explicit MatcherIndex(const Dictionary& dict) : entries_(dict.entries()) {
    for (uint32_t i = 0; i < entries_.size(); ++i) {
      buckets_[entries_[i].tokens.front()].push_back(i);
      max_length_ = std::max(max_length_, entries_[i].tokens.size());
    }
    for (auto& [key, ids] : buckets_) {
      std::sort(ids.begin(), ids.end(), [&](uint32_t a, uint32_t b) {
        const auto& ea = entries_[a];
        const auto& eb = entries_[b];
        if (ea.tokens.size() != eb.tokens.size()) return ea.tokens.size() > eb.tokens.size();
        return ea < eb;
      });
    }
  }

  const std::vector<uint32_t>* candidates(const std::string& folded_first) const {
    auto it = buckets_.find(folded_first);
    return it == buckets_.end() ? nullptr : &it->second;
  }

  const DictionaryEntry& entry(uint32_t i) const { return entries_[i]; }
  size_t size() const { return entries_.size(); }
  size_t max_length() const { return max_length_; }

 private:
  std::vector<DictionaryEntry> entries_;
  std::unordered_map<std::string, std::vector<uint32_t>> buckets_;
  size_t max_length_ = 0;
};

inline MatcherIndex compile_dictionary(const Dictionary& dict) { return MatcherIndex(dict); }

inline MatcherIndex compile_dictionary(const std::vector<RawDictionaryEntry>& raw,
                                       const LabelSet& labels) {
  return MatcherIndex(make_dictionary(raw, labels));
}

// A dictionary hit: tokens [start, start + length) match an entry.
struct Match {
  uint32_t start = 0;
  uint32_t length = 0;
  LabelId type = 1;

  friend auto operator<=>(const Match&, const Match&) = default;
};

// Every exact case-folded match, ordered by start then descending length.
// When one span matches entries of several types only the smallest type id
// is kept.
inline std::vector<Match> find_matches(const Sentence& sentence, const MatcherIndex& index) {
  std::vector<std::string> folded;
  folded.reserve(sentence.size());
  for (const auto& t : sentence.tokens) folded.push_back(fold_case(t.surface));

  std::vector<Match> matches;
  for (uint32_t i = 0; i < folded.size(); ++i) {
    const auto* bucket = index.candidates(folded[i]);
    if (!bucket) continue;
    for (uint32_t id : *bucket) {
      const auto& e = index.entry(id);
      const size_t len = e.tokens.size();
      if (i + len > folded.size()) continue;
      if (!std::equal(e.tokens.begin(), e.tokens.end(), folded.begin() + i)) continue;
      if (!matches.empty() && matches.back().start == i && matches.back().length == len) {
        continue;  // same span, larger type id
      }
      matches.push_back({i, static_cast<uint32_t>(len), e.type});
    }
  }
  return matches;
}

// Selects non-overlapping matches covering the most tokens. Among optimal
// selections the lexicographically smallest sequence of (start, -length)
// wins, i.e. leftmost-longest.
inline std::vector<Match> select_matches(const std::vector<Match>& matches, size_t n_tokens) {
  std::vector<std::vector<const Match*>> starting(n_tokens);
  for (const auto& m : matches) starting[m.start].push_back(&m);
  for (auto& v : starting) {
    std::stable_sort(v.begin(), v.end(), [](const Match* a, const Match* b) { return a->length > b->length; });
  }

  // best[i]: most tokens coverable using matches that start at or after i.
  std::vector<size_t> best(n_tokens + 1, 0);
  for (size_t i = n_tokens; i-- > 0;) {
    best[i] = best[i + 1];
    for (const Match* m : starting[i]) best[i] = std::max(best[i], m->length + best[i + m->length]);
  }

  std::vector<Match> chosen;
  size_t i = 0;
  while (i < n_tokens) {
    const Match* pick = nullptr;
    for (const Match* m : starting[i]) {  // longest first
      if (m->length + best[i + m->length] == best[i]) {
        pick = m;
        break;
      }
    }
    if (pick) {
      chosen.push_back(*pick);
      i += pick->length;
    } else {
      ++i;
    }
  }
  return chosen;
}

inline std::vector<LabelId> annotate(const Sentence& sentence, const MatcherIndex& index) {
  std::vector<LabelId> labels(sentence.size(), kUnlabeled);
  for (const auto& m : select_matches(find_matches(sentence, index), sentence.size())) {
    std::fill_n(labels.begin() + m.start, m.length, m.type);
  }
  return labels;
}

// Re-labels the distant column of every sentence; gold labels are kept.
inline Corpus annotate_corpus(const Corpus& corpus, const MatcherIndex& index) {
  Corpus out = corpus;
  for (auto& s : out.sentences) {
    const auto labels = annotate(s, index);
    for (size_t i = 0; i < s.size(); ++i) s.tokens[i].distant = labels[i];
  }
  return out;
}

// Token-level comparison of distant labels against gold labels.
//   false negative:  gold != 0, distant == 0
//   false positive:  gold == 0, distant != 0
//   type error:      both non-zero and different
// false_negative_rate is over gold-positive tokens; the other rates are over
// distant-positive tokens.
struct NoiseStats {
  size_t tokens = 0;
  size_t gold_positive = 0;
  size_t distant_positive = 0;
  size_t false_negative = 0;
  size_t false_positive = 0;
  size_t type_error = 0;

  size_t disagreements() const { return false_negative + false_positive + type_error; }

  static double ratio(size_t num, size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  }
  double false_negative_rate() const { return ratio(false_negative, gold_positive); }
  double false_positive_rate() const { return ratio(false_positive, distant_positive); }
  double positive_type_error_rate() const { return ratio(type_error, distant_positive); }
  double positive_error_rate() const {
    return ratio(false_positive + type_error, distant_positive);
  }

  nlohmann::json to_json() const {
    return {
        {"counts",
         {{"tokens", tokens},
          {"gold_positive", gold_positive},
          {"distant_positive", distant_positive},
          {"false_negative", false_negative},
          {"false_positive", false_positive},
          {"positive_type_error", type_error}}},
        {"rates",
         {{"false_negative_rate", false_negative_rate()},
          {"false_positive_rate", false_positive_rate()},
          {"positive_type_error_rate", positive_type_error_rate()},
          {"positive_error_rate", positive_error_rate()}}},
    };
  }
};

inline NoiseStats noise_report(const Corpus& corpus) {
  NoiseStats st;
  for (const auto& s : corpus.sentences) {
    for (const auto& t : s.tokens) {
      if (!t.gold) throw std::invalid_argument("noise_report: token '" + t.surface + "' has no gold label");
      const LabelId g = *t.gold, d = t.distant;
      ++st.tokens;
      if (g != kUnlabeled) ++st.gold_positive;
      if (d != kUnlabeled) ++st.distant_positive;
      if (g != kUnlabeled && d == kUnlabeled) ++st.false_negative;
      if (g == kUnlabeled && d != kUnlabeled) ++st.false_positive;
      if (g != kUnlabeled && d != kUnlabeled && g != d) ++st.type_error;
    }
  }
  return st;
}

struct NoiseRates {
  double false_negative = 0.0;  // per gold span: erase
  double false_positive = 0.0;  // per maximal gold-O run: insert a 1-3 token mention
  double type_error = 0.0;      // per gold span: relabel to another type
};

// Writes noisy distant labels derived from the gold labels. Each gold span
// draws one uniform u: u < fn erases it, otherwise u < fn + type relabels it
// to a uniformly chosen other type. Each maximal gold-O run independently
// receives, with probability fp, a random 1-3 token sub-run of a random type.
inline Corpus inject_noise(const Corpus& gold, const NoiseRates& rates, Rng& rng) {
  auto check = [](double r, const char* what) {
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument(std::string("inject_noise: ") + what + " not in [0,1]");
  };
  check(rates.false_negative, "false_negative");
  check(rates.false_positive, "false_positive");
  check(rates.type_error, "type_error");
  if (rates.false_negative + rates.type_error > 1.0) {
    throw std::invalid_argument("inject_noise: false_negative + type_error exceeds 1");
  }
  if (!gold.has_gold()) throw std::invalid_argument("inject_noise: corpus lacks gold labels");

  const int k = gold.labels.size();
  Corpus out = gold;
  for (auto& s : out.sentences) {
    const auto g = s.gold_labels();
    for (size_t i = 0; i < s.size(); ++i) s.tokens[i].distant = g[i];
    size_t i = 0;
    while (i < g.size()) {
      size_t j = i;
      while (j + 1 < g.size() && g[j + 1] == g[i]) ++j;
      if (g[i] != kUnlabeled) {
        const double u = rng.uniform();
        if (u < rates.false_negative) {
          for (size_t t = i; t <= j; ++t) s.tokens[t].distant = kUnlabeled;
        } else if (u < rates.false_negative + rates.type_error && k >= 2) {
          LabelId other = static_cast<LabelId>(1 + rng.below(static_cast<uint64_t>(k - 1)));
          if (other >= g[i]) ++other;
          for (size_t t = i; t <= j; ++t) s.tokens[t].distant = other;
        }
      } else if (rng.bernoulli(rates.false_positive)) {
        const size_t run = j - i + 1;
        const size_t len = std::min<size_t>(run, 1 + rng.below(3));
        const size_t start = i + rng.below(run - len + 1);
        const LabelId type = static_cast<LabelId>(1 + rng.below(static_cast<uint64_t>(k)));
        for (size_t t = start; t < start + len; ++t) s.tokens[t].distant = type;
      }
      i = j + 1;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpora.
//
// A template is a token sequence where "[t]" is an entity slot of type t,
// "[*]" a slot of a random type, "_" a context word drawn from the shared
// context vocabulary, and anything else a literal word.

struct SyntheticSpec {
  int n_sentences = 2000;
  int k = 2;
  int dictionary_size = 600;
  std::vector<std::string> templates;
  // Probability of entity length 1, 2, 3, ...
  std::vector<double> entity_length_weights = {0.45, 0.35, 0.2};
  int context_vocab_size = 400;
  int entity_words_per_type = 150;
  // Fraction of entity tokens borrowed from the context vocabulary.
  double shared_word_rate = 0.1;
  // Zipf exponent for choosing context words and dictionary entries.
  double zipf_exponent = 1.0;
};

namespace detail {

inline std::string pseudo_word(Rng& rng) {
  static constexpr char kOnset[] = "bdfgklmnprstvz";
  static constexpr char kVowel[] = "aeiou";
  const size_t syllables = 2 + rng.below(3);
  std::string w;
  for (size_t i = 0; i < syllables; ++i) {
    w += kOnset[rng.below(sizeof(kOnset) - 1)];
    w += kVowel[rng.below(sizeof(kVowel) - 1)];
  }
  return w;
}

inline std::vector<std::string> unique_words(size_t n, Rng& rng,
                                             std::unordered_set<std::string>& used) {
  std::vector<std::string> out;
  while (out.size() < n) {
    auto w = pseudo_word(rng);
    if (used.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

inline std::vector<double> zipf_weights(size_t n, double s) {
  std::vector<double> w(n);
  for (size_t r = 0; r < n; ++r) w[r] = 1.0 / std::pow(static_cast<double>(r + 1), s);
  return w;
}

}  // namespace detail

// Random template pool. Slots are never adjacent, and a slot is usually
// preceded by one of a few cue words tied to its type.
inline std::vector<std::string> make_template_pool(int n_templates, int k, Rng& rng) {
  if (n_templates < 1 || k < 1) throw std::invalid_argument("make_template_pool: bad arguments");
  std::unordered_set<std::string> used;
  auto literals = detail::unique_words(60, rng, used);
  std::vector<std::vector<std::string>> cues;
  for (int t = 0; t < k; ++t) cues.push_back(detail::unique_words(3, rng, used));

  std::vector<std::string> pool;
  for (int n = 0; n < n_templates; ++n) {
    const size_t length = 5 + rng.below(8);
    const size_t slots = 1 + rng.below(2);
    std::vector<std::string> items(length);
    for (auto& it : items) it = rng.bernoulli(0.5) ? literals[rng.below(literals.size())] : "_";
    std::set<size_t> slot_pos;
    for (size_t tries = 0; slot_pos.size() < slots && tries < 50; ++tries) {
      const size_t p = 1 + rng.below(length - 1);
      if (slot_pos.count(p) || slot_pos.count(p - 1) || slot_pos.count(p + 1)) continue;
      slot_pos.insert(p);
    }
    for (size_t p : slot_pos) {
      const int type = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(k)));
      items[p] = "[" + std::to_string(type) + "]";
      if (rng.bernoulli(0.8) && !slot_pos.count(p - 1)) {
        items[p - 1] = cues[static_cast<size_t>(type - 1)][rng.below(3)];
      }
    }
    std::string tpl;
    for (size_t i = 0; i < items.size(); ++i) tpl += (i ? " " : "") + items[i];
    pool.push_back(std::move(tpl));
  }
  return pool;
}

struct SyntheticCorpus {
  Corpus corpus;  // gold labels set, distant labels equal to gold
  Dictionary dictionary;
};

inline LabelSet synthetic_labels(int k) {
  std::vector<std::string> names;
  for (int t = 0; t < k; ++t) names.push_back("T" + std::to_string(t + 1));
  return LabelSet(std::move(names));
}

inline SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, Rng& rng) {
  if (spec.templates.empty()) throw std::invalid_argument("generate_synthetic: empty template pool");
  if (spec.n_sentences < 1 || spec.k < 1 || spec.dictionary_size < spec.k ||
      spec.context_vocab_size < 1 || spec.entity_words_per_type < 1 ||
      spec.entity_length_weights.empty()) {
    throw std::invalid_argument("generate_synthetic: spec fields must be positive");
  }

  std::unordered_set<std::string> used;
  const auto context = detail::unique_words(static_cast<size_t>(spec.context_vocab_size), rng, used);
  const auto context_w = detail::zipf_weights(context.size(), spec.zipf_exponent);
  std::vector<std::vector<std::string>> entity_words;
  for (int t = 0; t < spec.k; ++t) {
    entity_words.push_back(detail::unique_words(static_cast<size_t>(spec.entity_words_per_type), rng, used));
  }

  // Dictionary entries, round-robin over types, with globally unique surfaces.
  Dictionary dict;
  std::vector<std::vector<std::vector<std::string>>> by_type(static_cast<size_t>(spec.k));
  std::set<std::vector<std::string>> surfaces;
  for (int n = 0, attempts = 0; n < spec.dictionary_size && attempts < spec.dictionary_size * 50; ++attempts) {
    const int type = 1 + n % spec.k;
    const size_t len = 1 + rng.categorical(spec.entity_length_weights);
    std::vector<std::string> toks;
    for (size_t i = 0; i < len; ++i) {
      if (rng.bernoulli(spec.shared_word_rate)) {
        toks.push_back(context[rng.categorical(context_w)]);
      } else {
        const auto& pool = entity_words[static_cast<size_t>(type - 1)];
        toks.push_back(pool[rng.below(pool.size())]);
      }
    }
    if (!surfaces.insert(toks).second) continue;
    dict.add(toks, type);
    by_type[static_cast<size_t>(type - 1)].push_back(std::move(toks));
    ++n;
  }
  std::vector<std::vector<double>> entry_w;
  for (const auto& entries : by_type) entry_w.push_back(detail::zipf_weights(entries.size(), spec.zipf_exponent));

  Corpus corpus;
  corpus.labels = synthetic_labels(spec.k);
  corpus.sentences.reserve(static_cast<size_t>(spec.n_sentences));
  for (int n = 0; n < spec.n_sentences; ++n) {
    const auto items = tokenize_surface(spec.templates[rng.below(spec.templates.size())]);
    Sentence s;
    for (const auto& item : items) {
      if (item.size() >= 3 && item.front() == '[' && item.back() == ']') {
        const std::string inner = item.substr(1, item.size() - 2);
        int type = 0;
        if (inner == "*") {
          type = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(spec.k)));
        } else {
          type = std::stoi(inner);
          if (type < 1 || type > spec.k) throw std::invalid_argument("generate_synthetic: slot type out of range");
        }
        const auto& entries = by_type[static_cast<size_t>(type - 1)];
        if (entries.empty()) throw std::invalid_argument("generate_synthetic: no entries for a type");
        for (const auto& w : entries[rng.categorical(entry_w[static_cast<size_t>(type - 1)])]) {
          s.tokens.push_back({w, type, type});
        }
      } else if (item == "_") {
        s.tokens.push_back({context[rng.categorical(context_w)], kUnlabeled, kUnlabeled});
      } else {
        s.tokens.push_back({item, kUnlabeled, kUnlabeled});
      }
    }
    if (s.tokens.empty()) throw std::invalid_argument("generate_synthetic: empty template");
    corpus.sentences.push_back(std::move(s));
  }
  return {std::move(corpus), std::move(dict)};
}

// Train/valid/test splits drawn from one synthetic world. Every split gets
// injected distant-label noise; gold labels stay exact.
struct BenchmarkSpec {
  int n_train = 2000;
  int n_valid = 200;
  int n_test = 500;
  int k = 2;
  int n_templates = 80;
  NoiseRates noise{0.4, 0.05, 0.05};
  SyntheticSpec world;
};

struct Benchmark {
  Corpus train, valid, test;
  Dictionary dictionary;
};

inline Benchmark make_benchmark(const BenchmarkSpec& spec, uint64_t seed) {
  Rng template_rng(derive_seed(seed, "synthetic-templates"));
  SyntheticSpec world = spec.world;
  world.k = spec.k;
  world.n_sentences = spec.n_train + spec.n_valid + spec.n_test;
  if (world.templates.empty()) world.templates = make_template_pool(spec.n_templates, spec.k, template_rng);
  Rng world_rng(derive_seed(seed, "synthetic-world"));
  auto gen = generate_synthetic(world, world_rng);

  auto take = [&](size_t begin, size_t n) {
    Corpus c;
    c.labels = gen.corpus.labels;
    c.sentences.assign(gen.corpus.sentences.begin() + static_cast<std::ptrdiff_t>(begin),
                       gen.corpus.sentences.begin() + static_cast<std::ptrdiff_t>(begin + n));
    return c;
  };
  const size_t tr = static_cast<size_t>(spec.n_train), va = static_cast<size_t>(spec.n_valid),
               te = static_cast<size_t>(spec.n_test);
  Rng noise_rng(derive_seed(seed, "synthetic-noise"));
  Benchmark b;
  auto noisy = [&](Corpus c) { return c.sentences.empty() ? c : inject_noise(c, spec.noise, noise_rng); };
  b.train = noisy(take(0, tr));
  b.valid = noisy(take(tr, va));
  b.test = noisy(take(tr + va, te));
  b.dictionary = std::move(gen.dictionary);
  return b;
}

}  // namespace cupul
