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

// Corpus data model, CoNLL-style TSV I/O, vocabulary and span extraction.
//
// File format: one token per line, `surface<TAB>distant[<TAB>gold]`, label
// names with "O" for the unlabeled class, one blank line after every
// sentence.

#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cupul/common.hpp"

namespace cupul {

inline constexpr const char* kOutsideName = "O";

// Entity type names. Id 0 is the implicit "O" class; names()[i] has id i+1.
class LabelSet {
 public:
  LabelSet() = default;

  explicit LabelSet(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.empty()) throw std::invalid_argument("LabelSet: need at least one entity type");
    for (size_t i = 0; i < names_.size(); ++i) {
      const auto& n = names_[i];
      if (n.empty()) throw std::invalid_argument("LabelSet: empty type name");
      if (n == kOutsideName) throw std::invalid_argument("LabelSet: \"O\" is reserved");
      if (n.find_first_of(" \t\n\r") != std::string::npos) {
        throw std::invalid_argument("LabelSet: whitespace in type name '" + n + "'");
      }
      if (!index_.emplace(n, static_cast<LabelId>(i + 1)).second) {
        throw std::invalid_argument("LabelSet: duplicate type name '" + n + "'");
      }
    }
  }

  // Number of entity types k.
  int size() const { return static_cast<int>(names_.size()); }
  int num_classes() const { return size() + 1; }
  const std::vector<std::string>& names() const { return names_; }

  std::optional<LabelId> find(const std::string& name) const {
    if (name == kOutsideName) return kUnlabeled;
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& name(LabelId id) const {
    static const std::string outside = kOutsideName;
    if (id == kUnlabeled) return outside;
    if (id < 0 || id > size()) throw std::out_of_range("LabelSet: bad label id");
    return names_[static_cast<size_t>(id - 1)];
  }

  bool valid(LabelId id) const { return id >= 0 && id <= size(); }

  friend bool operator==(const LabelSet& a, const LabelSet& b) {
    return a.names_ == b.names_;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, LabelId> index_;
};

struct Token {
  std::string surface;
  LabelId distant = kUnlabeled;
  std::optional<LabelId> gold;

  friend bool operator==(const Token&, const Token&) = default;
};

struct Sentence {
  std::vector<Token> tokens;

  size_t size() const { return tokens.size(); }
  std::vector<LabelId> distant_labels() const {
    std::vector<LabelId> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.distant);
    return out;
  }
  std::vector<LabelId> gold_labels() const {
    std::vector<LabelId> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.gold.value_or(kUnlabeled));
    return out;
  }

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

struct TokenRef {
  uint32_t sentence = 0;
  uint32_t token = 0;

  friend auto operator<=>(const TokenRef&, const TokenRef&) = default;
};

struct Corpus {
  std::vector<Sentence> sentences;
  LabelSet labels;

  size_t token_count() const {
    size_t n = 0;
    for (const auto& s : sentences) n += s.size();
    return n;
  }

  bool has_gold() const {
    for (const auto& s : sentences) {
      for (const auto& t : s.tokens) {
        if (!t.gold) return false;
      }
    }
    return !sentences.empty();
  }

  const Token& at(TokenRef r) const { return sentences.at(r.sentence).tokens.at(r.token); }

  // All token references in (sentence, token) order.
  std::vector<TokenRef> refs() const {
    std::vector<TokenRef> out;
    out.reserve(token_count());
    for (uint32_t s = 0; s < sentences.size(); ++s) {
      for (uint32_t t = 0; t < sentences[s].size(); ++t) out.push_back({s, t});
    }
    return out;
  }

  // Throws std::invalid_argument if any invariant is broken.
  void validate() const {
    if (sentences.empty()) throw std::invalid_argument("Corpus: no sentences");
    for (const auto& s : sentences) {
      if (s.tokens.empty()) throw std::invalid_argument("Corpus: empty sentence");
      for (const auto& t : s.tokens) {
        if (t.surface.empty() || t.surface.find_first_of(" \t\n\r") != std::string::npos) {
          throw std::invalid_argument("Corpus: bad token surface '" + t.surface + "'");
        }
        if (!labels.valid(t.distant) || (t.gold && !labels.valid(*t.gold))) {
          throw std::invalid_argument("Corpus: label id out of range");
        }
      }
    }
  }

  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.labels == b.labels && a.sentences == b.sentences;
  }
};

// Dense per-token storage addressed by TokenRef.
template <class T>
class TokenTable {
 public:
  TokenTable() = default;

  explicit TokenTable(const std::vector<size_t>& sentence_sizes, const T& init = T{}) {
    offsets_.reserve(sentence_sizes.size() + 1);
    offsets_.push_back(0);
    for (size_t n : sentence_sizes) offsets_.push_back(offsets_.back() + n);
    values_.assign(offsets_.back(), init);
  }

  explicit TokenTable(const Corpus& corpus, const T& init = T{})
      : TokenTable(sentence_sizes(corpus), init) {}

  static std::vector<size_t> sentence_sizes(const Corpus& corpus) {
    std::vector<size_t> sizes;
    sizes.reserve(corpus.sentences.size());
    for (const auto& s : corpus.sentences) sizes.push_back(s.size());
    return sizes;
  }

  T& operator[](TokenRef r) { return values_[index(r)]; }
  T& at(size_t s, size_t t) { return values_[offsets_[s] + t]; }
  const T& at(size_t s, size_t t) const { return values_[offsets_[s] + t]; }
  const T& operator[](TokenRef r) const { return values_[index(r)]; }

  size_t size() const { return values_.size(); }
  size_t num_sentences() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  size_t sentence_size(size_t s) const { return offsets_[s + 1] - offsets_[s]; }
  std::span<const T> sentence(size_t s) const {
    return {values_.data() + offsets_[s], sentence_size(s)};
  }
  const std::vector<T>& values() const { return values_; }

  bool matches(const Corpus& corpus) const {
    if (num_sentences() != corpus.sentences.size()) return false;
    for (size_t s = 0; s < corpus.sentences.size(); ++s) {
      if (sentence_size(s) != corpus.sentences[s].size()) return false;
    }
    return true;
  }

 private:
  size_t index(TokenRef r) const {
    const size_t i = offsets_.at(r.sentence) + r.token;
    if (r.token >= sentence_size(r.sentence)) throw std::out_of_range("TokenTable: token index");
    return i;
  }

  std::vector<size_t> offsets_;
  std::vector<T> values_;
};

struct ReadOptions {
  // Longer sentences are split into consecutive chunks of this length.
  size_t max_sentence_length = 256;
};

// Parses the CoNLL-style TSV format. When `label_set` is absent the entity
// types are inferred in order of first appearance.
inline Corpus read_conll(std::istream& in, const std::optional<LabelSet>& label_set = std::nullopt,
                         const ReadOptions& options = {}) {
  if (options.max_sentence_length == 0) {
    throw std::invalid_argument("read_conll: max_sentence_length must be positive");
  }
  struct RawToken {
    std::string surface, distant;
    std::optional<std::string> gold;
  };
  std::vector<std::vector<RawToken>> raw;
  std::vector<RawToken> current;
  std::vector<std::string> inferred;
  std::unordered_map<std::string, bool> seen;
  int columns = 0;

  auto note_label = [&](const std::string& name, size_t line_no) {
    if (name.empty()) throw FormatError("line " + std::to_string(line_no) + ": empty label");
    if (label_set) {
      if (!label_set->find(name)) {
        throw FormatError("line " + std::to_string(line_no) + ": unknown label '" + name + "'");
      }
    } else if (name != kOutsideName && !seen[name]) {
      seen[name] = true;
      inferred.push_back(name);
    }
  };

  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (!current.empty()) raw.push_back(std::move(current));
      current.clear();
      continue;
    }
    auto cols = split(line, '\t');
    if (cols.size() != 2 && cols.size() != 3) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 2 or 3 tab-separated columns, got " +
                        std::to_string(cols.size()));
    }
    if (columns == 0) columns = static_cast<int>(cols.size());
    if (static_cast<int>(cols.size()) != columns) {
      throw FormatError("line " + std::to_string(line_no) + ": column count changed from " +
                        std::to_string(columns) + " to " + std::to_string(cols.size()));
    }
    if (cols[0].empty() || cols[0].find_first_of(" \t") != std::string::npos) {
      throw FormatError("line " + std::to_string(line_no) + ": empty or whitespace-containing surface");
    }
    note_label(cols[1], line_no);
    RawToken tok{cols[0], cols[1], std::nullopt};
    if (cols.size() == 3) {
      note_label(cols[2], line_no);
      tok.gold = cols[2];
    }
    current.push_back(std::move(tok));
  }
  if (!current.empty()) raw.push_back(std::move(current));
  if (raw.empty()) throw FormatError("read_conll: no tokens in input");

  Corpus corpus;
  if (label_set) {
    corpus.labels = *label_set;
  } else {
    if (inferred.empty()) {
      // All-O input: keep a single placeholder type so the label space is valid.
      inferred.push_back("ENTITY");
    }
    corpus.labels = LabelSet(inferred);
  }
  for (auto& rs : raw) {
    for (size_t begin = 0; begin < rs.size(); begin += options.max_sentence_length) {
      const size_t end = std::min(rs.size(), begin + options.max_sentence_length);
      Sentence s;
      s.tokens.reserve(end - begin);
      for (size_t i = begin; i < end; ++i) {
        Token t;
        t.surface = std::move(rs[i].surface);
        t.distant = *corpus.labels.find(rs[i].distant);
        if (rs[i].gold) t.gold = *corpus.labels.find(*rs[i].gold);
        s.tokens.push_back(std::move(t));
      }
      corpus.sentences.push_back(std::move(s));
    }
  }
  return corpus;
}

inline void write_conll(const Corpus& corpus, std::ostream& out, bool include_gold) {
  for (const auto& s : corpus.sentences) {
    for (const auto& t : s.tokens) {
      out << t.surface << '\t' << corpus.labels.name(t.distant);
      if (include_gold) {
        if (!t.gold) throw std::invalid_argument("write_conll: token without gold label");
        out << '\t' << corpus.labels.name(*t.gold);
      }
      out << '\n';
    }
    out << '\n';
  }
  if (!out) throw Error("write_conll: stream failure");
}

// An entity mention: inclusive token range with a non-zero label.
struct Span {
  uint32_t start = 0;
  uint32_t end = 0;
  LabelId label = 1;

  uint32_t length() const { return end - start + 1; }
  bool overlaps(const Span& o) const { return start <= o.end && o.start <= end; }

  friend auto operator<=>(const Span&, const Span&) = default;
};

// IO-scheme decoding: every maximal run of one non-zero label is a span.
inline std::vector<Span> extract_spans(std::span<const LabelId> labels) {
  std::vector<Span> spans;
  for (size_t i = 0; i < labels.size();) {
    if (labels[i] == kUnlabeled) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j + 1 < labels.size() && labels[j + 1] == labels[i]) ++j;
    spans.push_back({static_cast<uint32_t>(i), static_cast<uint32_t>(j), labels[i]});
    i = j + 1;
  }
  return spans;
}

// Case-folded word index. Index 0 is the unknown word, index 1 pads the
// context window past sentence edges, words start at 2.
class Vocab {
 public:
  static constexpr int32_t kUnknown = 0;
  static constexpr int32_t kPadding = 1;
  static constexpr int32_t kFirstWord = 2;

  Vocab() = default;

  // `words` in index order starting at kFirstWord. Keys must already be folded.
  explicit Vocab(std::vector<std::string> words) : words_(std::move(words)) {
    for (size_t i = 0; i < words_.size(); ++i) {
      if (!index_.emplace(words_[i], static_cast<int32_t>(i) + kFirstWord).second) {
        throw std::invalid_argument("Vocab: duplicate word '" + words_[i] + "'");
      }
    }
  }

  int32_t index_of(std::string_view surface) const {
    auto it = index_.find(fold_case(surface));
    return it == index_.end() ? kUnknown : it->second;
  }

  // Total rows including the two reserved indices.
  size_t size() const { return words_.size() + kFirstWord; }
  const std::vector<std::string>& words() const { return words_; }

  // Identity hash of the index assignment.
  uint64_t fingerprint() const {
    uint64_t h = fnv1a64("cupul-vocab");
    for (const auto& w : words_) h = splitmix64(h ^ fnv1a64(w));
    return h;
  }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.words_ == b.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int32_t> index_;
};

// Words with count >= min_count, ordered by descending count then bytewise.
inline Vocab build_vocab(const Corpus& corpus, int min_count = 1) {
  if (min_count < 1) throw std::invalid_argument("build_vocab: min_count must be >= 1");
  std::map<std::string, int> counts;
  for (const auto& s : corpus.sentences) {
    for (const auto& t : s.tokens) ++counts[fold_case(t.surface)];
  }
  std::vector<std::pair<std::string, int>> kept;
  for (auto& [w, c] : counts) {
    if (c >= min_count) kept.emplace_back(w, c);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  words.reserve(kept.size());
  for (auto& [w, c] : kept) words.push_back(w);
  return Vocab(std::move(words));
}

// Corpus surfaces mapped through one vocabulary.
struct EncodedCorpus {
  uint64_t vocab_fingerprint = 0;
  std::vector<std::vector<int32_t>> ids;

  size_t token_count() const {
    size_t n = 0;
    for (const auto& s : ids) n += s.size();
    return n;
  }
};

inline EncodedCorpus encode(const Corpus& corpus, const Vocab& vocab) {
  EncodedCorpus enc;
  enc.vocab_fingerprint = vocab.fingerprint();
  enc.ids.reserve(corpus.sentences.size());
  for (const auto& s : corpus.sentences) {
    std::vector<int32_t> ids;
    ids.reserve(s.size());
    for (const auto& t : s.tokens) ids.push_back(vocab.index_of(t.surface));
    enc.ids.push_back(std::move(ids));
  }
  return enc;
}

}  // namespace cupul
