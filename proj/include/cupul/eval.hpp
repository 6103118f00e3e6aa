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

// Span-level metrics and curriculum / difficulty diagnostics.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cupul/common.hpp"
#include "cupul/corpus.hpp"
#include "cupul/curriculum.hpp"
#include "cupul/model.hpp"
#include "cupul/voters.hpp"

namespace cupul {

using SentenceSpans = std::vector<std::vector<Span>>;

// Counts and scores for one metric family. For strict matching both true
// positive counts are equal; relaxed matching counts them separately.
struct Prf {
  size_t n_pred = 0;
  size_t n_gold = 0;
  size_t tp_precision = 0;
  size_t tp_recall = 0;

  double precision() const { return n_pred ? static_cast<double>(tp_precision) / static_cast<double>(n_pred) : 0.0; }
  double recall() const { return n_gold ? static_cast<double>(tp_recall) / static_cast<double>(n_gold) : 0.0; }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }

  Prf& operator+=(const Prf& o) {
    n_pred += o.n_pred;
    n_gold += o.n_gold;
    tp_precision += o.tp_precision;
    tp_recall += o.tp_recall;
    return *this;
  }

  nlohmann::json to_json() const { return {{"precision", precision()}, {"recall", recall()}, {"f1", f1()}}; }
};

// Micro-averaged overall scores plus a per-type breakdown.
struct SpanMetrics {
  Prf overall;
  std::map<LabelId, Prf> per_type;

  nlohmann::json to_json(const LabelSet& labels) const {
    nlohmann::json types = nlohmann::json::object();
    for (const auto& [id, prf] : per_type) types[labels.name(id)] = prf.to_json();
    auto j = overall.to_json();
    j["per_type"] = std::move(types);
    return j;
  }
};

namespace detail {

inline void check_same_shape(const SentenceSpans& pred, const SentenceSpans& gold) {
  if (pred.size() != gold.size()) throw std::invalid_argument("metrics: prediction/gold sentence counts differ");
}

}  // namespace detail

inline SpanMetrics strict_prf(const SentenceSpans& pred, const SentenceSpans& gold) {
  detail::check_same_shape(pred, gold);
  SpanMetrics m;
  for (size_t s = 0; s < pred.size(); ++s) {
    for (const auto& p : pred[s]) {
      auto& t = m.per_type[p.label];
      ++t.n_pred;
      if (std::find(gold[s].begin(), gold[s].end(), p) != gold[s].end()) {
        ++t.tp_precision;
        ++t.tp_recall;
      }
    }
    for (const auto& g : gold[s]) ++m.per_type[g.label].n_gold;
  }
  for (const auto& [id, prf] : m.per_type) m.overall += prf;
  return m;
}

// A predicted span is correct when it shares a token with some gold span; a
// gold span is found when some predicted span shares a token with it. The two
// sides are counted independently.
inline SpanMetrics relaxed_prf(const SentenceSpans& pred, const SentenceSpans& gold, bool require_type = true) {
  detail::check_same_shape(pred, gold);
  auto hit = [&](const Span& a, const std::vector<Span>& others) {
    return std::any_of(others.begin(), others.end(),
                       [&](const Span& b) { return a.overlaps(b) && (!require_type || a.label == b.label); });
  };
  SpanMetrics m;
  for (size_t s = 0; s < pred.size(); ++s) {
    for (const auto& p : pred[s]) {
      auto& t = m.per_type[p.label];
      ++t.n_pred;
      t.tp_precision += hit(p, gold[s]);
    }
    for (const auto& g : gold[s]) {
      auto& t = m.per_type[g.label];
      ++t.n_gold;
      t.tp_recall += hit(g, pred[s]);
    }
  }
  for (const auto& [id, prf] : m.per_type) m.overall += prf;
  return m;
}

struct EvalReport {
  SpanMetrics strict;
  SpanMetrics relaxed;

  nlohmann::json to_json(const LabelSet& labels) const {
    return {{"strict", strict.to_json(labels)},
            {"relaxed", relaxed.to_json(labels)},
            {"counts",
             {{"gold_spans", strict.overall.n_gold},
              {"predicted_spans", strict.overall.n_pred},
              {"strict_tp", strict.overall.tp_precision},
              {"relaxed_tp_precision", relaxed.overall.tp_precision},
              {"relaxed_tp_recall", relaxed.overall.tp_recall}}}};
  }
};

inline SentenceSpans spans_of(const std::vector<std::vector<LabelId>>& labels) {
  SentenceSpans out;
  out.reserve(labels.size());
  for (const auto& s : labels) out.push_back(extract_spans(s));
  return out;
}

// Scores predicted label sequences against the corpus gold labels.
inline EvalReport evaluate_labels(const std::vector<std::vector<LabelId>>& predicted, const Corpus& corpus,
                                  bool relaxed_requires_type = true) {
  if (!corpus.has_gold()) throw FormatError("evaluate: corpus has no gold labels");
  if (predicted.size() != corpus.sentences.size()) throw std::invalid_argument("evaluate: sentence count mismatch");
  std::vector<std::vector<LabelId>> gold;
  gold.reserve(corpus.sentences.size());
  for (size_t s = 0; s < corpus.sentences.size(); ++s) {
    gold.push_back(corpus.sentences[s].gold_labels());
    if (predicted[s].size() != gold.back().size()) throw std::invalid_argument("evaluate: sentence length mismatch");
  }
  const auto p = spans_of(predicted), g = spans_of(gold);
  return {strict_prf(p, g), relaxed_prf(p, g, relaxed_requires_type)};
}

inline EvalReport evaluate(const TokenClassifier& model, const Corpus& corpus, const Vocab& vocab,
                           bool relaxed_requires_type = true) {
  if (!corpus.has_gold()) throw FormatError("evaluate: corpus has no gold labels");
  const auto encoded = encode(corpus, vocab);
  return evaluate_labels(predict(model, encoded), corpus, relaxed_requires_type);
}

// ---------------------------------------------------------------------------
// Per-curriculum positive error rate.

struct CurriculumRow {
  int curriculum = 0;
  size_t positives = 0;
  size_t errors = 0;
  std::optional<double> error_rate;       // unset when the curriculum has no positives
  std::optional<double> mean_difficulty;  // over positives, unset likewise
};

struct CurriculumAnalysis {
  std::vector<CurriculumRow> rows;

  void write_csv(std::ostream& out) const {
    out << "curriculum,positives,errors,error_rate,mean_difficulty\n";
    char buf[64];
    auto fmt = [&](const std::optional<double>& v) -> std::string {
      if (!v) return "NA";
      std::snprintf(buf, sizeof buf, "%.17g", *v);
      return buf;
    };
    for (const auto& r : rows) {
      out << r.curriculum << ',' << r.positives << ',' << r.errors << ',' << fmt(r.error_rate) << ','
          << fmt(r.mean_difficulty) << '\n';
    }
  }

  // (index, rate) pairs for curricula with a defined rate.
  std::pair<std::vector<double>, std::vector<double>> defined_rates() const {
    std::vector<double> idx, rate;
    for (const auto& r : rows) {
      if (r.error_rate) {
        idx.push_back(r.curriculum);
        rate.push_back(*r.error_rate);
      }
    }
    return {idx, rate};
  }
};

// Positive error: a distant entity label that disagrees with gold (false
// positive or wrong type).
inline bool is_positive_error(const Token& t) {
  return t.distant != kUnlabeled && t.gold && *t.gold != t.distant;
}

inline CurriculumAnalysis curriculum_error_analysis(const CurriculumPlan& plan, const Corpus& corpus,
                                                    const DifficultyTable& difficulty) {
  if (!corpus.has_gold()) throw FormatError("curriculum analysis: corpus has no gold labels");
  if (!difficulty.matches(corpus)) throw std::invalid_argument("curriculum analysis: difficulty table mismatch");
  plan.curriculum_index(corpus);
  CurriculumAnalysis out;
  for (size_t c = 0; c < plan.curricula.size(); ++c) {
    CurriculumRow row;
    row.curriculum = static_cast<int>(c + 1);
    double h = 0.0;
    for (const auto& r : plan.curricula[c]) {
      const auto& tok = corpus.at(r);
      if (tok.distant == kUnlabeled) continue;
      ++row.positives;
      row.errors += is_positive_error(tok);
      h += difficulty[r];
    }
    if (row.positives) {
      row.error_rate = static_cast<double>(row.errors) / static_cast<double>(row.positives);
      row.mean_difficulty = h / static_cast<double>(row.positives);
    }
    out.rows.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Difficulty distribution.

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  size_t count = 0;
};

struct DifficultyHistogram {
  std::vector<HistogramBin> bins;
  double mean = 0.0;
  double median = 0.0;

  bool long_tail() const { return mean > median; }

  void write_csv(std::ostream& out) const {
    out << "bin_lo,bin_hi,count\n";
    char buf[96];
    for (const auto& b : bins) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,", b.lo, b.hi);
      out << buf << b.count << '\n';
    }
  }

  nlohmann::json summary_json() const {
    return {{"mean", mean}, {"median", median}, {"mean_gt_median", long_tail()}};
  }
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

// Equal-width bins over [0, max]; the maximum lands in the last bin.
inline DifficultyHistogram difficulty_histogram(std::span<const double> values, int bins) {
  if (bins < 1) throw std::invalid_argument("difficulty_histogram: bins must be >= 1");
  DifficultyHistogram h;
  double max = 0.0;
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0) throw NumericError("difficulty_histogram: invalid difficulty");
    max = std::max(max, v);
  }
  const double width = max / bins;
  for (int b = 0; b < bins; ++b) h.bins.push_back({width * b, b + 1 == bins ? max : width * (b + 1), 0});
  for (double v : values) {
    size_t b = width > 0.0 ? static_cast<size_t>(v / width) : 0;
    ++h.bins[std::min(b, h.bins.size() - 1)].count;
  }
  if (!values.empty()) {
    h.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    h.median = median_of(std::vector<double>(values.begin(), values.end()));
  }
  return h;
}

inline std::vector<double> positive_difficulties(const Corpus& corpus, const DifficultyTable& difficulty) {
  std::vector<double> out;
  for (const auto& r : corpus.refs()) {
    if (corpus.at(r).distant != kUnlabeled) out.push_back(difficulty[r]);
  }
  return out;
}

// ---------------------------------------------------------------------------

// Average ranks (1-based), ties share the mean rank.
inline std::vector<double> ranks(std::span<const double> v) {
  std::vector<size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (size_t i = 0; i < idx.size();) {
    size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t q = i; q <= j; ++q) r[idx[q]] = avg;
    i = j + 1;
  }
  return r;
}

// Spearman rank correlation; nullopt when either side is constant or n < 2.
inline std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
  if (x.size() < 2) return std::nullopt;
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace cupul
