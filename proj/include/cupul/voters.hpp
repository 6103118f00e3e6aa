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

// Voter ensemble: independently seeded classifiers trained on distant labels.
// Their averaged output gives each token a soft label and an entity
// confidence; their pairwise disagreement gives its difficulty.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "cupul/common.hpp"
#include "cupul/corpus.hpp"
#include "cupul/model.hpp"
#include "cupul/risk.hpp"
#include "cupul/training.hpp"

namespace cupul {

struct VoterConfig {
  int count = 5;
  int epochs = 5;
  // Fraction of unlabeled tokens kept per batch.
  double keep_negative_ratio = 0.3;
  double learning_rate = 1e-3;
  size_t batch_size = 32;
  LossKind loss = LossKind::kCrossEntropy;
  // When false every voter gets the same seed (degenerate control).
  bool distinct_seeds = true;

  void validate() const {
    if (count < 2) throw std::invalid_argument("VoterConfig: need at least 2 voters");
    if (epochs < 1) throw std::invalid_argument("VoterConfig: epochs must be >= 1");
    if (!(keep_negative_ratio > 0.0 && keep_negative_ratio <= 1.0)) {
      throw std::invalid_argument("VoterConfig: keep_negative_ratio must be in (0,1]");
    }
    if (!(learning_rate > 0.0)) throw std::invalid_argument("VoterConfig: learning_rate must be > 0");
  }
};

struct VoterEnsemble {
  std::vector<TokenClassifier> voters;
  std::vector<uint64_t> seeds;

  size_t size() const { return voters.size(); }
};

// Trains one voter with seed `voter_seed`; `shuffle_seed` fixes the sentence
// order, which is shared by all voters of an ensemble.
inline TokenClassifier train_voter(const Corpus& corpus, const EncodedCorpus& encoded,
                                   ModelConfig model_config, const VoterConfig& cfg, uint64_t voter_seed,
                                   uint64_t shuffle_seed) {
  model_config.seed = voter_seed;
  TokenClassifier model(model_config, encoded.vocab_fingerprint);
  AdamState adam(model.params().size(), cfg.learning_rate);
  Rng negatives(derive_seed(voter_seed, "voter-negatives"));

  std::vector<LabeledPrediction> items;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng order_rng(derive_seed(shuffle_seed, "voter-shuffle", static_cast<uint64_t>(epoch)));
    const auto order = shuffled_sentences(encoded.ids.size(), order_rng);
    train_epoch(
        model, adam, encoded, order, cfg.batch_size, [](TokenRef) { return true; },
        [&](std::span<const TokenRef> refs, std::span<const Activation> acts) -> std::optional<BatchResult> {
          items.clear();
          for (size_t i = 0; i < refs.size(); ++i) {
            items.push_back({&acts[i].dist, corpus.at(refs[i]).distant});
          }
          BatchRisk r = pn_risk_or_empty(items, cfg.keep_negative_ratio, negatives, cfg.loss);
          if (r.contributing == 0) return std::nullopt;
          return BatchResult{r.value, std::move(r.grads), 0};
        });
  }
  return model;
}

// Voter v is seeded with seed ^ v, so adding voters never changes the
// existing ones. Voters train in parallel when threads > 1; the result does
// not depend on the thread count.
inline VoterEnsemble train_voters(const Corpus& corpus, const EncodedCorpus& encoded,
                                  const ModelConfig& model_config, const VoterConfig& cfg, uint64_t seed,
                                  int threads = 1) {
  cfg.validate();
  bool any_positive = false;
  for (const auto& s : corpus.sentences) {
    for (const auto& t : s.tokens) any_positive |= t.distant != kUnlabeled;
  }
  if (!any_positive) throw std::invalid_argument("train_voters: corpus has no positive tokens");

  VoterEnsemble ens;
  for (int v = 0; v < cfg.count; ++v) {
    ens.seeds.push_back(cfg.distinct_seeds ? seed ^ static_cast<uint64_t>(v) : seed);
  }
  ens.voters.resize(static_cast<size_t>(cfg.count));
  auto work = [&](size_t v) {
    ens.voters[v] = train_voter(corpus, encoded, model_config, cfg, ens.seeds[v], seed);
  };
  if (threads <= 1) {
    for (size_t v = 0; v < ens.voters.size(); ++v) work(v);
  } else {
    for (size_t begin = 0; begin < ens.voters.size(); begin += static_cast<size_t>(threads)) {
      std::vector<std::thread> pool;
      for (size_t v = begin; v < std::min(ens.voters.size(), begin + static_cast<size_t>(threads)); ++v) {
        pool.emplace_back(work, v);
      }
      for (auto& t : pool) t.join();
    }
  }
  return ens;
}

// Elementwise mean of the voter distributions.
inline ClassDistribution ensemble_distribution(std::span<const ClassDistribution> outputs) {
  if (outputs.empty()) throw std::invalid_argument("ensemble_distribution: no voters");
  ClassDistribution out{std::vector<double>(outputs.front().size(), 0.0)};
  for (const auto& d : outputs) {
    if (d.size() != out.size()) throw std::invalid_argument("ensemble_distribution: size mismatch");
    for (size_t j = 0; j < d.size(); ++j) out.probs[j] += d[j];
  }
  for (double& p : out.probs) p /= static_cast<double>(outputs.size());
  return out;
}

inline ClassDistribution ensemble_distribution(const VoterEnsemble& ens, std::span<const int32_t> ids,
                                               size_t token) {
  std::vector<ClassDistribution> outs;
  for (const auto& v : ens.voters) outs.push_back(v.forward(ids, token));
  return ensemble_distribution(outs);
}

// Entity confidence: total probability of the entity classes 1..k.
inline double confidence(const ClassDistribution& ensemble) {
  double lambda = 0.0;
  for (size_t j = 1; j < ensemble.size(); ++j) lambda += ensemble[j];
  return std::clamp(lambda, 0.0, 1.0);
}

inline double kl_divergence(const ClassDistribution& p, const ClassDistribution& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double d = 0.0;
  for (size_t j = 0; j < p.size(); ++j) {
    if (p[j] <= 0.0) continue;
    d += p[j] * std::log(std::max(p[j], kProbFloor) / std::max(q[j], kProbFloor));
  }
  return d;
}

// Symmetrised KL divergence between two voters' outputs.
inline double pairwise_disagreement(const ClassDistribution& p, const ClassDistribution& q) {
  return 0.5 * (kl_divergence(p, q) + kl_divergence(q, p));
}

// Mean pairwise disagreement over all V(V-1)/2 unordered voter pairs.
inline double difficulty(std::span<const ClassDistribution> outputs) {
  const size_t v = outputs.size();
  if (v < 2) throw std::invalid_argument("difficulty: need at least 2 voters");
  double sum = 0.0;
  for (size_t i = 0; i < v; ++i) {
    for (size_t j = i + 1; j < v; ++j) sum += pairwise_disagreement(outputs[i], outputs[j]);
  }
  return sum / (static_cast<double>(v) * static_cast<double>(v - 1) / 2.0);
}

struct ConfidenceTable {
  TokenTable<ClassDistribution> ensemble;
  TokenTable<double> lambda;
};

using DifficultyTable = TokenTable<double>;

struct TokenScores {
  ConfidenceTable confidence;
  DifficultyTable difficulty;
};

// Ensemble distribution, confidence and difficulty for every token, from
// frozen voters.
inline TokenScores score_tokens(const VoterEnsemble& ens, const EncodedCorpus& corpus) {
  if (ens.size() < 2) throw std::invalid_argument("score_tokens: need at least 2 voters");
  for (const auto& v : ens.voters) check_vocab(v, corpus);
  std::vector<size_t> sizes;
  for (const auto& s : corpus.ids) sizes.push_back(s.size());
  TokenScores out{{TokenTable<ClassDistribution>(sizes), TokenTable<double>(sizes)}, TokenTable<double>(sizes)};
  std::vector<ClassDistribution> outs(ens.size());
  Activation act;
  for (size_t s = 0; s < corpus.ids.size(); ++s) {
    for (size_t t = 0; t < corpus.ids[s].size(); ++t) {
      for (size_t v = 0; v < ens.size(); ++v) {
        ens.voters[v].forward(corpus.ids[s], t, act);
        outs[v] = act.dist;
      }
      auto avg = ensemble_distribution(outs);
      const double h = difficulty(outs);
      if (!std::isfinite(h)) throw NumericError("score_tokens: non-finite difficulty");
      out.confidence.lambda.at(s, t) = confidence(avg);
      out.confidence.ensemble.at(s, t) = std::move(avg);
      out.difficulty.at(s, t) = h;
    }
  }
  return out;
}

inline DifficultyTable difficulty_scores(const VoterEnsemble& ens, const EncodedCorpus& corpus) {
  return score_tokens(ens, corpus).difficulty;
}

// Per-token dump: sentence, token, surface, distant label, lambda,
// difficulty and the comma-separated ensemble distribution. Values are
// printed with 17 significant digits so they read back exactly.
inline void write_token_scores(std::ostream& out, const Corpus& corpus, const TokenScores& scores) {
  const auto& lambda = scores.confidence.lambda;
  const auto& diff = scores.difficulty;
  if (!lambda.matches(corpus) || !diff.matches(corpus) || !scores.confidence.ensemble.matches(corpus)) {
    throw std::invalid_argument("write_token_scores: tables do not match corpus");
  }
  char buf[64];
  for (uint32_t s = 0; s < corpus.sentences.size(); ++s) {
    const auto& sent = corpus.sentences[s];
    for (uint32_t t = 0; t < sent.size(); ++t) {
      out << s << '\t' << t << '\t' << sent.tokens[t].surface << '\t' << corpus.labels.name(sent.tokens[t].distant);
      std::snprintf(buf, sizeof buf, "\t%.17g", lambda.at(s, t));
      out << buf;
      std::snprintf(buf, sizeof buf, "\t%.17g\t", diff.at(s, t));
      out << buf;
      const auto& p = scores.confidence.ensemble.at(s, t).probs;
      for (size_t j = 0; j < p.size(); ++j) {
        std::snprintf(buf, sizeof buf, j ? ",%.17g" : "%.17g", p[j]);
        out << buf;
      }
      out << '\n';
    }
  }
}

using TokenScoreColumns = TokenScores;

// Reads a dump written by write_token_scores and checks it row by row
// against `corpus`.
inline TokenScoreColumns read_token_scores(std::istream& in, const Corpus& corpus) {
  TokenScores out{{TokenTable<ClassDistribution>(corpus), TokenTable<double>(corpus)}, DifficultyTable(corpus)};
  std::string line;
  size_t line_no = 0, rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split(line, '\t');
    const std::string where = "token scores line " + std::to_string(line_no);
    if (cols.size() != 7) throw FormatError(where + ": expected 7 columns");
    uint32_t s = 0, t = 0;
    double lambda = 0.0, h = 0.0;
    ClassDistribution dist;
    try {
      s = static_cast<uint32_t>(std::stoul(cols[0]));
      t = static_cast<uint32_t>(std::stoul(cols[1]));
      lambda = std::stod(cols[4]);
      h = std::stod(cols[5]);
      for (const auto& p : split(cols[6], ',')) dist.probs.push_back(std::stod(p));
    } catch (const std::exception&) {
      throw FormatError(where + ": bad number");
    }
    if (static_cast<int>(dist.size()) != corpus.labels.num_classes()) {
      throw CompatibilityError(where + ": ensemble distribution has the wrong number of classes");
    }
    if (s >= corpus.sentences.size() || t >= corpus.sentences[s].size()) {
      throw CompatibilityError(where + ": token reference outside corpus");
    }
    if (corpus.sentences[s].tokens[t].surface != cols[2]) {
      throw CompatibilityError(where + ": surface '" + cols[2] + "' does not match corpus");
    }
    out.confidence.lambda.at(s, t) = lambda;
    out.confidence.ensemble.at(s, t) = std::move(dist);
    out.difficulty.at(s, t) = h;
    ++rows;
  }
  if (rows != corpus.token_count()) {
    throw CompatibilityError("token scores: " + std::to_string(rows) + " rows for " +
                             std::to_string(corpus.token_count()) + " corpus tokens");
  }
  return out;
}

}  // namespace cupul
