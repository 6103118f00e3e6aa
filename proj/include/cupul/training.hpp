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

// Mini-batch epoch loop shared by voter, curriculum and self-training.

#pragma once

#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "cupul/common.hpp"
#include "cupul/corpus.hpp"
#include "cupul/model.hpp"

namespace cupul {

// Risk over the active tokens of one batch and d(risk)/d(prob) per token.
struct BatchResult {
  double risk = 0.0;
  std::vector<OutputGradient> grads;
  size_t clamped = 0;
};

struct EpochStats {
  double mean_risk = 0.0;  // mean of per-batch risks
  size_t batches = 0;
  size_t clamped = 0;
  size_t active_tokens = 0;
};

// Sentence visiting order for one epoch.
inline std::vector<uint32_t> shuffled_sentences(size_t n, Rng& rng) {
  std::vector<uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  rng.shuffle(order);
  return order;
}

// One pass over `order` in batches of `batch_size` sentences. For every batch
// the tokens accepted by `is_active(TokenRef)` are forwarded, `risk(refs,
// activations)` returns the batch risk (or nullopt to skip the batch), and a
// single Adam step is taken.
template <class ActiveFn, class RiskFn>
EpochStats train_epoch(TokenClassifier& model, AdamState& adam, const EncodedCorpus& corpus,
                       const std::vector<uint32_t>& order, size_t batch_size, ActiveFn&& is_active,
                       RiskFn&& risk) {
  if (batch_size == 0) throw std::invalid_argument("train_epoch: batch_size must be positive");
  check_vocab(model, corpus);
  EpochStats stats;
  Gradients grads(model.params().size());
  std::vector<TokenRef> refs;
  std::vector<Activation> acts;
  double risk_sum = 0.0;

  for (size_t begin = 0; begin < order.size(); begin += batch_size) {
    const size_t end = std::min(order.size(), begin + batch_size);
    refs.clear();
    for (size_t b = begin; b < end; ++b) {
      const uint32_t s = order[b];
      for (uint32_t t = 0; t < corpus.ids[s].size(); ++t) {
        if (is_active(TokenRef{s, t})) refs.push_back({s, t});
      }
    }
    if (refs.empty()) continue;
    if (acts.size() < refs.size()) acts.resize(refs.size());
    for (size_t i = 0; i < refs.size(); ++i) {
      model.forward(corpus.ids[refs[i].sentence], refs[i].token, acts[i]);
    }
    std::optional<BatchResult> result =
        risk(std::span<const TokenRef>(refs), std::span<const Activation>(acts.data(), refs.size()));
    if (!result) continue;
    if (!std::isfinite(result->risk)) {
      throw NumericError("non-finite batch risk " + std::to_string(result->risk));
    }
    if (result->grads.size() != refs.size()) throw std::logic_error("train_epoch: gradient count mismatch");

    grads.clear();
    for (size_t i = 0; i < refs.size(); ++i) {
      model.accumulate_gradient(corpus.ids[refs[i].sentence], refs[i].token, acts[i], result->grads[i], grads);
    }
    adam_step(model, grads, adam);

    risk_sum += result->risk;
    ++stats.batches;
    stats.clamped += result->clamped;
    stats.active_tokens += refs.size();
  }
  stats.mean_risk = stats.batches ? risk_sum / static_cast<double>(stats.batches) : 0.0;
  return stats;
}

}  // namespace cupul
