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

// Finite-difference check of parameter gradients through the classifier.

#pragma once

#include <vector>

#include "test_util.hpp"

namespace cupul::testing {

enum class RiskKind { kCe, kMae, kKlSoft, kConfMpu };

inline const char* to_string(RiskKind k) {
  switch (k) {
    case RiskKind::kCe: return "ce";
    case RiskKind::kMae: return "mae";
    case RiskKind::kKlSoft: return "kl-soft";
    case RiskKind::kConfMpu: return "conf-mpu";
  }
  return "?";
}

// Risk over every token of `enc`, with per-token output gradients.
struct RiskEval {
  double value = 0.0;
  std::vector<OutputGradient> grads;
};

class RiskOverCorpus {
 public:
  RiskOverCorpus(const Corpus& corpus, RiskKind kind, uint64_t seed) : corpus_(corpus), kind_(kind) {
    Rng rng(seed);
    const size_t c = static_cast<size_t>(corpus.labels.num_classes());
    for (const auto& r : corpus.refs()) {
      refs_.push_back(r);
      targets_.push_back(random_distribution(rng, c, 0.05));
      lambdas_.push_back(rng.uniform());
    }
    std::vector<double> pi(static_cast<size_t>(corpus.labels.size()), 0.3 / corpus.labels.size());
    priors_ = Priors(pi);
  }

  RiskEval operator()(const TokenClassifier& model, const EncodedCorpus& enc) const {
    std::vector<ClassDistribution> d;
    d.reserve(refs_.size());
    for (const auto& r : refs_) d.push_back(model.forward(enc.ids[r.sentence], r.token));
    RiskEval out;
    switch (kind_) {
      case RiskKind::kCe:
      case RiskKind::kMae: {
        std::vector<LabeledPrediction> items;
        for (size_t i = 0; i < refs_.size(); ++i) items.push_back({&d[i], corpus_.at(refs_[i]).distant});
        auto r = mean_risk(items, kind_ == RiskKind::kCe ? LossKind::kCrossEntropy : LossKind::kMae);
        out = {r.value, std::move(r.grads)};
        break;
      }
      case RiskKind::kKlSoft: {
        std::vector<SoftTargetPrediction> items;
        for (size_t i = 0; i < refs_.size(); ++i) items.push_back({&d[i], &targets_[i]});
        auto r = kl_risk(items);
        out = {r.value, std::move(r.grads)};
        break;
      }
      case RiskKind::kConfMpu: {
        std::vector<ConfidentPrediction> items;
        for (size_t i = 0; i < refs_.size(); ++i) {
          items.push_back({&d[i], corpus_.at(refs_[i]).distant, lambdas_[i]});
        }
        ConfMpuConfig cfg;
        cfg.gamma = 2.0;
        auto r = conf_mpu_risk(items, priors_, cfg);
        out = {r.breakdown.total, std::move(r.grads)};
        break;
      }
    }
    return out;
  }

  const std::vector<TokenRef>& refs() const { return refs_; }

 private:
  const Corpus& corpus_;
  RiskKind kind_;
  std::vector<TokenRef> refs_;
  std::vector<ClassDistribution> targets_;
  std::vector<double> lambdas_;
  Priors priors_;
};

// Worst relative error between backprop and central differences over a
// random sample of parameters from every block.
inline double model_gradient_error(const TokenClassifier& model, const Corpus& corpus, const EncodedCorpus& enc,
                                   RiskKind kind, uint64_t seed, size_t samples = 80) {
  const RiskOverCorpus risk(corpus, kind, seed);
  const auto at_init = risk(model, enc);
  std::vector<TokenGradient> tg;
  for (size_t i = 0; i < risk.refs().size(); ++i) tg.push_back({risk.refs()[i], at_init.grads[i]});
  const auto analytic = backward(model, enc, tg).values;

  Rng rng(seed ^ 0x5eed);
  std::vector<size_t> idx;
  const size_t n = model.params().size();
  for (size_t i = 0; i < samples; ++i) idx.push_back(rng.below(n));
  // Always include a few output-bias and hidden-bias coordinates.
  idx.push_back(model.layout().output_b);
  idx.push_back(model.layout().hidden_b);

  TokenClassifier probe = model;
  auto f = [&](const std::vector<double>& p) {
    probe.params() = p;
    return risk(probe, enc).value;
  };
  const auto numeric = central_differences(f, model.params(), idx, 1e-6);
  std::vector<double> picked;
  for (size_t i : idx) picked.push_back(analytic[i]);
  return max_relative_error(picked, numeric);
}

}  // namespace cupul::testing
