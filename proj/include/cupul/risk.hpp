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

// Per-token losses and batch risk estimators. Every function returns the
// risk value together with d(risk)/d(prob) for each token, which the model
// chains through its softmax.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cupul/common.hpp"
#include "cupul/corpus.hpp"
#include "cupul/model.hpp"

namespace cupul {

enum class LossKind { kCrossEntropy, kMae };

inline const char* to_string(LossKind k) { return k == LossKind::kCrossEntropy ? "ce" : "mae"; }

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "ce") return LossKind::kCrossEntropy;
  if (s == "mae") return LossKind::kMae;
  throw FormatError("unknown loss kind '" + s + "' (expected ce or mae)");
}

struct LossValue {
  double value = 0.0;
  OutputGradient grad;
};

// -ln p_target, with p floored at kProbFloor.
inline LossValue loss_ce(const ClassDistribution& dist, LabelId target) {
  const double p = std::max(dist[static_cast<size_t>(target)], kProbFloor);
  LossValue out{-std::log(p), OutputGradient(dist.size(), 0.0)};
  out.grad[static_cast<size_t>(target)] = -1.0 / p;
  return out;
}

// L1 distance to the one-hot target: sum_j |1[j = target] - p_j|.
inline LossValue loss_mae(const ClassDistribution& dist, LabelId target) {
  LossValue out{0.0, OutputGradient(dist.size(), 1.0)};
  for (size_t j = 0; j < dist.size(); ++j) {
    out.value += std::abs((j == static_cast<size_t>(target) ? 1.0 : 0.0) - dist[j]);
  }
  out.grad[static_cast<size_t>(target)] = -1.0;
  return out;
}

inline LossValue loss(LossKind kind, const ClassDistribution& dist, LabelId target) {
  return kind == LossKind::kCrossEntropy ? loss_ce(dist, target) : loss_mae(dist, target);
}

// KL(target || dist) with both sides floored at kProbFloor.
inline LossValue loss_kl_soft(const ClassDistribution& dist, const ClassDistribution& target) {
  if (dist.size() != target.size()) throw std::invalid_argument("loss_kl_soft: size mismatch");
  LossValue out{0.0, OutputGradient(dist.size(), 0.0)};
  for (size_t j = 0; j < dist.size(); ++j) {
    const double t = target[j];
    if (t <= 0.0) continue;
    const double p = std::max(dist[j], kProbFloor);
    out.value += t * std::log(std::max(t, kProbFloor) / p);
    out.grad[j] = -t / p;
  }
  return out;
}

// Class priors pi_1..pi_k of the entity types.
class Priors {
 public:
  Priors() = default;

  explicit Priors(std::vector<double> pi) : pi_(std::move(pi)) {
    if (pi_.empty()) throw std::invalid_argument("Priors: empty");
    double sum = 0.0;
    for (size_t i = 0; i < pi_.size(); ++i) {
      if (!(pi_[i] > 0.0)) {
        throw std::invalid_argument("Priors: pi_" + std::to_string(i + 1) + " must be > 0");
      }
      sum += pi_[i];
    }
    if (!(sum < 1.0)) throw std::invalid_argument("Priors: sum of priors must be < 1");
  }

  // Prior of entity type `type` (1-based).
  double operator[](LabelId type) const { return pi_.at(static_cast<size_t>(type - 1)); }
  int size() const { return static_cast<int>(pi_.size()); }
  const std::vector<double>& values() const { return pi_; }

 private:
  std::vector<double> pi_;
};

// pi_i = (tokens distantly labeled i) / (all tokens).
inline Priors estimate_priors(const Corpus& corpus) {
  const int k = corpus.labels.size();
  std::vector<size_t> counts(static_cast<size_t>(k) + 1, 0);
  size_t total = 0;
  for (const auto& s : corpus.sentences) {
    for (const auto& t : s.tokens) {
      ++counts[static_cast<size_t>(t.distant)];
      ++total;
    }
  }
  std::vector<double> pi;
  for (int i = 1; i <= k; ++i) {
    if (counts[static_cast<size_t>(i)] == 0) {
      throw std::invalid_argument("estimate_priors: no tokens distantly labeled '" +
                                  corpus.labels.name(i) + "'");
    }
    pi.push_back(static_cast<double>(counts[static_cast<size_t>(i)]) / static_cast<double>(total));
  }
  return Priors(std::move(pi));
}

// ---------------------------------------------------------------------------
// Positive-negative risk with negative sampling (voter training).

struct LabeledPrediction {
  const ClassDistribution* dist = nullptr;
  LabelId label = kUnlabeled;
};

struct BatchRisk {
  double value = 0.0;
  std::vector<OutputGradient> grads;  // one per batch item; zeros if dropped
  size_t contributing = 0;
};

// Mean loss over every positive token plus each unlabeled token kept with
// probability keep_negative_ratio (one draw per unlabeled token, in order).
// Returns contributing == 0 instead of throwing when everything was dropped.
inline BatchRisk pn_risk_or_empty(std::span<const LabeledPrediction> batch, double keep_negative_ratio,
                                  Rng& rng, LossKind kind) {
  if (!(keep_negative_ratio > 0.0 && keep_negative_ratio <= 1.0)) {
    throw std::invalid_argument("pn_risk: keep_negative_ratio must be in (0, 1]");
  }
  std::vector<char> keep(batch.size(), 1);
  size_t n = 0;
  for (size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].label == kUnlabeled) keep[i] = rng.bernoulli(keep_negative_ratio) ? 1 : 0;
    n += keep[i];
  }
  BatchRisk out;
  if (n == 0) return out;
  out.contributing = n;
  out.grads.reserve(batch.size());
  const double scale = 1.0 / static_cast<double>(n);
  for (size_t i = 0; i < batch.size(); ++i) {
    if (!keep[i]) {
      out.grads.emplace_back(batch[i].dist->size(), 0.0);
      continue;
    }
    auto l = loss(kind, *batch[i].dist, batch[i].label);
    out.value += l.value * scale;
    for (double& g : l.grad) g *= scale;
    out.grads.push_back(std::move(l.grad));
  }
  return out;
}

inline BatchRisk pn_risk(std::span<const LabeledPrediction> batch, double keep_negative_ratio,
                         Rng& rng, LossKind kind) {
  BatchRisk out = pn_risk_or_empty(batch, keep_negative_ratio, rng, kind);
  if (out.contributing == 0) throw std::invalid_argument("pn_risk: no contributing tokens");
  return out;
}

// Mean loss over all tokens; unlabeled tokens count as class 0.
inline BatchRisk mean_risk(std::span<const LabeledPrediction> batch, LossKind kind) {
  if (batch.empty()) throw std::invalid_argument("mean_risk: empty batch");
  BatchRisk out;
  out.contributing = batch.size();
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& item : batch) {
    auto l = loss(kind, *item.dist, item.label);
    out.value += l.value * scale;
    for (double& g : l.grad) g *= scale;
    out.grads.push_back(std::move(l.grad));
  }
  return out;
}

// Mean KL(target || prediction) over the batch.
struct SoftTargetPrediction {
  const ClassDistribution* dist = nullptr;
  const ClassDistribution* target = nullptr;
};

inline BatchRisk kl_risk(std::span<const SoftTargetPrediction> batch) {
  if (batch.empty()) throw std::invalid_argument("kl_risk: empty batch");
  BatchRisk out;
  out.contributing = batch.size();
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& item : batch) {
    auto l = loss_kl_soft(*item.dist, *item.target);
    out.value += l.value * scale;
    for (double& g : l.grad) g *= scale;
    out.grads.push_back(std::move(l.grad));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Confidence-based multi-class PU risk.
//
// For entity class i with T_i batch tokens distantly labeled i, and T_0
// unlabeled batch tokens:
//
//   R = gamma * sum_i (pi_i / T_i) sum_{x: label i}
//             max{0, l(f,i) + 1[lambda > eps] l(f,0) / lambda - l(f,0)}
//     + (1 / T_0) sum_{x: label 0} 1[lambda <= eps] l(f,0)
//
// In aggregate clamp mode the max{0, .} is instead applied once to the
// total negative-class risk:
//
//   R = gamma * sum_i (pi_i / T_i) sum l(f,i)
//     + max{0, sum_i (pi_i / T_i) sum (1[lambda > eps] l(f,0) / lambda - l(f,0))
//              + (1 / T_0) sum 1[lambda <= eps] l(f,0)}

enum class ClampMode { kPerToken, kAggregate };

struct ConfMpuConfig {
  double epsilon = 0.5;
  double gamma = 1.0;
  LossKind loss = LossKind::kMae;
  ClampMode clamp = ClampMode::kPerToken;

  void validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("ConfMpuConfig: epsilon must be in (0,1)");
    if (!(gamma > 0.0)) throw std::invalid_argument("ConfMpuConfig: gamma must be > 0");
  }
};

struct ConfidentPrediction {
  const ClassDistribution* dist = nullptr;
  LabelId label = kUnlabeled;
  double lambda = 0.0;
};

struct RiskBreakdown {
  double total = 0.0;
  std::vector<double> per_class;  // index i-1 for entity class i, before gamma
  double unlabeled = 0.0;
  size_t clamped = 0;
  std::vector<LabelId> missing_classes;  // classes with T_i = 0 in this batch

  nlohmann::json to_json(uint64_t step) const {
    return {{"step", step},
            {"total", total},
            {"per_class", per_class},
            {"unlabeled", unlabeled},
            {"clamped_count", clamped}};
  }
};

struct ConfMpuResult {
  RiskBreakdown breakdown;
  std::vector<OutputGradient> grads;
};

inline ConfMpuResult conf_mpu_risk(std::span<const ConfidentPrediction> batch, const Priors& priors,
                                   const ConfMpuConfig& cfg) {
  cfg.validate();
  const int k = priors.size();
  std::vector<size_t> count(static_cast<size_t>(k) + 1, 0);
  for (const auto& item : batch) {
    if (item.label < 0 || item.label > k) throw std::invalid_argument("conf_mpu_risk: label out of range");
    if (!(item.lambda >= 0.0 && item.lambda <= 1.0)) {
      throw std::invalid_argument("conf_mpu_risk: lambda must be in [0,1]");
    }
    ++count[static_cast<size_t>(item.label)];
  }

  ConfMpuResult out;
  auto& br = out.breakdown;
  br.per_class.assign(static_cast<size_t>(k), 0.0);
  for (LabelId i = 1; i <= k; ++i) {
    if (count[static_cast<size_t>(i)] == 0) br.missing_classes.push_back(i);
  }
  out.grads.reserve(batch.size());

  const size_t n_classes = static_cast<size_t>(k) + 1;
  auto weight_of = [&](LabelId label) {
    return label == kUnlabeled ? 1.0 / static_cast<double>(count[0])
                               : priors[label] / static_cast<double>(count[static_cast<size_t>(label)]);
  };

  if (cfg.clamp == ClampMode::kPerToken) {
    for (const auto& item : batch) {
      OutputGradient g(n_classes, 0.0);
      const double w = weight_of(item.label);
      const auto l0 = loss(cfg.loss, *item.dist, kUnlabeled);
      if (item.label == kUnlabeled) {
        if (item.lambda <= cfg.epsilon) {
          br.unlabeled += w * l0.value;
          for (size_t j = 0; j < n_classes; ++j) g[j] = w * l0.grad[j];
        }
      } else {
        const auto li = loss(cfg.loss, *item.dist, item.label);
        const bool confident = item.lambda > cfg.epsilon;
        const double c0 = (confident ? 1.0 / item.lambda : 0.0) - 1.0;
        const double v = li.value + (confident ? l0.value / item.lambda : 0.0) - l0.value;
        if (v > 0.0) {
          br.per_class[static_cast<size_t>(item.label - 1)] += w * v;
          const double s = cfg.gamma * w;
          for (size_t j = 0; j < n_classes; ++j) g[j] = s * (li.grad[j] + c0 * l0.grad[j]);
        } else {
          ++br.clamped;
        }
      }
      out.grads.push_back(std::move(g));
    }
  } else {
    double negative = 0.0;
    std::vector<OutputGradient> neg_grads;
    neg_grads.reserve(batch.size());
    for (const auto& item : batch) {
      OutputGradient g(n_classes, 0.0), gn(n_classes, 0.0);
      const double w = weight_of(item.label);
      const auto l0 = loss(cfg.loss, *item.dist, kUnlabeled);
      if (item.label == kUnlabeled) {
        if (item.lambda <= cfg.epsilon) {
          negative += w * l0.value;
          for (size_t j = 0; j < n_classes; ++j) gn[j] = w * l0.grad[j];
        }
      } else {
        const auto li = loss(cfg.loss, *item.dist, item.label);
        const bool confident = item.lambda > cfg.epsilon;
        const double c0 = (confident ? 1.0 / item.lambda : 0.0) - 1.0;
        br.per_class[static_cast<size_t>(item.label - 1)] += w * li.value;
        negative += w * c0 * l0.value;
        for (size_t j = 0; j < n_classes; ++j) {
          g[j] = cfg.gamma * w * li.grad[j];
          gn[j] = w * c0 * l0.grad[j];
        }
      }
      out.grads.push_back(std::move(g));
      neg_grads.push_back(std::move(gn));
    }
    if (negative > 0.0) {
      br.unlabeled = negative;
      for (size_t t = 0; t < batch.size(); ++t) {
        for (size_t j = 0; j < n_classes; ++j) out.grads[t][j] += neg_grads[t][j];
      }
    } else {
      br.clamped = 1;
    }
  }

  double positive = 0.0;
  for (double v : br.per_class) positive += v;
  br.total = cfg.gamma * positive + br.unlabeled;
  return out;
}

}  // namespace cupul
