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

// Token-level curricula and staged ("baby step") training.
//
// Positive tokens are ordered by difficulty and split with a power-law
// selector: curriculum j < eta takes floor(tau^j * T_p) of the remaining
// positives, the last curriculum takes the rest, and every unlabeled token
// joins the first curriculum. Stage i then trains on C_1 u ... u C_i, so the
// first curriculum is seen in every stage.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cupul/common.hpp"
#include "cupul/corpus.hpp"
#include "cupul/model.hpp"
#include "cupul/risk.hpp"
#include "cupul/training.hpp"
#include "cupul/voters.hpp"

namespace cupul {

struct CurriculumPlan {
  double tau = 0.5;
  int eta = 5;
  size_t t_u = 0;
  size_t t_p = 0;
  std::vector<std::vector<TokenRef>> curricula;
  std::vector<size_t> positive_counts;  // positives per curriculum

  // 1-based curriculum of every token.
  TokenTable<int> curriculum_index(const Corpus& corpus) const {
    TokenTable<int> idx(corpus, 0);
    for (size_t c = 0; c < curricula.size(); ++c) {
      for (const auto& r : curricula[c]) {
        if (idx[r] != 0) throw CompatibilityError("curriculum plan lists a token twice");
        idx[r] = static_cast<int>(c + 1);
      }
    }
    for (int v : idx.values()) {
      if (v == 0) throw CompatibilityError("curriculum plan does not cover the corpus");
    }
    return idx;
  }

  nlohmann::json to_json() const {
    nlohmann::json cs = nlohmann::json::array();
    for (const auto& c : curricula) {
      nlohmann::json refs = nlohmann::json::array();
      for (const auto& r : c) refs.push_back({r.sentence, r.token});
      cs.push_back(std::move(refs));
    }
    return {{"tau", tau}, {"eta", eta}, {"t_u", t_u}, {"t_p", t_p}, {"curricula", std::move(cs)}};
  }

  static CurriculumPlan from_json(const nlohmann::json& j, const Corpus& corpus) {
    CurriculumPlan p;
    try {
      p.tau = j.at("tau").get<double>();
      p.eta = j.at("eta").get<int>();
      p.t_u = j.at("t_u").get<size_t>();
      p.t_p = j.at("t_p").get<size_t>();
      for (const auto& c : j.at("curricula")) {
        std::vector<TokenRef> refs;
        size_t positives = 0;
        for (const auto& r : c) {
          TokenRef ref{r.at(0).get<uint32_t>(), r.at(1).get<uint32_t>()};
          if (ref.sentence >= corpus.sentences.size() || ref.token >= corpus.sentences[ref.sentence].size()) {
            throw CompatibilityError("plan: token reference outside corpus");
          }
          positives += corpus.at(ref).distant != kUnlabeled;
          refs.push_back(ref);
        }
        p.curricula.push_back(std::move(refs));
        p.positive_counts.push_back(positives);
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("plan: ") + e.what());
    }
    if (static_cast<int>(p.curricula.size()) != p.eta) throw FormatError("plan: eta disagrees with curricula");
    p.curriculum_index(corpus);
    return p;
  }
};

inline CurriculumPlan build_plan(const DifficultyTable& difficulty, const Corpus& corpus, double tau, int eta) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("build_plan: tau must be in (0,1)");
  if (eta < 1) throw std::invalid_argument("build_plan: eta must be >= 1");
  if (!difficulty.matches(corpus)) throw std::invalid_argument("build_plan: difficulty table does not match corpus");

  std::vector<TokenRef> unlabeled, positives;
  for (const auto& r : corpus.refs()) {
    if (!std::isfinite(difficulty[r])) throw NumericError("build_plan: non-finite difficulty");
    (corpus.at(r).distant == kUnlabeled ? unlabeled : positives).push_back(r);
  }
  std::stable_sort(positives.begin(), positives.end(),
                   [&](TokenRef a, TokenRef b) { return difficulty[a] < difficulty[b]; });

  CurriculumPlan plan;
  plan.tau = tau;
  plan.eta = eta;
  plan.t_u = unlabeled.size();
  plan.t_p = positives.size();
  plan.curricula.resize(static_cast<size_t>(eta));
  plan.positive_counts.assign(static_cast<size_t>(eta), 0);

  size_t next = 0;
  for (int j = 1; j <= eta; ++j) {
    size_t n = positives.size() - next;
    if (j < eta) {
      // The small offset keeps exact products such as 0.1 * 30 from rounding down.
      const double want = std::floor(std::pow(tau, j) * static_cast<double>(plan.t_p) + 1e-9);
      n = std::min(n, static_cast<size_t>(want));
    }
    auto& c = plan.curricula[static_cast<size_t>(j - 1)];
    if (j == 1) c = unlabeled;
    c.insert(c.end(), positives.begin() + static_cast<std::ptrdiff_t>(next),
             positives.begin() + static_cast<std::ptrdiff_t>(next + n));
    plan.positive_counts[static_cast<size_t>(j - 1)] = n;
    next += n;
  }
  return plan;
}

// Every token in one curriculum.
inline CurriculumPlan single_curriculum_plan(const Corpus& corpus) {
  return build_plan(DifficultyTable(corpus, 0.0), corpus, 0.5, 1);
}

// ---------------------------------------------------------------------------
// Staged training.

struct StageSchedule {
  int stage_epochs = 2;
  double learning_rate = 1e-3;
  size_t batch_size = 32;
  ConfMpuConfig conf_mpu;
  // Reset Adam moments at every stage boundary.
  bool reset_optimizer = false;

  void validate() const {
    if (stage_epochs < 1) throw std::invalid_argument("StageSchedule: stage_epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("StageSchedule: learning_rate must be > 0");
    if (batch_size == 0) throw std::invalid_argument("StageSchedule: batch_size must be >= 1");
    conf_mpu.validate();
  }
};

struct EpochRecord {
  int stage = 0;
  int epoch = 0;  // global, 1-based
  double risk_total = 0.0;
  size_t clamped_count = 0;
  size_t active_positive_count = 0;
  bool same_as_previous_stage = false;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"stage", stage},
                        {"epoch", epoch},
                        {"risk_total", risk_total},
                        {"clamped_count", clamped_count},
                        {"active_positive_count", active_positive_count}};
    if (same_as_previous_stage) j["same_as_previous_stage"] = true;
    return j;
  }
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  // Extra records (e.g. per-stage validation metrics), emitted after the
  // epoch record they follow.
  std::vector<std::pair<size_t, nlohmann::json>> extra;

  void write_jsonl(std::ostream& out) const {
    size_t e = 0;
    auto flush_extra = [&](size_t upto) {
      for (const auto& [after, j] : extra) {
        if (after == upto) out << j.dump() << '\n';
      }
    };
    flush_extra(0);
    for (const auto& rec : epochs) {
      out << rec.to_json().dump() << '\n';
      flush_extra(++e);
    }
  }
};

struct TrainedModel {
  TokenClassifier model;
  TrainingLog log;
};

enum class StageRisk {
  kConfMpu,    // confidence-based PU risk
  kPlain,      // mean loss, unlabeled tokens as class 0
  kSoftLabel,  // mean KL to the voter-ensemble soft labels
};

// Called after every stage with the 1-based stage index; may append records.
using StageCallback = std::function<void(int, const TokenClassifier&, TrainingLog&)>;

struct StagedInputs {
  const Corpus* corpus = nullptr;
  const EncodedCorpus* encoded = nullptr;
  const CurriculumPlan* plan = nullptr;
  const ConfidenceTable* confidence = nullptr;  // kConfMpu, kSoftLabel
  const Priors* priors = nullptr;               // kConfMpu
};

inline TrainedModel train_staged(const StagedInputs& in, StageRisk kind, const ModelConfig& model_config,
                                 const StageSchedule& schedule, uint64_t seed,
                                 const StageCallback& on_stage = {}) {
  schedule.validate();
  const Corpus& corpus = *in.corpus;
  const EncodedCorpus& enc = *in.encoded;
  if (enc.ids.size() != corpus.sentences.size()) throw std::invalid_argument("train_staged: encoded corpus mismatch");
  if (kind != StageRisk::kPlain && (!in.confidence || !in.confidence->lambda.matches(corpus))) {
    throw std::invalid_argument("train_staged: confidence table required and must match corpus");
  }
  if (kind == StageRisk::kConfMpu && (!in.priors || in.priors->size() != corpus.labels.size())) {
    throw std::invalid_argument("train_staged: priors required for every entity type");
  }
  const auto member = in.plan->curriculum_index(corpus);
  const int eta = in.plan->eta;

  ModelConfig mc = model_config;
  mc.seed = derive_seed(seed, "classifier-init");
  mc.n_classes = corpus.labels.num_classes();
  TrainedModel out{TokenClassifier(mc, enc.vocab_fingerprint), {}};
  AdamState adam(out.model.params().size(), schedule.learning_rate);
  Rng shuffle_rng(derive_seed(seed, "classifier-shuffle"));

  std::vector<ConfidentPrediction> mpu_items;
  std::vector<LabeledPrediction> plain_items;
  std::vector<SoftTargetPrediction> soft_items;

  int global_epoch = 0;
  size_t active_positives = 0;
  for (int stage = 1; stage <= eta; ++stage) {
    if (stage > 1 && schedule.reset_optimizer) adam.reset();
    const size_t added = in.plan->positive_counts[static_cast<size_t>(stage - 1)];
    active_positives += added;
    const bool same = stage > 1 && added == 0;
    auto is_active = [&](TokenRef r) { return member[r] <= stage; };

    for (int e = 0; e < schedule.stage_epochs; ++e) {
      const auto order = shuffled_sentences(enc.ids.size(), shuffle_rng);
      auto risk = [&](std::span<const TokenRef> refs,
                      std::span<const Activation> acts) -> std::optional<BatchResult> {
        switch (kind) {
          case StageRisk::kConfMpu: {
            mpu_items.clear();
            for (size_t i = 0; i < refs.size(); ++i) {
              mpu_items.push_back({&acts[i].dist, corpus.at(refs[i]).distant, in.confidence->lambda[refs[i]]});
            }
            auto r = conf_mpu_risk(mpu_items, *in.priors, schedule.conf_mpu);
            return BatchResult{r.breakdown.total, std::move(r.grads), r.breakdown.clamped};
          }
          case StageRisk::kPlain: {
            plain_items.clear();
            for (size_t i = 0; i < refs.size(); ++i) {
              plain_items.push_back({&acts[i].dist, corpus.at(refs[i]).distant});
            }
            auto r = mean_risk(plain_items, schedule.conf_mpu.loss);
            return BatchResult{r.value, std::move(r.grads), 0};
          }
          case StageRisk::kSoftLabel: {
            soft_items.clear();
            for (size_t i = 0; i < refs.size(); ++i) {
              soft_items.push_back({&acts[i].dist, &in.confidence->ensemble[refs[i]]});
            }
            auto r = kl_risk(soft_items);
            return BatchResult{r.value, std::move(r.grads), 0};
          }
        }
        return std::nullopt;
      };
      const auto stats = train_epoch(out.model, adam, enc, order, schedule.batch_size, is_active, risk);
      out.log.epochs.push_back({stage, ++global_epoch, stats.mean_risk, stats.clamped, active_positives, same});
    }
    if (on_stage) on_stage(stage, out.model, out.log);
  }
  return out;
}

// Baby-step training with the confidence-based PU risk.
inline TrainedModel train_baby_step(const Corpus& corpus, const EncodedCorpus& encoded, const CurriculumPlan& plan,
                                    const ConfidenceTable& confidence, const Priors& priors,
                                    const ModelConfig& model_config, const StageSchedule& schedule, uint64_t seed,
                                    const StageCallback& on_stage = {}) {
  return train_staged({&corpus, &encoded, &plan, &confidence, &priors}, StageRisk::kConfMpu, model_config,
                      schedule, seed, on_stage);
}

// Same risk on all tokens at once for eta * stage_epochs epochs.
inline TrainedModel train_no_curriculum(const Corpus& corpus, const EncodedCorpus& encoded,
                                        const ConfidenceTable& confidence, const Priors& priors,
                                        const ModelConfig& model_config, const StageSchedule& schedule, int eta,
                                        uint64_t seed, const StageCallback& on_stage = {}) {
  const auto plan = single_curriculum_plan(corpus);
  StageSchedule flat = schedule;
  flat.stage_epochs = schedule.stage_epochs * eta;
  return train_staged({&corpus, &encoded, &plan, &confidence, &priors}, StageRisk::kConfMpu, model_config, flat,
                      seed, on_stage);
}

// Baby-step training where unlabeled tokens are plain negatives.
inline TrainedModel train_no_confmpu(const Corpus& corpus, const EncodedCorpus& encoded, const CurriculumPlan& plan,
                                     const ModelConfig& model_config, const StageSchedule& schedule, uint64_t seed,
                                     const StageCallback& on_stage = {}) {
  return train_staged({&corpus, &encoded, &plan, nullptr, nullptr}, StageRisk::kPlain, model_config, schedule, seed,
                      on_stage);
}

// Baby-step training against the voter-ensemble soft labels.
inline TrainedModel train_soft_label_curriculum(const Corpus& corpus, const EncodedCorpus& encoded,
                                                const CurriculumPlan& plan, const ConfidenceTable& confidence,
                                                const ModelConfig& model_config, const StageSchedule& schedule,
                                                uint64_t seed, const StageCallback& on_stage = {}) {
  return train_staged({&corpus, &encoded, &plan, &confidence, nullptr}, StageRisk::kSoftLabel, model_config,
                      schedule, seed, on_stage);
}

// ---------------------------------------------------------------------------
// Self-training on sharpened soft labels.

struct SelfTrainConfig {
  int rounds = 3;
  int epochs = 1;
  double sharpen = 2.0;
  double learning_rate = 1e-3;
  size_t batch_size = 32;

  void validate() const {
    if (rounds < 1) throw std::invalid_argument("SelfTrainConfig: rounds must be >= 1");
    if (epochs < 1) throw std::invalid_argument("SelfTrainConfig: epochs must be >= 1");
    if (!(sharpen > 0.0)) throw std::invalid_argument("SelfTrainConfig: sharpen must be > 0");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("SelfTrainConfig: learning_rate must be > 0");
  }
};

// t_j = p_j^s / sum_c p_c^s
inline ClassDistribution sharpen(const ClassDistribution& p, double s) {
  ClassDistribution t{std::vector<double>(p.size())};
  double sum = 0.0;
  for (size_t j = 0; j < p.size(); ++j) {
    t.probs[j] = std::pow(p[j], s);
    sum += t.probs[j];
  }
  if (!(sum > 0.0) || !std::isfinite(sum)) throw NumericError("sharpen: degenerate distribution");
  for (double& v : t.probs) {
    v /= sum;
    if (!std::isfinite(v)) throw NumericError("sharpen: non-finite target");
  }
  return t;
}

// Each round freezes the current model as teacher, sharpens its outputs and
// fine-tunes a copy of it on all tokens with the KL loss.
inline TrainedModel self_train(const TokenClassifier& model, const EncodedCorpus& encoded,
                               const SelfTrainConfig& cfg, uint64_t seed) {
  cfg.validate();
  TrainedModel out{model, {}};
  int global_epoch = 0;
  std::vector<SoftTargetPrediction> items;
  for (int round = 1; round <= cfg.rounds; ++round) {
    const auto teacher = predict_distributions(out.model, encoded);
    std::vector<size_t> sizes;
    for (const auto& s : encoded.ids) sizes.push_back(s.size());
    TokenTable<ClassDistribution> targets(sizes);
    for (size_t s = 0; s < encoded.ids.size(); ++s) {
      for (size_t t = 0; t < encoded.ids[s].size(); ++t) targets.at(s, t) = sharpen(teacher.at(s, t), cfg.sharpen);
    }
    AdamState adam(out.model.params().size(), cfg.learning_rate);
    Rng shuffle_rng(derive_seed(seed, "self-train-shuffle", static_cast<uint64_t>(round)));
    for (int e = 0; e < cfg.epochs; ++e) {
      const auto order = shuffled_sentences(encoded.ids.size(), shuffle_rng);
      const auto stats = train_epoch(
          out.model, adam, encoded, order, cfg.batch_size, [](TokenRef) { return true; },
          [&](std::span<const TokenRef> refs, std::span<const Activation> acts) -> std::optional<BatchResult> {
            items.clear();
            for (size_t i = 0; i < refs.size(); ++i) items.push_back({&acts[i].dist, &targets[refs[i]]});
            auto r = kl_risk(items);
            return BatchResult{r.value, std::move(r.grads), 0};
          });
      out.log.epochs.push_back({round, ++global_epoch, stats.mean_risk, 0, 0, false});
    }
  }
  return out;
}

}  // namespace cupul
