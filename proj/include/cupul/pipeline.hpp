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

// End-to-end runs: config, voters -> difficulty -> plan -> training ->
// evaluation, artifact files and the run manifest.

#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "cupul/common.hpp"
#include "cupul/corpus.hpp"
#include "cupul/curriculum.hpp"
#include "cupul/distant.hpp"
#include "cupul/eval.hpp"
#include "cupul/model.hpp"
#include "cupul/risk.hpp"
#include "cupul/voters.hpp"

namespace cupul {

inline constexpr const char* kVersion = "0.1.0";

enum class Mode { kCupul, kCupulSt, kNoCurriculum, kNoConfMpu, kVoterEnsemble, kSoftLabelCurriculum };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::kCupul: return "cupul";
    case Mode::kCupulSt: return "cupul-st";
    case Mode::kNoCurriculum: return "no-curriculum";
    case Mode::kNoConfMpu: return "no-confmpu";
    case Mode::kVoterEnsemble: return "voter-ensemble";
    case Mode::kSoftLabelCurriculum: return "soft-label-curriculum";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  for (Mode m : {Mode::kCupul, Mode::kCupulSt, Mode::kNoCurriculum, Mode::kNoConfMpu, Mode::kVoterEnsemble,
                 Mode::kSoftLabelCurriculum}) {
    if (s == to_string(m)) return m;
  }
  throw FormatError("unknown mode '" + s + "'");
}

inline ClampMode parse_clamp_mode(const std::string& s) {
  if (s == "per-token") return ClampMode::kPerToken;
  if (s == "aggregate") return ClampMode::kAggregate;
  throw FormatError("unknown clamp mode '" + s + "' (expected per-token or aggregate)");
}

inline const char* to_string(ClampMode m) { return m == ClampMode::kPerToken ? "per-token" : "aggregate"; }

struct CurriculumConfig {
  double tau = 0.5;
  int eta = 5;
};

struct PipelineConfig {
  // Paths; relative ones are resolved against `base_dir`.
  std::string train, valid, test, dict, out = "out";
  std::filesystem::path base_dir = ".";

  uint64_t seed = 13;
  int threads = 1;
  Mode mode = Mode::kCupul;
  bool allow_same_split = false;
  size_t max_sentence_length = 256;

  ModelConfig model;
  int min_count = 1;
  VoterConfig voters;
  CurriculumConfig curriculum;
  StageSchedule schedule;
  SelfTrainConfig self_train;
  std::optional<std::vector<double>> priors;  // default: distant-label frequencies
  bool relaxed_requires_type = true;
  int histogram_bins = 20;

  std::filesystem::path resolve(const std::string& p) const {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }

  void validate() const {
    if (train.empty()) throw FormatError("config: 'train' is required");
    if (!allow_same_split && !test.empty() && !valid.empty() &&
        std::filesystem::weakly_canonical(resolve(test)) == std::filesystem::weakly_canonical(resolve(valid))) {
      throw FormatError("config: test and valid point at the same file (pass --allow-same-split to override)");
    }
    if (threads < 1) throw FormatError("config: threads must be >= 1");
    if (histogram_bins < 1) throw FormatError("config: eval.histogram_bins must be >= 1");
    if (min_count < 1) throw FormatError("config: model.min_count must be >= 1");
    try {
      voters.validate();
      schedule.validate();
      self_train.validate();
      if (!(curriculum.tau > 0.0 && curriculum.tau < 1.0)) throw std::invalid_argument("curriculum.tau must be in (0,1)");
      if (curriculum.eta < 1) throw std::invalid_argument("curriculum.eta must be >= 1");
      if (priors) Priors{*priors};
    } catch (const std::invalid_argument& e) {
      throw FormatError(std::string("config: ") + e.what());
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j = {
        {"train", train},
        {"valid", valid},
        {"test", test},
        {"dict", dict},
        {"out", out},
        {"seed", seed},
        {"threads", threads},
        {"mode", to_string(mode)},
        {"allow_same_split", allow_same_split},
        {"max_sentence_length", max_sentence_length},
        {"model",
         {{"embed_dim", model.embed_dim},
          {"window", model.window},
          {"hidden_dim", model.hidden_dim},
          {"init_scale", model.init_scale},
          {"min_count", min_count}}},
        {"voters",
         {{"count", voters.count},
          {"epochs", voters.epochs},
          {"keep_negative_ratio", voters.keep_negative_ratio},
          {"learning_rate", voters.learning_rate},
          {"batch_size", voters.batch_size},
          {"loss", to_string(voters.loss)}}},
        {"curriculum",
         {{"tau", curriculum.tau},
          {"eta", curriculum.eta},
          {"stage_epochs", schedule.stage_epochs},
          {"learning_rate", schedule.learning_rate},
          {"batch_size", schedule.batch_size},
          {"reset_optimizer", schedule.reset_optimizer}}},
        {"conf_mpu",
         {{"epsilon", schedule.conf_mpu.epsilon},
          {"gamma", schedule.conf_mpu.gamma},
          {"loss", to_string(schedule.conf_mpu.loss)},
          {"clamp", to_string(schedule.conf_mpu.clamp)}}},
        {"self_train",
         {{"rounds", self_train.rounds},
          {"epochs", self_train.epochs},
          {"sharpen", self_train.sharpen},
          {"learning_rate", self_train.learning_rate},
          {"batch_size", self_train.batch_size}}},
        {"eval", {{"relaxed_requires_type", relaxed_requires_type}, {"histogram_bins", histogram_bins}}},
    };
    j["priors"] = priors ? nlohmann::json(*priors) : nlohmann::json(nullptr);
    return j;
  }

  static PipelineConfig from_json(const nlohmann::json& j, std::filesystem::path base_dir = ".") {
    PipelineConfig c;
    c.base_dir = std::move(base_dir);
    if (!j.is_object()) throw FormatError("config: expected a JSON object");
    // Reads `key` from `obj` into `dst` when present; unknown keys are errors.
    auto section = [](const nlohmann::json& obj, const std::string& where, const std::set<std::string>& known) {
      if (!obj.is_object()) throw FormatError("config: '" + where + "' must be an object");
      for (const auto& [k, v] : obj.items()) {
        if (!known.count(k)) throw FormatError("config: unknown key '" + (where.empty() ? k : where + "." + k) + "'");
      }
    };
    auto get = [](const nlohmann::json& obj, const char* key, auto& dst) {
      if (!obj.contains(key) || obj.at(key).is_null()) return;
      try {
        obj.at(key).get_to(dst);
      } catch (const nlohmann::json::exception&) {
        throw FormatError(std::string("config: bad value for '") + key + "'");
      }
    };
    section(j, "",
            {"train", "valid", "test", "dict", "out", "seed", "threads", "mode", "allow_same_split",
             "max_sentence_length", "model", "voters", "curriculum", "conf_mpu", "self_train", "eval", "priors"});
    get(j, "train", c.train);
    get(j, "valid", c.valid);
    get(j, "test", c.test);
    get(j, "dict", c.dict);
    get(j, "out", c.out);
    get(j, "seed", c.seed);
    get(j, "threads", c.threads);
    get(j, "allow_same_split", c.allow_same_split);
    get(j, "max_sentence_length", c.max_sentence_length);
    if (j.contains("mode")) {
      std::string m;
      get(j, "mode", m);
      c.mode = parse_mode(m);
    }
    if (j.contains("priors") && !j.at("priors").is_null()) {
      std::vector<double> p;
      get(j, "priors", p);
      c.priors = std::move(p);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      section(m, "model", {"embed_dim", "window", "hidden_dim", "init_scale", "min_count"});
      get(m, "embed_dim", c.model.embed_dim);
      get(m, "window", c.model.window);
      get(m, "hidden_dim", c.model.hidden_dim);
      get(m, "init_scale", c.model.init_scale);
      get(m, "min_count", c.min_count);
    }
    if (j.contains("voters")) {
      const auto& v = j.at("voters");
      section(v, "voters", {"count", "epochs", "keep_negative_ratio", "learning_rate", "batch_size", "loss"});
      get(v, "count", c.voters.count);
      get(v, "epochs", c.voters.epochs);
      get(v, "keep_negative_ratio", c.voters.keep_negative_ratio);
      get(v, "learning_rate", c.voters.learning_rate);
      get(v, "batch_size", c.voters.batch_size);
      if (v.contains("loss")) {
        std::string l;
        get(v, "loss", l);
        c.voters.loss = parse_loss_kind(l);
      }
    }
    if (j.contains("curriculum")) {
      const auto& cu = j.at("curriculum");
      section(cu, "curriculum", {"tau", "eta", "stage_epochs", "learning_rate", "batch_size", "reset_optimizer"});
      get(cu, "tau", c.curriculum.tau);
      get(cu, "eta", c.curriculum.eta);
      get(cu, "stage_epochs", c.schedule.stage_epochs);
      get(cu, "learning_rate", c.schedule.learning_rate);
      get(cu, "batch_size", c.schedule.batch_size);
      get(cu, "reset_optimizer", c.schedule.reset_optimizer);
    }
    if (j.contains("conf_mpu")) {
      const auto& cm = j.at("conf_mpu");
      section(cm, "conf_mpu", {"epsilon", "gamma", "loss", "clamp"});
      get(cm, "epsilon", c.schedule.conf_mpu.epsilon);
      get(cm, "gamma", c.schedule.conf_mpu.gamma);
      if (cm.contains("loss")) {
        std::string l;
        get(cm, "loss", l);
        c.schedule.conf_mpu.loss = parse_loss_kind(l);
      }
      if (cm.contains("clamp")) {
        std::string l;
        get(cm, "clamp", l);
        c.schedule.conf_mpu.clamp = parse_clamp_mode(l);
      }
    }
    if (j.contains("self_train")) {
      const auto& st = j.at("self_train");
      section(st, "self_train", {"rounds", "epochs", "sharpen", "learning_rate", "batch_size"});
      get(st, "rounds", c.self_train.rounds);
      get(st, "epochs", c.self_train.epochs);
      get(st, "sharpen", c.self_train.sharpen);
      get(st, "learning_rate", c.self_train.learning_rate);
      get(st, "batch_size", c.self_train.batch_size);
    }
    if (j.contains("eval")) {
      const auto& ev = j.at("eval");
      section(ev, "eval", {"relaxed_requires_type", "histogram_bins"});
      get(ev, "relaxed_requires_type", c.relaxed_requires_type);
      get(ev, "histogram_bins", c.histogram_bins);
    }
    return c;
  }
};

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("config " + path.string() + ": " + e.what());
  }
  return PipelineConfig::from_json(j, path.parent_path().empty() ? "." : path.parent_path());
}

// ---------------------------------------------------------------------------
// In-memory pipeline.

struct PipelineInputs {
  Corpus train;
  std::optional<Corpus> valid, test;
  std::optional<Dictionary> dictionary;
};

struct PipelineResult {
  Corpus train;  // after optional re-annotation
  Vocab vocab;
  VoterEnsemble voters;
  TokenScores scores;
  CurriculumPlan plan;
  std::optional<TokenClassifier> model;  // empty in voter-ensemble mode
  TrainingLog log;
  std::optional<TrainingLog> self_train_log;
  std::optional<EvalReport> test_report;
  std::optional<EvalReport> test_report_before_self_train;
  std::optional<CurriculumAnalysis> analysis;
  DifficultyHistogram histogram;
  std::optional<NoiseStats> noise;
};

// Model config for a corpus / vocab pair.
inline ModelConfig model_config_for(const PipelineConfig& cfg, const Vocab& vocab, const LabelSet& labels) {
  ModelConfig mc = cfg.model;
  mc.vocab_size = static_cast<int>(vocab.size());
  mc.n_classes = labels.num_classes();
  return mc;
}

inline std::vector<std::vector<LabelId>> predict_ensemble(const VoterEnsemble& ens, const EncodedCorpus& enc) {
  std::vector<std::vector<LabelId>> out(enc.ids.size());
  for (size_t s = 0; s < enc.ids.size(); ++s) {
    for (size_t t = 0; t < enc.ids[s].size(); ++t) {
      out[s].push_back(static_cast<LabelId>(ensemble_distribution(ens, enc.ids[s], t).argmax()));
    }
  }
  return out;
}

inline PipelineResult run_pipeline(const PipelineConfig& cfg, const PipelineInputs& in) {
  cfg.validate();
  PipelineResult r;
  r.train = in.dictionary ? annotate_corpus(in.train, compile_dictionary(*in.dictionary)) : in.train;
  if (r.train.has_gold()) r.noise = noise_report(r.train);

  r.vocab = build_vocab(r.train, cfg.min_count);
  const auto enc = encode(r.train, r.vocab);
  const auto mc = model_config_for(cfg, r.vocab, r.train.labels);

  r.voters = train_voters(r.train, enc, mc, cfg.voters, derive_seed(cfg.seed, "voters"), cfg.threads);
  r.scores = score_tokens(r.voters, enc);
  r.plan = build_plan(r.scores.difficulty, r.train, cfg.curriculum.tau, cfg.curriculum.eta);
  r.histogram = difficulty_histogram(positive_difficulties(r.train, r.scores.difficulty), cfg.histogram_bins);
  if (r.train.has_gold()) r.analysis = curriculum_error_analysis(r.plan, r.train, r.scores.difficulty);

  std::optional<EncodedCorpus> valid_enc, test_enc;
  if (in.valid && in.valid->has_gold()) valid_enc = encode(*in.valid, r.vocab);
  if (in.test) {
    if (!in.test->has_gold()) throw FormatError("test corpus has no gold labels");
    if (in.test->labels != r.train.labels) throw CompatibilityError("test corpus label set differs from train");
    test_enc = encode(*in.test, r.vocab);
  }

  StageCallback on_stage;
  if (valid_enc) {
    on_stage = [&](int stage, const TokenClassifier& m, TrainingLog& log) {
      const auto rep = evaluate_labels(predict(m, *valid_enc), *in.valid, cfg.relaxed_requires_type);
      log.extra.push_back({log.epochs.size(),
                           {{"stage", stage},
                            {"valid_strict_f1", rep.strict.overall.f1()},
                            {"valid_relaxed_f1", rep.relaxed.overall.f1()}}});
    };
  }

  const uint64_t train_seed = derive_seed(cfg.seed, "classifier");
  const Priors priors = cfg.priors ? Priors(*cfg.priors) : estimate_priors(r.train);
  if (priors.size() != r.train.labels.size()) throw CompatibilityError("priors: one value per entity type required");

  std::optional<TrainedModel> trained;
  switch (cfg.mode) {
    case Mode::kCupul:
    case Mode::kCupulSt:
      trained = train_baby_step(r.train, enc, r.plan, r.scores.confidence, priors, mc, cfg.schedule, train_seed,
                                on_stage);
      break;
    case Mode::kNoCurriculum:
      trained = train_no_curriculum(r.train, enc, r.scores.confidence, priors, mc, cfg.schedule,
                                    cfg.curriculum.eta, train_seed, on_stage);
      break;
    case Mode::kNoConfMpu:
      trained = train_no_confmpu(r.train, enc, r.plan, mc, cfg.schedule, train_seed, on_stage);
      break;
    case Mode::kSoftLabelCurriculum:
      trained = train_soft_label_curriculum(r.train, enc, r.plan, r.scores.confidence, mc, cfg.schedule,
                                            train_seed, on_stage);
      break;
    case Mode::kVoterEnsemble:
      break;
  }

  if (trained) {
    r.log = std::move(trained->log);
    r.model = std::move(trained->model);
    if (cfg.mode == Mode::kCupulSt) {
      if (test_enc) {
        r.test_report_before_self_train =
            evaluate_labels(predict(*r.model, *test_enc), *in.test, cfg.relaxed_requires_type);
      }
      auto st = self_train(*r.model, enc, cfg.self_train, derive_seed(cfg.seed, "self-train"));
      r.model = std::move(st.model);
      r.self_train_log = std::move(st.log);
    }
  }
  if (test_enc) {
    const auto pred = r.model ? predict(*r.model, *test_enc) : predict_ensemble(r.voters, *test_enc);
    r.test_report = evaluate_labels(pred, *in.test, cfg.relaxed_requires_type);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Files.

inline std::string sha256_hex(std::istream& in) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("sha256: digest init failed");
  }
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

inline std::string sha256_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open " + p.string());
  return sha256_hex(in);
}

inline Corpus read_corpus_file(const std::filesystem::path& p, const std::optional<LabelSet>& labels,
                               size_t max_sentence_length) {
  std::ifstream in(p);
  if (!in) throw FormatError("cannot open corpus " + p.string());
  try {
    return read_conll(in, labels, ReadOptions{max_sentence_length});
  } catch (const FormatError& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

inline std::vector<RawDictionaryEntry> read_dictionary_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw FormatError("cannot open dictionary " + p.string());
  try {
    return read_dictionary_tsv(in);
  } catch (const FormatError& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

// Opens `path` for writing or throws.
inline std::ofstream open_out(const std::filesystem::path& p, bool binary = false) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point tp) {
  const std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Collects what a run read and wrote; `write` is safe to call on failure.
class RunManifest {
 public:
  RunManifest(std::string command, nlohmann::json config)
      : command_(std::move(command)), config_(std::move(config)), start_(std::chrono::system_clock::now()) {}

  void add_input(const std::filesystem::path& p) { inputs_.push_back(p); }
  void add_artifact(const std::filesystem::path& p) { artifacts_.push_back(p); }
  const std::vector<std::filesystem::path>& artifacts() const { return artifacts_; }

  void write(const std::filesystem::path& path, const std::string& status, const std::string& error = {}) const {
    const auto end = std::chrono::system_clock::now();
    auto digests = [](const std::vector<std::filesystem::path>& files) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& f : files) {
        nlohmann::json e = {{"path", f.string()}};
        try {
          e["sha256"] = sha256_file(f);
        } catch (const std::exception&) {
          e["sha256"] = nullptr;
        }
        arr.push_back(std::move(e));
      }
      return arr;
    };
    nlohmann::json j = {
        {"command", command_},
        {"status", status},
        {"config", config_},
        {"inputs", digests(inputs_)},
        {"artifacts", digests(artifacts_)},
        {"started_at", utc_timestamp(start_)},
        {"finished_at", utc_timestamp(end)},
        {"wall_seconds", std::chrono::duration<double>(end - start_).count()},
        {"versions",
         {{"cupul", kVersion}, {"checkpoint_format", kCheckpointVersion}, {"compiler", __VERSION__}}},
    };
    if (!error.empty()) j["error"] = error;
    auto out = open_out(path);
    out << j.dump(2) << '\n';
  }

 private:
  std::string command_;
  nlohmann::json config_;
  std::chrono::system_clock::time_point start_;
  std::vector<std::filesystem::path> inputs_;
  std::vector<std::filesystem::path> artifacts_;
};

inline void write_json_file(const std::filesystem::path& p, const nlohmann::json& j, RunManifest& manifest) {
  auto out = open_out(p);
  out << j.dump(2) << '\n';
  manifest.add_artifact(p);
}

inline void write_pipeline_artifacts(const PipelineConfig& cfg, const PipelineResult& r,
                                     const std::filesystem::path& dir, RunManifest& manifest) {
  std::filesystem::create_directories(dir);
  auto add = [&](const std::filesystem::path& p) { manifest.add_artifact(p); };

  if (r.model) {
    auto out = open_out(dir / "model.ckpt", true);
    save_checkpoint(out, *r.model, r.vocab, r.train.labels);
    out.close();
    add(dir / "model.ckpt");
  } else {
    for (size_t v = 0; v < r.voters.size(); ++v) {
      const auto p = dir / ("voter_" + std::to_string(v) + ".ckpt");
      auto out = open_out(p, true);
      save_checkpoint(out, r.voters.voters[v], r.vocab, r.train.labels);
      out.close();
      add(p);
    }
  }
  {
    auto out = open_out(dir / "difficulty.tsv");
    write_token_scores(out, r.train, r.scores);
    add(dir / "difficulty.tsv");
  }
  write_json_file(dir / "plan.json", r.plan.to_json(), manifest);
  {
    auto out = open_out(dir / "risk_log.jsonl");
    r.log.write_jsonl(out);
    add(dir / "risk_log.jsonl");
  }
  if (r.self_train_log) {
    auto out = open_out(dir / "self_train_log.jsonl");
    r.self_train_log->write_jsonl(out);
    add(dir / "self_train_log.jsonl");
  }
  if (r.test_report) {
    auto j = r.test_report->to_json(r.train.labels);
    j["mode"] = to_string(cfg.mode);
    if (r.test_report_before_self_train) {
      j["before_self_train"] = r.test_report_before_self_train->to_json(r.train.labels);
    }
    write_json_file(dir / "eval_report.json", j, manifest);
  }
  if (r.analysis) {
    auto out = open_out(dir / "curriculum_analysis.csv");
    r.analysis->write_csv(out);
    add(dir / "curriculum_analysis.csv");
  }
  {
    auto out = open_out(dir / "difficulty_histogram.csv");
    r.histogram.write_csv(out);
    add(dir / "difficulty_histogram.csv");
  }
  nlohmann::json summary = {{"positive_difficulty", r.histogram.summary_json()}};
  if (r.analysis) {
    const auto [idx, rate] = r.analysis->defined_rates();
    const auto rho = spearman(idx, rate);
    summary["error_rate_spearman"] = rho ? nlohmann::json(*rho) : nlohmann::json(nullptr);
  }
  write_json_file(dir / "difficulty_summary.json", summary, manifest);
  if (r.noise) write_json_file(dir / "noise_report.json", r.noise->to_json(), manifest);
}

// Loads inputs named by `cfg`, runs the pipeline and writes every artifact
// plus manifest.json under `out_dir`. The manifest is written on failure too.
inline PipelineResult run_pipeline_files(const PipelineConfig& cfg, const std::filesystem::path& out_dir,
                                         const std::string& command = "pipeline") {
  RunManifest manifest(command, cfg.to_json());
  try {
    cfg.validate();
    PipelineInputs in;
    const auto train_path = cfg.resolve(cfg.train);
    manifest.add_input(train_path);
    in.train = read_corpus_file(train_path, std::nullopt, cfg.max_sentence_length);
    if (!cfg.dict.empty()) {
      const auto p = cfg.resolve(cfg.dict);
      manifest.add_input(p);
      in.dictionary = make_dictionary(read_dictionary_file(p), in.train.labels);
    }
    if (!cfg.valid.empty()) {
      const auto p = cfg.resolve(cfg.valid);
      manifest.add_input(p);
      in.valid = read_corpus_file(p, in.train.labels, cfg.max_sentence_length);
    }
    if (!cfg.test.empty()) {
      const auto p = cfg.resolve(cfg.test);
      manifest.add_input(p);
      in.test = read_corpus_file(p, in.train.labels, cfg.max_sentence_length);
    }
    auto result = run_pipeline(cfg, in);
    write_pipeline_artifacts(cfg, result, out_dir, manifest);
    manifest.write(out_dir / "manifest.json", "ok");
    return result;
  } catch (const std::exception& e) {
    manifest.write(out_dir / "manifest.json", "error", e.what());
    throw;
  }
}

// ---------------------------------------------------------------------------
// Parameter sweeps over the voter count or the number of curricula.

struct SweepRow {
  std::string param;
  int value = 0;
  double strict_f1 = 0.0;
  double relaxed_f1 = 0.0;
};

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "param,value,strict_f1,relaxed_f1\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", r.strict_f1, r.relaxed_f1);
    out << r.param << ',' << r.value << buf;
  }
}

inline std::vector<SweepRow> run_sweep(const PipelineConfig& base, const std::string& param,
                                       const std::vector<int>& values, const std::filesystem::path& out_dir) {
  if (param != "voters" && param != "curricula") {
    throw FormatError("sweep: --vary must be 'voters' or 'curricula'");
  }
  if (values.empty()) throw FormatError("sweep: no values");
  for (int v : values) {
    if (v < 1) throw FormatError("sweep: values must be positive integers");
  }
  if (base.test.empty()) throw FormatError("sweep: config needs a test corpus");
  std::vector<SweepRow> rows;
  for (int v : values) {
    PipelineConfig cfg = base;
    (param == "voters" ? cfg.voters.count : cfg.curriculum.eta) = v;
    cfg.seed = derive_seed(base.seed, "sweep", static_cast<uint64_t>(v));
    const auto r = run_pipeline_files(cfg, out_dir / (param + "-" + std::to_string(v)), "sweep");
    rows.push_back({param, v, r.test_report->strict.overall.f1(), r.test_report->relaxed.overall.f1()});
  }
  auto out = open_out(out_dir / "sweep.csv");
  write_sweep_csv(out, rows);
  return rows;
}

}  // namespace cupul
