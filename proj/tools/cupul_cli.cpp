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

// cupul command-line front end.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cupul/cupul.hpp"

namespace fs = std::filesystem;
using namespace cupul;

namespace {

struct Globals {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<int> threads;
  std::string out;
  std::string mode;
  bool allow_same_split = false;
};

PipelineConfig effective_config(const Globals& g) {
  PipelineConfig cfg = g.config.empty() ? PipelineConfig{} : load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (g.threads) cfg.threads = *g.threads;
  if (!g.mode.empty()) cfg.mode = parse_mode(g.mode);
  if (!g.out.empty()) {
    cfg.out = fs::absolute(g.out).string();
  }
  if (g.allow_same_split) cfg.allow_same_split = true;
  return cfg;
}

fs::path out_dir(const Globals& g, const PipelineConfig& cfg) {
  return g.out.empty() ? cfg.resolve(cfg.out) : fs::path(g.out);
}

Corpus read_train(const std::string& path, const PipelineConfig& cfg, RunManifest& m) {
  m.add_input(path);
  return read_corpus_file(path, std::nullopt, cfg.max_sentence_length);
}

// Voter checkpoints voter_0.ckpt, voter_1.ckpt, ... in index order.
std::vector<Checkpoint> load_voters(const fs::path& dir, RunManifest& m) {
  std::map<int, fs::path> found;
  const std::regex re("voter_([0-9]+)\\.ckpt");
  if (!fs::is_directory(dir)) throw FormatError("voter directory " + dir.string() + " does not exist");
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch sm;
    const auto name = e.path().filename().string();
    if (std::regex_match(name, sm, re)) found[std::stoi(sm[1])] = e.path();
  }
  if (found.size() < 2) throw FormatError("need at least 2 voter checkpoints in " + dir.string());
  std::vector<Checkpoint> out;
  for (const auto& [i, p] : found) {
    std::ifstream in(p, std::ios::binary);
    m.add_input(p);
    out.push_back(load_checkpoint(in));
  }
  for (const auto& c : out) {
    if (!(c.vocab == out.front().vocab) || !(c.labels == out.front().labels)) {
      throw CompatibilityError("voter checkpoints disagree on vocabulary or labels");
    }
  }
  return out;
}

Checkpoint load_checkpoint_file(const fs::path& p, RunManifest& m) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + p.string());
  m.add_input(p);
  return load_checkpoint(in);
}

// Reads a corpus against a fixed label set, reporting unknown labels as a
// compatibility problem rather than a format one.
Corpus read_with_labels(const fs::path& p, const LabelSet& labels, const PipelineConfig& cfg, RunManifest& m) {
  m.add_input(p);
  const Corpus probe = read_corpus_file(p, std::nullopt, cfg.max_sentence_length);
  std::set<std::string> used;
  for (const auto& s : probe.sentences) {
    for (const auto& t : s.tokens) {
      if (t.distant != kUnlabeled) used.insert(probe.labels.name(t.distant));
      if (t.gold && *t.gold != kUnlabeled) used.insert(probe.labels.name(*t.gold));
    }
  }
  for (const auto& n : used) {
    if (!labels.find(n)) {
      throw CompatibilityError(p.string() + ": label '" + n + "' is not known to the model");
    }
  }
  return read_corpus_file(p, labels, cfg.max_sentence_length);
}

void save_model(const fs::path& p, const TokenClassifier& model, const Vocab& vocab, const LabelSet& labels,
                RunManifest& m) {
  auto out = open_out(p, true);
  save_checkpoint(out, model, vocab, labels);
  out.close();
  m.add_artifact(p);
}

void write_log(const fs::path& p, const TrainingLog& log, RunManifest& m) {
  auto out = open_out(p);
  log.write_jsonl(out);
  m.add_artifact(p);
}

// Runs `body`, always writing the manifest to `dir`.
template <class Fn>
void with_manifest(const std::string& command, const PipelineConfig& cfg, const fs::path& dir, Fn&& body) {
  RunManifest m(command, cfg.to_json());
  try {
    body(m);
    m.write(dir / "manifest.json", "ok");
  } catch (const std::exception& e) {
    m.write(dir / "manifest.json", "error", e.what());
    throw;
  }
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const FormatError*>(&e)) return 2;
  if (dynamic_cast<const CompatibilityError*>(&e)) return 3;
  if (dynamic_cast<const NumericError*>(&e)) return 4;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cupul: curriculum-scheduled PU training for distantly supervised NER"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON config file");
  app.add_option("--seed", g.seed, "global seed");
  app.add_option("--threads", g.threads, "worker threads for voter training")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "output directory (file for annotate)");
  app.add_option("--mode", g.mode, "cupul|cupul-st|no-curriculum|no-confmpu|voter-ensemble|soft-label-curriculum");
  app.add_flag("--allow-same-split", g.allow_same_split, "permit test == valid");

  // annotate
  std::string a_dict, a_in;
  auto* annotate = app.add_subcommand("annotate", "distantly label a corpus with a dictionary");
  annotate->add_option("--dict", a_dict, "dictionary TSV (surface<TAB>type)")->required();
  annotate->add_option("--in", a_in, "input corpus")->required();

  // train-voters
  std::string v_train;
  auto* train_voters_cmd = app.add_subcommand("train-voters", "train the voter ensemble");
  train_voters_cmd->add_option("--train", v_train, "distantly labeled training corpus")->required();

  // score-difficulty
  std::string s_train, s_voters;
  auto* score = app.add_subcommand("score-difficulty", "score confidence and difficulty per token");
  score->add_option("--train", s_train)->required();
  score->add_option("--voters", s_voters, "directory with voter_*.ckpt")->required();

  // build-plan
  std::string p_train, p_scores;
  std::optional<double> p_tau;
  std::optional<int> p_eta;
  auto* plan_cmd = app.add_subcommand("build-plan", "split tokens into curricula");
  plan_cmd->add_option("--train", p_train)->required();
  plan_cmd->add_option("--scores", p_scores, "difficulty.tsv")->required();
  plan_cmd->add_option("--tau", p_tau);
  plan_cmd->add_option("--eta", p_eta);

  // train
  std::string t_train, t_scores, t_plan;
  auto* train_cmd = app.add_subcommand("train", "train the NER classifier");
  train_cmd->add_option("--train", t_train)->required();
  train_cmd->add_option("--scores", t_scores, "difficulty.tsv")->required();
  train_cmd->add_option("--plan", t_plan, "plan.json (ignored by no-curriculum)");

  // self-train
  std::string st_model, st_train;
  auto* self_train_cmd = app.add_subcommand("self-train", "refine a model on its own sharpened outputs");
  self_train_cmd->add_option("--model", st_model)->required();
  self_train_cmd->add_option("--train", st_train)->required();

  // evaluate
  std::string e_model, e_test;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score a checkpoint on a gold test corpus");
  evaluate_cmd->add_option("--model", e_model)->required();
  evaluate_cmd->add_option("--test", e_test)->required();

  // analyze
  std::string an_train, an_scores, an_plan;
  auto* analyze = app.add_subcommand("analyze", "curriculum noise analysis and difficulty histogram");
  analyze->add_option("--train", an_train, "training corpus with gold column")->required();
  analyze->add_option("--scores", an_scores)->required();
  analyze->add_option("--plan", an_plan)->required();

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "run the full pipeline from --config");

  // sweep
  std::string sw_vary;
  std::vector<int> sw_values;
  auto* sweep = app.add_subcommand("sweep", "rerun the pipeline over voter or curriculum counts");
  sweep->add_option("--vary", sw_vary, "voters|curricula")->required();
  sweep->add_option("--values", sw_values, "positive integers")->required()->delimiter(',');

  // gen-synthetic
  BenchmarkSpec bench;
  auto* gen = app.add_subcommand("gen-synthetic", "write the synthetic benchmark");
  gen->add_option("--n-train", bench.n_train);
  gen->add_option("--n-valid", bench.n_valid);
  gen->add_option("--n-test", bench.n_test);
  gen->add_option("--types", bench.k);
  gen->add_option("--fn-rate", bench.noise.false_negative);
  gen->add_option("--fp-rate", bench.noise.false_positive);
  gen->add_option("--type-error-rate", bench.noise.type_error);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const PipelineConfig cfg = effective_config(g);

    if (*annotate) {
      if (g.out.empty()) throw FormatError("annotate: --out FILE is required");
      RunManifest m("annotate", cfg.to_json());
      m.add_input(a_in);
      m.add_input(a_dict);
      const auto raw = read_dictionary_file(a_dict);
      // Label space: corpus types first, then any new dictionary types.
      const Corpus probe = read_corpus_file(a_in, std::nullopt, cfg.max_sentence_length);
      std::vector<std::string> names;
      bool corpus_has_entities = false;
      for (const auto& s : probe.sentences) {
        for (const auto& t : s.tokens) corpus_has_entities |= t.distant != kUnlabeled || t.gold.value_or(0) != 0;
      }
      if (corpus_has_entities) names = probe.labels.names();
      for (const auto& r : raw) {
        if (std::find(names.begin(), names.end(), r.type_name) == names.end()) names.push_back(r.type_name);
      }
      if (names.empty()) names = probe.labels.names();
      LabelSet labels;
      try {
        labels = LabelSet(names);
      } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("annotate: ") + e.what());
      }
      const Corpus corpus = read_corpus_file(a_in, labels, cfg.max_sentence_length);
      if (raw.empty()) std::cerr << "warning: dictionary is empty; every token will be labeled O\n";
      const Corpus out = annotate_corpus(corpus, compile_dictionary(make_dictionary(raw, labels)));
      auto f = open_out(g.out);
      write_conll(out, f, out.has_gold());
      f.close();
      m.add_artifact(g.out);
      const fs::path out_path(g.out);
      m.write(out_path.parent_path().empty() ? fs::path("manifest.json") : out_path.parent_path() / "manifest.json",
              "ok");
      return 0;
    }

    const fs::path dir = out_dir(g, cfg);

    if (*train_voters_cmd) {
      with_manifest("train-voters", cfg, dir, [&](RunManifest& m) {
        const Corpus train = read_train(v_train, cfg, m);
        const Vocab vocab = build_vocab(train, cfg.min_count);
        const auto enc = encode(train, vocab);
        const auto ens = train_voters(train, enc, model_config_for(cfg, vocab, train.labels), cfg.voters,
                                      derive_seed(cfg.seed, "voters"), cfg.threads);
        for (size_t v = 0; v < ens.size(); ++v) {
          save_model(dir / ("voter_" + std::to_string(v) + ".ckpt"), ens.voters[v], vocab, train.labels, m);
        }
      });
    } else if (*score) {
      with_manifest("score-difficulty", cfg, dir, [&](RunManifest& m) {
        const auto voters = load_voters(s_voters, m);
        const Corpus train = read_with_labels(s_train, voters.front().labels, cfg, m);
        VoterEnsemble ens;
        for (const auto& c : voters) ens.voters.push_back(c.model);
        const auto scores = score_tokens(ens, encode(train, voters.front().vocab));
        auto out = open_out(dir / "difficulty.tsv");
        write_token_scores(out, train, scores);
        m.add_artifact(dir / "difficulty.tsv");
      });
    } else if (*plan_cmd) {
      with_manifest("build-plan", cfg, dir, [&](RunManifest& m) {
        const Corpus train = read_train(p_train, cfg, m);
        std::ifstream in(p_scores);
        if (!in) throw FormatError("cannot open " + p_scores);
        m.add_input(p_scores);
        const auto scores = read_token_scores(in, train);
        const auto plan = build_plan(scores.difficulty, train, p_tau.value_or(cfg.curriculum.tau),
                                     p_eta.value_or(cfg.curriculum.eta));
        write_json_file(dir / "plan.json", plan.to_json(), m);
      });
    } else if (*train_cmd) {
      with_manifest("train", cfg, dir, [&](RunManifest& m) {
        const Corpus train = read_train(t_train, cfg, m);
        std::ifstream in(t_scores);
        if (!in) throw FormatError("cannot open " + t_scores);
        m.add_input(t_scores);
        const auto scores = read_token_scores(in, train);
        std::optional<CurriculumPlan> plan;
        if (!t_plan.empty()) {
          std::ifstream pin(t_plan);
          if (!pin) throw FormatError("cannot open " + t_plan);
          m.add_input(t_plan);
          nlohmann::json j;
          try {
            j = nlohmann::json::parse(pin);
          } catch (const nlohmann::json::parse_error& e) {
            throw FormatError(t_plan + ": " + e.what());
          }
          plan = CurriculumPlan::from_json(j, train);
        } else if (cfg.mode != Mode::kNoCurriculum) {
          plan = build_plan(scores.difficulty, train, cfg.curriculum.tau, cfg.curriculum.eta);
        }
        const Vocab vocab = build_vocab(train, cfg.min_count);
        const auto enc = encode(train, vocab);
        const auto mc = model_config_for(cfg, vocab, train.labels);
        const Priors priors = cfg.priors ? Priors(*cfg.priors) : estimate_priors(train);
        const uint64_t seed = derive_seed(cfg.seed, "classifier");
        TrainedModel tm = [&]() -> TrainedModel {
          switch (cfg.mode) {
            case Mode::kCupul:
            case Mode::kCupulSt:
              return train_baby_step(train, enc, *plan, scores.confidence, priors, mc, cfg.schedule, seed);
            case Mode::kNoCurriculum:
              return train_no_curriculum(train, enc, scores.confidence, priors, mc, cfg.schedule,
                                         cfg.curriculum.eta, seed);
            case Mode::kNoConfMpu:
              return train_no_confmpu(train, enc, *plan, mc, cfg.schedule, seed);
            case Mode::kSoftLabelCurriculum:
              return train_soft_label_curriculum(train, enc, *plan, scores.confidence, mc, cfg.schedule, seed);
            case Mode::kVoterEnsemble:
              break;
          }
          throw FormatError("train: mode voter-ensemble has no classifier to train");
        }();
        if (cfg.mode == Mode::kCupulSt) {
          write_log(dir / "risk_log.jsonl", tm.log, m);
          tm = self_train(tm.model, enc, cfg.self_train, derive_seed(cfg.seed, "self-train"));
          write_log(dir / "self_train_log.jsonl", tm.log, m);
        } else {
          write_log(dir / "risk_log.jsonl", tm.log, m);
        }
        save_model(dir / "model.ckpt", tm.model, vocab, train.labels, m);
      });
    } else if (*self_train_cmd) {
      with_manifest("self-train", cfg, dir, [&](RunManifest& m) {
        const auto ck = load_checkpoint_file(st_model, m);
        const Corpus train = read_with_labels(st_train, ck.labels, cfg, m);
        const auto tm = self_train(ck.model, encode(train, ck.vocab), cfg.self_train,
                                   derive_seed(cfg.seed, "self-train"));
        write_log(dir / "self_train_log.jsonl", tm.log, m);
        save_model(dir / "model.ckpt", tm.model, ck.vocab, ck.labels, m);
      });
    } else if (*evaluate_cmd) {
      with_manifest("evaluate", cfg, dir, [&](RunManifest& m) {
        const auto ck = load_checkpoint_file(e_model, m);
        const Corpus test = read_with_labels(e_test, ck.labels, cfg, m);
        auto j = evaluate(ck.model, test, ck.vocab, cfg.relaxed_requires_type).to_json(ck.labels);
        write_json_file(dir / "eval_report.json", j, m);
      });
    } else if (*analyze) {
      with_manifest("analyze", cfg, dir, [&](RunManifest& m) {
        const Corpus train = read_train(an_train, cfg, m);
        std::ifstream in(an_scores);
        if (!in) throw FormatError("cannot open " + an_scores);
        m.add_input(an_scores);
        const auto scores = read_token_scores(in, train);
        std::ifstream pin(an_plan);
        if (!pin) throw FormatError("cannot open " + an_plan);
        m.add_input(an_plan);
        nlohmann::json pj;
        try {
          pj = nlohmann::json::parse(pin);
        } catch (const nlohmann::json::parse_error& e) {
          throw FormatError(an_plan + ": " + e.what());
        }
        const auto plan = CurriculumPlan::from_json(pj, train);
        const auto analysis = curriculum_error_analysis(plan, train, scores.difficulty);
        const auto hist =
            difficulty_histogram(positive_difficulties(train, scores.difficulty), cfg.histogram_bins);
        {
          auto out = open_out(dir / "curriculum_analysis.csv");
          analysis.write_csv(out);
          m.add_artifact(dir / "curriculum_analysis.csv");
        }
        {
          auto out = open_out(dir / "difficulty_histogram.csv");
          hist.write_csv(out);
          m.add_artifact(dir / "difficulty_histogram.csv");
        }
        write_json_file(dir / "noise_report.json", noise_report(train).to_json(), m);
      });
    } else if (*pipeline) {
      if (g.config.empty()) throw FormatError("pipeline: --config is required");
      const auto r = run_pipeline_files(cfg, dir);
      if (r.test_report) {
        std::cout << "strict F1 " << r.test_report->strict.overall.f1() << ", relaxed F1 "
                  << r.test_report->relaxed.overall.f1() << '\n';
      }
    } else if (*sweep) {
      if (g.config.empty()) throw FormatError("sweep: --config is required");
      const auto rows = run_sweep(cfg, sw_vary, sw_values, dir);
      write_sweep_csv(std::cout, rows);
    } else if (*gen) {
      with_manifest("gen-synthetic", cfg, dir, [&](RunManifest& m) {
        const auto b = make_benchmark(bench, cfg.seed);
        auto write_split = [&](const std::string& name, const Corpus& c) {
          auto out = open_out(dir / name);
          write_conll(c, out, true);
          out.close();
          m.add_artifact(dir / name);
        };
        write_split("train.conll", b.train);
        write_split("valid.conll", b.valid);
        write_split("test.conll", b.test);
        {
          auto out = open_out(dir / "dict.tsv");
          write_dictionary_tsv(b.dictionary, b.train.labels, out);
          m.add_artifact(dir / "dict.tsv");
        }
        PipelineConfig pc;
        pc.train = "train.conll";
        pc.valid = "valid.conll";
        pc.test = "test.conll";
        pc.out = "run";
        pc.seed = cfg.seed;
        write_json_file(dir / "config.json", pc.to_json(), m);
      });
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}
