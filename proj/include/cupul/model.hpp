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

// Windowed token classifier.
//
//   x      = [E[id(t-w)], ..., E[id(t+w)]]          (2w+1)*embed_dim
//   h      = tanh(x W_h + b_h)                        hidden_dim
//   p      = softmax(h W_o + b_o)                     n_classes
//
// All parameters live in one flat float64 vector in the order
//   E [vocab x embed], W_h [in x hidden], b_h, W_o [hidden x classes], b_o
// (row-major), which is also the on-disk order of the checkpoint format.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cupul/common.hpp"
#include "cupul/corpus.hpp"

namespace cupul {

struct ModelConfig {
  int embed_dim = 32;
  int window = 2;
  int hidden_dim = 64;
  int vocab_size = 0;
  int n_classes = 0;
  double init_scale = 0.1;
  uint64_t seed = 0;

  int input_dim() const { return (2 * window + 1) * embed_dim; }

  void validate() const {
    if (embed_dim < 1 || hidden_dim < 1 || window < 0 || vocab_size < Vocab::kFirstWord) {
      throw std::invalid_argument("ModelConfig: dimensions must be >= 1");
    }
    if (n_classes < 2) throw std::invalid_argument("ModelConfig: n_classes must be >= 2");
    if (!(init_scale >= 0.0)) throw std::invalid_argument("ModelConfig: init_scale must be >= 0");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Probability vector over {unlabeled, type 1, ..., type k}.
struct ClassDistribution {
  std::vector<double> probs;

  size_t size() const { return probs.size(); }
  double operator[](size_t i) const { return probs[i]; }

  bool valid(double tol = 1e-9) const {
    if (probs.size() < 2) return false;
    double sum = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0 && p <= 1.0)) return false;
      sum += p;
    }
    return std::abs(sum - 1.0) <= tol;
  }

  // Smallest class id among the maxima.
  LabelId argmax() const {
    size_t best = 0;
    for (size_t j = 1; j < probs.size(); ++j) {
      if (probs[j] > probs[best]) best = j;
    }
    return static_cast<LabelId>(best);
  }

  friend bool operator==(const ClassDistribution&, const ClassDistribution&) = default;
};

// d(risk)/d(prob_j) for one token.
using OutputGradient = std::vector<double>;

struct ParameterLayout {
  size_t embedding = 0, hidden_w = 0, hidden_b = 0, output_w = 0, output_b = 0, total = 0;

  explicit ParameterLayout(const ModelConfig& c) {
    embedding = 0;
    hidden_w = embedding + static_cast<size_t>(c.vocab_size) * c.embed_dim;
    hidden_b = hidden_w + static_cast<size_t>(c.input_dim()) * c.hidden_dim;
    output_w = hidden_b + static_cast<size_t>(c.hidden_dim);
    output_b = output_w + static_cast<size_t>(c.hidden_dim) * c.n_classes;
    total = output_b + static_cast<size_t>(c.n_classes);
  }

  const char* block_of(size_t i) const {
    if (i < hidden_w) return "embedding";
    if (i < hidden_b) return "hidden weights";
    if (i < output_w) return "hidden bias";
    if (i < output_b) return "output weights";
    return "output bias";
  }
};

// Forward-pass intermediates kept for the backward pass.
struct Activation {
  std::vector<double> hidden;
  ClassDistribution dist;
};

struct Gradients {
  std::vector<double> values;

  explicit Gradients(size_t n = 0) : values(n, 0.0) {}
  void clear() { std::fill(values.begin(), values.end(), 0.0); }
};

class TokenClassifier {
 public:
  TokenClassifier() : layout_(ModelConfig{}) {}

  TokenClassifier(const ModelConfig& config, uint64_t vocab_fingerprint)
      : config_(config), layout_((config.validate(), config)), vocab_fingerprint_(vocab_fingerprint) {
    params_.assign(layout_.total, 0.0);
    Rng rng(derive_seed(config.seed, "model-init"));
    auto fill = [&](size_t begin, size_t end) {
      for (size_t i = begin; i < end; ++i) params_[i] = config.init_scale * rng.normal();
    };
    fill(layout_.embedding, layout_.hidden_w);
    fill(layout_.hidden_w, layout_.hidden_b);
    fill(layout_.output_w, layout_.output_b);
  }

  const ModelConfig& config() const { return config_; }
  const ParameterLayout& layout() const { return layout_; }
  uint64_t vocab_fingerprint() const { return vocab_fingerprint_; }
  int num_classes() const { return config_.n_classes; }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  void forward(std::span<const int32_t> ids, size_t t, Activation& act) const {
    if (t >= ids.size()) throw std::out_of_range("TokenClassifier::forward: token index");
    const int H = config_.hidden_dim, C = config_.n_classes;
    thread_local std::vector<double> x;
    gather_input(ids, t, x);

    act.hidden.assign(params_.begin() + static_cast<std::ptrdiff_t>(layout_.hidden_b),
                      params_.begin() + static_cast<std::ptrdiff_t>(layout_.hidden_b + H));
    const double* wh = params_.data() + layout_.hidden_w;
    double* h = act.hidden.data();
    const int in = config_.input_dim();
    for (int i = 0; i < in; ++i) {
      const double xi = x[static_cast<size_t>(i)];
      const double* row = wh + static_cast<size_t>(i) * H;
      for (int a = 0; a < H; ++a) h[a] += xi * row[a];
    }
    for (int a = 0; a < H; ++a) h[a] = std::tanh(h[a]);

    auto& p = act.dist.probs;
    p.assign(params_.begin() + static_cast<std::ptrdiff_t>(layout_.output_b),
             params_.begin() + static_cast<std::ptrdiff_t>(layout_.output_b + C));
    const double* wo = params_.data() + layout_.output_w;
    for (int a = 0; a < H; ++a) {
      const double* row = wo + static_cast<size_t>(a) * C;
      for (int j = 0; j < C; ++j) p[static_cast<size_t>(j)] += h[a] * row[j];
    }
    softmax_inplace(p);
  }

  ClassDistribution forward(std::span<const int32_t> ids, size_t t) const {
    Activation act;
    forward(ids, t, act);
    return std::move(act.dist);
  }

  // Adds the gradient of <grad, probs> at token t to `out`.
  void accumulate_gradient(std::span<const int32_t> ids, size_t t, const Activation& act,
                           const OutputGradient& grad, Gradients& out) const {
    const int D = config_.embed_dim, H = config_.hidden_dim, C = config_.n_classes;
    if (grad.size() != static_cast<size_t>(C) || act.dist.size() != static_cast<size_t>(C) ||
        out.values.size() != params_.size()) {
      throw std::invalid_argument("TokenClassifier::backward: shape mismatch");
    }
    if (std::all_of(grad.begin(), grad.end(), [](double g) { return g == 0.0; })) return;

    const auto& p = act.dist.probs;
    double dot = 0.0;
    for (int j = 0; j < C; ++j) dot += p[static_cast<size_t>(j)] * grad[static_cast<size_t>(j)];
    std::array<double, 64> dlogit_small{};
    std::vector<double> dlogit_big;
    double* dlogit = dlogit_small.data();
    if (C > 64) {
      dlogit_big.resize(static_cast<size_t>(C));
      dlogit = dlogit_big.data();
    }
    for (int j = 0; j < C; ++j) {
      dlogit[j] = p[static_cast<size_t>(j)] * (grad[static_cast<size_t>(j)] - dot);
    }

    double* g = out.values.data();
    const double* wo = params_.data() + layout_.output_w;
    double* gwo = g + layout_.output_w;
    double* gbo = g + layout_.output_b;
    for (int j = 0; j < C; ++j) gbo[j] += dlogit[j];

    thread_local std::vector<double> da;
    da.assign(static_cast<size_t>(H), 0.0);
    const double* h = act.hidden.data();
    for (int a = 0; a < H; ++a) {
      const double* row = wo + static_cast<size_t>(a) * C;
      double* grow = gwo + static_cast<size_t>(a) * C;
      double dz = 0.0;
      for (int j = 0; j < C; ++j) {
        grow[j] += h[a] * dlogit[j];
        dz += row[j] * dlogit[j];
      }
      da[static_cast<size_t>(a)] = dz * (1.0 - h[a] * h[a]);
    }

    double* gbh = g + layout_.hidden_b;
    for (int a = 0; a < H; ++a) gbh[a] += da[static_cast<size_t>(a)];

    thread_local std::vector<double> x;
    gather_input(ids, t, x);
    const double* wh = params_.data() + layout_.hidden_w;
    double* gwh = g + layout_.hidden_w;
    const int w = config_.window;
    for (int slot = 0; slot < 2 * w + 1; ++slot) {
      const int32_t id = window_id(ids, t, slot - w);
      double* ge = g + layout_.embedding + static_cast<size_t>(id) * D;
      for (int d = 0; d < D; ++d) {
        const size_t i = static_cast<size_t>(slot * D + d);
        const double* row = wh + i * H;
        double* grow = gwh + i * H;
        const double xi = x[i];
        double dx = 0.0;
        for (int a = 0; a < H; ++a) {
          grow[a] += xi * da[static_cast<size_t>(a)];
          dx += row[a] * da[static_cast<size_t>(a)];
        }
        ge[d] += dx;
      }
    }
  }

  static void softmax_inplace(std::vector<double>& z) {
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) {
      v = std::exp(v - m);
      sum += v;
    }
    for (double& v : z) v /= sum;
  }

 private:
  int32_t window_id(std::span<const int32_t> ids, size_t t, int offset) const {
    const auto pos = static_cast<std::ptrdiff_t>(t) + offset;
    if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(ids.size())) return Vocab::kPadding;
    const int32_t id = ids[static_cast<size_t>(pos)];
    if (id < 0 || id >= config_.vocab_size) throw std::out_of_range("TokenClassifier: word id out of vocabulary range");
    return id;
  }

  void gather_input(std::span<const int32_t> ids, size_t t, std::vector<double>& x) const {
    const int D = config_.embed_dim, w = config_.window;
    x.resize(static_cast<size_t>(config_.input_dim()));
    for (int slot = 0; slot < 2 * w + 1; ++slot) {
      const int32_t id = window_id(ids, t, slot - w);
      const double* e = params_.data() + layout_.embedding + static_cast<size_t>(id) * D;
      std::copy(e, e + D, x.begin() + slot * D);
    }
  }

  ModelConfig config_;
  ParameterLayout layout_;
  uint64_t vocab_fingerprint_ = 0;
  std::vector<double> params_;
};

inline ClassDistribution forward(const TokenClassifier& model, std::span<const int32_t> ids,
                                 size_t token) {
  return model.forward(ids, token);
}

// Per-token output gradient addressed by TokenRef into an encoded corpus.
struct TokenGradient {
  TokenRef ref;
  OutputGradient grad;
};

inline void check_vocab(const TokenClassifier& model, const EncodedCorpus& corpus) {
  if (model.vocab_fingerprint() != corpus.vocab_fingerprint) {
    throw CompatibilityError("model and corpus were encoded with different vocabularies");
  }
}

// Gradient of sum_t <grad_t, probs_t> with respect to every parameter.
inline Gradients backward(const TokenClassifier& model, const EncodedCorpus& corpus,
                          std::span<const TokenGradient> batch) {
  check_vocab(model, corpus);
  Gradients out(model.params().size());
  Activation act;
  for (const auto& tg : batch) {
    const auto& ids = corpus.ids.at(tg.ref.sentence);
    model.forward(ids, tg.ref.token, act);
    model.accumulate_gradient(ids, tg.ref.token, act, tg.grad, out);
  }
  return out;
}

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  uint64_t step = 0;
  std::vector<double> m, v;

  AdamState() = default;
  AdamState(size_t n, double lr) : learning_rate(lr), m(n, 0.0), v(n, 0.0) {}

  void reset() {
    step = 0;
    std::fill(m.begin(), m.end(), 0.0);
    std::fill(v.begin(), v.end(), 0.0);
  }
};

inline void adam_step(TokenClassifier& model, const Gradients& grads, AdamState& st) {
  auto& p = model.params();
  if (grads.values.size() != p.size() || st.m.size() != p.size() || st.v.size() != p.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  for (size_t i = 0; i < grads.values.size(); ++i) {
    if (!std::isfinite(grads.values[i])) {
      throw NumericError("adam_step: non-finite gradient " + std::to_string(grads.values[i]) +
                         " at parameter " + std::to_string(i) + " (" + model.layout().block_of(i) + ")");
    }
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (size_t i = 0; i < p.size(); ++i) {
    const double g = grads.values[i];
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
    const double mhat = st.m[i] / c1;
    const double vhat = st.v[i] / c2;
    p[i] -= st.learning_rate * mhat / (std::sqrt(vhat) + st.epsilon);
  }
}

// Model output for every token of an encoded corpus.
inline TokenTable<ClassDistribution> predict_distributions(const TokenClassifier& model,
                                                           const EncodedCorpus& corpus) {
  check_vocab(model, corpus);
  std::vector<size_t> sizes;
  for (const auto& s : corpus.ids) sizes.push_back(s.size());
  TokenTable<ClassDistribution> out(sizes);
  Activation act;
  for (size_t s = 0; s < corpus.ids.size(); ++s) {
    for (size_t t = 0; t < corpus.ids[s].size(); ++t) {
      model.forward(corpus.ids[s], t, act);
      out.at(s, t) = act.dist;
    }
  }
  return out;
}

// Argmax label per token; ties go to the smallest class id.
inline std::vector<std::vector<LabelId>> predict(const TokenClassifier& model,
                                                 const EncodedCorpus& corpus) {
  check_vocab(model, corpus);
  std::vector<std::vector<LabelId>> out;
  out.reserve(corpus.ids.size());
  Activation act;
  for (const auto& ids : corpus.ids) {
    std::vector<LabelId> labels(ids.size());
    for (size_t t = 0; t < ids.size(); ++t) {
      model.forward(ids, t, act);
      labels[t] = act.dist.argmax();
    }
    out.push_back(std::move(labels));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint format (version 1). All integers and doubles little-endian.
//
//   char[8]  magic "CUPULMDL"
//   u32      version = 1
//   u32      embed_dim, window, hidden_dim, vocab_size, n_classes
//   f64      init_scale
//   u64      seed
//   u32      number of entity types k, then k strings
//   u32      number of vocabulary words, then the words in index order
//            starting at index 2 (0 = unknown, 1 = padding)
//   u64      parameter count, then that many f64 in flat layout order
//
// A string is a u32 byte length followed by the bytes.

struct Checkpoint {
  TokenClassifier model;
  Vocab vocab;
  LabelSet labels;
};

namespace detail {

inline void put_u32(std::ostream& o, uint32_t v) {
  for (int i = 0; i < 4; ++i) o.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::ostream& o, uint64_t v) {
  for (int i = 0; i < 8; ++i) o.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_f64(std::ostream& o, double d) {
  uint64_t v;
  std::memcpy(&v, &d, sizeof v);
  put_u64(o, v);
}
inline void put_str(std::ostream& o, const std::string& s) {
  put_u32(o, static_cast<uint32_t>(s.size()));
  o.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline uint64_t get_bytes(std::istream& in, int n) {
  uint64_t v = 0;
  for (int i = 0; i < n; ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw FormatError("checkpoint: truncated file");
    v |= static_cast<uint64_t>(static_cast<uint8_t>(c)) << (8 * i);
  }
  return v;
}
inline uint32_t get_u32(std::istream& in) { return static_cast<uint32_t>(get_bytes(in, 4)); }
inline uint64_t get_u64(std::istream& in) { return get_bytes(in, 8); }
inline double get_f64(std::istream& in) {
  const uint64_t v = get_u64(in);
  double d;
  std::memcpy(&d, &v, sizeof d);
  return d;
}
inline std::string get_str(std::istream& in) {
  const uint32_t n = get_u32(in);
  if (n > (1u << 24)) throw FormatError("checkpoint: implausible string length");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (static_cast<uint32_t>(in.gcount()) != n) throw FormatError("checkpoint: truncated string");
  return s;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'C', 'U', 'P', 'U', 'L', 'M', 'D', 'L'};
inline constexpr uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(std::ostream& out, const TokenClassifier& model, const Vocab& vocab,
                            const LabelSet& labels) {
  if (model.vocab_fingerprint() != vocab.fingerprint() ||
      model.config().vocab_size != static_cast<int>(vocab.size())) {
    throw CompatibilityError("save_checkpoint: vocabulary does not belong to this model");
  }
  if (model.num_classes() != labels.num_classes()) {
    throw CompatibilityError("save_checkpoint: label set does not match model classes");
  }
  const auto& c = model.config();
  out.write(kCheckpointMagic, 8);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<uint32_t>(c.embed_dim));
  detail::put_u32(out, static_cast<uint32_t>(c.window));
  detail::put_u32(out, static_cast<uint32_t>(c.hidden_dim));
  detail::put_u32(out, static_cast<uint32_t>(c.vocab_size));
  detail::put_u32(out, static_cast<uint32_t>(c.n_classes));
  detail::put_f64(out, c.init_scale);
  detail::put_u64(out, c.seed);
  detail::put_u32(out, static_cast<uint32_t>(labels.size()));
  for (const auto& n : labels.names()) detail::put_str(out, n);
  detail::put_u32(out, static_cast<uint32_t>(vocab.words().size()));
  for (const auto& w : vocab.words()) detail::put_str(out, w);
  detail::put_u64(out, model.params().size());
  for (double p : model.params()) detail::put_f64(out, p);
  if (!out) throw Error("save_checkpoint: write failure");
}

inline Checkpoint load_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw FormatError("checkpoint: bad magic");
  }
  if (const uint32_t version = detail::get_u32(in); version != kCheckpointVersion) {
    throw CompatibilityError("checkpoint: unsupported version " + std::to_string(version));
  }
  ModelConfig c;
  c.embed_dim = static_cast<int>(detail::get_u32(in));
  c.window = static_cast<int>(detail::get_u32(in));
  c.hidden_dim = static_cast<int>(detail::get_u32(in));
  c.vocab_size = static_cast<int>(detail::get_u32(in));
  c.n_classes = static_cast<int>(detail::get_u32(in));
  c.init_scale = detail::get_f64(in);
  c.seed = detail::get_u64(in);

  std::vector<std::string> names(detail::get_u32(in));
  for (auto& n : names) n = detail::get_str(in);
  std::vector<std::string> words(detail::get_u32(in));
  for (auto& w : words) w = detail::get_str(in);

  Checkpoint ck;
  try {
    ck.labels = LabelSet(std::move(names));
    ck.vocab = Vocab(std::move(words));
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  if (static_cast<int>(ck.vocab.size()) != c.vocab_size) {
    throw CompatibilityError("checkpoint: vocabulary size disagrees with model config");
  }
  if (ck.labels.num_classes() != c.n_classes) {
    throw CompatibilityError("checkpoint: label count disagrees with model config");
  }
  ck.model = TokenClassifier(c, ck.vocab.fingerprint());
  const uint64_t n = detail::get_u64(in);
  if (n != ck.model.params().size()) throw CompatibilityError("checkpoint: parameter count mismatch");
  for (auto& p : ck.model.params()) p = detail::get_f64(in);
  return ck;
}

}  // namespace cupul
