// Copyright 2026 The rulekd Authors.
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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rulekd/nn.hpp"

namespace rulekd {

using Distribution = std::vector<double>;

namespace detail {

inline std::span<const int> trim_padding(std::span<const int> ids) {
  std::size_t n = ids.size();
  while (n > 0 && ids[n - 1] == Vocabulary::kPad) --n;
  if (n == 0) throw std::invalid_argument("forward: empty input");
  return ids.first(n);
}

inline std::string join_ints(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<std::size_t> split_ints(const std::string& s) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start < s.size()) {
    auto end = s.find(',', start);
    if (end == std::string::npos) end = s.size();
    out.push_back(std::stoul(s.substr(start, end - start)));
    start = end + 1;
  }
  return out;
}

inline std::size_t setting(const std::map<std::string, std::string>& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw CheckpointError("checkpoint: missing setting '" + key + "'");
  return std::stoul(it->second);
}

inline void load_blocks(Parameters& params, std::vector<ParamBlock>& blocks) {
  if (blocks.size() != params.size()) throw CheckpointError("checkpoint: block count mismatch");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    auto& dst = params[i];
    if (blocks[i].name != dst.name || blocks[i].rows != dst.rows || blocks[i].cols != dst.cols)
      throw CheckpointError("checkpoint: block '" + blocks[i].name + "' shape mismatch");
    dst.value = std::move(blocks[i].value);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------

struct TextClassifierConfig {
  std::size_t dim = 32;
  std::vector<std::size_t> windows{2, 3};
  std::size_t maps = 16;
  std::size_t classes = 2;
  double embedding_scale = 0.05;
};

/// Convolution over word embeddings with tanh feature maps, max-over-time
/// pooling and a softmax output layer. Convolution is "wide": windows may
/// hang over either end of the sentence, where positions read as zeros.
class TextClassifier {
 public:
  struct Cache {
    std::vector<int> ids;
    std::vector<std::vector<double>> act;        // per window size: (n + h - 1) x maps
    std::vector<std::vector<std::size_t>> argmax;  // per window size: maps
    std::vector<double> features;
    Distribution probs;
  };

  TextClassifier(Vocabulary vocab, TextClassifierConfig cfg, std::uint64_t seed)
      : vocab_(std::move(vocab)), cfg_(std::move(cfg)) {
    if (cfg_.windows.empty() || cfg_.maps == 0 || cfg_.classes < 2 || cfg_.dim == 0)
      throw std::invalid_argument("text classifier: bad configuration");
    layout();
    std::mt19937_64 rng(seed);
    uniform_init(params_[emb_], cfg_.embedding_scale, rng);
    std::fill_n(params_[emb_].row(Vocabulary::kPad), cfg_.dim, 0.0);
    for (std::size_t w = 0; w < cfg_.windows.size(); ++w) glorot_init(params_[conv_w_[w]], rng);
    glorot_init(params_[out_w_], rng);
  }

  [[nodiscard]] const Vocabulary& vocab() const { return vocab_; }
  [[nodiscard]] const TextClassifierConfig& config() const { return cfg_; }
  Parameters& parameters() { return params_; }
  [[nodiscard]] const Parameters& parameters() const { return params_; }
  [[nodiscard]] std::size_t classes() const { return cfg_.classes; }

  [[nodiscard]] Distribution forward(std::span<const int> ids) const { return forward_cached(ids).probs; }

  [[nodiscard]] Distribution forward(std::span<const std::string> tokens) const {
    return forward(vocab_.encode(tokens));
  }

  [[nodiscard]] Cache forward_cached(std::span<const int> raw) const {
    const auto ids = detail::trim_padding(raw);
    Cache c;
    c.ids.assign(ids.begin(), ids.end());
    const std::size_t n = ids.size(), d = cfg_.dim, m = cfg_.maps;
    const auto& emb = params_[emb_];
    for (std::size_t w = 0; w < cfg_.windows.size(); ++w) {
      const std::size_t h = cfg_.windows[w];
      const std::size_t positions = n + h - 1;
      const auto& wt = params_[conv_w_[w]];
      const auto& bias = params_[conv_b_[w]];
      std::vector<double> act(positions * m);
      std::vector<std::size_t> best(m, 0);
      for (std::size_t s = 0; s < positions; ++s) {
        for (std::size_t f = 0; f < m; ++f) {
          double z = bias.value[f];
          const double* wrow = wt.row(f);
          for (std::size_t j = 0; j < h; ++j) {
            const std::ptrdiff_t tok = static_cast<std::ptrdiff_t>(s + j) - static_cast<std::ptrdiff_t>(h - 1);
            if (tok < 0 || tok >= static_cast<std::ptrdiff_t>(n)) continue;
            const double* e = emb.row(static_cast<std::size_t>(ids[static_cast<std::size_t>(tok)]));
            for (std::size_t k = 0; k < d; ++k) z += wrow[j * d + k] * e[k];
          }
          act[s * m + f] = std::tanh(z);
          if (act[s * m + f] > act[best[f] * m + f]) best[f] = s;
        }
      }
      for (std::size_t f = 0; f < m; ++f) c.features.push_back(act[best[f] * m + f]);
      c.act.push_back(std::move(act));
      c.argmax.push_back(std::move(best));
    }
    const auto& ow = params_[out_w_];
    const auto& ob = params_[out_b_];
    std::vector<double> logits(cfg_.classes);
    for (std::size_t k = 0; k < cfg_.classes; ++k) {
      double z = ob.value[k];
      for (std::size_t i = 0; i < c.features.size(); ++i) z += ow.row(k)[i] * c.features[i];
      logits[k] = z;
    }
    c.probs = softmax(logits);
    return c;
  }

  /// Accumulates d(loss)/d(params) given d(loss)/d(logits), scaled by `weight`.
  void backward(const Cache& c, std::span<const double> dlogits, double weight = 1.0) {
    const std::size_t n = c.ids.size(), d = cfg_.dim, m = cfg_.maps;
    auto& ow = params_[out_w_];
    auto& ob = params_[out_b_];
    std::vector<double> dfeat(c.features.size(), 0.0);
    for (std::size_t k = 0; k < cfg_.classes; ++k) {
      const double g = weight * dlogits[k];
      ob.grad[k] += g;
      double* gr = ow.grad_row(k);
      const double* wr = ow.row(k);
      for (std::size_t i = 0; i < c.features.size(); ++i) {
        gr[i] += g * c.features[i];
        dfeat[i] += g * wr[i];
      }
    }
    auto& emb = params_[emb_];
    for (std::size_t w = 0; w < cfg_.windows.size(); ++w) {
      const std::size_t h = cfg_.windows[w];
      auto& wt = params_[conv_w_[w]];
      auto& bias = params_[conv_b_[w]];
      for (std::size_t f = 0; f < m; ++f) {
        const std::size_t s = c.argmax[w][f];
        const double a = c.act[w][s * m + f];
        const double dz = dfeat[w * m + f] * (1.0 - a * a);
        if (dz == 0.0) continue;
        bias.grad[f] += dz;
        double* gw = wt.grad_row(f);
        const double* wrow = wt.row(f);
        for (std::size_t j = 0; j < h; ++j) {
          const std::ptrdiff_t tok = static_cast<std::ptrdiff_t>(s + j) - static_cast<std::ptrdiff_t>(h - 1);
          if (tok < 0 || tok >= static_cast<std::ptrdiff_t>(n)) continue;
          const auto id = static_cast<std::size_t>(c.ids[static_cast<std::size_t>(tok)]);
          const double* e = emb.row(id);
          double* ge = emb.grad_row(id);
          for (std::size_t k = 0; k < d; ++k) {
            gw[j * d + k] += dz * e[k];
            ge[k] += dz * wrow[j * d + k];
          }
        }
      }
    }
    std::fill_n(emb.grad_row(Vocabulary::kPad), d, 0.0);
  }

  void save(std::ostream& os) const {
    std::map<std::string, std::string> s{{"dim", std::to_string(cfg_.dim)},
                                         {"windows", detail::join_ints(cfg_.windows)},
                                         {"maps", std::to_string(cfg_.maps)},
                                         {"classes", std::to_string(cfg_.classes)}};
    write_checkpoint(os, kKind, s, vocab_, params_);
  }

  static TextClassifier load(std::istream& is) {
    auto data = read_checkpoint(is);
    if (data.kind != kKind) throw CheckpointError("checkpoint holds a '" + data.kind + "', expected " + kKind);
    TextClassifierConfig cfg;
    cfg.dim = detail::setting(data.settings, "dim");
    cfg.maps = detail::setting(data.settings, "maps");
    cfg.classes = detail::setting(data.settings, "classes");
    cfg.windows = detail::split_ints(data.settings.at("windows"));
    TextClassifier model(std::move(data.vocab), cfg, 0);
    detail::load_blocks(model.params_, data.blocks);
    return model;
  }

  static constexpr const char* kKind = "text_classifier";

 private:
  void layout() {
    emb_ = params_.add("embedding", vocab_.size(), cfg_.dim);
    for (std::size_t h : cfg_.windows) {
      if (h == 0) throw std::invalid_argument("text classifier: zero window");
      conv_w_.push_back(params_.add("conv" + std::to_string(h) + ".weight", cfg_.maps, h * cfg_.dim));
      conv_b_.push_back(params_.add("conv" + std::to_string(h) + ".bias", cfg_.maps, 1));
    }
    out_w_ = params_.add("output.weight", cfg_.classes, cfg_.windows.size() * cfg_.maps);
    out_b_ = params_.add("output.bias", cfg_.classes, 1);
  }

  Vocabulary vocab_;
  TextClassifierConfig cfg_;
  Parameters params_;
  std::size_t emb_ = 0, out_w_ = 0, out_b_ = 0;
  std::vector<std::size_t> conv_w_, conv_b_;
};

// ---------------------------------------------------------------------------

struct SequenceTaggerConfig {
  std::size_t dim = 32;
  std::size_t radius = 2;
  std::size_t hidden = 32;
  std::size_t tags = 17;
  double embedding_scale = 0.05;
};

/// Window tagger: each position concatenates the embeddings of the tokens
/// within `radius`, applies one tanh hidden layer and a softmax over tags.
class SequenceTagger {
 public:
  struct Cache {
    std::vector<int> ids;
    std::vector<std::vector<double>> hidden;  // T x H
    std::vector<Distribution> probs;          // T x K
  };

  SequenceTagger(Vocabulary vocab, SequenceTaggerConfig cfg, std::uint64_t seed)
      : vocab_(std::move(vocab)), cfg_(cfg) {
    if (cfg_.tags < 2 || cfg_.hidden == 0 || cfg_.dim == 0)
      throw std::invalid_argument("sequence tagger: bad configuration");
    layout();
    std::mt19937_64 rng(seed);
    uniform_init(params_[emb_], cfg_.embedding_scale, rng);
    std::fill_n(params_[emb_].row(Vocabulary::kPad), cfg_.dim, 0.0);
    glorot_init(params_[hid_w_], rng);
    glorot_init(params_[out_w_], rng);
  }

  [[nodiscard]] const Vocabulary& vocab() const { return vocab_; }
  [[nodiscard]] const SequenceTaggerConfig& config() const { return cfg_; }
  Parameters& parameters() { return params_; }
  [[nodiscard]] const Parameters& parameters() const { return params_; }
  [[nodiscard]] std::size_t tags() const { return cfg_.tags; }

  [[nodiscard]] std::vector<Distribution> forward(std::span<const int> ids) const {
    return forward_cached(ids).probs;
  }
  [[nodiscard]] std::vector<Distribution> forward(std::span<const std::string> tokens) const {
    return forward(vocab_.encode(tokens));
  }

  [[nodiscard]] Cache forward_cached(std::span<const int> raw) const {
    const auto ids = detail::trim_padding(raw);
    Cache c;
    c.ids.assign(ids.begin(), ids.end());
    const std::size_t n = ids.size(), d = cfg_.dim, width = 2 * cfg_.radius + 1;
    const auto& emb = params_[emb_];
    const auto& hw = params_[hid_w_];
    const auto& hb = params_[hid_b_];
    const auto& ow = params_[out_w_];
    const auto& ob = params_[out_b_];
    c.hidden.resize(n);
    c.probs.resize(n);
    std::vector<double> logits(cfg_.tags);
    for (std::size_t t = 0; t < n; ++t) {
      auto& h = c.hidden[t];
      h.assign(hb.value.begin(), hb.value.end());
      for (std::size_t j = 0; j < width; ++j) {
        const std::ptrdiff_t tok = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(cfg_.radius);
        if (tok < 0 || tok >= static_cast<std::ptrdiff_t>(n)) continue;
        const double* e = emb.row(static_cast<std::size_t>(ids[static_cast<std::size_t>(tok)]));
        for (std::size_t u = 0; u < cfg_.hidden; ++u) {
          const double* wr = hw.row(u) + j * d;
          double z = 0.0;
          for (std::size_t k = 0; k < d; ++k) z += wr[k] * e[k];
          h[u] += z;
        }
      }
      for (auto& v : h) v = std::tanh(v);
      for (std::size_t k = 0; k < cfg_.tags; ++k) {
        double z = ob.value[k];
        const double* wr = ow.row(k);
        for (std::size_t u = 0; u < cfg_.hidden; ++u) z += wr[u] * h[u];
        logits[k] = z;
      }
      c.probs[t] = softmax(logits);
    }
    return c;
  }

  /// `dlogits` holds one row per position.
  void backward(const Cache& c, const std::vector<std::vector<double>>& dlogits, double weight = 1.0) {
    const std::size_t n = c.ids.size(), d = cfg_.dim, width = 2 * cfg_.radius + 1;
    auto& emb = params_[emb_];
    auto& hw = params_[hid_w_];
    auto& hb = params_[hid_b_];
    auto& ow = params_[out_w_];
    auto& ob = params_[out_b_];
    std::vector<double> dh(cfg_.hidden);
    for (std::size_t t = 0; t < n; ++t) {
      std::fill(dh.begin(), dh.end(), 0.0);
      const auto& h = c.hidden[t];
      for (std::size_t k = 0; k < cfg_.tags; ++k) {
        const double g = weight * dlogits[t][k];
        if (g == 0.0) continue;
        ob.grad[k] += g;
        double* gr = ow.grad_row(k);
        const double* wr = ow.row(k);
        for (std::size_t u = 0; u < cfg_.hidden; ++u) {
          gr[u] += g * h[u];
          dh[u] += g * wr[u];
        }
      }
      for (std::size_t u = 0; u < cfg_.hidden; ++u) dh[u] *= 1.0 - h[u] * h[u];
      for (std::size_t u = 0; u < cfg_.hidden; ++u) hb.grad[u] += dh[u];
      for (std::size_t j = 0; j < width; ++j) {
        const std::ptrdiff_t tok = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(cfg_.radius);
        if (tok < 0 || tok >= static_cast<std::ptrdiff_t>(n)) continue;
        const auto id = static_cast<std::size_t>(c.ids[static_cast<std::size_t>(tok)]);
        const double* e = emb.row(id);
        double* ge = emb.grad_row(id);
        for (std::size_t u = 0; u < cfg_.hidden; ++u) {
          if (dh[u] == 0.0) continue;
          double* gw = hw.grad_row(u) + j * d;
          const double* wr = hw.row(u) + j * d;
          for (std::size_t k = 0; k < d; ++k) {
            gw[k] += dh[u] * e[k];
            ge[k] += dh[u] * wr[k];
          }
        }
      }
    }
    std::fill_n(emb.grad_row(Vocabulary::kPad), d, 0.0);
  }

  void save(std::ostream& os) const {
    std::map<std::string, std::string> s{{"dim", std::to_string(cfg_.dim)},
                                         {"radius", std::to_string(cfg_.radius)},
                                         {"hidden", std::to_string(cfg_.hidden)},
                                         {"tags", std::to_string(cfg_.tags)}};
    write_checkpoint(os, kKind, s, vocab_, params_);
  }

  static SequenceTagger load(std::istream& is) {
    auto data = read_checkpoint(is);
    if (data.kind != kKind) throw CheckpointError("checkpoint holds a '" + data.kind + "', expected " + kKind);
    SequenceTaggerConfig cfg;
    cfg.dim = detail::setting(data.settings, "dim");
    cfg.radius = detail::setting(data.settings, "radius");
    cfg.hidden = detail::setting(data.settings, "hidden");
    cfg.tags = detail::setting(data.settings, "tags");
    SequenceTagger model(std::move(data.vocab), cfg, 0);
    detail::load_blocks(model.params_, data.blocks);
    return model;
  }

  static constexpr const char* kKind = "sequence_tagger";

 private:
  void layout() {
    emb_ = params_.add("embedding", vocab_.size(), cfg_.dim);
    hid_w_ = params_.add("hidden.weight", cfg_.hidden, (2 * cfg_.radius + 1) * cfg_.dim);
    hid_b_ = params_.add("hidden.bias", cfg_.hidden, 1);
    out_w_ = params_.add("output.weight", cfg_.tags, cfg_.hidden);
    out_b_ = params_.add("output.bias", cfg_.tags, 1);
  }

  Vocabulary vocab_;
  SequenceTaggerConfig cfg_;
  Parameters params_;
  std::size_t emb_ = 0, hid_w_ = 0, hid_b_ = 0, out_w_ = 0, out_b_ = 0;
};

// ---------------------------------------------------------------------------
// Mixed-target updates

/// d loss / d logits of the mixed cross entropy: (sum t) p - t.
inline std::vector<double> mixed_loss_logit_grad(std::span<const double> probs, const MixedTarget& target) {
  const auto t = target.combined(probs.size());
  double mass = 0.0;
  for (double v : t) mass += v;
  std::vector<double> g(probs.size());
  for (std::size_t k = 0; k < probs.size(); ++k) g[k] = mass * probs[k] - t[k];
  return g;
}

struct ClassificationExample {
  std::vector<int> ids;
  MixedTarget target;
};

struct TaggingExample {
  std::vector<int> ids;
  std::vector<MixedTarget> targets;  // one per position
};

/// Mean mixed loss over the batch at the current parameters, without updating.
inline double batch_loss(const TextClassifier& model, std::span<const ClassificationExample> batch,
                         LossDiagnostics* diag = nullptr) {
  double total = 0.0;
  for (const auto& ex : batch) total += mixed_loss(model.forward(ex.ids), ex.target, diag);
  return batch.empty() ? 0.0 : total / static_cast<double>(batch.size());
}

inline double batch_loss(const SequenceTagger& model, std::span<const TaggingExample> batch,
                         LossDiagnostics* diag = nullptr) {
  double total = 0.0;
  for (const auto& ex : batch) {
    const auto probs = model.forward(ex.ids);
    if (ex.targets.size() != probs.size()) throw std::invalid_argument("tagging: target length mismatch");
    for (std::size_t t = 0; t < probs.size(); ++t) total += mixed_loss(probs[t], ex.targets[t], diag);
  }
  return batch.empty() ? 0.0 : total / static_cast<double>(batch.size());
}

/// Accumulates gradients of the mean batch loss into the model; returns the loss.
inline double accumulate_gradients(TextClassifier& model, std::span<const ClassificationExample> batch,
                                   LossDiagnostics* diag = nullptr) {
  if (batch.empty()) return 0.0;
  const double w = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& ex : batch) {
    const auto cache = model.forward_cached(ex.ids);
    total += mixed_loss(cache.probs, ex.target, diag);
    model.backward(cache, mixed_loss_logit_grad(cache.probs, ex.target), w);
  }
  return total * w;
}

inline double accumulate_gradients(SequenceTagger& model, std::span<const TaggingExample> batch,
                                   LossDiagnostics* diag = nullptr) {
  if (batch.empty()) return 0.0;
  const double w = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& ex : batch) {
    const auto cache = model.forward_cached(ex.ids);
    if (ex.targets.size() != cache.probs.size()) throw std::invalid_argument("tagging: target length mismatch");
    std::vector<std::vector<double>> dl(cache.probs.size());
    for (std::size_t t = 0; t < cache.probs.size(); ++t) {
      total += mixed_loss(cache.probs[t], ex.targets[t], diag);
      dl[t] = mixed_loss_logit_grad(cache.probs[t], ex.targets[t]);
    }
    model.backward(cache, dl, w);
  }
  return total * w;
}

/// One Adadelta step on the mixed loss; returns the batch loss before the step.
template <class Model, class Example>
double backward_and_step(Model& model, std::span<const Example> batch, Adadelta& opt,
                         LossDiagnostics* diag = nullptr) {
  model.parameters().zero_grad();
  const double loss = accumulate_gradients(model, batch, diag);
  opt.step(model.parameters());
  return loss;
}

template <class Model>
void save_model(const Model& model, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path);
  model.save(os);
}

template <class Model>
Model load_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path);
  return Model::load(is);
}

}  // namespace rulekd
