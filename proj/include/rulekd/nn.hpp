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
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rulekd {

/// A named dense parameter matrix and its gradient accumulator.
struct ParamBlock {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;

  ParamBlock() = default;
  ParamBlock(std::string n, std::size_t r, std::size_t c)
      : name(std::move(n)), rows(r), cols(c), value(r * c, 0.0), grad(r * c, 0.0) {}

  [[nodiscard]] std::size_t size() const { return value.size(); }
  double* row(std::size_t r) { return value.data() + r * cols; }
  [[nodiscard]] const double* row(std::size_t r) const { return value.data() + r * cols; }
  double* grad_row(std::size_t r) { return grad.data() + r * cols; }
};

class Parameters {
 public:
  std::size_t add(std::string name, std::size_t rows, std::size_t cols) {
    blocks_.emplace_back(std::move(name), rows, cols);
    return blocks_.size() - 1;
  }

  ParamBlock& operator[](std::size_t i) { return blocks_[i]; }
  const ParamBlock& operator[](std::size_t i) const { return blocks_[i]; }
  [[nodiscard]] std::size_t size() const { return blocks_.size(); }
  auto begin() { return blocks_.begin(); }
  auto end() { return blocks_.end(); }
  [[nodiscard]] auto begin() const { return blocks_.begin(); }
  [[nodiscard]] auto end() const { return blocks_.end(); }

  [[nodiscard]] std::size_t count() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += b.size();
    return n;
  }

  void zero_grad() {
    for (auto& b : blocks_) std::fill(b.grad.begin(), b.grad.end(), 0.0);
  }

  ParamBlock& find(std::string_view name) {
    for (auto& b : blocks_)
      if (b.name == name) return b;
    throw std::out_of_range("no parameter block '" + std::string(name) + "'");
  }

  friend bool operator==(const Parameters& a, const Parameters& b) {
    if (a.blocks_.size() != b.blocks_.size()) return false;
    for (std::size_t i = 0; i < a.blocks_.size(); ++i) {
      const auto& x = a.blocks_[i];
      const auto& y = b.blocks_[i];
      if (x.name != y.name || x.rows != y.rows || x.cols != y.cols || x.value != y.value) return false;
    }
    return true;
  }

 private:
  std::vector<ParamBlock> blocks_;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& block)
      : std::runtime_error("non-finite gradient in parameter block '" + block + "'"), block_(block) {}
  [[nodiscard]] const std::string& block() const { return block_; }

 private:
  std::string block_;
};

/// Adadelta with a global learning-rate multiplier.
class Adadelta {
 public:
  double rho = 0.95;
  double eps = 1e-6;
  double learning_rate = 1.0;

  Adadelta() = default;
  Adadelta(double rho_, double eps_, double lr) : rho(rho_), eps(eps_), learning_rate(lr) {}

  void step(Parameters& params) {
    if (eg2_.size() != params.size()) {
      eg2_.clear();
      edx2_.clear();
      for (const auto& b : params) {
        eg2_.emplace_back(b.size(), 0.0);
        edx2_.emplace_back(b.size(), 0.0);
      }
    }
    for (const auto& b : params) {
      for (double g : b.grad)
        if (!std::isfinite(g)) throw NonFiniteGradient(b.name);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& b = params[i];
      auto& eg = eg2_[i];
      auto& ed = edx2_[i];
      for (std::size_t j = 0; j < b.size(); ++j) {
        const double g = b.grad[j];
        eg[j] = rho * eg[j] + (1.0 - rho) * g * g;
        const double dx = -std::sqrt(ed[j] + eps) / std::sqrt(eg[j] + eps) * g;
        ed[j] = rho * ed[j] + (1.0 - rho) * dx * dx;
        b.value[j] += learning_rate * dx;
      }
    }
  }

 private:
  std::vector<std::vector<double>> eg2_, edx2_;
};

// ---------------------------------------------------------------------------

inline std::vector<double> log_softmax(std::span<const double> z) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : z) m = std::max(m, v);
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  const double lz = m + std::log(s);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lz;
  return out;
}

inline std::vector<double> softmax(std::span<const double> z) {
  auto out = log_softmax(z);
  for (auto& v : out) v = std::exp(v);
  return out;
}

/// Training target for one prediction: hard label (or -1 when unlabeled),
/// teacher soft prediction and imitation weight pi.
struct MixedTarget {
  int label = -1;
  std::vector<double> soft;
  double pi = 0.0;

  /// (1 - pi) e_y + pi s; the hard part is absent for unlabeled instances.
  [[nodiscard]] std::vector<double> combined(std::size_t k) const {
    std::vector<double> t(k, 0.0);
    if (label >= 0) {
      if (static_cast<std::size_t>(label) >= k) throw std::invalid_argument("target label out of range");
      t[static_cast<std::size_t>(label)] += 1.0 - pi;
    }
    if (pi > 0.0) {
      if (soft.size() != k) throw std::invalid_argument("soft target dimension mismatch");
      for (std::size_t i = 0; i < k; ++i) t[i] += pi * soft[i];
    }
    return t;
  }
};

inline constexpr double kLogFloor = 1e-12;

struct LossDiagnostics {
  std::size_t floored = 0;  // log terms hitting the 1e-12 floor
};

/// (1 - pi) CE(y, pred) + pi CE(s, pred), CE(t, p) = -sum t_k log max(p_k, 1e-12).
inline double mixed_loss(std::span<const double> pred, const MixedTarget& target, LossDiagnostics* diag = nullptr) {
  if (!(target.pi >= 0.0 && target.pi <= 1.0)) throw std::invalid_argument("imitation weight outside [0,1]");
  const auto t = target.combined(pred.size());
  double loss = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (t[k] == 0.0) continue;
    if (pred[k] < kLogFloor && diag) ++diag->floored;
    loss -= t[k] * std::log(std::max(pred[k], kLogFloor));
  }
  return loss;
}

// ---------------------------------------------------------------------------

/// Token index map. Index 0 is padding, 1 is the unknown token.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary() : tokens_{"<pad>", "<unk>"} { rebuild(); }

  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < 2 || tokens_[0] != "<pad>" || tokens_[1] != "<unk>")
      throw std::invalid_argument("vocabulary must start with <pad>, <unk>");
    rebuild();
  }

  int add(const std::string& tok) {
    auto it = index_.find(tok);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    tokens_.push_back(tok);
    index_.emplace(tok, id);
    return id;
  }

  [[nodiscard]] int lookup(const std::string& tok) const {
    auto it = index_.find(tok);
    return it == index_.end() ? kUnk : it->second;
  }

  [[nodiscard]] std::vector<int> encode(std::span<const std::string> toks) const {
    std::vector<int> ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) ids.push_back(lookup(t));
    return ids;
  }

  [[nodiscard]] std::size_t size() const { return tokens_.size(); }
  [[nodiscard]] const std::vector<std::string>& tokens() const { return tokens_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void rebuild() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
        throw std::invalid_argument("duplicate vocabulary entry '" + tokens_[i] + "'");
    }
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

inline void uniform_init(ParamBlock& b, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& v : b.value) v = u(rng);
}

inline void glorot_init(ParamBlock& b, std::mt19937_64& rng) {
  uniform_init(b, std::sqrt(6.0 / static_cast<double>(b.rows + b.cols)), rng);
}

// ---------------------------------------------------------------------------
// Checkpoint container

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Text container: header, key=value settings, vocabulary, parameter blocks.
/// Values are written with 17 significant digits so a reload is bit-exact.
inline void write_checkpoint(std::ostream& os, const std::string& kind,
                             const std::map<std::string, std::string>& settings, const Vocabulary& vocab,
                             const Parameters& params) {
  os << "rulekd-checkpoint " << kCheckpointVersion << "\n";
  os << "kind " << kind << "\n";
  os << "settings " << settings.size() << "\n";
  for (const auto& [k, v] : settings) os << k << "=" << v << "\n";
  os << "vocab " << vocab.size() << "\n";
  for (const auto& t : vocab.tokens()) os << t << "\n";
  os << "blocks " << params.size() << "\n";
  char buf[32];
  for (const auto& b : params) {
    os << "block " << b.name << " " << b.rows << " " << b.cols << "\n";
    for (std::size_t r = 0; r < b.rows; ++r) {
      for (std::size_t c = 0; c < b.cols; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", b.value[r * b.cols + c]);
        os << (c ? " " : "") << buf;
      }
      os << "\n";
    }
  }
  os << "end\n";
}

struct CheckpointData {
  std::string kind;
  std::map<std::string, std::string> settings;
  Vocabulary vocab;
  std::vector<ParamBlock> blocks;
};

inline CheckpointData read_checkpoint(std::istream& is) {
  auto fail = [](const std::string& what) -> CheckpointData { throw CheckpointError("checkpoint: " + what); };
  std::string word;
  int version = 0;
  if (!(is >> word >> version) || word != "rulekd-checkpoint") return fail("bad header");
  if (version != kCheckpointVersion) return fail("unsupported version " + std::to_string(version));
  CheckpointData d;
  std::size_t n = 0;
  if (!(is >> word >> d.kind) || word != "kind") return fail("missing kind");
  if (!(is >> word >> n) || word != "settings") return fail("missing settings");
  for (std::size_t i = 0; i < n; ++i) {
    std::string kv;
    is >> kv;
    auto eq = kv.find('=');
    if (eq == std::string::npos) return fail("bad setting '" + kv + "'");
    d.settings[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  if (!(is >> word >> n) || word != "vocab") return fail("missing vocab");
  std::vector<std::string> toks(n);
  for (auto& t : toks)
    if (!(is >> t)) return fail("truncated vocab");
  d.vocab = Vocabulary(std::move(toks));
  if (!(is >> word >> n) || word != "blocks") return fail("missing blocks");
  for (std::size_t i = 0; i < n; ++i) {
    ParamBlock b;
    if (!(is >> word >> b.name >> b.rows >> b.cols) || word != "block") return fail("bad block header");
    b.value.resize(b.rows * b.cols);
    b.grad.assign(b.rows * b.cols, 0.0);
    for (auto& v : b.value) {
      std::string tok;
      if (!(is >> tok)) return fail("truncated block " + b.name);
      v = std::strtod(tok.c_str(), nullptr);
    }
    d.blocks.push_back(std::move(b));
  }
  if (!(is >> word) || word != "end") return fail("missing end marker");
  return d;
}

}  // namespace rulekd
