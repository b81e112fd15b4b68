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

#include <cmath>
#include <cstddef>
#include <set>
#include <span>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "rulekd/tags.hpp"

namespace rulekd {

/// Entity mention: tokens [begin, end) of category `category`.
struct EntitySpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  int category = 0;

  friend auto operator<=>(const EntitySpan&, const EntitySpan&) = default;
};

/// Well-formed spans only: S-c, or B-c (I-c)* E-c. Fragments of a broken
/// sequence contribute nothing.
inline std::vector<EntitySpan> extract_entities(const TagSet& tags, std::span<const int> seq) {
  std::vector<EntitySpan> out;
  std::size_t i = 0;
  while (i < seq.size()) {
    const TagPrefix p = tags.prefix(seq[i]);
    const int c = tags.category(seq[i]);
    if (p == TagPrefix::S) {
      out.push_back({i, i + 1, c});
      ++i;
    } else if (p == TagPrefix::B) {
      std::size_t j = i + 1;
      while (j < seq.size() && tags.prefix(seq[j]) == TagPrefix::I && tags.category(seq[j]) == c) ++j;
      if (j < seq.size() && tags.prefix(seq[j]) == TagPrefix::E && tags.category(seq[j]) == c) {
        out.push_back({i, j + 1, c});
        i = j + 1;
      } else {
        i = j;
      }
    } else {
      ++i;
    }
  }
  return out;
}

struct SpanCounts {
  std::size_t gold = 0;
  std::size_t predicted = 0;
  std::size_t correct = 0;

  SpanCounts& operator+=(const SpanCounts& o) {
    gold += o.gold;
    predicted += o.predicted;
    correct += o.correct;
    return *this;
  }
  [[nodiscard]] double precision() const { return predicted == 0 ? 0.0 : static_cast<double>(correct) / predicted; }
  [[nodiscard]] double recall() const { return gold == 0 ? 0.0 : static_cast<double>(correct) / gold; }
  [[nodiscard]] double f1() const {
    const double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
};

/// Exact span-and-category matches between one gold and one predicted sequence.
inline SpanCounts count_spans(const TagSet& tags, std::span<const int> gold, std::span<const int> pred) {
  if (gold.size() != pred.size()) throw std::invalid_argument("span counts: length mismatch");
  const auto g = extract_entities(tags, gold);
  const auto p = extract_entities(tags, pred);
  const std::set<EntitySpan> gs(g.begin(), g.end());
  SpanCounts c{g.size(), p.size(), 0};
  for (const auto& s : p) c.correct += gs.count(s);
  return c;
}

inline double accuracy(std::span<const int> gold, std::span<const int> pred) {
  if (gold.size() != pred.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (gold.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) ok += gold[i] == pred[i];
  return static_cast<double>(ok) / static_cast<double>(gold.size());
}

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for fewer than two values
};

inline MeanStd mean_std(std::span<const double> v) {
  MeanStd r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return r;
}

}  // namespace rulekd
