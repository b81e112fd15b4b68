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

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rulekd {

enum class TagPrefix { O, B, I, E, S };

/// BIOES tag inventory over a list of entity categories.
///
/// Index 0 is `O`; category c (0-based) owns indices 1 + 4c .. 4 + 4c in
/// the order B, I, E, S.
class TagSet {
 public:
  static constexpr int kBoundary = -1;  // virtual tag before the first / after the last token

  TagSet() : TagSet(std::vector<std::string>{"ORG", "LOC", "PER", "MISC"}) {}
  explicit TagSet(std::vector<std::string> categories) : categories_(std::move(categories)) {
    if (categories_.empty()) throw std::invalid_argument("tag set needs at least one category");
    for (const auto& c : categories_) {
      if (c.empty() || c.find('-') != std::string::npos)
        throw std::invalid_argument("bad category name '" + c + "'");
    }
  }

  [[nodiscard]] int size() const { return 1 + 4 * num_categories(); }
  [[nodiscard]] int num_categories() const { return static_cast<int>(categories_.size()); }
  [[nodiscard]] const std::vector<std::string>& categories() const { return categories_; }

  [[nodiscard]] static int outside() { return 0; }
  [[nodiscard]] int tag(TagPrefix p, int category) const {
    if (p == TagPrefix::O) return 0;
    if (category < 0 || category >= num_categories()) throw std::out_of_range("category index");
    return 1 + 4 * category + (static_cast<int>(p) - 1);
  }

  [[nodiscard]] TagPrefix prefix(int t) const {
    check(t);
    if (t == 0) return TagPrefix::O;
    return static_cast<TagPrefix>(1 + (t - 1) % 4);
  }
  /// Entity category of a tag, or -1 for O.
  [[nodiscard]] int category(int t) const {
    check(t);
    return t == 0 ? -1 : (t - 1) / 4;
  }

  [[nodiscard]] std::string name(int t) const {
    check(t);
    if (t == 0) return "O";
    static constexpr char kLetters[] = {'O', 'B', 'I', 'E', 'S'};
    return std::string(1, kLetters[static_cast<int>(prefix(t))]) + "-" + categories_[category(t)];
  }

  [[nodiscard]] std::optional<int> find(std::string_view s) const {
    if (s == "O") return 0;
    if (s.size() < 3 || s[1] != '-') return std::nullopt;
    TagPrefix p;
    switch (s[0]) {
      case 'B': p = TagPrefix::B; break;
      case 'I': p = TagPrefix::I; break;
      case 'E': p = TagPrefix::E; break;
      case 'S': p = TagPrefix::S; break;
      default: return std::nullopt;
    }
    for (int c = 0; c < num_categories(); ++c) {
      if (s.substr(2) == categories_[c]) return tag(p, c);
    }
    return std::nullopt;
  }

  [[nodiscard]] int index(std::string_view s) const {
    auto t = find(s);
    if (!t) throw std::invalid_argument("unknown tag '" + std::string(s) + "'");
    return *t;
  }

  /// Whether tag `cur` may follow `prev`; either may be kBoundary.
  [[nodiscard]] bool valid_transition(int prev, int cur) const {
    const bool prev_open = prev != kBoundary && (prefix(prev) == TagPrefix::B || prefix(prev) == TagPrefix::I);
    if (cur == kBoundary) return !prev_open;
    const TagPrefix cp = prefix(cur);
    if (cp == TagPrefix::I || cp == TagPrefix::E) return prev_open && category(prev) == category(cur);
    return !prev_open;
  }

  [[nodiscard]] bool valid_sequence(std::span<const int> tags) const {
    int prev = kBoundary;
    for (int t : tags) {
      if (!valid_transition(prev, t)) return false;
      prev = t;
    }
    return valid_transition(prev, kBoundary);
  }

  /// Positions (0-based) at which the sequence first breaks; position n marks a bad ending.
  [[nodiscard]] std::vector<std::size_t> invalid_positions(std::span<const int> tags) const {
    std::vector<std::size_t> out;
    int prev = kBoundary;
    for (std::size_t i = 0; i < tags.size(); ++i) {
      if (!valid_transition(prev, tags[i])) out.push_back(i);
      prev = tags[i];
    }
    if (!valid_transition(prev, kBoundary)) out.push_back(tags.size());
    return out;
  }

  friend bool operator==(const TagSet&, const TagSet&) = default;

 private:
  void check(int t) const {
    if (t < 0 || t >= size()) throw std::out_of_range("tag index " + std::to_string(t));
  }

  std::vector<std::string> categories_;
};

/// Sums probability mass over the prefix variants of each category. `O`
/// forms its own trailing category.
class CategoryCollapse {
 public:
  explicit CategoryCollapse(const TagSet& tags) : num_out_(tags.num_categories() + 1) {
    map_.resize(static_cast<std::size_t>(tags.size()));
    for (int t = 0; t < tags.size(); ++t) {
      const int c = tags.category(t);
      map_[static_cast<std::size_t>(t)] = c < 0 ? tags.num_categories() : c;
    }
  }

  [[nodiscard]] std::size_t input_size() const { return map_.size(); }
  [[nodiscard]] std::size_t output_size() const { return static_cast<std::size_t>(num_out_); }
  [[nodiscard]] int category_of(int tag) const { return map_.at(static_cast<std::size_t>(tag)); }

  [[nodiscard]] std::vector<double> operator()(std::span<const double> dist) const {
    if (dist.size() != map_.size()) throw std::invalid_argument("collapse: dimension mismatch");
    std::vector<double> out(output_size(), 0.0);
    for (std::size_t t = 0; t < dist.size(); ++t) out[static_cast<std::size_t>(map_[t])] += dist[t];
    return out;
  }

 private:
  std::vector<int> map_;
  int num_out_;
};

}  // namespace rulekd
