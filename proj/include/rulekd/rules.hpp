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
#include <cctype>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "rulekd/softlogic.hpp"
#include "rulekd/tags.hpp"

namespace rulekd {

inline constexpr double kHardRule = std::numeric_limits<double>::infinity();

enum class RuleScope { PerInstance, Bigram, CrossInstance };

/// A named rule with confidence lambda. `ground` returns one truth value per
/// grounding of the rule on (context, candidate output).
template <class Context, class Candidate>
struct Rule {
  std::string name;
  double lambda = 1.0;
  RuleScope scope = RuleScope::PerInstance;
  std::function<std::vector<TruthValue>(const Context&, const Candidate&)> ground;

  [[nodiscard]] bool hard() const { return std::isinf(lambda); }
};

inline void check_lambda(double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("rule confidence must be >= 0");
}

// ---------------------------------------------------------------------------
// "A but B" sentiment rule

struct ButStructure {
  std::size_t split = 0;  // index of the "but" token
  std::size_t clause_b_begin = 0;
  std::size_t clause_b_end = 0;  // one past the last token
};

inline std::string fold_case(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// First standalone "but" (case-folded) with at least one token on each side.
inline std::optional<ButStructure> detect_but(std::span<const std::string> tokens) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (fold_case(tokens[i]) != "but") continue;
    if (i == 0 || i + 1 >= tokens.size()) return std::nullopt;
    return ButStructure{i, i + 1, tokens.size()};
  }
  return std::nullopt;
}

enum class ButVariant {
  Avg,     // y=+ <=> sigma(B)+ joined by the averaged conjunction
  Strong,  // same, joined by the strong conjunction &
};

/// Truth of the but-rule for a sentence with A-but-B structure, given the
/// predictor's positive-class probability on clause B alone.
inline TruthValue but_rule_truth(double sigma_b_pos, bool label_positive, ButVariant variant = ButVariant::Avg) {
  const TruthValue s(sigma_b_pos);
  const TruthValue y(label_positive ? 1.0 : 0.0);
  const TruthValue forward = implies(y, s);
  const TruthValue backward = implies(s, y);
  return variant == ButVariant::Avg ? avg_conj({forward, backward}) : strong_conj(forward, backward);
}

struct SentimentContext {
  std::optional<ButStructure> but;
  double sigma_b_pos = 0.5;  // predictor output on clause B; meaningful only when `but` is set
};

/// Binary sentiment labels: 0 negative, 1 positive.
inline Rule<SentimentContext, int> but_rule(double lambda = 1.0, ButVariant variant = ButVariant::Avg) {
  check_lambda(lambda);
  Rule<SentimentContext, int> r;
  r.name = variant == ButVariant::Avg ? "but" : "but-strong";
  r.lambda = lambda;
  r.scope = RuleScope::PerInstance;
  r.ground = [variant](const SentimentContext& ctx, const int& label) -> std::vector<TruthValue> {
    if (!ctx.but) return {};
    return {but_rule_truth(ctx.sigma_b_pos, label == 1, variant)};
  };
  return r;
}

// ---------------------------------------------------------------------------
// BIOES transition rules

/// An adjacent pair of tags; either side may be TagSet::kBoundary.
struct TagBigram {
  int prev = TagSet::kBoundary;
  int cur = TagSet::kBoundary;
};

/// One hard rule per forbidden bigram (including sequence start/end).
/// Each grounding is 1 unless the pair is exactly the forbidden one.
inline std::vector<Rule<std::monostate, TagBigram>> transition_rules(const TagSet& tags) {
  std::vector<Rule<std::monostate, TagBigram>> rules;
  const int k = tags.size();
  auto label = [&tags](int t) { return t == TagSet::kBoundary ? std::string("<s>") : tags.name(t); };
  for (int prev = TagSet::kBoundary; prev < k; ++prev) {
    for (int cur = TagSet::kBoundary; cur < k; ++cur) {
      if (prev == TagSet::kBoundary && cur == TagSet::kBoundary) continue;
      if (tags.valid_transition(prev, cur)) continue;
      Rule<std::monostate, TagBigram> r;
      r.name = "equal_prev(" + label(prev) + ") => !equal_cur(" + label(cur) + ")";
      r.lambda = kHardRule;
      r.scope = RuleScope::Bigram;
      r.ground = [prev, cur](const std::monostate&, const TagBigram& bg) -> std::vector<TruthValue> {
        const TruthValue is_prev(bg.prev == prev ? 1.0 : 0.0);
        const TruthValue is_cur(bg.cur == cur ? 1.0 : 0.0);
        return {implies(is_prev, neg(is_cur))};
      };
      rules.push_back(std::move(r));
    }
  }
  return rules;
}

/// Groundings of a bigram-scope rule over a whole sequence, boundaries included.
template <class Context>
std::vector<TruthValue> ground_sequence(const Rule<Context, TagBigram>& rule, const Context& ctx,
                                        std::span<const int> tags) {
  std::vector<TruthValue> out;
  int prev = TagSet::kBoundary;
  for (int t : tags) {
    auto g = rule.ground(ctx, TagBigram{prev, t});
    out.insert(out.end(), g.begin(), g.end());
    prev = t;
  }
  auto g = rule.ground(ctx, TagBigram{prev, TagSet::kBoundary});
  out.insert(out.end(), g.begin(), g.end());
  return out;
}

// ---------------------------------------------------------------------------
// List counterpart rule

/// 1 - ||c(e_y) - c(sigma_a)||_2, clamped at 0. With `normalize_sqrt2` the
/// distance is divided by sqrt(2) first, its maximum over the simplex.
inline TruthValue list_rule_truth(const CategoryCollapse& collapse, int y_of_x, std::span<const double> sigma_a,
                                  bool normalize_sqrt2 = false) {
  if (sigma_a.size() != collapse.input_size())
    throw std::invalid_argument("list rule: distribution has " + std::to_string(sigma_a.size()) +
                                " entries, expected " + std::to_string(collapse.input_size()));
  if (y_of_x < 0 || static_cast<std::size_t>(y_of_x) >= collapse.input_size())
    throw std::invalid_argument("list rule: tag out of range");
  const auto ca = collapse(sigma_a);
  const auto cx = static_cast<std::size_t>(collapse.category_of(y_of_x));
  double sq = 0.0;
  for (std::size_t c = 0; c < ca.size(); ++c) {
    const double d = (c == cx ? 1.0 : 0.0) - ca[c];
    sq += d * d;
  }
  double dist = std::sqrt(sq);
  if (normalize_sqrt2) dist /= std::sqrt(2.0);
  return TruthValue(std::clamp(1.0 - dist, 0.0, 1.0));
}

/// Labels of a counterpart pair (X, A).
struct LabelPair {
  int x = 0;
  int a = 0;
};

/// Counterpart rule evaluated jointly on both labels: the counterpart's
/// prediction enters as the one-hot of its candidate label.
inline Rule<std::monostate, LabelPair> list_counterpart_rule(const TagSet& tags, double lambda = 1.0,
                                                             bool normalize_sqrt2 = false) {
  check_lambda(lambda);
  Rule<std::monostate, LabelPair> r;
  r.name = "list_counterpart";
  r.lambda = lambda;
  r.scope = RuleScope::CrossInstance;
  r.ground = [collapse = CategoryCollapse(tags), k = tags.size(), normalize_sqrt2](
                 const std::monostate&, const LabelPair& pair) -> std::vector<TruthValue> {
    std::vector<double> onehot(static_cast<std::size_t>(k), 0.0);
    onehot.at(static_cast<std::size_t>(pair.a)) = 1.0;
    return {list_rule_truth(collapse, pair.x, onehot, normalize_sqrt2)};
  };
  return r;
}

}  // namespace rulekd
