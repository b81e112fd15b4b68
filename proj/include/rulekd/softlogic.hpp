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
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rulekd {

/// A soft truth value in [0, 1]. Construction outside the interval throws.
class TruthValue {
 public:
  constexpr TruthValue() = default;
  explicit TruthValue(double v) : value_(v) {
    if (!(v >= 0.0 && v <= 1.0)) {
      std::ostringstream os;
      os << "truth value out of [0,1]: " << v;
      throw std::domain_error(os.str());
    }
  }

  [[nodiscard]] constexpr double value() const { return value_; }
  explicit constexpr operator double() const { return value_; }

  friend constexpr bool operator==(TruthValue, TruthValue) = default;

 private:
  double value_ = 0.0;
};

// Lukasiewicz operators. Each maps [0,1]^n into [0,1] without rounding
// escaping the interval, so results are rebuilt through the checked ctor.

/// max{a + b - 1, 0}
inline TruthValue strong_conj(TruthValue a, TruthValue b) {
  return TruthValue(std::max(a.value() + b.value() - 1.0, 0.0));
}

/// min{a + b, 1}
inline TruthValue disj(TruthValue a, TruthValue b) {
  return TruthValue(std::min(a.value() + b.value(), 1.0));
}

inline TruthValue neg(TruthValue a) { return TruthValue(1.0 - a.value()); }

/// min{1 - a + b, 1}, i.e. !a | b.
inline TruthValue implies(TruthValue a, TruthValue b) {
  return TruthValue(std::min(1.0 - a.value() + b.value(), 1.0));
}

/// Averaged conjunction: arithmetic mean of the operands.
inline TruthValue avg_conj(std::span<const TruthValue> values) {
  if (values.empty()) throw std::invalid_argument("avg_conj of empty list");
  double sum = 0.0;
  for (auto v : values) sum += v.value();
  return TruthValue(std::min(sum / static_cast<double>(values.size()), 1.0));
}

inline TruthValue avg_conj(std::initializer_list<TruthValue> values) {
  return avg_conj(std::span<const TruthValue>(values.begin(), values.size()));
}

// ---------------------------------------------------------------------------
// Rule expressions

struct RuleExpr {
  enum class Kind { Predicate, StrongConj, Disj, AvgConj, Neg, Implies };

  Kind kind = Kind::Predicate;
  std::string name;               // Predicate only
  std::vector<std::string> args;  // Predicate only
  std::vector<RuleExpr> children;

  static RuleExpr predicate(std::string name, std::vector<std::string> args = {}) {
    RuleExpr e;
    e.kind = Kind::Predicate;
    e.name = std::move(name);
    e.args = std::move(args);
    return e;
  }
  static RuleExpr unary(Kind k, RuleExpr child) {
    RuleExpr e;
    e.kind = k;
    e.children.push_back(std::move(child));
    return e;
  }
  static RuleExpr binary(Kind k, RuleExpr lhs, RuleExpr rhs) {
    RuleExpr e;
    e.kind = k;
    e.children.push_back(std::move(lhs));
    e.children.push_back(std::move(rhs));
    return e;
  }
  static RuleExpr average(std::vector<RuleExpr> children) {
    if (children.empty()) throw std::invalid_argument("avg requires at least one operand");
    RuleExpr e;
    e.kind = Kind::AvgConj;
    e.children = std::move(children);
    return e;
  }

  friend bool operator==(const RuleExpr&, const RuleExpr&) = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t offset, std::vector<std::string> expected, const std::string& found)
      : std::runtime_error(describe(offset, expected, found)),
        offset_(offset),
        expected_(std::move(expected)) {}

  [[nodiscard]] std::size_t offset() const { return offset_; }
  [[nodiscard]] const std::vector<std::string>& expected() const { return expected_; }

 private:
  static std::string describe(std::size_t offset, const std::vector<std::string>& expected,
                              const std::string& found) {
    std::ostringstream os;
    os << "syntax error at byte " << offset << ": expected one of {";
    for (std::size_t i = 0; i < expected.size(); ++i) os << (i ? ", " : "") << expected[i];
    os << "} but found " << found;
    return os.str();
  }

  std::size_t offset_;
  std::vector<std::string> expected_;
};

namespace detail {

class RuleParser {
 public:
  explicit RuleParser(std::string_view text) : text_(text) {}

  RuleExpr parse() {
    RuleExpr e = implication();
    skip_ws();
    if (pos_ != text_.size()) fail({"=>", "|", "&&", "end of input"});
    return e;
  }

 private:
  static bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
  static bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
  static bool arg_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '+' || c == '.';
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool peek(std::string_view tok) {
    skip_ws();
    return text_.substr(pos_, tok.size()) == tok;
  }

  bool accept(std::string_view tok) {
    if (!peek(tok)) return false;
    pos_ += tok.size();
    return true;
  }

  void expect(std::string_view tok) {
    if (!accept(tok)) fail({std::string(tok)});
  }

  [[noreturn]] void fail(std::vector<std::string> expected) {
    skip_ws();
    std::string found = pos_ < text_.size() ? "'" + std::string(1, text_[pos_]) + "'" : "end of input";
    throw ParseError(pos_, std::move(expected), found);
  }

  RuleExpr implication() {
    RuleExpr lhs = disjunction();
    if (accept("=>")) return RuleExpr::binary(RuleExpr::Kind::Implies, std::move(lhs), implication());
    return lhs;
  }

  RuleExpr disjunction() {
    RuleExpr lhs = conjunction();
    while (accept("|")) {
      lhs = RuleExpr::binary(RuleExpr::Kind::Disj, std::move(lhs), conjunction());
    }
    return lhs;
  }

  RuleExpr conjunction() {
    RuleExpr lhs = unary();
    while (accept("&&")) lhs = RuleExpr::binary(RuleExpr::Kind::StrongConj, std::move(lhs), unary());
    return lhs;
  }

  RuleExpr unary() {
    if (accept("!")) return RuleExpr::unary(RuleExpr::Kind::Neg, unary());
    return primary();
  }

  std::string identifier() {
    skip_ws();
    std::size_t start = pos_;
    if (pos_ >= text_.size() || !ident_start(text_[pos_])) fail({"identifier"});
    while (pos_ < text_.size() && ident_char(text_[pos_])) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  RuleExpr primary() {
    if (accept("(")) {
      RuleExpr e = implication();
      expect(")");
      return e;
    }
    skip_ws();
    if (pos_ >= text_.size() || !ident_start(text_[pos_])) fail({"(", "!", "avg", "identifier"});
    std::string name = identifier();
    if (name == "avg") {
      expect("(");
      if (peek(")")) fail({"(", "!", "avg", "identifier"});
      std::vector<RuleExpr> children;
      children.push_back(implication());
      while (accept(",")) children.push_back(implication());
      expect(")");
      return RuleExpr::average(std::move(children));
    }
    expect("(");
    std::vector<std::string> args;
    if (!accept(")")) {
      args.push_back(argument());
      while (accept(",")) args.push_back(argument());
      expect(")");
    }
    return RuleExpr::predicate(std::move(name), std::move(args));
  }

  std::string argument() {
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < text_.size() && arg_char(text_[pos_])) ++pos_;
    if (pos_ == start) fail({"argument"});
    return std::string(text_.substr(start, pos_ - start));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

inline int precedence(RuleExpr::Kind k) {
  switch (k) {
    case RuleExpr::Kind::Implies: return 1;
    case RuleExpr::Kind::Disj: return 2;
    case RuleExpr::Kind::StrongConj: return 3;
    default: return 4;
  }
}

inline void print_to(std::ostream& os, const RuleExpr& e) {
  using K = RuleExpr::Kind;
  auto wrapped = [&os](const RuleExpr& child, bool parens) {
    if (parens) os << '(';
    print_to(os, child);
    if (parens) os << ')';
  };
  switch (e.kind) {
    case K::Predicate:
      os << e.name << '(';
      for (std::size_t i = 0; i < e.args.size(); ++i) os << (i ? ", " : "") << e.args[i];
      os << ')';
      return;
    case K::Neg:
      os << '!';
      wrapped(e.children[0], precedence(e.children[0].kind) < 4);
      return;
    case K::AvgConj:
      os << "avg(";
      for (std::size_t i = 0; i < e.children.size(); ++i) {
        if (i) os << ", ";
        print_to(os, e.children[i]);
      }
      os << ')';
      return;
    default: {
      const char* op = e.kind == K::Implies ? " => " : e.kind == K::Disj ? " | " : " && ";
      // Any nested binary operand is parenthesized; the output is canonical, not minimal.
      wrapped(e.children[0], precedence(e.children[0].kind) < 4);
      os << op;
      wrapped(e.children[1], precedence(e.children[1].kind) < 4);
      return;
    }
  }
}

}  // namespace detail

/// Parses the rule grammar. Precedence: `!` > `&&` > `|` > `=>` (right-assoc).
inline RuleExpr parse_rule_expr(std::string_view text) { return detail::RuleParser(text).parse(); }

inline std::string to_string(const RuleExpr& e) {
  std::ostringstream os;
  detail::print_to(os, e);
  return os.str();
}

class UnboundPredicate : public std::runtime_error {
 public:
  explicit UnboundPredicate(const std::string& name)
      : std::runtime_error("unbound predicate '" + name + "'"), name_(name) {}
  [[nodiscard]] const std::string& name() const { return name_; }

 private:
  std::string name_;
};

template <class Instance, class Candidate>
using PredicateFn =
    std::function<TruthValue(std::span<const std::string> args, const Instance&, const Candidate&)>;

template <class Instance, class Candidate>
using PredicateBinding = std::map<std::string, PredicateFn<Instance, Candidate>, std::less<>>;

template <class Instance, class Candidate>
TruthValue evaluate(const RuleExpr& e, const PredicateBinding<Instance, Candidate>& bindings,
                    const Instance& instance, const Candidate& candidate) {
  using K = RuleExpr::Kind;
  auto sub = [&](std::size_t i) { return evaluate(e.children[i], bindings, instance, candidate); };
  switch (e.kind) {
    case K::Predicate: {
      auto it = bindings.find(e.name);
      if (it == bindings.end()) throw UnboundPredicate(e.name);
      return it->second(e.args, instance, candidate);
    }
    case K::Neg: return neg(sub(0));
    case K::StrongConj: return strong_conj(sub(0), sub(1));
    case K::Disj: return disj(sub(0), sub(1));
    case K::Implies: return implies(sub(0), sub(1));
    case K::AvgConj: {
      std::vector<TruthValue> vals;
      vals.reserve(e.children.size());
      for (std::size_t i = 0; i < e.children.size(); ++i) vals.push_back(sub(i));
      return avg_conj(vals);
    }
  }
  throw std::logic_error("unknown rule node");
}

}  // namespace rulekd
