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

// Corpus formats and the list/counterpart detector.
//
// Classification TSV: one record per line, `<label>\t<space-separated tokens>`,
// label a non-negative integer.
//
// Tagging column format: `<token> <tag>` per line (extra middle columns are
// ignored), blank line between sentences, a line whose first field is
// `-DOCSTART-` opens a new document.

#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rulekd/tags.hpp"

namespace rulekd {

class CorpusError : public std::runtime_error {
 public:
  CorpusError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  [[nodiscard]] std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct LabeledSentence {
  std::vector<std::string> tokens;
  int label = 0;

  friend bool operator==(const LabeledSentence&, const LabeledSentence&) = default;
};

struct TaggedSentence {
  std::vector<std::string> tokens;
  std::vector<int> tags;
  std::string doc_id;
  std::size_t index = 0;  // position within the document

  friend bool operator==(const TaggedSentence&, const TaggedSentence&) = default;
};

struct Document {
  std::string id;
  std::vector<TaggedSentence> sentences;

  friend bool operator==(const Document&, const Document&) = default;
};

namespace detail {

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t b = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > b) out.emplace_back(s.substr(b, i - b));
  }
  return out;
}

inline bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

inline std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return is;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  return os;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Classification

inline std::vector<LabeledSentence> read_classification(std::istream& is) {
  std::vector<LabeledSentence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = detail::strip_cr(std::move(line));
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw CorpusError("missing TAB between label and tokens", lineno);
    const std::string label = line.substr(0, tab);
    if (label.empty() || !std::all_of(label.begin(), label.end(), [](unsigned char c) { return std::isdigit(c); }))
      throw CorpusError("label '" + label + "' is not a non-negative integer", lineno);
    LabeledSentence s;
    try {
      s.label = std::stoi(label);
    } catch (const std::out_of_range&) {
      throw CorpusError("label '" + label + "' out of range", lineno);
    }
    s.tokens = detail::split_ws(std::string_view(line).substr(tab + 1));
    if (s.tokens.empty()) throw CorpusError("no tokens", lineno);
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<LabeledSentence> load_classification(const std::string& path) {
  auto is = detail::open_in(path);
  return read_classification(is);
}

inline void write_classification(std::ostream& os, const std::vector<LabeledSentence>& data) {
  for (const auto& s : data) {
    os << s.label << '\t';
    for (std::size_t i = 0; i < s.tokens.size(); ++i) os << (i ? " " : "") << s.tokens[i];
    os << '\n';
  }
}

inline void save_classification(const std::string& path, const std::vector<LabeledSentence>& data) {
  auto os = detail::open_out(path);
  write_classification(os, data);
}

// ---------------------------------------------------------------------------
// Column-format tagging

inline std::vector<Document> read_conll(std::istream& is, const TagSet& tags) {
  std::vector<Document> docs;
  TaggedSentence cur;
  std::vector<std::size_t> cur_lines;
  std::string line;
  std::size_t lineno = 0;

  auto open_doc = [&]() {
    docs.push_back(Document{"doc" + std::to_string(docs.size()), {}});
  };
  auto flush = [&]() {
    if (cur.tokens.empty()) return;
    const auto bad = tags.invalid_positions(cur.tags);
    if (!bad.empty()) {
      std::string msg = "invalid BIOES sequence at token position(s)";
      for (auto p : bad) msg += " " + std::to_string(p);
      throw CorpusError(msg, cur_lines[bad.front()]);
    }
    if (docs.empty()) open_doc();
    cur.doc_id = docs.back().id;
    cur.index = docs.back().sentences.size();
    docs.back().sentences.push_back(std::move(cur));
    cur = TaggedSentence{};
    cur_lines.clear();
  };

  while (std::getline(is, line)) {
    ++lineno;
    line = detail::strip_cr(std::move(line));
    if (detail::is_blank(line)) {
      flush();
      continue;
    }
    const auto fields = detail::split_ws(line);
    if (fields.front() == "-DOCSTART-") {
      flush();
      open_doc();
      continue;
    }
    if (fields.size() < 2) throw CorpusError("expected '<token> <tag>'", lineno);
    const auto tag = tags.find(fields.back());
    if (!tag) throw CorpusError("unknown tag '" + fields.back() + "'", lineno);
    cur.tokens.push_back(fields.front());
    cur.tags.push_back(*tag);
    cur_lines.push_back(lineno);
  }
  flush();
  std::erase_if(docs, [](const Document& d) { return d.sentences.empty(); });
  return docs;
}

inline std::vector<Document> load_conll(const std::string& path, const TagSet& tags) {
  auto is = detail::open_in(path);
  return read_conll(is, tags);
}

inline void write_conll(std::ostream& os, const std::vector<Document>& docs, const TagSet& tags) {
  for (const auto& d : docs) {
    os << "-DOCSTART- O\n\n";
    for (const auto& s : d.sentences) {
      for (std::size_t i = 0; i < s.tokens.size(); ++i) os << s.tokens[i] << ' ' << tags.name(s.tags[i]) << '\n';
      os << '\n';
    }
  }
}

inline void save_conll(const std::string& path, const std::vector<Document>& docs, const TagSet& tags) {
  auto os = detail::open_out(path);
  write_conll(os, docs, tags);
}

// ---------------------------------------------------------------------------
// List detection

struct TokenRef {
  std::size_t sentence = 0;
  std::size_t position = 0;

  friend bool operator==(const TokenRef&, const TokenRef&) = default;
  friend auto operator<=>(const TokenRef&, const TokenRef&) = default;
};

/// Token span [begin, end) within one sentence.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  friend bool operator==(const Span&, const Span&) = default;
};

struct ListItem {
  std::size_t sentence = 0;
  Span text;                 // item text after the marker
  std::vector<Span> blocks;  // punctuation-delimited, non-empty

  friend bool operator==(const ListItem&, const ListItem&) = default;
};

/// Counterpart pair: first tokens of block `block` in items `item_a` < `item_b`.
struct Counterpart {
  std::size_t item_a = 0, item_b = 0, block = 0;
  TokenRef a, b;

  friend bool operator==(const Counterpart&, const Counterpart&) = default;
};

enum class ListKind { Numbered, Dashed };

struct ListGroup {
  std::string doc_id;
  ListKind kind = ListKind::Numbered;
  std::vector<ListItem> items;
  std::vector<Counterpart> counterparts;

  friend bool operator==(const ListGroup&, const ListGroup&) = default;
};

inline constexpr std::size_t kMinListItems = 3;
inline constexpr std::size_t kMaxBlockWords = 3;

inline bool is_block_separator(std::string_view tok) {
  return tok == "," || tok == ";" || tok == ":" || tok == "." || tok == "(" || tok == ")";
}

/// Words starting with a letter must start with an upper-case letter.
inline bool capitalized_or_nonalpha(std::string_view tok) {
  const auto c = static_cast<unsigned char>(tok.front());
  return !std::isalpha(c) || std::isupper(c);
}

namespace detail {

struct Marker {
  std::size_t pos = 0;
  std::size_t width = 0;  // tokens occupied by the marker
  ListKind kind = ListKind::Numbered;
  int number = 0;
};

inline std::optional<int> parse_index(std::string_view s) {
  if (s.empty() || s.size() > 4) return std::nullopt;
  int v = 0;
  for (char c : s) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    v = v * 10 + (c - '0');
  }
  return v;
}

inline std::optional<Marker> marker_at(const std::vector<std::string>& toks, std::size_t i) {
  const auto& t = toks[i];
  if (t == "-") return Marker{i, 1, ListKind::Dashed, 0};
  if (t.size() >= 2 && t.back() == '.') {
    if (auto n = parse_index(std::string_view(t).substr(0, t.size() - 1))) return Marker{i, 1, ListKind::Numbered, *n};
  }
  if (i + 1 < toks.size() && toks[i + 1] == ".") {
    if (auto n = parse_index(t)) return Marker{i, 2, ListKind::Numbered, *n};
  }
  return std::nullopt;
}

inline std::vector<Marker> markers_of(const std::vector<std::string>& toks) {
  std::vector<Marker> out;
  for (std::size_t i = 0; i < toks.size();) {
    if (auto m = marker_at(toks, i)) {
      out.push_back(*m);
      i += m->width;
    } else {
      ++i;
    }
  }
  return out;
}

inline std::optional<ListItem> make_item(const std::vector<std::string>& toks, std::size_t sentence, Span text) {
  ListItem item{sentence, text, {}};
  std::size_t b = text.begin;
  for (std::size_t i = text.begin; i <= text.end; ++i) {
    if (i == text.end || is_block_separator(toks[i])) {
      if (i > b) item.blocks.push_back(Span{b, i});
      b = i + 1;
    }
  }
  if (item.blocks.empty()) return std::nullopt;
  for (const auto& blk : item.blocks) {
    if (blk.end - blk.begin > kMaxBlockWords) return std::nullopt;
    for (std::size_t i = blk.begin; i < blk.end; ++i)
      if (!capitalized_or_nonalpha(toks[i])) return std::nullopt;
  }
  return item;
}

}  // namespace detail

/// Numbered ("1. 2. 3." with consecutive indices from 1, marker written as
/// `N.` or `N .`) and dashed ("- - -") lists, within a sentence or
/// continuing into following sentences that open with the next marker. An
/// item's text runs to the next marker or the end of its sentence. Items
/// whose blocks break the capitalization or length limits are dropped; a
/// list needs at least three surviving items.
inline std::vector<ListGroup> detect_lists(const std::vector<std::vector<std::string>>& sentences,
                                           const std::string& doc_id = "") {
  std::vector<std::vector<detail::Marker>> markers;
  for (const auto& s : sentences) markers.push_back(detail::markers_of(s));

  // Markers already consumed by a run, as (sentence, marker index).
  std::vector<std::vector<char>> used;
  for (const auto& m : markers) used.emplace_back(m.size(), 0);

  std::vector<ListGroup> lists;
  for (std::size_t s0 = 0; s0 < sentences.size(); ++s0) {
    for (std::size_t m0 = 0; m0 < markers[s0].size(); ++m0) {
      if (used[s0][m0]) continue;
      const auto kind = markers[s0][m0].kind;
      if (kind == ListKind::Numbered && markers[s0][m0].number != 1) continue;

      // Collect the run of consecutive markers.
      std::vector<std::pair<std::size_t, std::size_t>> run{{s0, m0}};
      int expect = 2;
      for (;;) {
        auto [s, m] = run.back();
        auto fits = [&](const detail::Marker& mk) {
          return mk.kind == kind && (kind == ListKind::Dashed || mk.number == expect);
        };
        if (m + 1 < markers[s].size()) {
          if (!fits(markers[s][m + 1])) break;
          run.emplace_back(s, m + 1);
        } else if (s + 1 < sentences.size() && !markers[s + 1].empty() && markers[s + 1][0].pos == 0 &&
                   fits(markers[s + 1][0])) {
          run.emplace_back(s + 1, 0);
        } else {
          break;
        }
        ++expect;
      }
      for (auto [s, m] : run) used[s][m] = 1;

      ListGroup g{doc_id, kind, {}, {}};
      for (auto [s, m] : run) {
        const auto& mk = markers[s][m];
        const std::size_t begin = mk.pos + mk.width;
        const std::size_t end = m + 1 < markers[s].size() ? markers[s][m + 1].pos : sentences[s].size();
        if (auto item = detail::make_item(sentences[s], s, Span{begin, end})) g.items.push_back(std::move(*item));
      }
      if (g.items.size() < kMinListItems) continue;
      for (std::size_t i = 0; i < g.items.size(); ++i) {
        for (std::size_t j = i + 1; j < g.items.size(); ++j) {
          const std::size_t nb = std::min(g.items[i].blocks.size(), g.items[j].blocks.size());
          for (std::size_t k = 0; k < nb; ++k) {
            g.counterparts.push_back(Counterpart{i, j, k,
                                                 TokenRef{g.items[i].sentence, g.items[i].blocks[k].begin},
                                                 TokenRef{g.items[j].sentence, g.items[j].blocks[k].begin}});
          }
        }
      }
      lists.push_back(std::move(g));
    }
  }
  return lists;
}

inline std::vector<ListGroup> detect_lists(const Document& doc) {
  std::vector<std::vector<std::string>> sents;
  for (const auto& s : doc.sentences) sents.push_back(s.tokens);
  return detect_lists(sents, doc.id);
}

}  // namespace rulekd
