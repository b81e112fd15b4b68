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

// Synthetic desk-scale tasks: "A but B" sentiment and list-bearing NER.

#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rulekd/corpus.hpp"
#include "rulekd/tags.hpp"

namespace rulekd {

namespace detail {

template <class T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

inline bool coin(double p, std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

inline int uniform_int(int lo, int hi, std::mt19937_64& rng) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

inline void append(std::vector<std::string>& out, std::initializer_list<std::string> words) {
  out.insert(out.end(), words.begin(), words.end());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sentiment

struct SentimentGenSpec {
  double but_fraction = 0.15;  // sentences with "A but B" structure
  double short_contrast = 0.0; // share of those whose clause B is just "[intensifier] word"
  double label_noise = 0.0;    // probability of flipping the emitted label
};

/// Sentences built from positive/negative word pools. Every clause ends in a
/// two-word filler, so narrow windows cannot tell which clause a word sits in.
/// In an "A but B" sentence clause A carries the opposite polarity and clause
/// B carries the label.
inline std::vector<LabeledSentence> gen_synthetic_sentiment(std::uint64_t seed, std::size_t n,
                                                            const SentimentGenSpec& spec = {}) {
  if (!(spec.but_fraction >= 0.0 && spec.but_fraction <= 1.0) || !(spec.label_noise >= 0.0 && spec.label_noise <= 1.0) ||
      !(spec.short_contrast >= 0.0 && spec.short_contrast <= 1.0))
    throw std::invalid_argument("sentiment generator: fractions must lie in [0,1]");
  static const std::vector<std::string> kPos = {
      "good",     "great",    "excellent", "brilliant", "superb", "wonderful", "delightful", "charming",
      "moving",   "clever",   "fresh",     "funny",     "gripping", "engaging", "stunning",  "beautiful",
      "touching", "powerful", "smart",     "lovely",    "witty",  "solid",     "fine",       "enjoyable"};
  static const std::vector<std::string> kNeg = {
      "bad",     "dull",     "boring",   "awful",  "tedious", "weak",      "clumsy", "bland",
      "messy",   "flat",     "lifeless", "stale",  "silly",   "painful",   "poor",   "dreary",
      "shallow", "annoying", "forced",   "sloppy", "hollow",  "pointless", "ugly",   "tiresome"};
  static const std::vector<std::string> kSubj = {"the film",   "the plot",     "the acting", "the cast",
                                                 "the script", "the dialogue", "the ending", "the direction",
                                                 "this movie", "the story",    "the score",  "the pacing"};
  static const std::vector<std::string> kVerb = {"is", "was", "feels", "looks", "seems", "remains"};
  static const std::vector<std::string> kIntens = {"very", "really", "quite", "truly", "rather", "so"};
  static const std::vector<std::string> kNoun = {"plot", "script", "ending", "cast", "finale", "story", "score"};
  static const std::vector<std::string> kTail = {"at times", "in places", "to me", "for sure", "all along",
                                                 "by now"};

  std::mt19937_64 rng(seed);
  auto words = [](const std::string& phrase, std::vector<std::string>& out) {
    for (auto& w : detail::split_ws(phrase)) out.push_back(std::move(w));
  };
  auto clause = [&](bool positive, std::vector<std::string>& out) {
    const auto& pool = positive ? kPos : kNeg;
    words(detail::pick(kSubj, rng), out);
    out.push_back(detail::pick(kVerb, rng));
    if (detail::coin(0.4, rng)) out.push_back(detail::pick(kIntens, rng));
    out.push_back(detail::pick(pool, rng));
    if (detail::coin(0.3, rng)) detail::append(out, {"and", detail::pick(pool, rng)});
    words(detail::pick(kTail, rng), out);
  };

  std::vector<LabeledSentence> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool positive = detail::coin(0.5, rng);
    LabeledSentence s;
    if (detail::coin(spec.but_fraction, rng)) {
      clause(!positive, s.tokens);
      if (detail::coin(0.5, rng)) detail::append(s.tokens, {"and", detail::pick(positive ? kNeg : kPos, rng)});
      s.tokens.push_back("but");
      if (detail::coin(spec.short_contrast, rng)) {
        // Short clause B: the polarity word sits right after "but".
        if (detail::coin(0.5, rng)) s.tokens.push_back(detail::pick(kIntens, rng));
        s.tokens.push_back(detail::pick(positive ? kPos : kNeg, rng));
        words(detail::pick(kTail, rng), s.tokens);
      } else {
        clause(positive, s.tokens);
      }
    } else {
      clause(positive, s.tokens);
      if (detail::coin(0.25, rng)) {
        s.tokens.push_back("and");
        clause(positive, s.tokens);
      }
    }
    s.tokens.push_back(".");
    s.label = positive ? 1 : 0;
    if (spec.label_noise > 0.0 && detail::coin(spec.label_noise, rng)) s.label = 1 - s.label;
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// NER

struct NerGenSpec {
  std::size_t min_sentences = 2;
  std::size_t max_sentences = 4;
  double list_doc_fraction = 0.8;     // documents that carry one list
  double ambiguous_in_list = 0.35;    // list items drawn from the city/club forms
  double ambiguous_in_text = 0.25;    // LOC/ORG slots in running text filled by those forms
  double rare_fraction = 0.3;         // mentions replaced by a fresh pseudo-word name
  double annotation_noise = 0.0;      // city/club forms annotated with the city reading regardless of context
};

/// Documents of templated news sentences. City names double as club names:
/// in running text the surrounding words decide (LOC after "in", ORG before
/// "beat"), inside a list only the co-items do, since every list is
/// homogeneous in category. With annotation noise the city/club forms are
/// sometimes annotated LOC regardless of context.
inline std::vector<Document> gen_synthetic_ner(std::uint64_t seed, std::size_t n_docs, const NerGenSpec& spec = {}) {
  if (spec.min_sentences == 0 || spec.min_sentences > spec.max_sentences)
    throw std::invalid_argument("ner generator: bad sentence range");
  for (double f : {spec.list_doc_fraction, spec.ambiguous_in_list, spec.ambiguous_in_text, spec.rare_fraction,
                   spec.annotation_noise})
    if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("ner generator: fractions must lie in [0,1]");
  using Names = std::vector<std::vector<std::string>>;
  static const Names kPer = {{"John", "Smith"}, {"Maria", "Garcia"}, {"Ahmed", "Khan"},  {"Li", "Wei"},
                             {"Anna", "Petrova"}, {"Peter", "Jones"}, {"Carlos", "Silva"}, {"Yuki", "Tanaka"},
                             {"Smith"},           {"Garcia"},         {"Okafor"},          {"Novak"},
                             {"Dubois"},          {"Larsen"},         {"Costa"},           {"Moreau"}};
  static const Names kOrg = {{"Ajax"},   {"Juventus"}, {"Celtic"},          {"Benfica"},         {"Porto"},
                             {"Reuters"}, {"Fiat"},    {"Acme", "Corp"},    {"United", "Motors"}, {"Global", "Bank"},
                             {"Nordic", "Air"},        {"Apex", "Energy"},  {"Feyenoord"},       {"Galatasaray"}};
  static const Names kLoc = {{"Paris"}, {"Berlin"}, {"Rome"}, {"Tokyo"}, {"Cairo"}, {"Lima"}, {"Oslo"},
                             {"Vienna"}, {"Dublin"}, {"New", "York"}, {"Buenos", "Aires"}, {"Hong", "Kong"},
                             {"Nairobi"}, {"Seoul"}};
  static const Names kMisc = {{"English"}, {"French"}, {"German"},       {"Olympic"},      {"Dutch"},
                              {"Italian"}, {"Asian"},  {"World", "Cup"}, {"Euro", "League"}, {"Grand", "Prix"}};
  static const Names kAmb = {{"Milan"},    {"Barcelona"}, {"Madrid"}, {"Liverpool"}, {"Valencia"},
                             {"Munich"},   {"Marseille"}, {"Lyon"},   {"Leeds"},     {"Napoli"}};
  static const std::vector<std::string> kOnset = {"b", "d", "k", "l", "m", "n", "r", "s", "t", "v", "z", "g"};
  static const std::vector<std::string> kVowel = {"a", "e", "i", "o", "u"};
  static const std::vector<std::string> kIntro = {"Results", "Standings", "Selected", "Included", "Summary"};
  enum Cat { ORG = 0, LOC = 1, PER = 2, MISC = 3 };

  const TagSet tags;
  std::mt19937_64 rng(seed);

  auto pseudo = [&]() {
    std::string w;
    const int syl = detail::uniform_int(2, 3, rng);
    for (int i = 0; i < syl; ++i) w += detail::pick(kOnset, rng) + detail::pick(kVowel, rng);
    if (detail::coin(0.5, rng)) w += detail::pick(kOnset, rng);
    w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    return w;
  };
  // Returns the tokens and the category they are annotated with.
  auto mention = [&](int cat, bool allow_amb, double amb_rate) -> std::pair<std::vector<std::string>, int> {
    if (detail::coin(spec.rare_fraction, rng)) {
      std::vector<std::string> m{pseudo()};
      if (cat != MISC && detail::coin(cat == PER ? 0.6 : 0.3, rng)) m.insert(m.begin(), pseudo());
      return {m, cat};
    }
    if (allow_amb && (cat == ORG || cat == LOC) && detail::coin(amb_rate, rng)) {
      const int shown = spec.annotation_noise > 0.0 && detail::coin(spec.annotation_noise, rng) ? LOC : cat;
      return {detail::pick(kAmb, rng), shown};
    }
    switch (cat) {
      case ORG: return {detail::pick(kOrg, rng), cat};
      case LOC: return {detail::pick(kLoc, rng), cat};
      case PER: return {detail::pick(kPer, rng), cat};
      default: return {detail::pick(kMisc, rng), cat};
    }
  };

  struct Builder {
    const TagSet& tags;
    TaggedSentence s;
    void word(const std::string& w) {
      s.tokens.push_back(w);
      s.tags.push_back(0);
    }
    void words(const std::string& phrase) {
      for (auto& w : detail::split_ws(phrase)) word(w);
    }
    void entity(const std::vector<std::string>& toks, int cat) {
      for (std::size_t i = 0; i < toks.size(); ++i) {
        TagPrefix p = TagPrefix::S;
        if (toks.size() > 1) p = i == 0 ? TagPrefix::B : (i + 1 == toks.size() ? TagPrefix::E : TagPrefix::I);
        s.tokens.push_back(toks[i]);
        s.tags.push_back(tags.tag(p, cat));
      }
    }
  };

  const double amb = spec.ambiguous_in_text;
  auto sentence = [&]() {
    Builder b{tags, {}};
    auto ent = [&](int cat) {
      const auto [toks, shown] = mention(cat, true, amb);
      b.entity(toks, shown);
    };
    switch (detail::uniform_int(0, 11, rng)) {
      case 0: ent(PER); b.words("visited"); ent(LOC); b.words("on Monday ."); break;
      case 1: ent(PER); b.words(", who plays for"); ent(ORG); b.words(", scored twice ."); break;
      case 2: ent(ORG); b.words("beat"); ent(ORG); b.words("2-1 in"); ent(LOC); b.word("."); break;
      case 3: b.words("The"); ent(MISC); b.words("team arrived in"); ent(LOC); b.word("."); break;
      case 4: ent(PER); b.words("said the"); ent(MISC); b.words("market was calm ."); break;
      case 5: b.words("Police in"); ent(LOC); b.words("arrested"); ent(PER); b.word("."); break;
      case 6: ent(ORG); b.words("shares rose in"); ent(LOC); b.words("trading ."); break;
      case 7: ent(PER); b.words("joined"); ent(ORG); b.words("from"); ent(ORG); b.word("."); break;
      case 8: b.words("Officials from"); ent(LOC); b.words("met"); ent(PER); b.words("of"); ent(ORG); b.word("."); break;
      case 9: b.words("The weather was mild on Sunday ."); break;
      case 10: ent(PER); b.words("won the"); ent(MISC); b.words("title ."); break;
      default: b.words("Fans of"); ent(ORG); b.words("travelled to"); ent(LOC); b.word("."); break;
    }
    return b.s;
  };

  // One list: homogeneous category, 3-6 items, numbered or dashed, in one
  // sentence or one item per sentence.
  auto list = [&]() {
    const int cat = detail::uniform_int(0, 2, rng);  // ORG, LOC or PER
    const int n_items = detail::uniform_int(3, 6, rng);
    const bool numbered = detail::coin(0.7, rng);
    const bool inter = detail::coin(0.5, rng);
    const bool scores = detail::coin(0.4, rng);
    std::vector<TaggedSentence> out;
    Builder b{tags, {}};
    b.words(detail::pick(kIntro, rng));
    b.word(":");
    for (int i = 0; i < n_items; ++i) {
      if (inter && i > 0) {
        out.push_back(std::move(b.s));
        b.s = TaggedSentence{};
      }
      b.word(numbered ? std::to_string(i + 1) + "." : "-");
      const auto [toks, shown] = mention(cat, true, spec.ambiguous_in_list);
      b.entity(toks, shown);
      if (scores) b.word(std::to_string(detail::uniform_int(1, 40, rng)));
    }
    out.push_back(std::move(b.s));
    return out;
  };

  std::vector<Document> docs;
  docs.reserve(n_docs);
  for (std::size_t d = 0; d < n_docs; ++d) {
    Document doc{"doc" + std::to_string(d), {}};
    const int n_sent = detail::uniform_int(static_cast<int>(spec.min_sentences), static_cast<int>(spec.max_sentences), rng);
    const bool has_list = detail::coin(spec.list_doc_fraction, rng);
    const int list_at = detail::uniform_int(0, n_sent, rng);
    for (int i = 0; i <= n_sent; ++i) {
      if (has_list && i == list_at) {
        for (auto& s : list()) doc.sentences.push_back(std::move(s));
      }
      if (i < n_sent) doc.sentences.push_back(sentence());
    }
    for (std::size_t i = 0; i < doc.sentences.size(); ++i) {
      doc.sentences[i].doc_id = doc.id;
      doc.sentences[i].index = i;
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace rulekd
