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

// Acceptance suite. Prints one PASS/FAIL line per criterion with its wall
// time and limit; exits nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "rulekd/rulekd.hpp"

namespace {

using namespace rulekd;

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Outcome {
  bool ok = true;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;
  std::function<Outcome()> run;
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// 1. Soft logic

Outcome soft_logic() {
  Outcome o;
  int bad = 0;
  // Boolean truth tables.
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const TruthValue ta(a), tb(b);
      bad += strong_conj(ta, tb).value() != static_cast<double>(a && b);
      bad += disj(ta, tb).value() != static_cast<double>(a || b);
      bad += implies(ta, tb).value() != static_cast<double>(!a || b);
      bad += avg_conj({ta, tb}).value() != (a + b) / 2.0;
    }
    bad += neg(TruthValue(a)).value() != static_cast<double>(!a);
  }
  // Grid closure and agreement with the defining formulas.
  const int n = 100;
  double worst = 0.0;
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      const double a = i / static_cast<double>(n), b = j / static_cast<double>(n);
      const TruthValue ta(a), tb(b);
      const double vals[] = {strong_conj(ta, tb).value(), disj(ta, tb).value(), implies(ta, tb).value(),
                             avg_conj({ta, tb, ta}).value(), neg(ta).value()};
      for (double v : vals) bad += !(v >= 0.0 && v <= 1.0);
      worst = std::max({worst, std::abs(vals[0] - std::max(0.0, a + b - 1.0)),
                        std::abs(vals[1] - std::min(1.0, a + b)), std::abs(vals[2] - std::min(1.0, 1.0 - a + b)),
                        std::abs(vals[3] - (2.0 * a + b) / 3.0), std::abs(vals[4] - (1.0 - a))});
    }
  }
  o.ok = bad == 0 && worst < 1e-15;
  o.detail = "violations=" + std::to_string(bad) + " max_formula_error=" + fmt(worst);
  return o;
}

// ---------------------------------------------------------------------------
// 2. Projection vs numeric primal

// Minimizes KL(q || p) + C sum_g max(0, lambda_g (1 - E_q r_g)) over softmax
// logits by gradient descent with backtracking.
std::vector<double> primal_by_logits(const ProjectionProblem& pr) {
  const std::size_t k = pr.num_candidates();
  auto probs = [&](const std::vector<double>& z) {
    const double m = *std::max_element(z.begin(), z.end());
    std::vector<double> q(k);
    double s = 0.0;
    for (std::size_t y = 0; y < k; ++y) s += q[y] = std::exp(z[y] - m);
    for (auto& v : q) v /= s;
    return q;
  };
  auto objective = [&](const std::vector<double>& q) {
    double f = 0.0;
    for (std::size_t y = 0; y < k; ++y)
      if (q[y] > 0.0) f += q[y] * (std::log(q[y]) - pr.base_log_probs[y]);
    for (const auto& g : pr.groundings) {
      double e = 0.0;
      for (std::size_t y = 0; y < k; ++y) e += q[y] * g.truth[y];
      f += pr.c * std::max(0.0, g.lambda * (1.0 - e));
    }
    return f;
  };
  std::vector<double> z(pr.base_log_probs);
  double step = 1.0;
  for (int it = 0; it < 200000; ++it) {
    const auto q = probs(z);
    // d f / d q_y, then chain through the softmax.
    std::vector<double> dq(k);
    for (std::size_t y = 0; y < k; ++y) dq[y] = std::log(q[y]) - pr.base_log_probs[y] + 1.0;
    for (const auto& g : pr.groundings) {
      double e = 0.0;
      for (std::size_t y = 0; y < k; ++y) e += q[y] * g.truth[y];
      if (g.lambda * (1.0 - e) > 0.0)
        for (std::size_t y = 0; y < k; ++y) dq[y] -= pr.c * g.lambda * g.truth[y];
    }
    double mean = 0.0;
    for (std::size_t y = 0; y < k; ++y) mean += q[y] * dq[y];
    std::vector<double> grad(k);
    double norm = 0.0;
    for (std::size_t y = 0; y < k; ++y) {
      grad[y] = q[y] * (dq[y] - mean);
      norm += grad[y] * grad[y];
    }
    if (std::sqrt(norm) < 1e-13) break;
    const double f0 = objective(q);
    std::vector<double> next(k);
    for (;;) {
      for (std::size_t y = 0; y < k; ++y) next[y] = z[y] - step * grad[y];
      if (objective(probs(next)) <= f0 - 0.25 * step * norm || step < 1e-12) break;
      step *= 0.5;
    }
    z = next;
    step *= 2.0;
  }
  return probs(z);
}

Outcome projection_vs_primal() {
  std::mt19937_64 rng(20260501);
  const RandomProblemSpec spec{4, 3, 2, {0.5, 1.0, 2.0}, 6.0};
  double worst = 0.0;
  int failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto pr = random_projection_problem(rng, spec);
    const auto closed = project(pr);
    const auto numeric = primal_by_logits(pr);
    double kl = 0.0;
    for (std::size_t y = 0; y < numeric.size(); ++y)
      if (numeric[y] > 0.0) kl += numeric[y] * (std::log(numeric[y]) - closed.log_q[y]);
    kl = std::max(kl, 0.0);
    worst = std::max(worst, kl);
    failures += !(kl < 1e-6);
  }
  return {failures == 0, "problems=100 failures=" + std::to_string(failures) + " max_kl=" + fmt(worst)};
}

// ---------------------------------------------------------------------------
// 3. Chain inference vs enumeration

Table random_log_probs(std::mt19937_64& rng, std::size_t t, std::size_t k) {
  std::uniform_real_distribution<double> u(0.02, 1.0);
  Table out(t, std::vector<double>(k));
  for (auto& row : out) {
    double s = 0.0;
    for (auto& v : row) s += v = u(rng);
    for (auto& v : row) v = std::log(v / s);
  }
  return out;
}

void for_each_sequence(std::size_t t, std::size_t k, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> y(t, 0);
  for (;;) {
    fn(y);
    std::size_t i = 0;
    while (i < t && ++y[i] == static_cast<int>(k)) y[i++] = 0;
    if (i == t) return;
  }
}

double sequence_score(const Table& u, const ChainPenalties& p, const std::vector<int>& y) {
  auto at = [](int v) { return static_cast<std::size_t>(v); };
  double s = p.start[at(y.front())] + p.end[at(y.back())];
  for (std::size_t i = 0; i < y.size(); ++i) {
    s += u[i][at(y[i])];
    if (i > 0) s += p.transition[at(y[i - 1])][at(y[i])];
  }
  return s;
}

struct ChainCheck {
  double marginal_error = 0.0;
  double map_gap = 0.0;  // best score minus decoded score
};

ChainCheck check_chain(const Table& base, const ChainPenalties& pen) {
  const std::size_t t = base.size(), k = pen.size();
  Table expect(t, std::vector<double>(k, 0.0));
  double z = 0.0, best = -kInf;
  for_each_sequence(t, k, [&](const std::vector<int>& y) {
    const double s = sequence_score(base, pen, y);
    best = std::max(best, s);
    const double w = std::exp(s);
    z += w;
    for (std::size_t i = 0; i < t; ++i) expect[i][static_cast<std::size_t>(y[i])] += w;
  });
  const ChainTeacherQuery q(base, pen);
  const auto got = chain_marginals(q);
  ChainCheck c;
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t y = 0; y < k; ++y) c.marginal_error = std::max(c.marginal_error, std::abs(got[i][y] - expect[i][y] / z));
  c.marginal_error = std::max(c.marginal_error, std::abs(q.log_partition() - std::log(z)));
  const auto decoded = chain_map_decode(q);
  c.map_gap = best - sequence_score(base, pen, decoded);
  return c;
}

Outcome chain_inference() {
  std::mt19937_64 rng(20260502);
  std::uniform_int_distribution<std::size_t> len(1, 6), labels(2, 4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_marg = 0.0, worst_map = 0.0;
  int checked = 0;
  while (checked < 200) {
    const std::size_t t = len(rng), k = labels(rng);
    auto pen = ChainPenalties::none(k);
    auto draw = [&] { return u(rng) < 0.2 ? -kInf : -3.0 * u(rng); };
    for (std::size_t y = 0; y < k; ++y) {
      pen.start[y] = draw();
      pen.end[y] = draw();
      for (std::size_t z = 0; z < k; ++z) pen.transition[y][z] = draw();
    }
    const auto base = random_log_probs(rng, t, k);
    double z = 0.0;
    for_each_sequence(t, k, [&](const std::vector<int>& y) { z += std::exp(sequence_score(base, pen, y)); });
    if (z == 0.0) continue;  // infeasible draw
    const auto c = check_chain(base, pen);
    worst_marg = std::max(worst_marg, c.marginal_error);
    worst_map = std::max(worst_map, c.map_gap);
    ++checked;
  }

  // Hard transition constraints: exact on a single-category tag set, and
  // every decode valid on the full tag set.
  const TagSet one(std::vector<std::string>{"PER"});
  const auto one_pen = ChainPenalties::from_rules<std::monostate>(transition_rules(one), one.size(), 6.0);
  for (int i = 0; i < 50; ++i) {
    const auto c = check_chain(random_log_probs(rng, len(rng), static_cast<std::size_t>(one.size())), one_pen);
    worst_marg = std::max(worst_marg, c.marginal_error);
    worst_map = std::max(worst_map, c.map_gap);
  }
  const TagSet full;
  const auto full_pen = ChainPenalties::from_rules<std::monostate>(transition_rules(full), full.size(), 6.0);
  std::uniform_int_distribution<std::size_t> long_len(1, 12);
  int valid = 0;
  const int decodes = 500;
  for (int i = 0; i < decodes; ++i) {
    const ChainTeacherQuery q(random_log_probs(rng, long_len(rng), static_cast<std::size_t>(full.size())), full_pen);
    valid += full.valid_sequence(chain_map_decode(q));
  }
  const bool ok = worst_marg < 1e-9 && worst_map < 1e-9 && valid == decodes;
  return {ok, "instances=250 max_marginal_error=" + fmt(worst_marg) + " max_map_gap=" + fmt(worst_map) +
                  " valid_decodes=" + std::to_string(valid) + "/" + std::to_string(decodes)};
}

// ---------------------------------------------------------------------------
// 4. Gibbs vs enumeration

std::vector<Table> enumerate_group(const GroupTeacherQuery& q) {
  const std::size_t k = q.penalties.size();
  std::vector<std::size_t> offset;
  std::size_t total = 0;
  for (const auto& m : q.members) offset.push_back(total), total += m.size();
  std::vector<Table> acc;
  for (const auto& m : q.members) acc.emplace_back(m.size(), std::vector<double>(k, 0.0));
  double z = 0.0;
  for_each_sequence(total, k, [&](const std::vector<int>& flat) {
    double s = 0.0;
    for (std::size_t m = 0; m < q.members.size(); ++m) {
      const auto b = flat.begin() + static_cast<std::ptrdiff_t>(offset[m]);
      s += sequence_score(q.members[m], q.penalties,
                          std::vector<int>(b, b + static_cast<std::ptrdiff_t>(q.members[m].size())));
    }
    for (const auto& l : q.links)
      s += l.log_penalty[static_cast<std::size_t>(flat[offset[l.member_x] + l.pos_x])]
                        [static_cast<std::size_t>(flat[offset[l.member_a] + l.pos_a])];
    const double w = std::exp(s);
    z += w;
    for (std::size_t m = 0; m < q.members.size(); ++m)
      for (std::size_t t = 0; t < q.members[m].size(); ++t) acc[m][t][static_cast<std::size_t>(flat[offset[m] + t])] += w;
  });
  for (auto& m : acc)
    for (auto& row : m)
      for (auto& v : row) v /= z;
  return acc;
}

double max_position_tv(const std::vector<Table>& a, const std::vector<Table>& b) {
  double worst = 0.0;
  for (std::size_t m = 0; m < a.size(); ++m) {
    for (std::size_t t = 0; t < a[m].size(); ++t) {
      double tv = 0.0;
      for (std::size_t y = 0; y < a[m][t].size(); ++y) tv += std::abs(a[m][t][y] - b[m][t][y]);
      worst = std::max(worst, 0.5 * tv);
    }
  }
  return worst;
}

Outcome gibbs_vs_enumeration() {
  std::mt19937_64 rng(20260503);
  // List group over a five-tag set: two members linked both ways at their
  // first tokens, under hard transitions.
  const TagSet tags(std::vector<std::string>{"ORG"});
  const auto k = static_cast<std::size_t>(tags.size());
  GroupTeacherQuery list;
  list.penalties = ChainPenalties::from_rules<std::monostate>(transition_rules(tags), k, 6.0);
  list.members = {random_log_probs(rng, 1, k), random_log_probs(rng, 2, k)};
  const auto table = pair_penalty_table<std::monostate>(list_counterpart_rule(tags, 1.0), k, 6.0);
  list.links = {CounterpartLink{0, 0, 1, 0, table}, CounterpartLink{1, 0, 0, 0, table}};
  list.settings = GibbsSettings{10000, std::nullopt, 17};

  // Self-linked member plus a second member, soft penalties, four labels.
  GroupTeacherQuery self;
  self.penalties = ChainPenalties::none(4);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (auto& row : self.penalties.transition)
    for (auto& v : row) v = -u(rng);
  Table agree(4, std::vector<double>(4, 0.0));
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b)
      if (a != b) agree[a][b] = -2.0;
  self.members = {random_log_probs(rng, 2, 4), random_log_probs(rng, 1, 4)};
  self.links = {CounterpartLink{0, 0, 0, 1, agree}, CounterpartLink{1, 0, 0, 1, agree}};
  self.settings = GibbsSettings{10000, std::nullopt, 23};

  const double tv_list = max_position_tv(gibbs_soft_predict(list), enumerate_group(list));
  const double tv_self = max_position_tv(gibbs_soft_predict(self), enumerate_group(self));
  return {tv_list <= 0.02 && tv_self <= 0.02,
          "sweeps=10000 tv_list_group=" + fmt(tv_list) + " tv_self_linked=" + fmt(tv_self)};
}

// ---------------------------------------------------------------------------
// 5. Gradient check

Vocabulary check_vocab() {
  Vocabulary v;
  for (const char* w : {"great", "dull", "film", "but", "story", "Oslo", "Acme", "in", "met", "Ada"}) v.add(w);
  return v;
}

std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t k) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> s(k);
  double z = 0.0;
  for (auto& v : s) z += v = u(rng);
  for (auto& v : s) v /= z;
  return s;
}

Outcome gradient_check_all() {
  std::mt19937_64 rng(20260504);
  TextClassifierConfig tc;
  tc.dim = 5;
  tc.windows = {2, 3, 4};
  tc.maps = 3;
  tc.classes = 2;
  tc.embedding_scale = 0.5;
  SequenceTaggerConfig sc;
  sc.dim = 4;
  sc.radius = 2;
  sc.hidden = 5;
  sc.tags = 17;
  sc.embedding_scale = 0.5;

  double worst = 0.0;
  std::string worst_name;
  int blocks = 0, dead = 0;
  auto record = [&](const std::vector<testing::BlockCheck>& checks, const std::string& model, double pi) {
    for (const auto& b : checks) {
      ++blocks;
      dead += !(b.analytic_norm > 0.0);
      if (b.relative_error >= worst) {
        worst = b.relative_error;
        worst_name = model + ":" + b.name + "@pi=" + fmt(pi);
      }
    }
  };
  for (double pi : {0.0, 0.5, 1.0}) {
    TextClassifier text(check_vocab(), tc, 31);
    std::vector<ClassificationExample> docs = {
        {{2, 3, 4, 5, 6, 7}, MixedTarget{0, random_simplex(rng, 2), pi}},
        {{8, 9, 10}, MixedTarget{1, random_simplex(rng, 2), pi}},
        {{11, 4, 5, 2, 3}, MixedTarget{-1, random_simplex(rng, 2), pi}},
    };
    if (pi == 0.0) docs.pop_back();  // an unlabeled example carries no loss without imitation
    record(testing::gradient_check<TextClassifier, ClassificationExample>(text, docs), "text", pi);

    SequenceTagger tagger(check_vocab(), sc, 37);
    auto targets = [&](std::vector<int> labels) {
      std::vector<MixedTarget> out;
      for (int y : labels) out.push_back(MixedTarget{y, random_simplex(rng, 17), pi});
      return out;
    };
    std::vector<TaggingExample> sents = {
        {{9, 10, 11, 2, 3}, targets({3, 0, 16, 0, 4})},
        {{7, 8}, targets({1, 2})},
    };
    if (pi > 0.0) sents.push_back({{2, 5, 6}, targets({-1, -1, -1})});
    record(testing::gradient_check<SequenceTagger, TaggingExample>(tagger, sents), "tagger", pi);
  }
  return {worst < 1e-4 && dead == 0, "blocks=" + std::to_string(blocks) + " max_relative_error=" + fmt(worst) +
                                         " (" + worst_name + ") zero_gradient_blocks=" + std::to_string(dead)};
}

// ---------------------------------------------------------------------------
// 6-8. Experiments

constexpr int kSeeds = 5;

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sentiment_gap = std::numeric_limits<double>::quiet_NaN();  // mean q - p, set by criterion 6

Outcome sentiment_experiment() {
  std::vector<double> base, p, q;
  for (int s = 0; s < kSeeds; ++s) {
    SentimentData d;
    d.train = gen_synthetic_sentiment(100 + s, 2000, {});
    d.dev = gen_synthetic_sentiment(200 + s, 500, {});
    d.test = gen_synthetic_sentiment(300 + s, 500, {});
    TrainConfig c;
    c.seed = static_cast<std::uint64_t>(s + 1);
    c.mode = Mode::Base;
    base.push_back(train_sentiment(d, c).report.at("p_accuracy"));
    c.mode = Mode::Distill;
    c.rules.but = ButRuleSpec{};
    const auto r = train_sentiment(d, c);
    p.push_back(r.report.at("p_accuracy"));
    q.push_back(r.report.at("q_accuracy"));
  }
  const double mb = mean(base), mp = mean(p), mq = mean(q);
  sentiment_gap = mq - mp;
  return {mb < mp && mp < mq && mq - mb >= 0.02,
          "seeds=5 base=" + fmt(mb) + " p=" + fmt(mp) + " q=" + fmt(mq) + " q_minus_base=" + fmt(mq - mb)};
}

Outcome ner_experiment() {
  std::vector<double> base, p, q;
  for (int s = 0; s < kSeeds; ++s) {
    NerData d;
    d.train = gen_synthetic_ner(100 + s, 300, {});
    d.dev = gen_synthetic_ner(200 + s, 100, {});
    d.test = gen_synthetic_ner(300 + s, 100, {});
    TrainConfig c;
    c.seed = static_cast<std::uint64_t>(s + 1);
    c.batch_size = 10;
    c.gibbs_sweeps_train = 100;
    c.mode = Mode::Base;
    base.push_back(train_ner(d, c).report.at("p_f1"));
    c.mode = Mode::Distill;
    c.rules.transitions = TransitionRuleSpec{};
    c.rules.list = ListRuleSpec{};
    const auto r = train_ner(d, c);
    p.push_back(r.report.at("p_f1"));
    q.push_back(r.report.at("q_f1"));
  }
  const double mb = mean(base), mp = mean(p), mq = mean(q);
  const bool gap_ok = !std::isnan(sentiment_gap) && mq - mp > sentiment_gap;
  return {mb < mp && mp < mq && gap_ok, "seeds=5 base_f1=" + fmt(mb) + " p_f1=" + fmt(mp) + " q_f1=" + fmt(mq) +
                                            " ner_gap=" + fmt(mq - mp) + " sentiment_gap=" + fmt(sentiment_gap)};
}

Outcome semi_experiment() {
  std::vector<double> distill_p, semi_p, distill_q, semi_q;
  for (int s = 0; s < kSeeds; ++s) {
    const auto all = gen_synthetic_sentiment(100 + s, 2000, {});
    SentimentData d;
    d.train.assign(all.begin(), all.begin() + 100);  // 5% labeled
    d.unlabeled.assign(all.begin() + 100, all.end());
    d.dev = gen_synthetic_sentiment(200 + s, 500, {});
    d.test = gen_synthetic_sentiment(300 + s, 500, {});
    TrainConfig c;
    c.seed = static_cast<std::uint64_t>(s + 1);
    c.batch_size = 10;
    c.rules.but = ButRuleSpec{};
    c.mode = Mode::Distill;
    const auto r1 = train_sentiment(d, c);
    c.mode = Mode::Semi;
    const auto r2 = train_sentiment(d, c);
    distill_p.push_back(r1.report.at("p_accuracy"));
    distill_q.push_back(r1.report.at("q_accuracy"));
    semi_p.push_back(r2.report.at("p_accuracy"));
    semi_q.push_back(r2.report.at("q_accuracy"));
  }
  return {mean(semi_p) >= mean(distill_p), "seeds=5 labeled=100 distill_p=" + fmt(mean(distill_p)) + " semi_p=" +
                                               fmt(mean(semi_p)) + " distill_q=" + fmt(mean(distill_q)) +
                                               " semi_q=" + fmt(mean(semi_q))};
}

// ---------------------------------------------------------------------------
// 9. Schedule and scaling invariants

Outcome invariants() {
  int bad = 0;
  for (const auto& s : {ImitationSchedule::classification(), ImitationSchedule::tagging(), ImitationSchedule{0.7, 0.5}}) {
    double prev = -1.0;
    for (std::size_t t = 0; t <= 500; ++t) {
      const double v = imitation_rate(s, t);
      bad += v != std::min(s.pi0, 1.0 - std::pow(s.alpha, static_cast<double>(t)));
      bad += v < prev || v < 0.0 || v > s.pi0;
      prev = v;
    }
    bad += imitation_rate(s, 0) != 0.0;
    bad += std::abs(imitation_rate(s, 5000) - s.pi0) > 1e-12;
  }

  double worst = 0.0;
  std::mt19937_64 rng(20260509);
  for (int trial = 0; trial < 300; ++trial) {
    const auto pr = random_projection_problem(rng, RandomProblemSpec{});
    const auto ref = project(pr).probs();
    for (double k : {0.1, 0.5, 3.0, 7.0}) {
      auto scaled = pr;
      scaled.c = pr.c / k;
      for (auto& g : scaled.groundings) g.lambda *= k;
      const auto got = project(scaled).probs();
      for (std::size_t y = 0; y < ref.size(); ++y) worst = std::max(worst, std::abs(got[y] - ref[y]));
    }
  }
  const TagSet tags;
  const auto kk = static_cast<std::size_t>(tags.size());
  auto soft_transitions = [&](double lambda, double c) {
    auto rules = transition_rules(tags);
    for (auto& r : rules) r.lambda = lambda;
    return ChainPenalties::from_rules<std::monostate>(rules, kk, c);
  };
  for (int trial = 0; trial < 50; ++trial) {
    const auto base = random_log_probs(rng, 6, kk);
    const auto ref = chain_marginals(ChainTeacherQuery(base, soft_transitions(1.5, 6.0)));
    for (double k : {0.25, 3.0}) {
      const auto got = chain_marginals(ChainTeacherQuery(base, soft_transitions(1.5 * k, 6.0 / k)));
      for (std::size_t t = 0; t < ref.size(); ++t)
        for (std::size_t y = 0; y < kk; ++y) worst = std::max(worst, std::abs(got[t][y] - ref[t][y]));
    }
  }
  return {bad == 0 && worst <= 1e-12,
          "schedule_violations=" + std::to_string(bad) + " max_teacher_difference=" + fmt(worst)};
}

// ---------------------------------------------------------------------------
// 10. List detection

struct ExpectedItem {
  std::size_t sentence;
  Span text;
  std::vector<Span> blocks;
};

struct ExpectedList {
  ListKind kind;
  std::vector<ExpectedItem> items;
};

struct ListCase {
  std::vector<std::string> sentences;
  std::vector<ExpectedList> lists;
};

std::vector<std::string> split(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

// Single-block item at sentence s covering [b, e).
ExpectedItem item(std::size_t s, std::size_t b, std::size_t e) { return {s, {b, e}, {{b, e}}}; }

std::vector<ListCase> list_corpus() {
  const auto N = ListKind::Numbered;
  const auto D = ListKind::Dashed;
  return {
      {{"1. Juventus 2. Barcelona 3. Milan"}, {{N, {item(0, 1, 2), item(0, 3, 4), item(0, 5, 6)}}}},
      {{"1. Juventus 2. Barcelona"}, {}},
      {{"- The Quick Brown Fox Jumps", "- Ajax", "- Porto"}, {}},
      {{"- Ajax", "- Porto", "- Celtic"}, {{D, {item(0, 1, 2), item(1, 1, 2), item(2, 1, 2)}}}},
      {{"1. Ajax 2. porto 3. Celtic"}, {}},
      {{"1. Ajax 2. porto 3. Celtic 4. Benfica"}, {{N, {item(0, 1, 2), item(0, 5, 6), item(0, 7, 8)}}}},
      {{"Standings :", "1 . Ajax , Amsterdam", "2 . Porto , Lisbon", "3 . Celtic , Glasgow ."},
       {{N,
         {{1, {2, 5}, {{2, 3}, {4, 5}}}, {2, {2, 5}, {{2, 3}, {4, 5}}}, {3, {2, 6}, {{2, 3}, {4, 5}}}}}}},
      {{"2. Ajax 3. Porto 4. Celtic"}, {}},
      {{"1. Ajax 3. Porto 4. Celtic"}, {}},
      {{"The match ended 2 - 1 in Milan ."}, {}},
      {{"- Ajax - Porto - Celtic - Benfica"}, {{D, {item(0, 1, 2), item(0, 3, 4), item(0, 5, 6), item(0, 7, 8)}}}},
      {{"1. John Smith ( PER ) 2. Maria Garcia ( PER ) 3. Li Wei ( PER )"},
       {{N,
         {{0, {1, 6}, {{1, 3}, {4, 5}}}, {0, {7, 12}, {{7, 9}, {10, 11}}}, {0, {13, 18}, {{13, 15}, {16, 17}}}}}}},
      {{"1. New York Rangers 2. Los Angeles Kings 3. San Jose Sharks"},
       {{N, {item(0, 1, 4), item(0, 5, 8), item(0, 9, 12)}}}},
      {{"1. New York Rangers Club 2. Ajax 3. Porto 4. Celtic"},
       {{N, {item(0, 6, 7), item(0, 8, 9), item(0, 10, 11)}}}},
      {{"Results : 1. Ajax 3 2. Porto 1 3. Celtic 0"}, {{N, {item(0, 3, 5), item(0, 6, 8), item(0, 9, 11)}}}},
      {{"Ajax beat Porto 2-1 in Amsterdam .", "Fans of Celtic travelled to Lisbon ."}, {}},
      {{"1. Ajax 2. Porto 3. Celtic", "He said so .", "- Paris", "- Berlin", "- Rome"},
       {{N, {item(0, 1, 2), item(0, 3, 4), item(0, 5, 6)}}, {D, {item(2, 1, 2), item(3, 1, 2), item(4, 1, 2)}}}},
      {{"Selected : 1. Ajax", "2. Porto", "3. Celtic ."},
       {{N, {item(0, 3, 4), item(1, 1, 2), {2, {1, 3}, {{1, 2}}}}}}},
      {{"1. Ajax", "Then 2. Porto", "3. Celtic"}, {}},
      {{"- ajax - porto - Celtic"}, {}},
      {{"- - - Ajax"}, {}},
      {{"1. Oslo ;", "2. Rome ;", "3. Lima ;", "4. Cairo ."},
       {{N, {{0, {1, 3}, {{1, 2}}}, {1, {1, 3}, {{1, 2}}}, {2, {1, 3}, {{1, 2}}}, {3, {1, 3}, {{1, 2}}}}}}},
      {{"Top 3 . Ajax 2 . Porto"}, {}},
      {{"- Paris , France - Berlin , Germany - Rome"},
       {{D, {{0, {1, 4}, {{1, 2}, {3, 4}}}, {0, {5, 8}, {{5, 6}, {7, 8}}}, item(0, 9, 10)}}}},
      {{"1. Ajax - Porto 2. Celtic 3. Benfica"}, {}},
      {{"1. Bank of America 2. Ajax 3. Porto"}, {}},
      {{"1. Ajax 2. Porto 3. Celtic 1. Oslo 2. Rome 3. Lima"},
       {{N, {item(0, 1, 2), item(0, 3, 4), item(0, 5, 6)}}, {N, {item(0, 7, 8), item(0, 9, 10), item(0, 11, 12)}}}},
      {{"1. Ajax 2. Porto 12345. Celtic"}, {}},
      {{"the cast - the plot - the score"}, {}},
      {{"Included :", "- Acme Corp , Paris", "- Global Bank", "- Nordic Air , Oslo", "- Apex Energy", "- Fiat"},
       {{D,
         {{1, {1, 5}, {{1, 3}, {4, 5}}},
          item(2, 1, 3),
          {3, {1, 5}, {{1, 3}, {4, 5}}},
          item(4, 1, 3),
          item(5, 1, 2)}}}},
  };
}

Outcome list_detection() {
  const auto corpus = list_corpus();
  int mismatched = 0, lists = 0;
  std::string first_bad;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    std::vector<std::vector<std::string>> sents;
    for (const auto& s : corpus[d].sentences) sents.push_back(split(s));
    const std::string id = "doc" + std::to_string(d);
    std::vector<ListGroup> want;
    for (const auto& e : corpus[d].lists) {
      ListGroup g{id, e.kind, {}, {}};
      for (const auto& it : e.items) g.items.push_back(ListItem{it.sentence, it.text, it.blocks});
      // Every pair of items, aligned block by block on first tokens.
      for (std::size_t i = 0; i < g.items.size(); ++i)
        for (std::size_t j = i + 1; j < g.items.size(); ++j)
          for (std::size_t b = 0; b < std::min(g.items[i].blocks.size(), g.items[j].blocks.size()); ++b)
            g.counterparts.push_back({i, j, b, TokenRef{g.items[i].sentence, g.items[i].blocks[b].begin},
                                      TokenRef{g.items[j].sentence, g.items[j].blocks[b].begin}});
      want.push_back(std::move(g));
    }
    lists += static_cast<int>(want.size());
    if (detect_lists(sents, id) != want) {
      ++mismatched;
      if (first_bad.empty()) first_bad = " first_mismatch=" + id;
    }
  }
  return {mismatched == 0 && corpus.size() == 30, "documents=" + std::to_string(corpus.size()) + " expected_lists=" +
                                                      std::to_string(lists) + " mismatched_documents=" +
                                                      std::to_string(mismatched) + first_bad};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "soft logic truth tables and grid closure", 1.0, soft_logic},
      {2, "closed-form projection matches numeric primal optimum", 30.0, projection_vs_primal},
      {3, "chain marginals and MAP match enumeration; hard transitions decode validly", 60.0, chain_inference},
      {4, "blocked Gibbs matches enumeration", 120.0, gibbs_vs_enumeration},
      {5, "analytic gradients match finite differences", 60.0, gradient_check_all},
      {6, "sentiment: base < student < teacher, teacher gain >= 2 points", 300.0, sentiment_experiment},
      {7, "NER: base < student < teacher, teacher gain exceeds sentiment", 600.0, ner_experiment},
      {8, "5% labels: semi-supervised student >= supervised student", 300.0, semi_experiment},
      {9, "imitation schedule and confidence scaling invariants", 1.0, invariants},
      {10, "handcrafted list corpus", 1.0, list_detection},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_seconds;
    const bool pass = o.ok && in_time;
    failed += !pass;
    std::cout << "criterion " << c.id << ": " << (pass ? "PASS" : "FAIL") << " [" << c.name << "] time="
              << std::fixed << std::setprecision(2) << secs << "s limit=" << c.limit_seconds << "s"
              << std::defaultfloat << (in_time ? "" : " (over time limit)") << " " << o.detail << std::endl;
  }
  std::cout << (failed == 0 ? "ALL PASS" : std::to_string(failed) + " FAILED") << std::endl;
  return failed == 0 ? 0 : 1;
}
