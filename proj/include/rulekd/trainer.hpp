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

// Iterative rule distillation: at every minibatch the teacher q is built by
// projecting the current student p onto the rule-regularized subspace, and
// the student takes one step on the mixed hard-label / imitation loss.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rulekd/corpus.hpp"
#include "rulekd/inference.hpp"
#include "rulekd/metrics.hpp"
#include "rulekd/predictors.hpp"
#include "rulekd/projection.hpp"
#include "rulekd/rules.hpp"
#include "rulekd/tags.hpp"

namespace rulekd {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Imitation schedule

/// pi(t) = min(pi0, 1 - alpha^t).
struct ImitationSchedule {
  double pi0 = 1.0;
  double alpha = 0.95;

  static ImitationSchedule classification() { return {1.0, 0.95}; }
  static ImitationSchedule tagging() { return {0.9, 0.9}; }

  void validate() const {
    if (!(pi0 >= 0.0 && pi0 <= 1.0)) throw ConfigError("imitation schedule: pi0 must lie in [0,1]");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("imitation schedule: alpha must lie in (0,1]");
  }
};

inline double imitation_rate(const ImitationSchedule& s, std::size_t t) {
  s.validate();
  return std::min(s.pi0, 1.0 - std::pow(s.alpha, static_cast<double>(t)));
}

// ---------------------------------------------------------------------------
// Configuration

enum class Task { Sentiment, Ner };
enum class Mode { Base, Distill, Semi, ProjectAfter, Pipeline };

inline std::string to_string(Task t) { return t == Task::Sentiment ? "sentiment" : "ner"; }

inline Task parse_task(std::string_view s) {
  if (s == "sentiment") return Task::Sentiment;
  if (s == "ner") return Task::Ner;
  throw ConfigError("unknown task '" + std::string(s) + "' (expected sentiment or ner)");
}

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::Base: return "base";
    case Mode::Distill: return "distill";
    case Mode::Semi: return "semi";
    case Mode::ProjectAfter: return "project-after";
    case Mode::Pipeline: return "pipeline";
  }
  return "?";
}

inline Mode parse_mode(std::string_view s) {
  for (Mode m : {Mode::Base, Mode::Distill, Mode::Semi, Mode::ProjectAfter, Mode::Pipeline})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected base, distill, semi, project-after, pipeline)");
}

struct ButRuleSpec {
  double lambda = 1.0;
  ButVariant variant = ButVariant::Avg;
};
struct TransitionRuleSpec {
  double lambda = kHardRule;
};
struct ListRuleSpec {
  double lambda = 1.0;
  bool normalize = false;  // divide the category distance by sqrt(2)
};

struct RuleSet {
  std::optional<ButRuleSpec> but;
  std::optional<TransitionRuleSpec> transitions;
  std::optional<ListRuleSpec> list;

  [[nodiscard]] bool empty() const { return !but && !transitions && !list; }

  void check_task(Task task) const {
    if (task == Task::Sentiment && (transitions || list))
      throw ConfigError("rules bioes_transitions/list_counterpart apply to the ner task only");
    if (task == Task::Ner && but) throw ConfigError("rule but applies to the sentiment task only");
  }

  /// Same rules with every finite confidence multiplied by k.
  [[nodiscard]] RuleSet scaled(double k) const {
    RuleSet r = *this;
    if (r.but) r.but->lambda *= k;
    if (r.transitions && std::isfinite(r.transitions->lambda)) r.transitions->lambda *= k;
    if (r.list) r.list->lambda *= k;
    return r;
  }
};

struct TrainConfig {
  double c = 6.0;
  std::optional<ImitationSchedule> schedule;  // task default when unset
  std::size_t epochs = 30;
  std::size_t batch_size = 50;  // sentences (sentiment) or documents (ner)
  std::size_t patience = 5;     // early-stopping epochs on the dev split
  std::uint64_t seed = 1;
  Mode mode = Mode::Distill;
  RuleSet rules;
  double learning_rate = 1.0;
  double rho = 0.95;
  double eps = 1e-6;
  std::size_t min_count = 2;  // rarer training tokens map to <unk>
  std::size_t gibbs_sweeps_train = 200;
  std::size_t gibbs_sweeps_eval = 2000;
  std::size_t group_max = 8;
  TextClassifierConfig text;
  SequenceTaggerConfig tagger;

  [[nodiscard]] ImitationSchedule schedule_for(Task task) const {
    if (schedule) return *schedule;
    return task == Task::Sentiment ? ImitationSchedule::classification() : ImitationSchedule::tagging();
  }

  void validate() const {
    if (!(c >= 0.0) || !std::isfinite(c)) throw ConfigError("C must be a finite value >= 0");
    if (schedule) schedule->validate();
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (patience == 0) throw ConfigError("patience must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (gibbs_sweeps_train == 0 || gibbs_sweeps_eval == 0) throw ConfigError("gibbs sweeps must be >= 1");
    if (group_max == 0) throw ConfigError("group_max must be >= 1");
  }
};

/// Ordered metric map; keys are documented in the README.
struct EvalReport {
  std::map<std::string, double> metrics;

  [[nodiscard]] bool has(const std::string& k) const { return metrics.count(k) > 0; }
  [[nodiscard]] double at(const std::string& k) const {
    auto it = metrics.find(k);
    if (it == metrics.end()) throw std::out_of_range("report has no metric '" + k + "'");
    return it->second;
  }
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double pi = 0.0;
  double loss = 0.0;  // mean minibatch loss
  double dev = std::numeric_limits<double>::quiet_NaN();

  friend bool operator==(const EpochRecord& a, const EpochRecord& b) {
    auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    return a.epoch == b.epoch && a.pi == b.pi && a.loss == b.loss && same(a.dev, b.dev);
  }
};

/// Instance-level diagnostics gathered while building teachers.
struct TeacherStats {
  std::size_t skipped_groundings = 0;  // infeasible hard constraints dropped
  std::size_t gibbs_groups = 0;

  TeacherStats& operator+=(const TeacherStats& o) {
    skipped_groundings += o.skipped_groundings;
    gibbs_groups += o.gibbs_groups;
    return *this;
  }
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::vector<double> floored_log(std::span<const double> p) {
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = std::log(std::max(p[i], 1e-300));
  return out;
}

inline int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline double kl_divergence(std::span<const double> q, std::span<const double> p) {
  double kl = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i)
    if (q[i] > 0.0) kl += q[i] * (std::log(q[i]) - std::log(std::max(p[i], kLogFloor)));
  return kl;
}

}  // namespace detail

/// Vocabulary over tokens seen at least `min_count` times, in first-seen order.
inline Vocabulary build_vocabulary(const std::vector<const std::vector<std::string>*>& token_lists,
                                   std::size_t min_count) {
  std::unordered_map<std::string, std::size_t> count;
  std::vector<std::string> order;
  for (const auto* toks : token_lists) {
    for (const auto& t : *toks) {
      if (count[t]++ == 0) order.push_back(t);
    }
  }
  Vocabulary v;
  for (const auto& t : order)
    if (count[t] >= min_count) v.add(t);
  return v;
}

// ---------------------------------------------------------------------------
// Generic training loop

template <class Model>
struct FitResult {
  Model model;
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  TeacherStats stats;
};

/// Trains `model` on `pool`. With `use_teacher` the soft targets come from
/// the teacher built on `frozen` when given, else on the current student;
/// `pi_of(epoch)` sets the imitation weight. Each labeled minibatch is
/// paired with the next minibatch of `unlabeled`, which adds its imitation
/// term to the same step. Early-stops on `dev` by the student's score and
/// returns the best snapshot.
template <class TaskT>
FitResult<typename TaskT::Model> fit(const TaskT& task, typename TaskT::Model model,
                                     std::span<const typename TaskT::Instance> pool,
                                     std::span<const typename TaskT::Instance> dev, const TrainConfig& cfg,
                                     bool use_teacher, const std::function<double(std::size_t)>& pi_of,
                                     const typename TaskT::Model* frozen = nullptr,
                                     std::span<const typename TaskT::Instance> unlabeled = {}) {
  using Example = typename TaskT::Example;
  using Instance = typename TaskT::Instance;
  Adadelta opt(cfg.rho, cfg.eps, cfg.learning_rate);
  std::mt19937_64 rng(detail::mix_seed(cfg.seed, 0x5eed));
  std::mt19937_64 u_rng(detail::mix_seed(cfg.seed, 0x0a1));
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> u_order(unlabeled.size());
  std::iota(u_order.begin(), u_order.end(), std::size_t{0});
  std::shuffle(u_order.begin(), u_order.end(), u_rng);
  std::size_t u_next = 0;

  FitResult<typename TaskT::Model> out{model, {}, 0, {}};
  double best = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double pi = use_teacher ? pi_of(epoch) : 0.0;
    std::shuffle(order.begin(), order.end(), rng);
    double loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<const Instance*> batch;
      for (std::size_t i = start; i < stop; ++i) batch.push_back(&pool[order[i]]);
      const auto& source = frozen ? *frozen : model;
      const std::uint64_t seed = detail::mix_seed(detail::mix_seed(cfg.seed, epoch), start);
      const bool teach = use_teacher && pi > 0.0;
      const std::vector<Example> examples = task.examples(source, batch, pi, teach, seed, out.stats);
      if (unlabeled.empty() || !teach) {
        loss += backward_and_step(model, std::span<const Example>(examples), opt);
      } else {
        std::vector<const Instance*> u_batch;
        for (std::size_t i = 0; i < std::min(cfg.batch_size, unlabeled.size()); ++i) {
          if (u_next == u_order.size()) {
            std::shuffle(u_order.begin(), u_order.end(), u_rng);
            u_next = 0;
          }
          u_batch.push_back(&unlabeled[u_order[u_next++]]);
        }
        const auto u_examples = task.examples(source, u_batch, pi, true, detail::mix_seed(seed, 0x0a1), out.stats);
        model.parameters().zero_grad();
        loss += accumulate_gradients(model, std::span<const Example>(examples));
        loss += accumulate_gradients(model, std::span<const Example>(u_examples));
        opt.step(model.parameters());
      }
      ++batches;
    }
    EpochRecord rec{epoch, pi, batches ? loss / static_cast<double>(batches) : 0.0,
                    std::numeric_limits<double>::quiet_NaN()};
    if (!dev.empty()) {
      rec.dev = task.dev_score(model, dev);
      if (rec.dev > best) {
        best = rec.dev;
        out.model = model;
        out.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        out.log.push_back(rec);
        break;
      }
    }
    out.log.push_back(rec);
  }
  if (dev.empty()) {
    out.model = std::move(model);
    out.best_epoch = out.log.empty() ? 0 : out.log.back().epoch;
  }
  return out;
}

template <class Model>
struct RunResult {
  Model student;
  std::optional<Model> teacher_base;  // model projected for q when it differs from the student
  EvalReport report;
  std::vector<EpochRecord> log;
  TeacherStats stats;
};

/// Runs one mode end to end: training, then evaluation on `test`.
template <class TaskT>
RunResult<typename TaskT::Model> run_mode(const TaskT& task, Task kind,
                                          const std::vector<typename TaskT::Instance>& labeled,
                                          const std::vector<typename TaskT::Instance>& unlabeled,
                                          const std::vector<typename TaskT::Instance>& dev,
                                          const std::vector<typename TaskT::Instance>& test, const TrainConfig& cfg) {
  using Instance = typename TaskT::Instance;
  cfg.validate();
  cfg.rules.check_task(kind);
  const auto sched = cfg.schedule_for(kind);
  auto pi_of = [sched](std::size_t t) { return imitation_rate(sched, t); };
  auto fresh = [&](std::uint64_t salt) { return task.make_model(detail::mix_seed(cfg.seed, salt)); };
  const std::span<const Instance> dev_span(dev), test_span(test);
  const bool rules = !cfg.rules.empty();

  auto base_fit = [&]() { return fit(task, fresh(1), std::span<const Instance>(labeled), dev_span, cfg, false, pi_of); };

  switch (cfg.mode) {
    case Mode::Base: {
      auto f = base_fit();
      auto rep = task.evaluate(f.model, nullptr, test_span, cfg.seed);
      return {std::move(f.model), std::nullopt, std::move(rep), std::move(f.log), f.stats};
    }
    case Mode::Distill:
    case Mode::Semi: {
      const std::span<const Instance> u_span =
          cfg.mode == Mode::Semi ? std::span<const Instance>(unlabeled) : std::span<const Instance>();
      auto f = fit(task, fresh(1), std::span<const Instance>(labeled), dev_span, cfg, rules, pi_of, nullptr, u_span);
      auto rep = task.evaluate(f.model, &f.model, test_span, cfg.seed);
      return {std::move(f.model), std::nullopt, std::move(rep), std::move(f.log), f.stats};
    }
    case Mode::ProjectAfter: {
      auto f = base_fit();
      auto rep = task.evaluate(f.model, &f.model, test_span, cfg.seed);
      return {std::move(f.model), std::nullopt, std::move(rep), std::move(f.log), f.stats};
    }
    case Mode::Pipeline: {
      auto stage1 = base_fit();
      auto one = [](std::size_t) { return 1.0; };
      auto stage2 = fit(task, fresh(2), std::span<const Instance>(labeled), dev_span, cfg, true, one, &stage1.model);
      auto rep = task.evaluate(stage2.model, &stage1.model, test_span, cfg.seed);
      const std::span<const Instance> train_span(labeled);
      rep.metrics["pipeline_student_kl"] = task.mean_teacher_kl(stage2.model, stage1.model, train_span, cfg.seed);
      rep.metrics["pipeline_base_kl"] = task.mean_teacher_kl(stage1.model, stage1.model, train_span, cfg.seed);
      auto log = stage1.log;
      for (auto r : stage2.log) {
        r.epoch += stage1.log.size();
        log.push_back(r);
      }
      stage1.stats += stage2.stats;
      return {std::move(stage2.model), std::move(stage1.model), std::move(rep), std::move(log), stage1.stats};
    }
  }
  throw ConfigError("unhandled mode");
}

// ---------------------------------------------------------------------------
// Sentiment classification

struct SentimentInstance {
  std::vector<int> ids;
  std::vector<int> clause_b;  // empty when the sentence has no A-but-B structure
  int label = -1;             // -1 for unlabeled
};

class SentimentTask {
 public:
  using Model = TextClassifier;
  using Instance = SentimentInstance;
  using Example = ClassificationExample;

  SentimentTask(Vocabulary vocab, TrainConfig cfg) : vocab_(std::move(vocab)), cfg_(std::move(cfg)) {}

  static Vocabulary vocabulary_for(const std::vector<LabeledSentence>& labeled,
                                   const std::vector<LabeledSentence>& unlabeled, std::size_t min_count) {
    std::vector<const std::vector<std::string>*> lists;
    for (const auto& s : labeled) lists.push_back(&s.tokens);
    for (const auto& s : unlabeled) lists.push_back(&s.tokens);
    return build_vocabulary(lists, min_count);
  }

  [[nodiscard]] Instance encode(const LabeledSentence& s, bool labeled) const {
    Instance in;
    in.ids = vocab_.encode(s.tokens);
    if (auto b = detect_but(s.tokens))
      in.clause_b.assign(in.ids.begin() + static_cast<std::ptrdiff_t>(b->clause_b_begin),
                         in.ids.begin() + static_cast<std::ptrdiff_t>(b->clause_b_end));
    if (labeled) {
      if (s.label < 0 || static_cast<std::size_t>(s.label) >= cfg_.text.classes)
        throw ConfigError("label " + std::to_string(s.label) + " outside the configured classes");
      in.label = s.label;
    }
    return in;
  }

  [[nodiscard]] std::vector<Instance> encode_all(const std::vector<LabeledSentence>& data, bool labeled) const {
    std::vector<Instance> out;
    out.reserve(data.size());
    for (const auto& s : data) out.push_back(encode(s, labeled));
    return out;
  }

  [[nodiscard]] Model make_model(std::uint64_t seed) const { return Model(vocab_, cfg_.text, seed); }
  [[nodiscard]] const Vocabulary& vocab() const { return vocab_; }

  /// Teacher distribution for one instance given the student's prediction `p`.
  [[nodiscard]] Distribution teacher(const Model& m, const Instance& in, const Distribution& p,
                                     TeacherStats& stats) const {
    if (!cfg_.rules.but || in.clause_b.empty() || m.classes() != 2) return p;
    const auto rule = but_rule(cfg_.rules.but->lambda, cfg_.rules.but->variant);
    SentimentContext ctx{ButStructure{}, m.forward(in.clause_b)[1]};
    ProjectionProblem prob;
    prob.base_log_probs = detail::floored_log(p);
    prob.c = cfg_.c;
    Grounding g{rule.lambda, {}};
    for (int y = 0; y < 2; ++y) g.truth.push_back(rule.ground(ctx, y).at(0).value());
    prob.groundings.push_back(std::move(g));
    try {
      return project(prob).probs();
    } catch (const InfeasibleConstraints&) {
      ++stats.skipped_groundings;
      return p;
    }
  }

  [[nodiscard]] std::vector<Example> examples(const Model& source, const std::vector<const Instance*>& batch,
                                              double pi, bool use_teacher, std::uint64_t /*seed*/,
                                              TeacherStats& stats) const {
    std::vector<Example> out;
    out.reserve(batch.size());
    for (const auto* in : batch) {
      Example ex{in->ids, MixedTarget{in->label, {}, pi}};
      if (use_teacher) ex.target.soft = teacher(source, *in, source.forward(in->ids), stats);
      if (!use_teacher) ex.target.pi = 0.0;
      out.push_back(std::move(ex));
    }
    return out;
  }

  [[nodiscard]] double dev_score(const Model& m, std::span<const Instance> dev) const {
    std::vector<int> gold, pred;
    for (const auto& in : dev) {
      gold.push_back(in.label);
      pred.push_back(detail::argmax(m.forward(in.ids)));
    }
    return accuracy(gold, pred);
  }

  /// p metrics from `student`; q metrics from the projection of `teacher_base` when given.
  [[nodiscard]] EvalReport evaluate(const Model& student, const Model* teacher_base, std::span<const Instance> data,
                                    std::uint64_t /*seed*/) const {
    EvalReport r;
    TeacherStats stats;
    std::vector<int> gold, p_pred, q_pred, gold_but, p_but, q_but;
    for (const auto& in : data) {
      const auto p = student.forward(in.ids);
      gold.push_back(in.label);
      p_pred.push_back(detail::argmax(p));
      if (!in.clause_b.empty()) {
        gold_but.push_back(in.label);
        p_but.push_back(p_pred.back());
      }
      if (teacher_base) {
        const auto base = teacher_base == &student ? p : teacher_base->forward(in.ids);
        q_pred.push_back(detail::argmax(teacher(*teacher_base, in, base, stats)));
        if (!in.clause_b.empty()) q_but.push_back(q_pred.back());
      }
    }
    r.metrics["instances"] = static_cast<double>(data.size());
    r.metrics["p_accuracy"] = accuracy(gold, p_pred);
    r.metrics["p_accuracy_but"] = accuracy(gold_but, p_but);
    if (teacher_base) {
      r.metrics["q_accuracy"] = accuracy(gold, q_pred);
      r.metrics["q_accuracy_but"] = accuracy(gold_but, q_but);
      r.metrics["q_skipped_groundings"] = static_cast<double>(stats.skipped_groundings);
    }
    return r;
  }

  [[nodiscard]] double mean_teacher_kl(const Model& student, const Model& teacher_base,
                                       std::span<const Instance> data, std::uint64_t /*seed*/) const {
    if (data.empty()) return 0.0;
    TeacherStats stats;
    double total = 0.0;
    for (const auto& in : data) {
      const auto q = teacher(teacher_base, in, teacher_base.forward(in.ids), stats);
      total += detail::kl_divergence(q, student.forward(in.ids));
    }
    return total / static_cast<double>(data.size());
  }

 private:
  Vocabulary vocab_;
  TrainConfig cfg_;
};

// ---------------------------------------------------------------------------
// Named-entity tagging

struct NerInstance {
  std::vector<std::vector<int>> ids;   // per sentence
  std::vector<std::vector<int>> gold;  // per sentence; empty when unlabeled
  std::vector<std::pair<TokenRef, TokenRef>> counterparts;
};

class NerTask {
 public:
  using Model = SequenceTagger;
  using Instance = NerInstance;
  using Example = TaggingExample;

  NerTask(Vocabulary vocab, TrainConfig cfg, TagSet tags = TagSet())
      : vocab_(std::move(vocab)), cfg_(std::move(cfg)), tags_(std::move(tags)) {
    cfg_.tagger.tags = static_cast<std::size_t>(tags_.size());
    const auto k = static_cast<std::size_t>(tags_.size());
    penalties_ = ChainPenalties::none(k);
    if (cfg_.rules.transitions) {
      auto rules = transition_rules(tags_);
      for (auto& r : rules) r.lambda = cfg_.rules.transitions->lambda;
      penalties_ = ChainPenalties::from_rules<std::monostate>(rules, k, cfg_.c);
    }
    hard_mask_ = penalties_;
    for (auto* v : {&hard_mask_.start, &hard_mask_.end})
      for (auto& x : *v) x = std::isinf(x) ? x : 0.0;
    for (auto& row : hard_mask_.transition)
      for (auto& x : row) x = std::isinf(x) ? x : 0.0;
    if (cfg_.rules.list)
      link_table_ = pair_penalty_table<std::monostate>(
          list_counterpart_rule(tags_, cfg_.rules.list->lambda, cfg_.rules.list->normalize), k, cfg_.c);
  }

  static Vocabulary vocabulary_for(const std::vector<Document>& labeled, const std::vector<Document>& unlabeled,
                                   std::size_t min_count) {
    std::vector<const std::vector<std::string>*> lists;
    for (const auto* docs : {&labeled, &unlabeled})
      for (const auto& d : *docs)
        for (const auto& s : d.sentences) lists.push_back(&s.tokens);
    return build_vocabulary(lists, min_count);
  }

  [[nodiscard]] const TagSet& tags() const { return tags_; }
  [[nodiscard]] const Vocabulary& vocab() const { return vocab_; }
  [[nodiscard]] const ChainPenalties& penalties() const { return penalties_; }

  [[nodiscard]] Instance encode(const Document& d, bool labeled) const {
    Instance in;
    for (const auto& s : d.sentences) {
      in.ids.push_back(vocab_.encode(s.tokens));
      if (labeled) in.gold.push_back(s.tags);
    }
    for (const auto& g : detect_lists(d))
      for (const auto& c : g.counterparts) in.counterparts.emplace_back(c.a, c.b);
    return in;
  }

  [[nodiscard]] std::vector<Instance> encode_all(const std::vector<Document>& docs, bool labeled) const {
    std::vector<Instance> out;
    out.reserve(docs.size());
    for (const auto& d : docs) out.push_back(encode(d, labeled));
    return out;
  }

  [[nodiscard]] Model make_model(std::uint64_t seed) const { return Model(vocab_, cfg_.tagger, seed); }

  struct DocTeacher {
    std::vector<Table> marginals;               // per sentence, T x K
    std::vector<std::vector<int>> decode;       // filled when requested
  };

  /// Teacher marginals (and optionally decodes) for a document. Sentences
  /// joined by counterpart links are handled jointly by Gibbs sampling;
  /// others exactly by forward-backward.
  [[nodiscard]] DocTeacher teacher(const Model& m, const Instance& doc, std::uint64_t seed, std::size_t sweeps,
                                   bool want_decode, TeacherStats& stats) const {
    const std::size_t n = doc.ids.size();
    std::vector<Table> base(n);
    for (std::size_t s = 0; s < n; ++s) {
      for (const auto& row : m.forward(doc.ids[s])) base[s].push_back(detail::floored_log(row));
    }
    DocTeacher out{std::vector<Table>(n), {}};
    if (want_decode) out.decode.resize(n);

    std::vector<std::pair<std::size_t, std::size_t>> sentence_links;
    if (cfg_.rules.list)
      for (const auto& [a, b] : doc.counterparts) sentence_links.emplace_back(a.sentence, b.sentence);
    const auto groups = form_groups(n, sentence_links, cfg_.group_max, seed);

    std::vector<std::vector<std::size_t>> links_of_group(groups.groups.size());
    std::vector<std::size_t> group_of(n), member_of(n);
    for (std::size_t g = 0; g < groups.groups.size(); ++g)
      for (std::size_t i = 0; i < groups.groups[g].size(); ++i) {
        group_of[groups.groups[g][i]] = g;
        member_of[groups.groups[g][i]] = i;
      }
    for (auto li : groups.kept_links) links_of_group[group_of[sentence_links[li].first]].push_back(li);

    for (std::size_t g = 0; g < groups.groups.size(); ++g) {
      const auto& members = groups.groups[g];
      if (links_of_group[g].empty()) {
        for (auto s : members) exact_sentence(base[s], out, s, want_decode, stats);
        continue;
      }
      GroupTeacherQuery q;
      q.penalties = penalties_;
      for (auto s : members) q.members.push_back(base[s]);
      // The rule is stated for each entity against each of its counterparts,
      // so every pair contributes a grounding in both directions.
      for (auto li : links_of_group[g]) {
        const auto& [a, b] = doc.counterparts[li];
        q.links.push_back(CounterpartLink{member_of[a.sentence], a.position, member_of[b.sentence], b.position, link_table_});
        q.links.push_back(CounterpartLink{member_of[b.sentence], b.position, member_of[a.sentence], a.position, link_table_});
      }
      q.settings.sweeps = sweeps;
      q.settings.seed = detail::mix_seed(seed, g);
      std::vector<Table> marg;
      try {
        marg = gibbs_soft_predict(q);
      } catch (const InfeasibleConstraints&) {
        for (auto s : members) exact_sentence(base[s], out, s, want_decode, stats);
        continue;
      }
      ++stats.gibbs_groups;
      for (std::size_t i = 0; i < members.size(); ++i) {
        const auto s = members[i];
        if (want_decode) {
          Table lm(marg[i].size());
          for (std::size_t t = 0; t < marg[i].size(); ++t) lm[t] = detail::floored_log(marg[i][t]);
          out.decode[s] = detail::chain_viterbi(lm, hard_mask_);
        }
        out.marginals[s] = std::move(marg[i]);
      }
    }
    return out;
  }

  [[nodiscard]] std::vector<Example> examples(const Model& source, const std::vector<const Instance*>& batch,
                                              double pi, bool use_teacher, std::uint64_t seed,
                                              TeacherStats& stats) const {
    std::vector<Example> out;
    for (std::size_t d = 0; d < batch.size(); ++d) {
      const auto& doc = *batch[d];
      DocTeacher q;
      if (use_teacher) q = teacher(source, doc, detail::mix_seed(seed, d), cfg_.gibbs_sweeps_train, false, stats);
      for (std::size_t s = 0; s < doc.ids.size(); ++s) {
        Example ex{doc.ids[s], {}};
        for (std::size_t t = 0; t < doc.ids[s].size(); ++t) {
          MixedTarget mt{doc.gold.empty() ? -1 : doc.gold[s][t], {}, use_teacher ? pi : 0.0};
          if (use_teacher) mt.soft = q.marginals[s][t];
          ex.targets.push_back(std::move(mt));
        }
        out.push_back(std::move(ex));
      }
    }
    return out;
  }

  [[nodiscard]] std::vector<int> student_decode(const Model& m, const std::vector<int>& ids) const {
    std::vector<int> y;
    for (const auto& row : m.forward(ids)) y.push_back(detail::argmax(row));
    return y;
  }

  [[nodiscard]] double dev_score(const Model& m, std::span<const Instance> dev) const {
    SpanCounts c;
    for (const auto& doc : dev)
      for (std::size_t s = 0; s < doc.ids.size(); ++s) c += count_spans(tags_, doc.gold[s], student_decode(m, doc.ids[s]));
    return c.f1();
  }

  [[nodiscard]] EvalReport evaluate(const Model& student, const Model* teacher_base, std::span<const Instance> data,
                                    std::uint64_t seed) const {
    EvalReport r;
    TeacherStats stats;
    SpanCounts pc, qc;
    std::size_t sentences = 0, p_valid = 0, q_valid = 0;
    for (std::size_t d = 0; d < data.size(); ++d) {
      const auto& doc = data[d];
      DocTeacher q;
      if (teacher_base)
        q = teacher(*teacher_base, doc, detail::mix_seed(seed, 0xe7a1 + d), cfg_.gibbs_sweeps_eval, true, stats);
      for (std::size_t s = 0; s < doc.ids.size(); ++s) {
        ++sentences;
        const auto yp = student_decode(student, doc.ids[s]);
        pc += count_spans(tags_, doc.gold[s], yp);
        p_valid += tags_.valid_sequence(yp);
        if (teacher_base) {
          qc += count_spans(tags_, doc.gold[s], q.decode[s]);
          q_valid += tags_.valid_sequence(q.decode[s]);
        }
      }
    }
    const double n = std::max<double>(1.0, static_cast<double>(sentences));
    r.metrics["instances"] = static_cast<double>(sentences);
    r.metrics["p_precision"] = pc.precision();
    r.metrics["p_recall"] = pc.recall();
    r.metrics["p_f1"] = pc.f1();
    r.metrics["p_validity"] = static_cast<double>(p_valid) / n;
    if (teacher_base) {
      r.metrics["q_precision"] = qc.precision();
      r.metrics["q_recall"] = qc.recall();
      r.metrics["q_f1"] = qc.f1();
      r.metrics["q_validity"] = static_cast<double>(q_valid) / n;
      r.metrics["q_gibbs_groups"] = static_cast<double>(stats.gibbs_groups);
      r.metrics["q_skipped_groundings"] = static_cast<double>(stats.skipped_groundings);
    }
    return r;
  }

  [[nodiscard]] double mean_teacher_kl(const Model& student, const Model& teacher_base,
                                       std::span<const Instance> data, std::uint64_t seed) const {
    TeacherStats stats;
    double total = 0.0;
    std::size_t positions = 0;
    for (std::size_t d = 0; d < data.size(); ++d) {
      const auto q = teacher(teacher_base, data[d], detail::mix_seed(seed, d), cfg_.gibbs_sweeps_train, false, stats);
      for (std::size_t s = 0; s < data[d].ids.size(); ++s) {
        const auto p = student.forward(data[d].ids[s]);
        for (std::size_t t = 0; t < p.size(); ++t, ++positions) total += detail::kl_divergence(q.marginals[s][t], p[t]);
      }
    }
    return positions ? total / static_cast<double>(positions) : 0.0;
  }

 private:
  void exact_sentence(const Table& base, DocTeacher& out, std::size_t s, bool want_decode, TeacherStats& stats) const {
    try {
      const ChainTeacherQuery q(base, penalties_);
      out.marginals[s] = chain_marginals(q);
      if (want_decode) out.decode[s] = chain_map_decode(q);
    } catch (const InfeasibleConstraints&) {
      ++stats.skipped_groundings;
      const ChainTeacherQuery q(base, ChainPenalties::none(penalties_.size()));
      out.marginals[s] = chain_marginals(q);
      if (want_decode) out.decode[s] = chain_map_decode(q);
    }
  }

  Vocabulary vocab_;
  TrainConfig cfg_;
  TagSet tags_;
  ChainPenalties penalties_;
  ChainPenalties hard_mask_;
  Table link_table_;
};

// ---------------------------------------------------------------------------
// Entry points

struct SentimentData {
  std::vector<LabeledSentence> train, dev, test, unlabeled;
};

struct NerData {
  std::vector<Document> train, dev, test, unlabeled;
};

inline RunResult<TextClassifier> train_sentiment(const SentimentData& data, const TrainConfig& cfg) {
  cfg.validate();
  cfg.rules.check_task(Task::Sentiment);
  if (data.train.empty()) throw ConfigError("sentiment: empty training set");
  const SentimentTask task(SentimentTask::vocabulary_for(data.train, data.unlabeled, cfg.min_count), cfg);
  return run_mode(task, Task::Sentiment, task.encode_all(data.train, true), task.encode_all(data.unlabeled, false),
                  task.encode_all(data.dev, true), task.encode_all(data.test, true), cfg);
}

inline RunResult<SequenceTagger> train_ner(const NerData& data, const TrainConfig& cfg) {
  cfg.validate();
  cfg.rules.check_task(Task::Ner);
  if (data.train.empty()) throw ConfigError("ner: empty training set");
  const NerTask task(NerTask::vocabulary_for(data.train, data.unlabeled, cfg.min_count), cfg);
  return run_mode(task, Task::Ner, task.encode_all(data.train, true), task.encode_all(data.unlabeled, false),
                  task.encode_all(data.dev, true), task.encode_all(data.test, true), cfg);
}

/// Mean and sample standard deviation of every metric across seeds, as
/// `<key>_mean` / `<key>_std`.
inline EvalReport aggregate(const std::vector<EvalReport>& per_seed) {
  EvalReport out;
  if (per_seed.empty()) return out;
  for (const auto& [k, v] : per_seed.front().metrics) {
    std::vector<double> vals;
    for (const auto& r : per_seed) vals.push_back(r.at(k));
    const auto ms = mean_std(vals);
    out.metrics[k + "_mean"] = ms.mean;
    out.metrics[k + "_std"] = ms.stddev;
  }
  return out;
}

}  // namespace rulekd
