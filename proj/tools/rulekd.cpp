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

// rulekd command-line driver. Exit codes: 0 success, 1 verification
// failure, 2 usage or configuration error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rulekd/rulekd.hpp"

namespace {

using namespace rulekd;

constexpr int kOk = 0;
constexpr int kVerifyFailed = 1;
constexpr int kUsage = 2;

/// Input problems a user can fix; mapped to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

void print_report(std::ostream& os, const EvalReport& r, const std::string& prefix = "") {
  for (const auto& [k, v] : r.metrics) os << prefix << k << "=" << fmt(v) << "\n";
}

std::string report_record(const EvalReport& r) {
  std::string out;
  for (const auto& [k, v] : r.metrics) out += " " + k + "=" + fmt(v);
  return out;
}

void require_file(const std::string& what, const std::string& path) {
  if (path.empty()) throw UsageError(what + " path is required");
  if (!std::filesystem::is_regular_file(path)) throw UsageError(what + " file not found: " + path);
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config_file;
  std::vector<std::string> sets;
  std::string task, mode, train, dev, test, unlabeled, output_dir, seeds, rules;
};

template <class Model>
void write_outputs(const std::string& dir, std::uint64_t seed, const RunResult<Model>& res, std::ofstream& epochs) {
  save_model(res.student, (std::filesystem::path(dir) / ("model_seed" + std::to_string(seed) + ".ckpt")).string());
  for (const auto& e : res.log)
    epochs << "seed=" << seed << " epoch=" << e.epoch << " pi=" << fmt(e.pi) << " loss=" << fmt(e.loss)
           << " dev=" << fmt(e.dev) << "\n";
}

int run_train(const TrainArgs& a) {
  ConfigLayers layers;
  if (!a.config_file.empty()) {
    require_file("config", a.config_file);
    layers.load_file(a.config_file);
  }
  auto flag = [&](const char* key, const std::string& v) {
    if (!v.empty()) layers.override_value(key, v);
  };
  flag("task", a.task);
  flag("mode", a.mode);
  flag("train", a.train);
  flag("dev", a.dev);
  flag("test", a.test);
  flag("unlabeled", a.unlabeled);
  flag("output_dir", a.output_dir);
  flag("seeds", a.seeds);
  if (!a.rules.empty()) layers.override_value("rules", a.rules == "none" ? "" : a.rules);
  for (const auto& s : a.sets) layers.override_assignment(s);
  const RunConfig rc = layers.resolve();
  const auto& tc = rc.train_config;

  require_file("train", rc.train);
  for (const auto& [what, path] : {std::pair{"dev", rc.dev}, {"test", rc.test}, {"unlabeled", rc.unlabeled}})
    if (!path.empty()) require_file(what, path);
  if (tc.mode == Mode::Semi && rc.unlabeled.empty()) throw UsageError("mode semi needs an unlabeled path");

  std::filesystem::create_directories(rc.output_dir);
  std::ofstream epochs(std::filesystem::path(rc.output_dir) / "epochs.log");
  std::ofstream summary(std::filesystem::path(rc.output_dir) / "summary.txt");
  if (!epochs || !summary) throw UsageError("cannot write to output directory " + rc.output_dir);

  std::vector<EvalReport> reports;
  auto one_seed = [&](std::uint64_t seed, auto&& train_fn) {
    TrainConfig cfg = tc;
    cfg.seed = seed;
    auto res = train_fn(cfg);
    write_outputs(rc.output_dir, seed, res, epochs);
    if (rc.seeds.size() > 1) std::cout << "seed=" << seed << "\n";
    print_report(std::cout, res.report);
    summary << "record=seed seed=" << seed << report_record(res.report) << "\n";
    reports.push_back(res.report);
  };

  if (rc.task == Task::Sentiment) {
    SentimentData data;
    data.train = load_classification(rc.train);
    if (!rc.dev.empty()) data.dev = load_classification(rc.dev);
    if (!rc.test.empty()) data.test = load_classification(rc.test);
    if (!rc.unlabeled.empty()) data.unlabeled = load_classification(rc.unlabeled);
    if (data.test.empty()) data.test = data.dev.empty() ? data.train : data.dev;
    for (auto seed : rc.seeds) one_seed(seed, [&](const TrainConfig& c) { return train_sentiment(data, c); });
  } else {
    const TagSet tags;
    NerData data;
    data.train = load_conll(rc.train, tags);
    if (!rc.dev.empty()) data.dev = load_conll(rc.dev, tags);
    if (!rc.test.empty()) data.test = load_conll(rc.test, tags);
    if (!rc.unlabeled.empty()) data.unlabeled = load_conll(rc.unlabeled, tags);
    if (data.test.empty()) data.test = data.dev.empty() ? data.train : data.dev;
    for (auto seed : rc.seeds) one_seed(seed, [&](const TrainConfig& c) { return train_ner(data, c); });
  }

  const EvalReport agg = aggregate(reports);
  summary << "record=aggregate seeds=" << rc.seeds.size() << report_record(agg) << "\n";
  if (rc.seeds.size() > 1) print_report(std::cout, agg);
  return kOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string model, data, task = "sentiment", rules, config_file, report;
  std::vector<std::string> sets;
  bool use_teacher = false;
  std::uint64_t seed = 1;
};

int run_eval(const EvalArgs& a) {
  ConfigLayers layers;
  if (!a.config_file.empty()) {
    require_file("config", a.config_file);
    layers.load_file(a.config_file);
  }
  layers.override_value("task", a.task);
  if (!a.rules.empty()) layers.override_value("rules", a.rules == "none" ? "" : a.rules);
  for (const auto& s : a.sets) layers.override_assignment(s);
  RunConfig rc = layers.resolve();
  TrainConfig cfg = rc.train_config;
  cfg.seed = a.seed;
  require_file("model", a.model);
  require_file("data", a.data);

  EvalReport rep;
  if (rc.task == Task::Sentiment) {
    const auto model = load_model<TextClassifier>(a.model);
    cfg.text = model.config();
    const SentimentTask task(model.vocab(), cfg);
    const auto inst = task.encode_all(load_classification(a.data), true);
    rep = task.evaluate(model, a.use_teacher ? &model : nullptr, inst, cfg.seed);
  } else {
    const auto model = load_model<SequenceTagger>(a.model);
    cfg.tagger = model.config();
    const NerTask task(model.vocab(), cfg);
    const auto inst = task.encode_all(load_conll(a.data, task.tags()), true);
    rep = task.evaluate(model, a.use_teacher ? &model : nullptr, inst, cfg.seed);
  }
  print_report(std::cout, rep);
  if (!a.report.empty()) {
    std::ofstream os(a.report);
    if (!os) throw UsageError("cannot write report " + a.report);
    print_report(os, rep);
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// generators, list detection, projection check

int run_gen_sentiment(std::uint64_t seed, std::size_t n, const SentimentGenSpec& spec, const std::string& out) {
  const auto data = gen_synthetic_sentiment(seed, n, spec);
  if (out.empty() || out == "-") write_classification(std::cout, data);
  else save_classification(out, data);
  return kOk;
}

int run_gen_ner(std::uint64_t seed, std::size_t docs, const NerGenSpec& spec, const std::string& out) {
  const TagSet tags;
  const auto data = gen_synthetic_ner(seed, docs, spec);
  if (out.empty() || out == "-") write_conll(std::cout, data, tags);
  else save_conll(out, data, tags);
  return kOk;
}

int run_detect_lists(const std::string& input) {
  require_file("input", input);
  const TagSet tags;
  std::size_t total = 0;
  for (const auto& doc : load_conll(input, tags)) {
    for (const auto& g : detect_lists(doc)) {
      ++total;
      std::cout << "list doc=" << g.doc_id << " kind=" << (g.kind == ListKind::Numbered ? "numbered" : "dashed")
                << " items=" << g.items.size() << " counterparts=" << g.counterparts.size() << "\n";
      for (const auto& it : g.items) {
        std::cout << "  item sentence=" << it.sentence << " span=" << it.text.begin << ":" << it.text.end << " text=";
        const auto& toks = doc.sentences[it.sentence].tokens;
        for (std::size_t i = it.text.begin; i < it.text.end; ++i) std::cout << (i > it.text.begin ? " " : "") << toks[i];
        std::cout << "\n";
      }
      for (const auto& c : g.counterparts)
        std::cout << "  counterpart " << c.a.sentence << ":" << c.a.position << " " << c.b.sentence << ":"
                  << c.b.position << "\n";
    }
  }
  std::cout << "lists=" << total << "\n";
  return kOk;
}

int run_verify_projection(std::uint64_t seed, std::size_t trials, double tolerance) {
  if (!(tolerance >= 0.0)) throw UsageError("tolerance must be >= 0");
  const auto res = sweep_projection_oracle(seed, trials, tolerance);
  std::cout << "trials=" << res.trials << "\nfailures=" << res.failures << "\nworst_kl=" << fmt(res.worst_kl) << "\n";
  if (res.passed()) {
    std::cout << "status=pass\n";
    return kOk;
  }
  std::cout << "status=fail\nworst_trial=" << res.worst_trial << "\n";
  std::cout << "worst_base_log_probs=";
  for (std::size_t i = 0; i < res.worst_problem.base_log_probs.size(); ++i)
    std::cout << (i ? "," : "") << fmt(res.worst_problem.base_log_probs[i]);
  std::cout << "\nworst_c=" << fmt(res.worst_problem.c) << "\n";
  for (std::size_t g = 0; g < res.worst_problem.groundings.size(); ++g) {
    const auto& gr = res.worst_problem.groundings[g];
    std::cout << "worst_grounding" << g << "=lambda:" << fmt(gr.lambda) << " truth:";
    for (std::size_t i = 0; i < gr.truth.size(); ++i) std::cout << (i ? "," : "") << fmt(gr.truth[i]);
    std::cout << "\n";
  }
  std::cout << "worst_objective_gap=" << fmt(res.worst_report.objective_gap) << "\n";
  return kVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rulekd: distilling logic rules into neural predictors"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train one or more seeds and report metrics");
  train->add_option("--config", ta.config_file, "flat key = value config file");
  train->add_option("--task", ta.task, "sentiment or ner");
  train->add_option("--mode", ta.mode, "base, distill, semi, project-after, pipeline");
  train->add_option("--train", ta.train, "training data");
  train->add_option("--dev", ta.dev, "dev data for early stopping");
  train->add_option("--test", ta.test, "evaluation data");
  train->add_option("--unlabeled", ta.unlabeled, "unlabeled pool for semi mode");
  train->add_option("--output-dir", ta.output_dir, "checkpoints, epoch log and summary");
  train->add_option("--seeds", ta.seeds, "comma-separated seed list");
  train->add_option("--rules", ta.rules, "rule specs separated by ';', or 'none'");
  train->add_option("--set", ta.sets, "override any config key, key=value");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--model", ea.model, "checkpoint file")->required();
  eval->add_option("--data", ea.data, "evaluation data")->required();
  eval->add_option("--task", ea.task, "sentiment or ner");
  eval->add_option("--config", ea.config_file, "flat key = value config file");
  eval->add_option("--rules", ea.rules, "rule specs separated by ';', or 'none'");
  eval->add_option("--set", ea.sets, "override any config key, key=value");
  eval->add_option("--seed", ea.seed, "sampling seed for the teacher");
  eval->add_flag("--use-teacher", ea.use_teacher, "also report the rule-projected teacher");
  eval->add_option("--report", ea.report, "also write the report to this file");

  std::uint64_t gs_seed = 1;
  std::size_t gs_n = 2000;
  SentimentGenSpec gs_spec;
  std::string gs_out;
  auto* gen_s = app.add_subcommand("gen-sentiment", "write a synthetic A-but-B sentiment corpus");
  gen_s->add_option("--seed", gs_seed);
  gen_s->add_option("--n", gs_n, "number of sentences");
  gen_s->add_option("--but-fraction", gs_spec.but_fraction);
  gen_s->add_option("--short-contrast", gs_spec.short_contrast, "share of but-sentences with a bare clause B");
  gen_s->add_option("--label-noise", gs_spec.label_noise);
  gen_s->add_option("--out", gs_out, "output file (default stdout)");

  std::uint64_t gn_seed = 1;
  std::size_t gn_docs = 300;
  NerGenSpec gn_spec;
  std::string gn_out;
  auto* gen_n = app.add_subcommand("gen-ner", "write a synthetic list-NER corpus");
  gen_n->add_option("--seed", gn_seed);
  gen_n->add_option("--docs", gn_docs, "number of documents");
  gen_n->add_option("--list-fraction", gn_spec.list_doc_fraction);
  gen_n->add_option("--ambiguous-in-list", gn_spec.ambiguous_in_list);
  gen_n->add_option("--ambiguous-in-text", gn_spec.ambiguous_in_text);
  gen_n->add_option("--rare-fraction", gn_spec.rare_fraction);
  gen_n->add_option("--annotation-noise", gn_spec.annotation_noise, "city/club forms annotated LOC regardless of context");
  gen_n->add_option("--out", gn_out, "output file (default stdout)");

  std::string dl_input;
  auto* detect = app.add_subcommand("detect-lists", "print the list groups found in a column-format file");
  detect->add_option("input", dl_input, "column-format file")->required();

  std::uint64_t vp_seed = 2024;
  std::size_t vp_trials = 100;
  double vp_tol = 1e-6;
  auto* verify = app.add_subcommand("verify-projection", "check the closed-form teacher against a numeric optimum");
  verify->add_option("--seed", vp_seed);
  verify->add_option("--trials", vp_trials);
  verify->add_option("--tolerance", vp_tol);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return run_train(ta);
    if (*eval) return run_eval(ea);
    if (*gen_s) return run_gen_sentiment(gs_seed, gs_n, gs_spec, gs_out);
    if (*gen_n) return run_gen_ner(gn_seed, gn_docs, gn_spec, gn_out);
    if (*detect) return run_detect_lists(dl_input);
    if (*verify) return run_verify_projection(vp_seed, vp_trials, vp_tol);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const CorpusError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kUsage;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kVerifyFailed;
  }
  return kUsage;
}
