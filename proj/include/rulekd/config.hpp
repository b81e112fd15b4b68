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

// Flat `key = value` run configuration. Values are layered: built-in
// defaults, then a config file, then command-line overrides.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "rulekd/trainer.hpp"

namespace rulekd {

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_trim(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  if (v == "inf" || v == "infinity") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || std::isnan(x)) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, x);
  if (v.empty() || r.ec != std::errc() || r.ptr != end)
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

}  // namespace detail

/// Parses `name(arg=value, ...)` rule specs separated by ';'. Recognized:
/// `but(lambda, variant=avg|strong)`, `bioes_transitions(lambda)` and
/// `list_counterpart(lambda, normalize)`. An empty string means no rules.
inline RuleSet parse_rules(std::string_view text) {
  RuleSet rules;
  for (const auto& item : detail::split_trim(text, ';')) {
    if (item.empty()) continue;
    const auto open = item.find('(');
    const std::string name = detail::trim(item.substr(0, open));
    std::map<std::string, std::string> args;
    if (open != std::string::npos) {
      if (item.back() != ')') throw ConfigError("rule '" + item + "': missing ')'");
      const std::string inner = item.substr(open + 1, item.size() - open - 2);
      if (!detail::trim(inner).empty()) {
        for (const auto& kv : detail::split_trim(inner, ',')) {
          const auto eq = kv.find('=');
          if (eq == std::string::npos) throw ConfigError("rule '" + name + "': argument '" + kv + "' is not key=value");
          args[detail::trim(kv.substr(0, eq))] = detail::trim(kv.substr(eq + 1));
        }
      }
    }
    auto take = [&](const std::string& k) -> std::optional<std::string> {
      auto it = args.find(k);
      if (it == args.end()) return std::nullopt;
      std::string v = it->second;
      args.erase(it);
      return v;
    };
    auto lambda_of = [&](double fallback) {
      const auto v = take("lambda");
      const double l = v ? detail::parse_real("rule " + name + " lambda", *v) : fallback;
      if (!(l >= 0.0)) throw ConfigError("rule " + name + ": lambda must be >= 0");
      return l;
    };
    if (name == "but") {
      if (rules.but) throw ConfigError("rule but given twice");
      ButRuleSpec s{lambda_of(1.0), ButVariant::Avg};
      if (const auto v = take("variant")) {
        if (*v == "avg") s.variant = ButVariant::Avg;
        else if (*v == "strong") s.variant = ButVariant::Strong;
        else throw ConfigError("rule but: variant must be avg or strong");
      }
      rules.but = s;
    } else if (name == "bioes_transitions") {
      if (rules.transitions) throw ConfigError("rule bioes_transitions given twice");
      rules.transitions = TransitionRuleSpec{lambda_of(kHardRule)};
    } else if (name == "list_counterpart") {
      if (rules.list) throw ConfigError("rule list_counterpart given twice");
      ListRuleSpec s{lambda_of(1.0), false};
      if (const auto v = take("normalize")) s.normalize = detail::parse_bool("rule list_counterpart normalize", *v);
      if (std::isinf(s.lambda)) throw ConfigError("rule list_counterpart: lambda must be finite");
      rules.list = s;
    } else {
      throw ConfigError("unknown rule '" + name + "' (expected but, bioes_transitions, list_counterpart)");
    }
    if (!args.empty()) throw ConfigError("rule " + name + ": unknown argument '" + args.begin()->first + "'");
  }
  return rules;
}

inline std::string format_rules(const RuleSet& r) {
  auto num = [](double x) {
    if (std::isinf(x)) return std::string("inf");
    std::ostringstream os;
    os << x;
    return os.str();
  };
  std::vector<std::string> parts;
  if (r.but)
    parts.push_back("but(lambda=" + num(r.but->lambda) +
                    ", variant=" + (r.but->variant == ButVariant::Avg ? "avg" : "strong") + ")");
  if (r.transitions) parts.push_back("bioes_transitions(lambda=" + num(r.transitions->lambda) + ")");
  if (r.list)
    parts.push_back("list_counterpart(lambda=" + num(r.list->lambda) +
                    ", normalize=" + (r.list->normalize ? "true" : "false") + ")");
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "; " : "") + parts[i];
  return out;
}

/// Everything a `train` or `eval` run needs.
struct RunConfig {
  Task task = Task::Sentiment;
  std::string train, dev, test, unlabeled;
  std::string output_dir = "rulekd_out";
  std::vector<std::uint64_t> seeds{1};
  TrainConfig train_config;
};

/// Raw layered key/value store.
class ConfigLayers {
 public:
  static const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = {
        "task",          "mode",          "train",          "dev",        "test",        "unlabeled",
        "output_dir",    "seeds",         "rules",          "C",          "pi0",         "alpha",
        "epochs",        "batch_size",    "patience",       "learning_rate", "rho",      "eps",
        "min_count",     "gibbs_sweeps_train", "gibbs_sweeps_eval", "group_max", "embedding_dim",
        "windows",       "feature_maps",  "radius",         "hidden"};
    return keys;
  }

  /// Reads `key = value` lines; '#' starts a comment.
  void load_stream(std::istream& is, const std::string& origin) {
    std::string line;
    std::size_t no = 0;
    while (std::getline(is, line)) {
      ++no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string t = detail::trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(no) + ": expected 'key = value', got '" + t + "'");
      set_checked(detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)), file_,
                  origin + ":" + std::to_string(no));
    }
  }

  void load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file '" + path + "'");
    load_stream(is, path);
  }

  /// Command-line override, `key=value` or separate key and value.
  void override_value(const std::string& key, const std::string& value) { set_checked(key, value, flags_, "flag"); }
  void override_assignment(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    override_value(detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }

  [[nodiscard]] std::optional<std::string> get(const std::string& key) const {
    if (auto it = flags_.find(key); it != flags_.end()) return it->second;
    if (auto it = file_.find(key); it != file_.end()) return it->second;
    return std::nullopt;
  }

  /// Resolves every layer into a validated RunConfig.
  [[nodiscard]] RunConfig resolve() const {
    RunConfig rc;
    auto& tc = rc.train_config;
    if (auto v = get("task")) rc.task = parse_task(*v);
    if (auto v = get("mode")) tc.mode = parse_mode(*v);
    if (auto v = get("train")) rc.train = *v;
    if (auto v = get("dev")) rc.dev = *v;
    if (auto v = get("test")) rc.test = *v;
    if (auto v = get("unlabeled")) rc.unlabeled = *v;
    if (auto v = get("output_dir")) rc.output_dir = *v;
    if (auto v = get("seeds")) {
      rc.seeds.clear();
      for (const auto& s : detail::split_trim(*v, ',')) rc.seeds.push_back(detail::parse_count("seeds", s));
      if (rc.seeds.empty()) throw ConfigError("seeds: at least one seed required");
    }
    // Task-default rules: the rules that apply to the task, unless given.
    if (auto v = get("rules")) {
      tc.rules = parse_rules(*v);
    } else if (rc.task == Task::Sentiment) {
      tc.rules.but = ButRuleSpec{};
    } else {
      tc.rules.transitions = TransitionRuleSpec{};
      tc.rules.list = ListRuleSpec{};
    }
    if (auto v = get("C")) tc.c = detail::parse_real("C", *v);
    const auto pi0 = get("pi0");
    const auto alpha = get("alpha");
    if (pi0 || alpha) {
      auto s = rc.task == Task::Sentiment ? ImitationSchedule::classification() : ImitationSchedule::tagging();
      if (pi0) s.pi0 = detail::parse_real("pi0", *pi0);
      if (alpha) s.alpha = detail::parse_real("alpha", *alpha);
      tc.schedule = s;
    }
    auto count = [&](const char* key, auto& field) {
      if (auto v = get(key)) field = static_cast<std::remove_reference_t<decltype(field)>>(detail::parse_count(key, *v));
    };
    count("epochs", tc.epochs);
    count("batch_size", tc.batch_size);
    count("patience", tc.patience);
    count("min_count", tc.min_count);
    count("gibbs_sweeps_train", tc.gibbs_sweeps_train);
    count("gibbs_sweeps_eval", tc.gibbs_sweeps_eval);
    count("group_max", tc.group_max);
    if (auto v = get("learning_rate")) tc.learning_rate = detail::parse_real("learning_rate", *v);
    if (auto v = get("rho")) tc.rho = detail::parse_real("rho", *v);
    if (auto v = get("eps")) tc.eps = detail::parse_real("eps", *v);
    if (auto v = get("embedding_dim")) tc.text.dim = tc.tagger.dim = detail::parse_count("embedding_dim", *v);
    if (auto v = get("windows")) {
      tc.text.windows.clear();
      for (const auto& w : detail::split_trim(*v, ',')) tc.text.windows.push_back(detail::parse_count("windows", w));
    }
    count("feature_maps", tc.text.maps);
    count("radius", tc.tagger.radius);
    count("hidden", tc.tagger.hidden);

    tc.validate();
    tc.rules.check_task(rc.task);
    if (rc.seeds.empty()) throw ConfigError("seeds: at least one seed required");
    return rc;
  }

 private:
  static void set_checked(const std::string& key, const std::string& value, std::map<std::string, std::string>& layer,
                          const std::string& where) {
    const auto& keys = known_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw ConfigError(where + ": unknown config key '" + key + "'");
    layer[key] = value;
  }

  std::map<std::string, std::string> file_;
  std::map<std::string, std::string> flags_;
};

}  // namespace rulekd
