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

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <sstream>
#include <string>

#include "rulekd/config.hpp"

namespace rulekd {
namespace {

ConfigLayers from_text(const std::string& text) {
  ConfigLayers l;
  std::istringstream is(text);
  l.load_stream(is, "test.cfg");
  return l;
}

TEST(ParseRules, AllRulesWithArguments) {
  const auto r = parse_rules("but(lambda=2, variant=strong); bioes_transitions(lambda=inf); "
                             "list_counterpart(lambda=0.5, normalize=true)");
  ASSERT_TRUE(r.but && r.transitions && r.list);
  EXPECT_EQ(r.but->lambda, 2.0);
  EXPECT_EQ(r.but->variant, ButVariant::Strong);
  EXPECT_TRUE(std::isinf(r.transitions->lambda));
  EXPECT_EQ(r.list->lambda, 0.5);
  EXPECT_TRUE(r.list->normalize);
}

TEST(ParseRules, DefaultsAndEmpty) {
  EXPECT_TRUE(parse_rules("").empty());
  EXPECT_TRUE(parse_rules("  ;  ").empty());
  const auto r = parse_rules("but; bioes_transitions()");
  EXPECT_EQ(r.but->lambda, 1.0);
  EXPECT_EQ(r.but->variant, ButVariant::Avg);
  EXPECT_TRUE(std::isinf(r.transitions->lambda));
}

TEST(ParseRules, Errors) {
  for (const char* bad : {"bogus(lambda=1)", "but(lambda=1); but(lambda=2)", "but(lambda=x)", "but(lambda=-1)",
                          "but(variant=odd)", "but(speed=3)", "but(lambda=1", "list_counterpart(lambda=inf)",
                          "list_counterpart(normalize=maybe)", "but(lambda)"})
    EXPECT_THROW(parse_rules(bad), ConfigError) << bad;
}

TEST(ParseRules, FormatRoundTrip) {
  const auto r = parse_rules("bioes_transitions(lambda=inf); list_counterpart(lambda=0.25, normalize=false)");
  const auto again = parse_rules(format_rules(r));
  EXPECT_EQ(format_rules(again), format_rules(r));
  EXPECT_EQ(again.list->lambda, 0.25);
}

TEST(ConfigFile, CommentsBlankLinesAndErrors) {
  const auto l = from_text("# header\n\nepochs = 7  # trailing\nC=3\n");
  EXPECT_EQ(l.get("epochs"), "7");
  EXPECT_EQ(l.get("C"), "3");
  try {
    from_text("epochs = 7\nnot an assignment\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("test.cfg:2"), std::string::npos);
  }
  EXPECT_THROW(from_text("epoch = 7\n"), ConfigError);
}

TEST(ConfigResolve, Defaults) {
  const auto rc = ConfigLayers().resolve();
  EXPECT_EQ(rc.task, Task::Sentiment);
  EXPECT_EQ(rc.train_config.c, 6.0);
  EXPECT_EQ(rc.train_config.mode, Mode::Distill);
  EXPECT_TRUE(rc.train_config.rules.but.has_value());
  EXPECT_EQ(rc.seeds, std::vector<std::uint64_t>{1});
  const auto s = rc.train_config.schedule_for(rc.task);
  EXPECT_EQ(s.pi0, 1.0);
  EXPECT_EQ(s.alpha, 0.95);

  auto ner = from_text("task = ner\n").resolve();
  EXPECT_TRUE(ner.train_config.rules.transitions && ner.train_config.rules.list);
  EXPECT_FALSE(ner.train_config.rules.but);
  EXPECT_EQ(ner.train_config.schedule_for(Task::Ner).pi0, 0.9);
  EXPECT_EQ(ner.train_config.schedule_for(Task::Ner).alpha, 0.9);
}

// Precedence matrix: for each key, every combination of (file set?, flag set?)
// resolves to flag > file > default.
TEST(ConfigResolve, PrecedenceMatrix) {
  using Read = std::function<std::string(const RunConfig&)>;
  struct Case {
    std::string key, file_value, flag_value;
    std::string want_default, want_file, want_flag;
    Read read;
  };
  const Read seeds = [](const RunConfig& r) {
    std::string s;
    for (auto x : r.seeds) s += (s.empty() ? "" : ",") + std::to_string(x);
    return s;
  };
  const Read but_lambda = [](const RunConfig& r) {
    return r.train_config.rules.but ? std::to_string(static_cast<int>(r.train_config.rules.but->lambda)) : "none";
  };
  const std::vector<Case> cases = {
      {"epochs", "11", "13", "30", "11", "13", [](const RunConfig& r) { return std::to_string(r.train_config.epochs); }},
      {"C", "2", "4", "6", "2", "4",
       [](const RunConfig& r) { return std::to_string(static_cast<int>(r.train_config.c)); }},
      {"mode", "base", "pipeline", "distill", "base", "pipeline",
       [](const RunConfig& r) { return to_string(r.train_config.mode); }},
      {"seeds", "5", "7,8", "1", "5", "7,8", seeds},
      {"output_dir", "from_file", "from_flag", "rulekd_out", "from_file", "from_flag",
       [](const RunConfig& r) { return r.output_dir; }},
      {"batch_size", "10", "20", "50", "10", "20",
       [](const RunConfig& r) { return std::to_string(r.train_config.batch_size); }},
      {"rules", "but(lambda=2)", "", "1", "2", "none", but_lambda},
  };
  for (const auto& c : cases) {
    for (int file = 0; file < 2; ++file) {
      for (int flag = 0; flag < 2; ++flag) {
        ConfigLayers l;
        if (file) {
          std::istringstream is(c.key + " = " + c.file_value + "\n");
          l.load_stream(is, "matrix.cfg");
        }
        if (flag) l.override_value(c.key, c.flag_value);
        const std::string want = flag ? c.want_flag : file ? c.want_file : c.want_default;
        EXPECT_EQ(c.read(l.resolve()), want) << c.key << " file=" << file << " flag=" << flag;
      }
    }
  }
}

TEST(ConfigResolve, PrecedenceConcreteValues) {
  auto l = from_text("epochs = 11\nC = 2\n");
  l.override_assignment("epochs=13");
  const auto rc = l.resolve();
  EXPECT_EQ(rc.train_config.epochs, 13u);
  EXPECT_EQ(rc.train_config.c, 2.0);
}

TEST(ConfigResolve, EmptyRulesFlagRemovesDefaults) {
  auto l = from_text("rules = but(lambda=3)\n");
  l.override_value("rules", "");
  EXPECT_TRUE(l.resolve().train_config.rules.empty());
}

TEST(ConfigResolve, ScheduleOverrides) {
  auto rc = from_text("task = ner\npi0 = 0.5\n").resolve();
  const auto s = rc.train_config.schedule_for(Task::Ner);
  EXPECT_EQ(s.pi0, 0.5);
  EXPECT_EQ(s.alpha, 0.9);
  EXPECT_THROW(from_text("alpha = 0\n").resolve(), ConfigError);
}

TEST(ConfigResolve, ModelShapeKeys) {
  const auto rc = from_text("embedding_dim = 8\nwindows = 2, 4\nfeature_maps = 5\nradius = 1\nhidden = 9\n").resolve();
  EXPECT_EQ(rc.train_config.text.dim, 8u);
  EXPECT_EQ(rc.train_config.tagger.dim, 8u);
  EXPECT_EQ(rc.train_config.text.windows, (std::vector<std::size_t>{2, 4}));
  EXPECT_EQ(rc.train_config.text.maps, 5u);
  EXPECT_EQ(rc.train_config.tagger.radius, 1u);
  EXPECT_EQ(rc.train_config.tagger.hidden, 9u);
}

TEST(ConfigResolve, InvalidValuesRejected) {
  for (const char* bad : {"epochs = -1\n", "epochs = 0\n", "C = -2\n", "C = abc\n", "seeds = \n", "seeds = 1,,2\n",
                          "task = pos\n", "mode = fast\n", "task = ner\nrules = but\n"})
    EXPECT_THROW(from_text(bad).resolve(), ConfigError) << bad;
  EXPECT_THROW(ConfigLayers().override_assignment("epochs"), ConfigError);
  EXPECT_THROW(ConfigLayers().override_value("nope", "1"), ConfigError);
}

}  // namespace
}  // namespace rulekd
