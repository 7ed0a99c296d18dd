//
// Copyright 2026 The socsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include <gtest/gtest.h>

#include "support/fixtures.hpp"
#include "support/prompt_fixtures.hpp"

namespace socsim {
namespace {

using testing::emily_persona;
using testing::emily_study;
using testing::golden;
using testing::kona_persona;
using testing::kona_study;

TEST(Templates, DirectPromptMatchesGolden) {
  const PromptBundle p = render_direct(emily_persona(), emily_study(), "c1", "history");
  EXPECT_EQ(p.system, golden("direct_system.txt"));
  EXPECT_EQ(p.user, golden("direct_user_emily.txt"));
  EXPECT_EQ(p.mode, PromptMode::direct);
}

TEST(Templates, ReasoningSystemMatchesGolden) {
  const PromptBundle p = render_reasoning(emily_persona(), emily_study(), "c1", "history");
  EXPECT_EQ(p.system, golden("reasoning_system.txt"));
  EXPECT_EQ(p.user, golden("direct_user_emily.txt"));
}

TEST(Templates, FewshotSystemMatchesGolden) {
  const StudyManifest m = emily_study();
  const std::string question = compose_stimulus(m, "c1", "history");
  const std::vector<Exemplar> exemplars = {
      {question, Persona{{"Age", "41"}, {"Gender", "Male"}}, 2, "p1"},
      {question, Persona{{"Age", "63"}, {"Gender", "Female"}}, 5, "p2"}};
  const PromptBundle p = render_fewshot(emily_persona(), m, "c1", "history", exemplars);
  EXPECT_EQ(p.system, golden("fewshot_system_two.txt"));
  EXPECT_EQ(p.user, golden("direct_user_emily.txt"));
  const PromptBundle none = render_fewshot(emily_persona(), m, "c1", "history", {});
  EXPECT_EQ(none.system, golden("direct_system.txt"));
}

TEST(Templates, OracleTracePromptMatchesGolden) {
  const PromptBundle p = render_oracle_trace_prompt(kona_persona(), kona_study(), "image", "reaction", 1);
  EXPECT_EQ(p.system, golden("oracle_system.txt"));
  EXPECT_EQ(p.user, golden("oracle_user_kona.txt"));
}

TEST(Templates, KonaDirectUserMatchesGolden) {
  const PromptBundle p = render_direct(kona_persona(), kona_study(), "image", "reaction");
  EXPECT_EQ(p.user, golden("direct_user_kona.txt"));
}

TEST(Templates, FormatInstruction) {
  EXPECT_EQ(format_instruction({1, 6, {}}), "Only return an integer from 1 to 6, nothing else.");
  EXPECT_EQ(format_instruction({1, 5, {{1, "Very negative"}, {5, "Very positive"}}}),
            "Only return an integer from 1 to 5, where 1 means Very negative and 5 means Very "
            "positive, nothing else.");
  // One labelled endpoint is not enough for the clause.
  EXPECT_EQ(format_instruction({0, 1, {{0, "No"}}}), "Only return an integer from 0 to 1, nothing else.");
}

TEST(Templates, UnknownArmsAreDataErrors) {
  EXPECT_THROW(render_direct(emily_persona(), emily_study(), "c9", "history"), DataError);
  EXPECT_THROW(render_direct(emily_persona(), emily_study(), "c1", "nope"), DataError);
}

TEST(ParsePrediction, DirectNeedsBareInteger) {
  const ResponseScale s{1, 5, {}};
  EXPECT_EQ(parse_prediction("3", PromptMode::direct, s).value, 3);
  EXPECT_EQ(parse_prediction("  4\n", PromptMode::direct, s).value, 4);
  EXPECT_TRUE(parse_prediction("I think 3", PromptMode::direct, s).failed());
  EXPECT_TRUE(parse_prediction("3.5", PromptMode::direct, s).failed());
  EXPECT_TRUE(parse_prediction("", PromptMode::direct, s).failed());
}

TEST(ParsePrediction, ReasoningUsesMarker) {
  const ResponseScale s{1, 5, {}};
  EXPECT_EQ(parse_prediction("<trace>I weigh 4 factors.</trace>\nPREDICTION: 2",
                             PromptMode::reasoning, s)
                .value,
            2);
  EXPECT_EQ(parse_prediction("PREDICTION: 1\nPREDICTION: 5", PromptMode::reasoning, s).value, 5);
  EXPECT_EQ(parse_prediction("no marker, guess 3 then 4", PromptMode::reasoning, s).value, 4);
  EXPECT_TRUE(parse_prediction("no digits here", PromptMode::reasoning, s).failed());
}

TEST(ParsePrediction, AppendixResponseRecoversOne) {
  const ParsedPrediction p =
      parse_prediction(golden("kona_response.txt"), PromptMode::reasoning, {1, 5, {}});
  ASSERT_FALSE(p.failed());
  EXPECT_EQ(*p.value, 1);
  EXPECT_FALSE(p.clamped);
}

TEST(ParsePrediction, ClampOrReject) {
  const ResponseScale s{1, 5, {}};
  const ParsedPrediction high = parse_prediction("9", PromptMode::direct, s);
  EXPECT_EQ(high.value, 5);
  EXPECT_TRUE(high.clamped);
  const ParsedPrediction low = parse_prediction("PREDICTION: -2", PromptMode::reasoning, s);
  EXPECT_EQ(low.value, 1);
  EXPECT_TRUE(parse_prediction("9", PromptMode::direct, s, ClampPolicy::reject).failed());
}

TEST(Similarity, CosineAndLexical) {
  const std::vector<double> a = {1, 0}, b = {0, 1}, c = {2, 0};
  EXPECT_DOUBLE_EQ(cosine(a, b), 0.0);
  EXPECT_DOUBLE_EQ(cosine(a, c), 1.0);
  LexicalSimilarity lex;
  const std::vector<std::string> candidates = {"The cat sat", "dogs bark loudly", "the CAT sat!"};
  const auto s = lex.similarities("the cat sat", candidates);
  EXPECT_NEAR(s[0], 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(s[1], 0.0);
  EXPECT_NEAR(s[2], 1.0, 1e-12);
}

class ConstantSimilarity : public SimilarityProvider {
 public:
  std::vector<double> similarities(const std::string&, std::span<const std::string> c) override {
    return std::vector<double>(c.size(), 0.5);
  }
};

TEST(Fewshot, PrefersIdenticalStimulusAndSamplesDistinctParticipants) {
  std::vector<ResponseRecord> records;
  for (int p = 0; p < 8; ++p) {
    records.push_back(testing::record("A", "p" + std::to_string(p), "c1", "o1", 1 + p % 5));
    records.push_back(testing::record("A", "q" + std::to_string(p), "c2", "o1", 1 + p % 5));
  }
  const Corpus c = testing::make_corpus({testing::make_study("A", 2, 1)}, records);
  const RecordSet pool = all_records(c);
  ConstantSimilarity flat;
  const auto sel = select_fewshot({"A", "c2", "o1"}, c, pool, 5, flat, 1);
  EXPECT_EQ(sel.neighbor, (StimulusKey{"A", "c2", "o1"}));
  EXPECT_DOUBLE_EQ(sel.similarity, 1.0);
  ASSERT_EQ(sel.exemplars.size(), 5u);
  std::set<std::string> ids;
  for (const auto& e : sel.exemplars) ids.insert(e.participant_id);
  EXPECT_EQ(ids.size(), 5u);
  const auto again = select_fewshot({"A", "c2", "o1"}, c, pool, 5, flat, 1);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(again.exemplars[i].participant_id, sel.exemplars[i].participant_id);
  EXPECT_FALSE(sel.short_pool);
  EXPECT_TRUE(select_fewshot({"A", "c2", "o1"}, c, pool, 20, flat, 1).short_pool);
}

TEST(Fewshot, TiesGoToSmallestKey) {
  std::vector<ResponseRecord> records = {testing::record("B", "p1", "c2", "o1", 3),
                                         testing::record("B", "p1", "c1", "o1", 2)};
  const Corpus c = testing::make_corpus(
      {testing::make_study("A", 1, 1), testing::make_study("B", 2, 1)},
      {testing::record("A", "x", "c1", "o1", 1), records[0], records[1]});
  RecordSet pool = {&c.records[1], &c.records[2]};
  ConstantSimilarity flat;
  EXPECT_EQ(select_fewshot({"A", "c1", "o1"}, c, pool, 1, flat, 0).neighbor,
            (StimulusKey{"B", "c1", "o1"}));
}

}  // namespace
}  // namespace socsim
