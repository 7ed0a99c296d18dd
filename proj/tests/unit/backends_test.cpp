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

#include <cmath>

#include "socsim/http.hpp"
#include "support/fixtures.hpp"

namespace socsim {
namespace {

TEST(FileBackend, RoundTrip) {
  testing::TempDir dir;
  const Corpus c = testing::bucket_corpus({1, 2, 3, 4});
  auto preds = testing::replay(all_records(c));
  preds[1].clamped = true;
  preds[1].raw_reply = "9";
  preds[2].predicted.reset();
  preds[2].parse_failed = true;
  write_predictions(preds, dir / "p.jsonl");
  EXPECT_EQ(predict_file(dir / "p.jsonl"), preds);
}

TEST(FileBackend, MalformedLineHasLocator) {
  testing::TempDir dir;
  testing::write_file(dir / "p.jsonl",
                      "{\"study_id\":\"S1\",\"participant_id\":\"p0\",\"condition_id\":\"c1\","
                      "\"outcome_id\":\"o1\",\"predicted\":3}\n{\"study_id\":\"S1\"}\n");
  try {
    predict_file(dir / "p.jsonl");
    FAIL() << "expected a DataError";
  } catch (const DataError& e) {
    EXPECT_EQ(e.locator(), "p.jsonl:2");
  }
  EXPECT_THROW(predict_file(dir / "missing.jsonl"), ConfigError);
}

TEST(FileBackend, EmptyFileGivesNoPredictions) {
  testing::TempDir dir;
  testing::write_file(dir / "p.jsonl", "");
  EXPECT_TRUE(predict_file(dir / "p.jsonl").empty());
}

TEST(Uniform, StaysInScaleAndLooksUniform) {
  std::vector<int> responses(6000, 1);
  const Corpus c = testing::bucket_corpus(responses, 1, 2);
  const auto preds = baseline_uniform(c, all_records(c), 17);
  int twos = 0;
  for (const auto& p : preds) {
    ASSERT_TRUE(p.predicted);
    ASSERT_GE(*p.predicted, 1);
    ASSERT_LE(*p.predicted, 2);
    twos += *p.predicted == 2;
  }
  const double n = responses.size();
  EXPECT_LT(std::abs(twos - n / 2), 3 * std::sqrt(n / 4));
  EXPECT_EQ(preds, baseline_uniform(c, all_records(c), 17));
  EXPECT_NE(preds, baseline_uniform(c, all_records(c), 18));
}

TEST(Resampler, MatchesEmpiricalFrequencies) {
  // Bucket {1, 2, 2}: P(2) = 2/3. Replicate the bucket across many stimuli.
  std::vector<StudyManifest> studies;
  std::vector<ResponseRecord> records;
  studies.push_back(testing::make_study("S1", 4000, 1));
  for (int c = 1; c <= 4000; ++c) {
    const std::string cid = "c" + std::to_string(c);
    records.push_back(testing::record("S1", "a", cid, "o1", 1));
    records.push_back(testing::record("S1", "b", cid, "o1", 2));
    records.push_back(testing::record("S1", "d", cid, "o1", 2));
  }
  const Corpus corpus = testing::make_corpus(studies, records);
  const auto preds = oracle_resampler(corpus, all_records(corpus), 5);
  ASSERT_EQ(preds.size(), 12000u);
  int twos = 0;
  for (const auto& p : preds) twos += *p.predicted == 2;
  const double n = preds.size(), p2 = 2.0 / 3.0;
  EXPECT_LT(std::abs(twos - n * p2), 3 * std::sqrt(n * p2 * (1 - p2)));
}

TEST(Resampler, SingletonAndLeaveOneOut) {
  const Corpus one = testing::bucket_corpus({4});
  EXPECT_EQ(oracle_resampler(one, all_records(one), 1)[0].predicted, 4);
  EXPECT_EQ(oracle_resampler(one, all_records(one), 1, {true})[0].predicted, 4);
  const Corpus two = testing::bucket_corpus({1, 5});
  const auto loo = oracle_resampler(two, all_records(two), 1, {true});
  EXPECT_EQ(loo[0].predicted, 5);
  EXPECT_EQ(loo[1].predicted, 1);
}

std::vector<PromptBundle> direct_prompts(const Corpus& c, PromptMode mode = PromptMode::direct) {
  std::vector<PromptBundle> out;
  for (const auto& r : c.records) {
    const auto& m = c.study(r.study_id);
    out.push_back(mode == PromptMode::direct
                      ? render_direct(r.persona, m, r.condition_id, r.outcome_id, r.participant_id)
                      : render_reasoning(r.persona, m, r.condition_id, r.outcome_id, r.participant_id));
  }
  return out;
}

ChatConfig stub_config(const testing::StubServer& server) {
  ChatConfig cfg;
  cfg.endpoint = server.url();
  cfg.model = "stub";
  cfg.concurrency = 2;
  cfg.backoff_ms = 0;
  cfg.timeout_seconds = 5;
  return cfg;
}

TEST(HttpBackend, DirectReplies) {
  testing::StubServer server([](const Json& req) {
    EXPECT_EQ(req.at("model"), "stub");
    EXPECT_EQ(req.at("messages").size(), 2u);
    return std::pair{200, std::string("3")};
  });
  const Corpus c = testing::bucket_corpus({1, 2, 5});
  const ScaleBook scales(c, BoundsPolicy::declared);
  const auto preds = predict_http(ChatClient(stub_config(server)), direct_prompts(c), scales);
  ASSERT_EQ(preds.size(), 3u);
  for (const auto& p : preds) {
    EXPECT_EQ(p.predicted, 3);
    EXPECT_EQ(p.raw_reply, "3");
    EXPECT_FALSE(p.parse_failed);
  }
  EXPECT_EQ(server.requests(), 3);
}

TEST(HttpBackend, ReasoningReplyParsed) {
  testing::StubServer server([](const Json&) {
    return std::pair{200, std::string("<trace>Weighs the price.</trace>\nPREDICTION: 2")};
  });
  const Corpus c = testing::bucket_corpus({1, 4});
  const ScaleBook scales(c, BoundsPolicy::declared);
  const auto preds =
      predict_http(ChatClient(stub_config(server)), direct_prompts(c, PromptMode::reasoning), scales);
  for (const auto& p : preds) EXPECT_EQ(p.predicted, 2);
}

TEST(HttpBackend, TimeoutsRetryThenFlag) {
  testing::StubServer server([](const Json&) { return std::pair{200, std::string("3")}; }, 1500);
  ChatConfig cfg = stub_config(server);
  cfg.timeout_seconds = 0.3;
  cfg.max_attempts = 3;
  cfg.concurrency = 1;
  const Corpus c = testing::bucket_corpus({1});
  const ScaleBook scales(c, BoundsPolicy::declared);
  const auto preds = predict_http(ChatClient(cfg), direct_prompts(c), scales);
  ASSERT_EQ(preds.size(), 1u);
  EXPECT_TRUE(preds[0].parse_failed);
  EXPECT_FALSE(preds[0].predicted);
  ASSERT_TRUE(preds[0].raw_reply);
  EXPECT_EQ(preds[0].raw_reply->rfind("error: ", 0), 0u);
  EXPECT_EQ(server.requests(), 3);
}

TEST(HttpBackend, ServerErrorsAreRetried) {
  std::atomic<int> n{0};
  testing::StubServer server([&](const Json&) {
    return ++n < 3 ? std::pair{503, std::string("busy")} : std::pair{200, std::string("4")};
  });
  const Corpus c = testing::bucket_corpus({1});
  const ScaleBook scales(c, BoundsPolicy::declared);
  const auto preds = predict_http(ChatClient(stub_config(server)), direct_prompts(c), scales);
  EXPECT_EQ(preds[0].predicted, 4);
  EXPECT_EQ(server.requests(), 3);
}

TEST(HttpBackend, UnauthorizedIsFatal) {
  testing::StubServer server([](const Json&) { return std::pair{401, std::string("no key")}; });
  const Corpus c = testing::bucket_corpus({1, 2});
  const ScaleBook scales(c, BoundsPolicy::declared);
  try {
    predict_http(ChatClient(stub_config(server)), direct_prompts(c), scales);
    FAIL() << "expected a fatal ServiceError";
  } catch (const ServiceError& e) {
    EXPECT_TRUE(e.fatal());
  }
  EXPECT_LE(server.requests(), 2);
}

TEST(HttpBackend, ConfigChecks) {
  ChatConfig cfg;
  EXPECT_THROW(cfg.check(), ConfigError);
  cfg.endpoint = "localhost:8000";
  EXPECT_THROW(ChatClient{cfg}, ConfigError);
  EXPECT_EQ(detail::split_url("http://h:1").path, "/v1");
  EXPECT_EQ(detail::split_url("https://h/api/v2/").path, "/api/v2");
}

TEST(HttpBackend, EmbeddingSimilarity) {
  testing::StubServer server([](const Json&) { return std::pair{200, std::string()}; });
  ChatClient client(stub_config(server));
  HttpEmbeddingSimilarity sim(client);
  const std::vector<std::string> candidates = {"the cat sat", "quantum finance"};
  const auto s = sim.similarities("the cat sat", candidates);
  EXPECT_NEAR(s[0], 1.0, 1e-9);
  EXPECT_LT(s[1], s[0]);
}

}  // namespace
}  // namespace socsim
