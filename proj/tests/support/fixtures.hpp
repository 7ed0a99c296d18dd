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

// Small corpora, temp directories and a stub chat server shared by tests.

#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "socsim/socsim.hpp"

namespace socsim::testing {

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("socsim-test-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Study with conditions c1..cN and outcomes o1..oM on [lo, hi].
inline StudyManifest make_study(const std::string& id, int conditions, int outcomes, int lo = 1,
                                int hi = 5) {
  StudyManifest m;
  m.study_id = id;
  for (int c = 1; c <= conditions; ++c) {
    m.conditions.push_back({"c" + std::to_string(c), "stimulus " + std::to_string(c) + " of " + id});
  }
  for (int o = 1; o <= outcomes; ++o) {
    Outcome out;
    out.id = "o" + std::to_string(o);
    out.question = "question " + std::to_string(o) + " of " + id + "?";
    out.min = lo;
    out.max = hi;
    m.outcomes.push_back(out);
  }
  return m;
}

inline ResponseRecord record(const std::string& study, const std::string& participant,
                             const std::string& condition, const std::string& outcome, int response,
                             Persona persona = {{"Gender", "Female"}}) {
  return {study, participant, std::move(persona), condition, outcome, response};
}

inline Corpus make_corpus(std::vector<StudyManifest> studies, std::vector<ResponseRecord> records) {
  Corpus c;
  for (auto& m : studies) {
    auto id = m.study_id;
    c.studies.emplace(id, std::move(m));
  }
  c.records = std::move(records);
  return c;
}

// One study, one stimulus, responses as given (participants p0, p1, ...).
inline Corpus bucket_corpus(const std::vector<int>& responses, int lo = 1, int hi = 5) {
  std::vector<ResponseRecord> records;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    records.push_back(record("S1", "p" + std::to_string(i), "c1", "o1", responses[i]));
  }
  return make_corpus({make_study("S1", 1, 1, lo, hi)}, std::move(records));
}

inline std::vector<PredictionRecord> replay(const RecordSet& records) {
  std::vector<PredictionRecord> out;
  for (const ResponseRecord* r : records) {
    PredictionRecord p;
    p.key = key_of(*r);
    p.predicted = r->response;
    out.push_back(p);
  }
  sort_by_key(out);
  return out;
}

inline std::vector<PredictionRecord> constant(const RecordSet& records, int value) {
  std::vector<PredictionRecord> out;
  for (const ResponseRecord* r : records) {
    PredictionRecord p;
    p.key = key_of(*r);
    p.predicted = value;
    out.push_back(p);
  }
  sort_by_key(out);
  return out;
}

// Chat-completions stub on 127.0.0.1. The handler maps a request body to
// (status, reply content); status 200 gets wrapped in the chat response
// shape.
class StubServer {
 public:
  using Handler = std::function<std::pair<int, std::string>(const Json& request)>;

  explicit StubServer(Handler handler, int delay_ms = 0) : handler_(std::move(handler)) {
    server_.Post(R"(/v1/chat/completions)", [this, delay_ms](const httplib::Request& req,
                                                              httplib::Response& res) {
      ++requests_;
      if (delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
      const auto [status, content] = handler_(Json::parse(req.body));
      res.status = status;
      if (status == 200) {
        Json body = {{"choices", Json::array({{{"index", 0},
                                               {"message", {{"role", "assistant"}, {"content", content}}}}})}};
        res.set_content(body.dump(), "application/json");
      } else {
        res.set_content(content, "text/plain");
      }
    });
    server_.Post(R"(/v1/embeddings)", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      const Json in = Json::parse(req.body);
      Json data = Json::array();
      std::size_t i = 0;
      for (const auto& text : in.at("input")) {
        const auto tf = LexicalSimilarity::term_frequencies(text.get<std::string>());
        std::vector<double> v(16, 0.0);
        for (const auto& [w, x] : tf) v[fnv1a64(w) % 16] += x;
        data.push_back({{"index", i++}, {"embedding", v}});
      }
      res.set_content(Json({{"data", data}}).dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int requests() const { return requests_; }

 private:
  Handler handler_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> requests_{0};
};

}  // namespace socsim::testing
