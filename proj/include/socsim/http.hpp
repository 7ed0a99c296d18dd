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

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "socsim/backends.hpp"
#include "socsim/bounds.hpp"
#include "socsim/error.hpp"
#include "socsim/parallel.hpp"
#include "socsim/prompts.hpp"
#include "socsim/trainset.hpp"

namespace socsim {

// Settings for an OpenAI-style chat-completions endpoint.
//
// `endpoint` is a base URL such as "http://127.0.0.1:8000" or
// "https://api.example.com/v1"; requests go to <path>/chat/completions, with
// /v1 assumed when the URL has no path.
struct ChatConfig {
  std::string endpoint;
  std::string model;
  std::string api_key_env = "SOCSIM_API_KEY";
  double temperature = 0.6;
  double top_p = 0.9;
  int max_tokens = 4096;
  int concurrency = 4;
  int max_attempts = 3;
  double timeout_seconds = 120;
  int backoff_ms = 250;  // doubled after each failed attempt

  void check() const {
    if (endpoint.empty()) throw ConfigError("an HTTP endpoint is required (--endpoint)");
    if (temperature < 0) throw ConfigError("temperature must be >= 0");
    if (top_p <= 0 || top_p > 1) throw ConfigError("top_p must be in (0, 1]");
    if (concurrency < 1) throw ConfigError("concurrency must be >= 1");
    if (max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
    if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
  }
};

namespace detail {

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;    // without trailing slash; "/v1" when absent
};

inline Url split_url(const std::string& endpoint) {
  const auto scheme = endpoint.find("://");
  if (scheme == std::string::npos) {
    throw ConfigError("endpoint '" + endpoint + "' must start with http:// or https://");
  }
  const auto slash = endpoint.find('/', scheme + 3);
  Url u;
  u.origin = endpoint.substr(0, slash);
  u.path = slash == std::string::npos ? "" : endpoint.substr(slash);
  while (!u.path.empty() && u.path.back() == '/') u.path.pop_back();
  if (u.path.empty()) u.path = "/v1";
  return u;
}

inline bool retryable(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace detail

// Thread-safe; every call opens its own connection.
class ChatClient {
 public:
  explicit ChatClient(ChatConfig config) : config_(std::move(config)) {
    config_.check();
    url_ = detail::split_url(config_.endpoint);
    if (const char* key = std::getenv(config_.api_key_env.c_str())) token_ = key;
  }

  const ChatConfig& config() const { return config_; }

  // POSTs `body` to <path><route>, retrying transport errors, timeouts, 429
  // and 5xx up to max_attempts. 401/403/404 throw a fatal ServiceError at
  // once; other failures throw a non-fatal one after the last attempt.
  Json post(const std::string& route, const Json& body) const {
    const std::string payload = body.dump();
    std::string last_error;
    int last_status = 0;
    for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms << (attempt - 1)));
      }
      httplib::Client client(url_.origin);
      const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
          std::chrono::duration<double>(config_.timeout_seconds));
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);
      httplib::Headers headers;
      if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
      auto res = client.Post(url_.path + route, headers, payload, "application/json");
      if (!res) {
        last_error = "request failed: " + httplib::to_string(res.error());
        last_status = 0;
        continue;
      }
      if (res->status == 200) {
        try {
          return Json::parse(res->body);
        } catch (const Json::exception& e) {
          last_error = std::string("malformed response body: ") + e.what();
          last_status = res->status;
          continue;
        }
      }
      last_status = res->status;
      last_error = "HTTP " + std::to_string(res->status) + " from " + url_.origin + url_.path + route;
      ServiceError error(last_error, res->status);
      if (error.fatal()) throw error;
      if (!detail::retryable(res->status)) break;
    }
    throw ServiceError(last_error, last_status);
  }

  // One chat turn; returns the first choice's message content.
  std::string complete(const std::string& system, const std::string& user) const {
    Json body = {{"model", config_.model},
                 {"messages",
                  Json::array({{{"role", "system"}, {"content", system}},
                               {{"role", "user"}, {"content", user}}})},
                 {"temperature", config_.temperature},
                 {"top_p", config_.top_p},
                 {"max_tokens", config_.max_tokens}};
    const Json reply = post("/chat/completions", body);
    try {
      const Json& content = reply.at("choices").at(0).at("message").at("content");
      return content.is_string() ? content.get<std::string>() : std::string();
    } catch (const Json::exception& e) {
      throw ServiceError(std::string("unexpected chat response shape: ") + e.what());
    }
  }

  std::vector<std::vector<double>> embed(const std::vector<std::string>& inputs) const {
    const Json reply = post("/embeddings", {{"model", config_.model}, {"input", inputs}});
    std::vector<std::vector<double>> out(inputs.size());
    try {
      for (const auto& item : reply.at("data")) {
        const std::size_t i = item.value("index", std::size_t{0});
        if (i >= out.size()) throw ServiceError("embedding index out of range");
        out[i] = item.at("embedding").get<std::vector<double>>();
      }
    } catch (const Json::exception& e) {
      throw ServiceError(std::string("unexpected embedding response shape: ") + e.what());
    }
    return out;
  }

 private:
  ChatConfig config_;
  detail::Url url_;
  std::string token_;
};

// Sends every prompt, parses the replies, and returns one record per prompt
// sorted by key. A prompt whose request still fails after retries becomes a
// parse_failed record with the error as its raw reply.
inline std::vector<PredictionRecord> predict_http(const ChatClient& client,
                                                  std::span<const PromptBundle> prompts,
                                                  const ScaleBook& scales,
                                                  ClampPolicy policy = ClampPolicy::clamp) {
  std::vector<PredictionRecord> out(prompts.size());
  parallel_for(prompts.size(), client.config().concurrency, [&](std::size_t i) {
    const PromptBundle& p = prompts[i];
    PredictionRecord& rec = out[i];
    rec.key = {p.stimulus_key.study_id, p.participant_id, p.stimulus_key.condition_id,
               p.stimulus_key.outcome_id};
    const auto& s = scales.at(p.stimulus_key);
    std::string reply;
    try {
      reply = client.complete(p.system, p.user);
    } catch (const ServiceError& e) {
      if (e.fatal()) throw;
      rec.parse_failed = true;
      rec.raw_reply = std::string("error: ") + e.what();
      return;
    }
    const ParsedPrediction parsed = parse_prediction(reply, p.mode, ResponseScale{s.min, s.max, {}}, policy);
    rec.raw_reply = reply;
    rec.predicted = parsed.value;
    rec.clamped = parsed.clamped;
    rec.parse_failed = parsed.failed();
  });
  sort_by_key(out);
  return out;
}

// Oracle reasoning traces generated live from the trace-generation prompt.
class HttpTraceProvider : public TraceProvider {
 public:
  explicit HttpTraceProvider(const ChatClient& client) : client_(client) {}

  std::optional<std::string> trace(const ResponseRecord& r, const StudyManifest& m,
                                   int /*attempt*/) override {
    const PromptBundle p = render_oracle_trace_prompt(r.persona, m, r.condition_id, r.outcome_id,
                                                      r.response, r.participant_id);
    return client_.complete(p.system, p.user);
  }

 private:
  const ChatClient& client_;
};

// Cosine similarity of embeddings from an /embeddings endpoint. Vectors are
// cached by text.
class HttpEmbeddingSimilarity : public SimilarityProvider {
 public:
  explicit HttpEmbeddingSimilarity(const ChatClient& client) : client_(client) {}

  std::vector<double> similarities(const std::string& query,
                                   std::span<const std::string> candidates) override {
    std::vector<std::string> missing;
    {
      std::lock_guard lock(mutex_);
      if (!cache_.count(query)) missing.push_back(query);
      for (const auto& c : candidates) {
        if (!cache_.count(c) && std::find(missing.begin(), missing.end(), c) == missing.end()) {
          missing.push_back(c);
        }
      }
    }
    if (!missing.empty()) {
      auto vectors = client_.embed(missing);
      std::lock_guard lock(mutex_);
      for (std::size_t i = 0; i < missing.size(); ++i) cache_[missing[i]] = std::move(vectors[i]);
    }
    std::lock_guard lock(mutex_);
    const auto& q = cache_.at(query);
    std::vector<double> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) out.push_back(cosine(q, cache_.at(c)));
    return out;
  }

 private:
  const ChatClient& client_;
  std::mutex mutex_;
  std::map<std::string, std::vector<double>> cache_;
};

}  // namespace socsim
