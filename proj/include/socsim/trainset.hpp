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
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "socsim/corpus.hpp"
#include "socsim/parallel.hpp"
#include "socsim/prompts.hpp"
#include "socsim/rng.hpp"

namespace socsim {

enum class SftMode { plain, reasoning };

inline SftMode parse_sft_mode(std::string_view s) {
  if (s == "plain" || s == "sft") return SftMode::plain;
  if (s == "reasoning" || s == "sft-reasoning") return SftMode::reasoning;
  throw ConfigError("unknown SFT mode '" + std::string(s) + "'");
}

struct SftExample {
  PromptBundle prompt;
  std::string target;
  RecordKey provenance;
};

// --- reasoning traces ---------------------------------------------------------

// Supplies an explanation of a known response. Must be callable from several
// threads at once. `attempt` is 0 for the first request and 1 for the single
// regeneration after a leak. Returning nullopt or an empty string is a
// failure; throwing ServiceError with fatal() aborts the emission.
class TraceProvider {
 public:
  virtual ~TraceProvider() = default;
  virtual std::optional<std::string> trace(const ResponseRecord& record,
                                           const StudyManifest& manifest, int attempt) = 0;
};

// Pulls the reasoning out of an oracle reply: the text between <trace> and
// </trace> when present, otherwise everything before the PREDICTION: line.
inline std::string extract_trace(std::string_view reply) {
  const auto open = reply.find("<trace>");
  if (open != std::string_view::npos) {
    const auto start = open + 7;
    const auto close = reply.find("</trace>", start);
    return std::string(
        detail::trim(reply.substr(start, close == std::string_view::npos ? reply.npos : close - start)));
  }
  const auto marker = reply.rfind(templates::kPredictionMarker);
  return std::string(detail::trim(reply.substr(0, marker)));
}

// True when the trace states the answer: "answer is" (any case, optional
// colon, quotes or emphasis) directly followed by the true integer.
inline bool leaks_answer(std::string_view trace, int truth) {
  static const std::regex pattern(R"(answer\s+is(?:[\s:*"'`]|“|”|‘|’)*(-?\d+)(?!\d))",
                                  std::regex::ECMAScript | std::regex::icase);
  const std::string text(trace);
  for (auto it = std::sregex_iterator(text.begin(), text.end(), pattern);
       it != std::sregex_iterator(); ++it) {
    if ((*it)[1].str() == std::to_string(truth)) return true;
  }
  return false;
}

// Pre-generated traces in JSONL: one object per line with study_id,
// participant_id, condition_id, outcome_id and trace. Repeated keys are
// successive attempts.
class OfflineTraces : public TraceProvider {
 public:
  explicit OfflineTraces(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open trace file " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (detail::trim(line).empty()) continue;
      const std::string locator = path.filename().string() + ":" + std::to_string(line_no);
      try {
        const Json j = Json::parse(line);
        RecordKey key{j.at("study_id").get<std::string>(), j.at("participant_id").get<std::string>(),
                      j.at("condition_id").get<std::string>(),
                      j.at("outcome_id").get<std::string>()};
        traces_[key].push_back(j.at("trace").get<std::string>());
      } catch (const Json::exception& e) {
        throw DataError(e.what(), locator);
      }
    }
  }

  std::optional<std::string> trace(const ResponseRecord& record, const StudyManifest&,
                                   int attempt) override {
    auto it = traces_.find(key_of(record));
    if (it == traces_.end() || attempt >= static_cast<int>(it->second.size())) return std::nullopt;
    return it->second[attempt];
  }

  std::size_t size() const { return traces_.size(); }

 private:
  std::map<RecordKey, std::vector<std::string>> traces_;
};

inline Json trace_line(const RecordKey& key, const std::string& trace) {
  return {{"study_id", key.study_id},
          {"participant_id", key.participant_id},
          {"condition_id", key.condition_id},
          {"outcome_id", key.outcome_id},
          {"trace", trace}};
}

// --- SFT ----------------------------------------------------------------------

struct SftSummary {
  std::size_t records = 0;
  std::size_t emitted = 0;
  std::size_t trace_failures = 0;    // provider gave nothing usable
  std::size_t leaks_regenerated = 0;
  std::size_t leaks_skipped = 0;     // leaked twice
  std::vector<std::string> failures;  // "<key>: reason", in record order
};

struct SftOptions {
  int concurrency = 1;
};

struct SftBuild {
  std::vector<SftExample> examples;
  SftSummary summary;
};

inline std::string reasoning_target(const std::string& trace, int response) {
  return "<trace>" + trace + "</trace>\nPREDICTION: " + std::to_string(response);
}

namespace detail {

inline std::string describe(const RecordKey& k) {
  return k.study_id + "/" + k.participant_id + "/" + k.condition_id + "/" + k.outcome_id;
}

enum class TraceOutcome { ok, failed, leaked };

struct TraceResult {
  std::string text;
  TraceOutcome outcome = TraceOutcome::failed;
  bool regenerated = false;
  std::string reason;
};

inline TraceResult fetch_trace(TraceProvider& provider, const ResponseRecord& r,
                               const StudyManifest& m) {
  TraceResult result;
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::optional<std::string> reply;
    try {
      reply = provider.trace(r, m, attempt);
    } catch (const ServiceError& e) {
      if (e.fatal()) throw;
      result.outcome = TraceOutcome::failed;
      result.reason = e.what();
      return result;
    }
    std::string text = reply ? extract_trace(*reply) : std::string();
    if (text.empty()) {
      result.outcome = TraceOutcome::failed;
      result.reason = attempt == 0 ? "no trace" : "no trace on regeneration";
      return result;
    }
    if (!leaks_answer(text, r.response)) {
      result.text = std::move(text);
      result.outcome = TraceOutcome::ok;
      return result;
    }
    result.outcome = TraceOutcome::leaked;
    result.reason = "trace states the answer";
    result.regenerated = attempt == 0;
  }
  return result;
}

}  // namespace detail

// One example per training record, in record order. Reasoning mode needs a
// trace provider; records without a usable trace are skipped and counted.
inline SftBuild build_sft(const Corpus& corpus, const RecordSet& train, SftMode mode,
                          TraceProvider* traces = nullptr, SftOptions options = {}) {
  if (mode == SftMode::reasoning && !traces) {
    throw ConfigError("reasoning SFT needs a trace source (trace file or oracle endpoint)");
  }
  SftBuild build;
  build.summary.records = train.size();
  std::vector<detail::TraceResult> fetched(train.size());
  if (mode == SftMode::reasoning) {
    parallel_for(train.size(), options.concurrency, [&](std::size_t i) {
      fetched[i] = detail::fetch_trace(*traces, *train[i], corpus.study(train[i]->study_id));
    });
  }
  for (std::size_t i = 0; i < train.size(); ++i) {
    const ResponseRecord& r = *train[i];
    const StudyManifest& m = corpus.study(r.study_id);
    SftExample ex;
    ex.provenance = key_of(r);
    if (mode == SftMode::plain) {
      ex.prompt = render_direct(r.persona, m, r.condition_id, r.outcome_id, r.participant_id);
      ex.target = std::to_string(r.response);
    } else {
      const auto& t = fetched[i];
      if (t.regenerated) ++build.summary.leaks_regenerated;
      if (t.outcome != detail::TraceOutcome::ok) {
        if (t.outcome == detail::TraceOutcome::leaked) ++build.summary.leaks_skipped;
        else ++build.summary.trace_failures;
        build.summary.failures.push_back(detail::describe(ex.provenance) + ": " + t.reason);
        continue;
      }
      ex.prompt = render_reasoning(r.persona, m, r.condition_id, r.outcome_id, r.participant_id);
      ex.target = reasoning_target(t.text, r.response);
    }
    build.examples.push_back(std::move(ex));
  }
  build.summary.emitted = build.examples.size();
  return build;
}

namespace detail {

inline Json messages(const PromptBundle& p) {
  return Json::array({{{"role", "system"}, {"content", p.system}},
                      {{"role", "user"}, {"content", p.user}}});
}

inline Json provenance_json(const RecordKey& k) {
  return {{"study_id", k.study_id},
          {"participant_id", k.participant_id},
          {"condition_id", k.condition_id},
          {"outcome_id", k.outcome_id}};
}

inline RecordKey provenance_from_json(const Json& j) {
  return {j.at("study_id").get<std::string>(), j.at("participant_id").get<std::string>(),
          j.at("condition_id").get<std::string>(), j.at("outcome_id").get<std::string>()};
}

inline PromptBundle bundle_from_messages(const Json& messages, PromptMode mode,
                                         const RecordKey& key) {
  PromptBundle p;
  p.mode = mode;
  p.stimulus_key = key.stimulus();
  p.participant_id = key.participant_id;
  for (const auto& m : messages) {
    const auto role = m.at("role").get<std::string>();
    if (role == "system") p.system = m.at("content").get<std::string>();
    else if (role == "user") p.user = m.at("content").get<std::string>();
  }
  return p;
}

inline void write_lines(const std::filesystem::path& path, const std::vector<Json>& lines) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (const auto& j : lines) out << j.dump() << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

template <typename Parse>
auto read_lines(const std::filesystem::path& path, Parse parse) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::vector<decltype(parse(Json()))> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(parse(Json::parse(line)));
    } catch (const Json::exception& e) {
      throw DataError(e.what(), path.filename().string() + ":" + std::to_string(line_no));
    }
  }
  return out;
}

}  // namespace detail

inline Json to_json(const SftExample& ex) {
  return {{"messages", detail::messages(ex.prompt)},
          {"target", ex.target},
          {"metadata", detail::provenance_json(ex.provenance)}};
}

inline SftExample sft_example_from_json(const Json& j) {
  SftExample ex;
  ex.provenance = detail::provenance_from_json(j.at("metadata"));
  ex.target = j.at("target").get<std::string>();
  const PromptMode mode = ex.target.rfind("<trace>", 0) == 0 ? PromptMode::reasoning : PromptMode::direct;
  ex.prompt = detail::bundle_from_messages(j.at("messages"), mode, ex.provenance);
  return ex;
}

inline void write_sft(std::span<const SftExample> examples, const std::filesystem::path& path) {
  std::vector<Json> lines;
  for (const auto& ex : examples) lines.push_back(to_json(ex));
  detail::write_lines(path, lines);
}

inline std::vector<SftExample> read_sft(const std::filesystem::path& path) {
  return detail::read_lines(path, sft_example_from_json);
}

inline Json to_json(const SftSummary& s) {
  return {{"records", s.records},
          {"emitted", s.emitted},
          {"trace_failures", s.trace_failures},
          {"leaks_regenerated", s.leaks_regenerated},
          {"leaks_skipped", s.leaks_skipped},
          {"failures", s.failures}};
}

// Writes the examples and returns the summary.
inline SftSummary emit_sft(const Corpus& corpus, const RecordSet& train, SftMode mode,
                           TraceProvider* traces, const std::filesystem::path& out,
                           SftOptions options = {}) {
  auto build = build_sft(corpus, train, mode, traces, options);
  write_sft(build.examples, out);
  return build.summary;
}

// --- DPO ----------------------------------------------------------------------

// Only demographic contrasts are built; the others are reserved.
enum class ContrastKind { demographic, condition, outcome };

inline std::string_view to_string(ContrastKind k) {
  switch (k) {
    case ContrastKind::demographic: return "demographic";
    case ContrastKind::condition: return "condition";
    case ContrastKind::outcome: return "outcome";
  }
  return "?";
}

inline ContrastKind parse_contrast_kind(std::string_view s) {
  if (s == "demographic") return ContrastKind::demographic;
  if (s == "condition") return ContrastKind::condition;
  if (s == "outcome") return ContrastKind::outcome;
  throw ConfigError("unknown contrast kind '" + std::string(s) + "'");
}

struct DpoPair {
  PromptBundle prompt;  // focal persona, shared (c, o)
  std::string chosen;
  std::string rejected;
  ContrastKind contrast_kind = ContrastKind::demographic;
  RecordKey focal;
  std::string neg_source_participant;
};

struct DpoSummary {
  std::size_t focal_records = 0;
  std::size_t pairs = 0;
  std::size_t zero_pair_records = 0;  // no differing response in the bucket
  std::size_t short_records = 0;      // fewer than pairs_per_record available
};

struct DpoBuild {
  std::vector<DpoPair> pairs;
  DpoSummary summary;
};

// For each focal record, up to pairs_per_record negatives drawn without
// replacement from the records sharing its (study, c, o) whose response
// differs. Pools are limited to `train`.
inline DpoBuild build_dpo_pairs(const Corpus& corpus, const RecordSet& train, int pairs_per_record,
                                std::uint64_t seed,
                                ContrastKind kind = ContrastKind::demographic) {
  if (kind != ContrastKind::demographic) {
    throw ConfigError("only demographic contrast pairs are supported");
  }
  if (pairs_per_record < 1) throw ConfigError("pairs_per_record must be at least 1");
  DpoBuild build;
  const StimulusIndex buckets = index_by_stimulus(train);
  build.summary.focal_records = train.size();
  for (const ResponseRecord* focal : train) {
    const auto& bucket = buckets.at(stimulus_of(*focal));
    std::vector<const ResponseRecord*> pool;
    for (const ResponseRecord* other : bucket) {
      if (other->response != focal->response) pool.push_back(other);
    }
    std::sort(pool.begin(), pool.end(),
              [](const auto* a, const auto* b) { return a->participant_id < b->participant_id; });
    if (pool.empty()) {
      ++build.summary.zero_pair_records;
      continue;
    }
    const std::size_t take = std::min<std::size_t>(pool.size(), pairs_per_record);
    if (take < static_cast<std::size_t>(pairs_per_record)) ++build.summary.short_records;
    const RecordKey key = key_of(*focal);
    Stream rng(seed, "dpo", detail::describe(key));
    // Partial Fisher-Yates: the first `take` slots become the sample.
    for (std::size_t i = 0; i < take; ++i) {
      std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    }
    const StudyManifest& m = corpus.study(focal->study_id);
    const PromptBundle prompt =
        render_direct(focal->persona, m, focal->condition_id, focal->outcome_id, focal->participant_id);
    for (std::size_t i = 0; i < take; ++i) {
      DpoPair p;
      p.prompt = prompt;
      p.chosen = std::to_string(focal->response);
      p.rejected = std::to_string(pool[i]->response);
      p.focal = key;
      p.neg_source_participant = pool[i]->participant_id;
      build.pairs.push_back(std::move(p));
    }
  }
  build.summary.pairs = build.pairs.size();
  return build;
}

inline Json to_json(const DpoPair& p) {
  Json meta = detail::provenance_json(p.focal);
  meta["contrast_kind"] = std::string(to_string(p.contrast_kind));
  meta["neg_source_participant"] = p.neg_source_participant;
  return {{"prompt", detail::messages(p.prompt)},
          {"chosen", p.chosen},
          {"rejected", p.rejected},
          {"metadata", meta}};
}

inline DpoPair dpo_pair_from_json(const Json& j) {
  DpoPair p;
  const Json& meta = j.at("metadata");
  p.focal = detail::provenance_from_json(meta);
  p.contrast_kind = parse_contrast_kind(meta.at("contrast_kind").get<std::string>());
  p.neg_source_participant = meta.at("neg_source_participant").get<std::string>();
  p.prompt = detail::bundle_from_messages(j.at("prompt"), PromptMode::direct, p.focal);
  p.chosen = j.at("chosen").get<std::string>();
  p.rejected = j.at("rejected").get<std::string>();
  return p;
}

inline Json to_json(const DpoSummary& s) {
  return {{"focal_records", s.focal_records},
          {"pairs", s.pairs},
          {"zero_pair_records", s.zero_pair_records},
          {"short_records", s.short_records}};
}

inline void emit_dpo(std::span<const DpoPair> pairs, const std::filesystem::path& path) {
  std::vector<Json> lines;
  for (const auto& p : pairs) lines.push_back(to_json(p));
  detail::write_lines(path, lines);
}

inline std::vector<DpoPair> read_dpo(const std::filesystem::path& path) {
  return detail::read_lines(path, dpo_pair_from_json);
}

}  // namespace socsim
