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
#include <optional>
#include <string>
#include <vector>

#include "socsim/bounds.hpp"
#include "socsim/corpus.hpp"
#include "socsim/rng.hpp"

namespace socsim {

struct PredictionRecord {
  RecordKey key;
  std::optional<int> predicted;  // empty iff parse_failed
  std::optional<std::string> raw_reply;
  bool clamped = false;
  bool parse_failed = false;
  bool baseline = false;

  bool operator==(const PredictionRecord&) const = default;
};

enum class BackendKind { file, midpoint, uniform, resampler, http };

inline BackendKind parse_backend_kind(std::string_view s) {
  if (s == "file") return BackendKind::file;
  if (s == "midpoint") return BackendKind::midpoint;
  if (s == "uniform") return BackendKind::uniform;
  if (s == "resampler") return BackendKind::resampler;
  if (s == "http") return BackendKind::http;
  throw ConfigError("unknown backend '" + std::string(s) + "'");
}

inline Json to_json(const PredictionRecord& p) {
  Json j;
  j["study_id"] = p.key.study_id;
  j["participant_id"] = p.key.participant_id;
  j["condition_id"] = p.key.condition_id;
  j["outcome_id"] = p.key.outcome_id;
  j["predicted"] = p.predicted ? Json(*p.predicted) : Json(nullptr);
  if (p.raw_reply) j["raw_reply"] = *p.raw_reply;
  Json flags = Json::array();
  if (p.clamped) flags.push_back("clamped");
  if (p.parse_failed) flags.push_back("parse_failed");
  if (p.baseline) flags.push_back("baseline");
  j["flags"] = flags;
  return j;
}

inline PredictionRecord prediction_from_json(const Json& j) {
  PredictionRecord p;
  p.key = {detail::require_string(j, "study_id"), detail::require_string(j, "participant_id"),
           detail::require_string(j, "condition_id"), detail::require_string(j, "outcome_id")};
  const Json& predicted = detail::require(j, "predicted");
  if (!predicted.is_null()) p.predicted = detail::require_int(j, "predicted");
  if (auto it = j.find("raw_reply"); it != j.end() && it->is_string()) {
    p.raw_reply = it->get<std::string>();
  }
  for (const auto& flag : j.value("flags", Json::array())) {
    const auto f = flag.get<std::string>();
    if (f == "clamped") p.clamped = true;
    else if (f == "parse_failed") p.parse_failed = true;
    else if (f == "baseline") p.baseline = true;
    else throw DataError("unknown prediction flag '" + f + "'");
  }
  if (!p.predicted) p.parse_failed = true;
  return p;
}

inline void sort_by_key(std::vector<PredictionRecord>& preds) {
  std::sort(preds.begin(), preds.end(),
            [](const auto& a, const auto& b) { return a.key < b.key; });
}

// Parses a prediction JSONL file. Keys are matched against the corpus only
// at evaluation time.
inline std::vector<PredictionRecord> predict_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read prediction file " + path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    try {
      out.push_back(prediction_from_json(Json::parse(line)));
    } catch (const std::exception& e) {
      throw DataError(e.what(), path.filename().string() + ":" + std::to_string(line_no));
    }
  }
  return out;
}

inline void write_predictions(std::span<const PredictionRecord> preds,
                              const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  for (const auto& p : preds) out << to_json(p).dump() << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

namespace detail {

inline std::string stream_key(const StimulusKey& k) {
  return k.study_id + '\x1f' + k.condition_id + '\x1f' + k.outcome_id;
}

inline PredictionRecord baseline_record(const ResponseRecord& r, int value) {
  PredictionRecord p;
  p.key = key_of(r);
  p.predicted = value;
  p.baseline = true;
  return p;
}

// Buckets of the requested records with members ordered by participant.
inline StimulusIndex participant_ordered_index(const RecordSet& records) {
  StimulusIndex index = index_by_stimulus(records);
  for (auto& [key, bucket] : index) {
    std::sort(bucket.begin(), bucket.end(), [](const auto* a, const auto* b) {
      return a->participant_id < b->participant_id;
    });
  }
  return index;
}

}  // namespace detail

// Always the scale midpoint, ties rounded up: [1,6] -> 4, [0,1] -> 1.
inline std::vector<PredictionRecord> baseline_midpoint(const Corpus& corpus, const RecordSet& eval,
                                                       BoundsPolicy bounds = BoundsPolicy::declared) {
  const ScaleBook scales(corpus, bounds);
  std::vector<PredictionRecord> out;
  for (const ResponseRecord* r : eval) {
    const auto& s = scales.at(stimulus_of(*r));
    out.push_back(detail::baseline_record(*r, static_cast<int>(round_half_up(s.midpoint_value()))));
  }
  sort_by_key(out);
  return out;
}

// Independent uniform draws over the integer scale points.
inline std::vector<PredictionRecord> baseline_uniform(const Corpus& corpus, const RecordSet& eval,
                                                      std::uint64_t seed,
                                                      BoundsPolicy bounds = BoundsPolicy::declared) {
  const ScaleBook scales(corpus, bounds);
  std::vector<PredictionRecord> out;
  for (const auto& [key, bucket] : detail::participant_ordered_index(eval)) {
    const auto& s = scales.at(key);
    Stream rng(seed, "uniform", detail::stream_key(key));
    for (const ResponseRecord* r : bucket) {
      out.push_back(detail::baseline_record(*r, static_cast<int>(rng.between(s.min, s.max))));
    }
  }
  sort_by_key(out);
  return out;
}

struct ResamplerOptions {
  // Exclude the focal record from its own sampling pool (unless it is alone).
  bool leave_one_out = false;
};

// Draws each prediction from the empirical distribution of the ground-truth
// responses of the requested records sharing its (c, o).
inline std::vector<PredictionRecord> oracle_resampler(const Corpus& corpus, const RecordSet& eval,
                                                      std::uint64_t seed,
                                                      ResamplerOptions options = {}) {
  (void)corpus;
  std::vector<PredictionRecord> out;
  for (const auto& [key, bucket] : detail::participant_ordered_index(eval)) {
    Stream rng(seed, "resampler", detail::stream_key(key));
    const std::size_t n = bucket.size();
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t pick;
      if (options.leave_one_out && n > 1) {
        pick = rng.below(n - 1);
        if (pick >= i) ++pick;
      } else {
        pick = rng.below(n);
      }
      out.push_back(detail::baseline_record(*bucket[i], bucket[pick]->response));
    }
  }
  sort_by_key(out);
  return out;
}

}  // namespace socsim
