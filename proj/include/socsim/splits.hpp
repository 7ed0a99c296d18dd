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
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "socsim/corpus.hpp"
#include "socsim/rng.hpp"

namespace socsim {

enum class SplitKind { study, condition, outcome, participant_sweep };

inline std::string_view to_string(SplitKind k) {
  switch (k) {
    case SplitKind::study: return "study";
    case SplitKind::condition: return "condition";
    case SplitKind::outcome: return "outcome";
    case SplitKind::participant_sweep: return "participant_sweep";
  }
  return "?";
}

inline SplitKind parse_split_kind(std::string_view s) {
  if (s == "study") return SplitKind::study;
  if (s == "condition") return SplitKind::condition;
  if (s == "outcome") return SplitKind::outcome;
  if (s == "participant_sweep" || s == "participant") return SplitKind::participant_sweep;
  throw ConfigError("unknown split kind '" + std::string(s) + "'");
}

inline const std::vector<double>& default_pilot_fractions() {
  static const std::vector<double> fractions = {0.01, 0.05, 0.10, 0.20, 0.30, 0.40, 0.50};
  return fractions;
}

struct SplitSpec {
  SplitKind kind = SplitKind::study;
  std::uint64_t seed = 0;
  int train_count = 0;           // study
  double train_fraction = 0.75;  // condition / outcome
  int min_arms = 4;              // condition / outcome
  std::vector<double> pilot_fractions = default_pilot_fractions();  // participant_sweep

  void check() const {
    if (kind == SplitKind::condition || kind == SplitKind::outcome) {
      if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("train fraction must lie in (0, 1)");
      }
      if (min_arms < 2) throw ConfigError("min_arms must be at least 2");
    }
    if (kind == SplitKind::participant_sweep) {
      if (pilot_fractions.empty()) throw ConfigError("no pilot fractions given");
      for (std::size_t i = 0; i < pilot_fractions.size(); ++i) {
        double f = pilot_fractions[i];
        if (!(f > 0.0 && f <= 0.5)) {
          throw ConfigError("pilot fractions must lie in (0, 0.5]");
        }
        if (i && !(f > pilot_fractions[i - 1])) {
          throw ConfigError("pilot fractions must be strictly ascending");
        }
      }
    }
  }
};

// A split unit. study_id alone for study splits; member is the condition,
// outcome or participant id for the other kinds.
struct SplitKey {
  std::string study_id;
  std::string member;
  auto operator<=>(const SplitKey&) const = default;
};

struct SplitAssignment {
  SplitSpec spec;
  std::set<SplitKey> train_keys;
  std::set<SplitKey> eval_keys;
  std::map<double, std::set<SplitKey>> pilot_subsets;
  // Studies outside the eligible population (condition/outcome splits).
  std::set<std::string> excluded_studies;
  // Participant sweep: the study-level held-out studies, whose participants
  // are all in eval_keys.
  std::set<std::string> heldout_studies;

  bool operator==(const SplitAssignment& o) const {
    return train_keys == o.train_keys && eval_keys == o.eval_keys &&
           pilot_subsets == o.pilot_subsets && excluded_studies == o.excluded_studies &&
           heldout_studies == o.heldout_studies;
  }
};

// The split unit a record falls under for a given kind.
inline SplitKey split_key_of(SplitKind kind, const ResponseRecord& r) {
  switch (kind) {
    case SplitKind::study: return {r.study_id, {}};
    case SplitKind::condition: return {r.study_id, r.condition_id};
    case SplitKind::outcome: return {r.study_id, r.outcome_id};
    case SplitKind::participant_sweep: return {r.study_id, r.participant_id};
  }
  return {};
}

// Partitions studies uniformly at random. Each study gets a priority drawn
// from its own (seed, study_id) stream; the train_count lowest go to train.
inline SplitAssignment split_studies(const Corpus& corpus, int train_count, std::uint64_t seed) {
  const int n = static_cast<int>(corpus.studies.size());
  if (train_count < 1 || train_count >= n) {
    throw ConfigError("study split needs 0 < train_count < number of studies (" +
                      std::to_string(n) + "), got " + std::to_string(train_count));
  }
  std::vector<std::pair<std::uint64_t, std::string>> order;
  for (const auto& [id, m] : corpus.studies) {
    order.emplace_back(Stream(seed, "split.studies", id).next(), id);
  }
  std::sort(order.begin(), order.end());
  SplitAssignment a;
  a.spec.kind = SplitKind::study;
  a.spec.seed = seed;
  a.spec.train_count = train_count;
  for (int i = 0; i < n; ++i) {
    (i < train_count ? a.train_keys : a.eval_keys).insert({order[i].second, {}});
  }
  return a;
}

namespace detail {

inline int train_arms(double fraction, int n) {
  return static_cast<int>(std::clamp<long>(round_half_up(fraction * n), 1, n - 1));
}

inline SplitAssignment split_arms(const Corpus& corpus, SplitKind kind, double train_fraction,
                                  int min_arms, std::uint64_t seed) {
  SplitAssignment a;
  a.spec.kind = kind;
  a.spec.seed = seed;
  a.spec.train_fraction = train_fraction;
  a.spec.min_arms = min_arms;
  a.spec.check();
  const char* tag = kind == SplitKind::condition ? "split.conditions" : "split.outcomes";
  for (const auto& [id, m] : corpus.studies) {
    std::vector<std::string> arms;
    if (kind == SplitKind::condition) {
      for (const auto& c : m.conditions) arms.push_back(c.id);
    } else {
      for (const auto& o : m.outcomes) arms.push_back(o.id);
    }
    const int n = static_cast<int>(arms.size());
    if (n < min_arms) {
      a.excluded_studies.insert(id);
      continue;
    }
    std::sort(arms.begin(), arms.end());
    Stream rng(seed, tag, id);
    rng.shuffle(std::span(arms));
    const int k = train_arms(train_fraction, n);
    for (int i = 0; i < n; ++i) (i < k ? a.train_keys : a.eval_keys).insert({id, arms[i]});
  }
  if (a.train_keys.empty()) {
    throw ConfigError(std::string("no study has at least ") + std::to_string(min_arms) + " " +
                      (kind == SplitKind::condition ? "conditions" : "outcomes"));
  }
  return a;
}

}  // namespace detail

// Per eligible study (>= min_arms conditions), clamp(round(f*n), 1, n-1)
// conditions go to train with every record under them; the rest to eval.
inline SplitAssignment split_conditions(const Corpus& corpus, double train_fraction,
                                        int min_arms, std::uint64_t seed) {
  return detail::split_arms(corpus, SplitKind::condition, train_fraction, min_arms, seed);
}

inline SplitAssignment split_outcomes(const Corpus& corpus, double train_fraction, int min_arms,
                                      std::uint64_t seed) {
  return detail::split_arms(corpus, SplitKind::outcome, train_fraction, min_arms, seed);
}

// Participant pilot sweep over the train studies of a study split.
//
// Each train study's participants are permuted once; the first
// round(n/2) form participant-train and the rest participant-eval. The pilot
// subset at fraction f is the first round(f*n) of the same permutation, so
// pilots are nested and pilot(0.5) is participant-train. eval_keys holds
// participant-eval plus every participant of the held-out studies and does
// not depend on the fractions.
inline SplitAssignment split_participants(const Corpus& corpus, const SplitAssignment& study_split,
                                          const std::vector<double>& pilot_fractions,
                                          std::uint64_t seed) {
  if (study_split.spec.kind != SplitKind::study) {
    throw ConfigError("participant sweep requires a study split");
  }
  SplitAssignment a;
  a.spec.kind = SplitKind::participant_sweep;
  a.spec.seed = seed;
  a.spec.train_count = study_split.spec.train_count;
  a.spec.pilot_fractions = pilot_fractions;
  a.spec.check();

  std::map<std::string, std::set<std::string>> participants;
  for (const auto& r : corpus.records) participants[r.study_id].insert(r.participant_id);

  for (const auto& key : study_split.eval_keys) {
    a.heldout_studies.insert(key.study_id);
    for (const auto& p : participants[key.study_id]) a.eval_keys.insert({key.study_id, p});
  }
  for (const auto& key : study_split.train_keys) {
    const auto& ids = participants[key.study_id];
    if (ids.size() < 2) {
      throw DataError("study '" + key.study_id + "' has fewer than 2 participants");
    }
    std::vector<std::string> order(ids.begin(), ids.end());
    Stream rng(seed, "split.participants", key.study_id);
    rng.shuffle(std::span(order));
    const long n = static_cast<long>(order.size());
    const long half = round_half_up(0.5 * n);
    for (long i = 0; i < n; ++i) {
      (i < half ? a.train_keys : a.eval_keys).insert({key.study_id, order[i]});
    }
    for (double f : pilot_fractions) {
      const long size = std::min(round_half_up(f * n), half);
      auto& subset = a.pilot_subsets[f];
      for (long i = 0; i < size; ++i) subset.insert({key.study_id, order[i]});
    }
  }
  return a;
}

enum class Side { train, eval };

// Records under the train or eval keys of an assignment, in corpus order.
inline RecordSet select_records(const Corpus& corpus, const SplitAssignment& a, Side side) {
  const auto& keys = side == Side::train ? a.train_keys : a.eval_keys;
  RecordSet out;
  for (const auto& r : corpus.records) {
    if (keys.count(split_key_of(a.spec.kind, r))) out.push_back(&r);
  }
  return out;
}

// Records of the pilot subset at one fraction of a participant sweep.
inline RecordSet select_pilot(const Corpus& corpus, const SplitAssignment& a, double fraction) {
  auto it = std::find_if(a.pilot_subsets.begin(), a.pilot_subsets.end(),
                         [&](const auto& kv) { return std::abs(kv.first - fraction) < 1e-12; });
  if (it == a.pilot_subsets.end()) {
    throw ConfigError("split has no pilot subset at fraction " + Json(fraction).dump());
  }
  RecordSet out;
  for (const auto& r : corpus.records) {
    if (it->second.count(split_key_of(SplitKind::participant_sweep, r))) out.push_back(&r);
  }
  return out;
}

inline RecordSet restrict_to_studies(const RecordSet& records, const std::set<std::string>& studies,
                                     bool keep) {
  RecordSet out;
  for (const ResponseRecord* r : records) {
    if (static_cast<bool>(studies.count(r->study_id)) == keep) out.push_back(r);
  }
  return out;
}

// --- assignment file ----------------------------------------------------------

namespace detail {

inline Json keys_to_json(SplitKind kind, const std::set<SplitKey>& keys) {
  Json arr = Json::array();
  for (const auto& k : keys) {
    arr.push_back(kind == SplitKind::study ? Json::array({k.study_id})
                                           : Json::array({k.study_id, k.member}));
  }
  return arr;
}

inline std::set<SplitKey> keys_from_json(const Json& arr) {
  std::set<SplitKey> keys;
  for (const auto& k : arr) {
    if (!k.is_array() || k.empty() || k.size() > 2) throw DataError("malformed split key " + k.dump());
    keys.insert({k[0].get<std::string>(), k.size() == 2 ? k[1].get<std::string>() : ""});
  }
  return keys;
}

}  // namespace detail

inline Json to_json(const SplitAssignment& a) {
  Json params = Json::object();
  switch (a.spec.kind) {
    case SplitKind::study:
      params["train_count"] = a.spec.train_count;
      break;
    case SplitKind::condition:
    case SplitKind::outcome:
      params["train_fraction"] = a.spec.train_fraction;
      params["min_arms"] = a.spec.min_arms;
      break;
    case SplitKind::participant_sweep:
      params["train_count"] = a.spec.train_count;
      params["pilot_fractions"] = a.spec.pilot_fractions;
      break;
  }
  Json j;
  j["kind"] = to_string(a.spec.kind);
  j["seed"] = a.spec.seed;
  j["params"] = params;
  j["train_keys"] = detail::keys_to_json(a.spec.kind, a.train_keys);
  j["eval_keys"] = detail::keys_to_json(a.spec.kind, a.eval_keys);
  if (!a.pilot_subsets.empty()) {
    Json pilots = Json::object();
    for (const auto& [f, keys] : a.pilot_subsets) {
      pilots[Json(f).dump()] = detail::keys_to_json(a.spec.kind, keys);
    }
    j["pilot_subsets"] = pilots;
  }
  if (!a.excluded_studies.empty()) j["excluded_studies"] = a.excluded_studies;
  if (!a.heldout_studies.empty()) j["heldout_studies"] = a.heldout_studies;
  return j;
}

inline SplitAssignment split_from_json(const Json& j) {
  SplitAssignment a;
  a.spec.kind = parse_split_kind(j.at("kind").get<std::string>());
  a.spec.seed = j.at("seed").get<std::uint64_t>();
  const Json& params = j.at("params");
  a.spec.train_count = params.value("train_count", 0);
  a.spec.train_fraction = params.value("train_fraction", 0.75);
  a.spec.min_arms = params.value("min_arms", 4);
  if (params.contains("pilot_fractions")) {
    a.spec.pilot_fractions = params["pilot_fractions"].get<std::vector<double>>();
  }
  a.train_keys = detail::keys_from_json(j.at("train_keys"));
  a.eval_keys = detail::keys_from_json(j.at("eval_keys"));
  if (j.contains("pilot_subsets")) {
    for (const auto& [f, keys] : j["pilot_subsets"].items()) {
      a.pilot_subsets[std::stod(f)] = detail::keys_from_json(keys);
    }
  }
  if (j.contains("excluded_studies")) {
    a.excluded_studies = j["excluded_studies"].get<std::set<std::string>>();
  }
  if (j.contains("heldout_studies")) {
    a.heldout_studies = j["heldout_studies"].get<std::set<std::string>>();
  }
  return a;
}

inline void write_split(const SplitAssignment& a, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << to_json(a).dump(2) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

inline SplitAssignment read_split(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read split file " + path.string());
  try {
    return split_from_json(Json::parse(in));
  } catch (const Json::exception& e) {
    throw DataError(e.what(), path.string());
  }
}

}  // namespace socsim
