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
#include <compare>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "socsim/csv.hpp"
#include "socsim/error.hpp"
#include "socsim/rng.hpp"

namespace socsim {

using Json = nlohmann::ordered_json;

// Demographic attributes of one participant, kept in source order.
class Persona {
 public:
  using Attribute = std::pair<std::string, std::string>;

  Persona() = default;
  Persona(std::initializer_list<Attribute> attributes) {
    for (const auto& [name, value] : attributes) add(name, value);
  }

  void add(std::string name, std::string value) {
    if (find(name)) throw DataError("duplicate persona attribute '" + name + "'");
    attributes_.emplace_back(std::move(name), std::move(value));
  }

  const std::string* find(std::string_view name) const {
    for (const auto& attribute : attributes_) {
      if (attribute.first == name) return &attribute.second;
    }
    return nullptr;
  }

  const std::vector<Attribute>& attributes() const { return attributes_; }
  bool empty() const { return attributes_.empty(); }
  std::size_t size() const { return attributes_.size(); }

  bool operator==(const Persona&) const = default;

 private:
  std::vector<Attribute> attributes_;
};

struct ResponseScale {
  int min = 0;
  int max = 1;
  std::map<int, std::string> labels;

  int width() const { return max - min; }
  int points() const { return max - min + 1; }
  bool contains(long r) const { return r >= min && r <= max; }
  bool operator==(const ResponseScale&) const = default;
};

enum class Design { between_subject, within_subject };

inline std::string_view to_string(Design d) {
  return d == Design::between_subject ? "between_subject" : "within_subject";
}

inline Design parse_design(std::string_view s) {
  if (s == "between_subject") return Design::between_subject;
  if (s == "within_subject") return Design::within_subject;
  throw DataError("unknown design '" + std::string(s) + "'");
}

struct Condition {
  std::string id;
  std::string stimulus;
  bool operator==(const Condition&) const = default;
};

// Numeric bounds are optional at parse time so that a manifest lacking them
// can still be loaded and reported by validate_study.
struct Outcome {
  std::string id;
  std::string question;
  std::optional<int> min;
  std::optional<int> max;
  std::map<int, std::string> labels;

  std::optional<ResponseScale> scale() const {
    if (!min || !max || *max <= *min) return std::nullopt;
    return ResponseScale{*min, *max, labels};
  }
  bool operator==(const Outcome&) const = default;
};

struct StudyManifest {
  std::string study_id;
  std::vector<Condition> conditions;
  std::vector<Outcome> outcomes;
  Design design = Design::between_subject;
  // Verbatim composed stimulus text for (condition_id, outcome_id), used
  // instead of the generated composition when the source already has it.
  std::map<std::pair<std::string, std::string>, std::string> composed_stimuli;

  const Condition* find_condition(std::string_view id) const {
    for (const auto& c : conditions) {
      if (c.id == id) return &c;
    }
    return nullptr;
  }
  const Outcome* find_outcome(std::string_view id) const {
    for (const auto& o : outcomes) {
      if (o.id == id) return &o;
    }
    return nullptr;
  }
  const std::string* find_composed(const std::string& condition_id,
                                   const std::string& outcome_id) const {
    auto it = composed_stimuli.find({condition_id, outcome_id});
    return it == composed_stimuli.end() ? nullptr : &it->second;
  }
  bool operator==(const StudyManifest&) const = default;
};

struct ResponseRecord {
  std::string study_id;
  std::string participant_id;
  Persona persona;
  std::string condition_id;
  std::string outcome_id;
  int response = 0;
  bool operator==(const ResponseRecord&) const = default;
};

// (study, condition, outcome): one stimulus.
struct StimulusKey {
  std::string study_id;
  std::string condition_id;
  std::string outcome_id;
  auto operator<=>(const StimulusKey&) const = default;
};

// (study, participant, condition, outcome): one response, the provenance of
// every training example and prediction.
struct RecordKey {
  std::string study_id;
  std::string participant_id;
  std::string condition_id;
  std::string outcome_id;
  auto operator<=>(const RecordKey&) const = default;

  StimulusKey stimulus() const { return {study_id, condition_id, outcome_id}; }
};

inline RecordKey key_of(const ResponseRecord& r) {
  return {r.study_id, r.participant_id, r.condition_id, r.outcome_id};
}
inline StimulusKey stimulus_of(const ResponseRecord& r) {
  return {r.study_id, r.condition_id, r.outcome_id};
}

struct Rejection {
  std::string locator;
  std::string message;
};

struct Provenance {
  std::string source;
  std::string format;
  std::string ingested_at;
  std::vector<Rejection> rejected;
};

struct Corpus {
  std::map<std::string, StudyManifest> studies;
  std::vector<ResponseRecord> records;
  Provenance provenance;

  const StudyManifest& study(const std::string& id) const {
    auto it = studies.find(id);
    if (it == studies.end()) throw DataError("unknown study '" + id + "'");
    return it->second;
  }
  const Outcome& outcome(const std::string& study_id,
                         const std::string& outcome_id) const {
    const Outcome* o = study(study_id).find_outcome(outcome_id);
    if (!o) {
      throw DataError("unknown outcome '" + outcome_id + "' in study '" +
                      study_id + "'");
    }
    return *o;
  }

  // Field-for-field equality of content; provenance is metadata.
  bool same_content(const Corpus& other) const {
    return studies == other.studies && records == other.records;
  }
};

// Non-owning view of a subset of a corpus's records, in corpus order.
using RecordSet = std::vector<const ResponseRecord*>;

inline RecordSet all_records(const Corpus& corpus) {
  RecordSet out;
  out.reserve(corpus.records.size());
  for (const auto& r : corpus.records) out.push_back(&r);
  return out;
}

enum class CorpusFormat { jsonl, csv_pair };

inline CorpusFormat parse_corpus_format(std::string_view s) {
  if (s == "jsonl") return CorpusFormat::jsonl;
  if (s == "csv_pair" || s == "csv") return CorpusFormat::csv_pair;
  throw ConfigError("unknown corpus format '" + std::string(s) +
                    "' (expected jsonl or csv_pair)");
}

struct LoadOptions {
  // Downgrade invalid rows to warnings recorded in provenance.rejected.
  bool skip_invalid = false;
};

// --- response standardization ---------------------------------------------

// Maps r on [lo, hi] affinely to the unit interval.
inline double standardize(double r, double lo, double hi) {
  if (!(hi > lo)) {
    throw Error("degenerate response scale [" + std::to_string(lo) + ", " +
                std::to_string(hi) + "]");
  }
  return (r - lo) / (hi - lo);
}

inline double standardize_response(int r, const ResponseScale& scale) {
  return standardize(r, scale.min, scale.max);
}

// --- indexing ---------------------------------------------------------------

using StimulusIndex = std::map<StimulusKey, RecordSet>;

inline StimulusIndex index_by_stimulus(std::span<const ResponseRecord* const> records) {
  StimulusIndex index;
  for (const ResponseRecord* r : records) index[stimulus_of(*r)].push_back(r);
  return index;
}

inline StimulusIndex index_by_stimulus(const Corpus& corpus) {
  return index_by_stimulus(all_records(corpus));
}

// --- validation ---------------------------------------------------------------

struct Violation {
  std::string rule_id;
  std::string message;
  std::string locator;
  bool operator==(const Violation&) const = default;
};

struct ValidationReport {
  std::string study_id;
  bool passed = true;
  std::vector<Violation> violations;
  bool operator==(const ValidationReport&) const = default;
};

namespace rules {
inline constexpr std::string_view kStimulus = "R1-stimulus";
inline constexpr std::string_view kScale = "R2-scale";
inline constexpr std::string_view kStimulusMap = "R3-stimulus-map";
}  // namespace rules

namespace detail {

inline bool blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

inline bool has_composed_for_condition(const StudyManifest& m,
                                       const std::string& condition_id) {
  for (const auto& [key, text] : m.composed_stimuli) {
    if (key.first == condition_id && !blank(text)) return true;
  }
  return false;
}

}  // namespace detail

// Checks the reconstruction contract for one study:
//   R1 every condition carries a stimulus description;
//   R2 every outcome is ordinal or binary with declared numeric bounds;
//   R3 every record's (condition, outcome) maps to a condition-specific
//      stimulus in this manifest.
inline ValidationReport validate_study(const StudyManifest& manifest,
                                       std::span<const ResponseRecord> records) {
  ValidationReport report;
  report.study_id = manifest.study_id;
  auto add = [&](std::string_view rule, std::string message, std::string locator) {
    report.violations.push_back({std::string(rule), std::move(message), std::move(locator)});
  };

  for (const auto& c : manifest.conditions) {
    if (detail::blank(c.stimulus) && !detail::has_composed_for_condition(manifest, c.id)) {
      add(rules::kStimulus, "condition has no stimulus description",
          "condition " + c.id);
    }
  }
  for (const auto& o : manifest.outcomes) {
    const std::string loc = "outcome " + o.id;
    if (!o.min || !o.max) {
      add(rules::kScale,
          o.labels.empty() ? "outcome has no numeric response bounds"
                           : "outcome has labels but no numeric response bounds",
          loc);
      continue;
    }
    if (*o.max <= *o.min) {
      add(rules::kScale,
          "response scale is not ordinal: max " + std::to_string(*o.max) +
              " <= min " + std::to_string(*o.min),
          loc);
      continue;
    }
    for (const auto& [value, label] : o.labels) {
      if (value < *o.min || value > *o.max) {
        add(rules::kScale,
            "label " + std::to_string(value) + " ('" + label + "') outside [" +
                std::to_string(*o.min) + ", " + std::to_string(*o.max) + "]",
            loc);
      }
    }
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const std::string loc = "records[" + std::to_string(i) + "] (participant " +
                            r.participant_id + ", " + r.condition_id + ", " +
                            r.outcome_id + ")";
    if (r.study_id != manifest.study_id) {
      add(rules::kStimulusMap, "record belongs to study '" + r.study_id + "'", loc);
      continue;
    }
    const Condition* c = manifest.find_condition(r.condition_id);
    const Outcome* o = manifest.find_outcome(r.outcome_id);
    if (!c) add(rules::kStimulusMap, "unknown condition '" + r.condition_id + "'", loc);
    if (!o) add(rules::kStimulusMap, "unknown outcome '" + r.outcome_id + "'", loc);
    if (c && o && detail::blank(c->stimulus)) {
      const std::string* composed = manifest.find_composed(c->id, o->id);
      if (!composed || detail::blank(*composed)) {
        add(rules::kStimulusMap, "no condition-specific stimulus for this question", loc);
      }
    }
  }
  report.passed = report.violations.empty();
  return report;
}

inline std::vector<ValidationReport> validate_corpus(const Corpus& corpus) {
  std::map<std::string, std::vector<ResponseRecord>> by_study;
  for (const auto& r : corpus.records) by_study[r.study_id].push_back(r);
  std::vector<ValidationReport> out;
  for (const auto& [id, manifest] : corpus.studies) {
    out.push_back(validate_study(manifest, by_study[id]));
  }
  return out;
}

// --- serialization ----------------------------------------------------------

inline Json to_json(const Persona& p) {
  Json j = Json::object();
  for (const auto& [name, value] : p.attributes()) j[name] = value;
  return j;
}

inline Json to_json(const StudyManifest& m) {
  Json j;
  j["study_id"] = m.study_id;
  j["design"] = to_string(m.design);
  j["conditions"] = Json::array();
  for (const auto& c : m.conditions) {
    j["conditions"].push_back({{"id", c.id}, {"stimulus", c.stimulus}});
  }
  j["outcomes"] = Json::array();
  for (const auto& o : m.outcomes) {
    Json scale = Json::object();
    if (o.min) scale["min"] = *o.min;
    if (o.max) scale["max"] = *o.max;
    if (!o.labels.empty()) {
      Json labels = Json::object();
      for (const auto& [v, text] : o.labels) labels[std::to_string(v)] = text;
      scale["labels"] = labels;
    }
    j["outcomes"].push_back({{"id", o.id}, {"question", o.question}, {"scale", scale}});
  }
  if (!m.composed_stimuli.empty()) {
    j["stimuli"] = Json::array();
    for (const auto& [key, text] : m.composed_stimuli) {
      j["stimuli"].push_back(
          {{"condition_id", key.first}, {"outcome_id", key.second}, {"text", text}});
    }
  }
  return j;
}

inline Json to_json(const ResponseRecord& r) {
  return {{"study_id", r.study_id},         {"participant_id", r.participant_id},
          {"persona", to_json(r.persona)},  {"condition_id", r.condition_id},
          {"outcome_id", r.outcome_id},     {"response", r.response}};
}

namespace detail {

inline std::string scalar_text(const Json& v, const std::string& what) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number() || v.is_boolean()) return v.dump();
  throw DataError(what + " must be a string or number");
}

inline const Json& require(const Json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end()) throw DataError(std::string("missing field '") + field + "'");
  return *it;
}

inline std::string require_string(const Json& j, const char* field) {
  return scalar_text(require(j, field), std::string("field '") + field + "'");
}

inline int require_int(const Json& j, const char* field) {
  const Json& v = require(j, field);
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_number_float()) {
    double d = v.get<double>();
    if (d == static_cast<int>(d)) return static_cast<int>(d);
  }
  throw DataError(std::string("field '") + field + "' must be an integer");
}

}  // namespace detail

inline Persona persona_from_json(const Json& j) {
  if (!j.is_object()) throw DataError("persona must be an object");
  Persona p;
  for (const auto& [name, value] : j.items()) {
    if (value.is_null()) continue;
    p.add(name, detail::scalar_text(value, "persona attribute '" + name + "'"));
  }
  return p;
}

inline StudyManifest manifest_from_json(const Json& j) {
  StudyManifest m;
  m.study_id = detail::require_string(j, "study_id");
  if (auto it = j.find("design"); it != j.end()) {
    m.design = parse_design(it->get<std::string>());
  }
  for (const auto& c : detail::require(j, "conditions")) {
    m.conditions.push_back({detail::require_string(c, "id"),
                            c.value("stimulus", std::string())});
  }
  for (const auto& o : detail::require(j, "outcomes")) {
    Outcome out;
    out.id = detail::require_string(o, "id");
    out.question = o.value("question", std::string());
    const Json scale = o.value("scale", Json::object());
    if (scale.contains("min")) out.min = detail::require_int(scale, "min");
    if (scale.contains("max")) out.max = detail::require_int(scale, "max");
    if (scale.contains("labels")) {
      for (const auto& [k, v] : scale["labels"].items()) {
        try {
          out.labels[std::stoi(k)] = v.get<std::string>();
        } catch (const std::logic_error&) {
          throw DataError("label key '" + k + "' is not an integer");
        }
      }
    }
    m.outcomes.push_back(std::move(out));
  }
  if (auto it = j.find("stimuli"); it != j.end()) {
    for (const auto& s : *it) {
      m.composed_stimuli[{detail::require_string(s, "condition_id"),
                          detail::require_string(s, "outcome_id")}] =
          detail::require_string(s, "text");
    }
  }
  return m;
}

inline ResponseRecord record_from_json(const Json& j) {
  ResponseRecord r;
  r.study_id = detail::require_string(j, "study_id");
  r.participant_id = detail::require_string(j, "participant_id");
  r.persona = persona_from_json(detail::require(j, "persona"));
  r.condition_id = detail::require_string(j, "condition_id");
  r.outcome_id = detail::require_string(j, "outcome_id");
  r.response = detail::require_int(j, "response");
  return r;
}

// Structural checks on a manifest that make it unusable (as opposed to
// contract violations, which validate_study reports).
inline void check_manifest(const StudyManifest& m, const std::string& locator) {
  if (m.study_id.empty()) throw DataError("empty study_id", locator);
  if (m.conditions.empty()) throw DataError("study has no conditions", locator);
  if (m.outcomes.empty()) throw DataError("study has no outcomes", locator);
  std::set<std::string> seen;
  for (const auto& c : m.conditions) {
    if (!seen.insert(c.id).second) {
      throw DataError("duplicate condition id '" + c.id + "'", locator);
    }
  }
  seen.clear();
  for (const auto& o : m.outcomes) {
    if (!seen.insert(o.id).second) {
      throw DataError("duplicate outcome id '" + o.id + "'", locator);
    }
  }
  for (const auto& [key, text] : m.composed_stimuli) {
    if (!m.find_condition(key.first) || !m.find_outcome(key.second)) {
      throw DataError("composed stimulus for unknown (" + key.first + ", " +
                          key.second + ")",
                      locator);
    }
  }
}

namespace detail {

inline std::string utc_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Row-level checks shared by both formats; returns an error message or empty.
inline std::string check_record(const Corpus& corpus, const ResponseRecord& r,
                                std::set<RecordKey>& seen) {
  auto study = corpus.studies.find(r.study_id);
  if (study == corpus.studies.end()) return "unknown study '" + r.study_id + "'";
  if (r.persona.empty()) return "persona has no attributes";
  if (!study->second.find_condition(r.condition_id)) {
    return "unknown condition '" + r.condition_id + "'";
  }
  const Outcome* o = study->second.find_outcome(r.outcome_id);
  if (!o) return "unknown outcome '" + r.outcome_id + "'";
  if (auto scale = o->scale(); scale && !scale->contains(r.response)) {
    return "response " + std::to_string(r.response) + " outside scale [" +
           std::to_string(scale->min) + ", " + std::to_string(scale->max) +
           "] of outcome '" + r.outcome_id + "'";
  }
  if (!seen.insert(key_of(r)).second) {
    return "duplicate (participant, condition, outcome) key (" + r.participant_id +
           ", " + r.condition_id + ", " + r.outcome_id + ")";
  }
  return {};
}

inline void admit(Corpus& corpus, ResponseRecord record, const std::string& locator,
                  const LoadOptions& options, std::set<RecordKey>& seen) {
  std::string problem = check_record(corpus, record, seen);
  if (problem.empty()) {
    corpus.records.push_back(std::move(record));
    return;
  }
  if (!options.skip_invalid) throw DataError(problem, locator);
  corpus.provenance.rejected.push_back({locator, problem});
}

inline void finish(Corpus& corpus, const LoadOptions& options) {
  std::set<std::string> with_records;
  for (const auto& r : corpus.records) with_records.insert(r.study_id);
  for (auto it = corpus.studies.begin(); it != corpus.studies.end();) {
    if (with_records.count(it->first)) {
      ++it;
      continue;
    }
    if (!options.skip_invalid) {
      throw DataError("study '" + it->first + "' has no response records");
    }
    corpus.provenance.rejected.push_back({"study " + it->first, "no response records"});
    it = corpus.studies.erase(it);
  }
}

inline std::ifstream open_input(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  return in;
}

inline Corpus load_jsonl(const std::filesystem::path& dir, const LoadOptions& options) {
  namespace fs = std::filesystem;
  Corpus corpus;
  const fs::path manifests = dir / "manifests";
  const fs::path responses = dir / "responses.jsonl";
  if (!fs::is_directory(manifests)) {
    throw ConfigError("missing manifest directory " + manifests.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(manifests)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    auto in = open_input(file);
    StudyManifest m;
    try {
      m = manifest_from_json(Json::parse(in));
    } catch (const Json::exception& e) {
      throw DataError(e.what(), file.string());
    } catch (const DataError& e) {
      throw DataError(e.what(), file.string());
    }
    check_manifest(m, file.string());
    if (corpus.studies.count(m.study_id)) {
      throw DataError("duplicate manifest for study '" + m.study_id + "'", file.string());
    }
    corpus.studies.emplace(m.study_id, std::move(m));
  }
  auto in = open_input(responses);
  std::set<RecordKey> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::blank(line)) continue;
    const std::string locator = responses.filename().string() + ":" + std::to_string(line_no);
    ResponseRecord record;
    try {
      record = record_from_json(Json::parse(line));
    } catch (const std::exception& e) {
      if (!options.skip_invalid) throw DataError(e.what(), locator);
      corpus.provenance.rejected.push_back({locator, e.what()});
      continue;
    }
    admit(corpus, std::move(record), locator, options, seen);
  }
  return corpus;
}

inline std::map<int, std::string> parse_labels(const std::string& text,
                                               const std::string& locator) {
  std::map<int, std::string> labels;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, '|')) {
    if (blank(item)) continue;
    auto eq = item.find('=');
    if (eq == std::string::npos) throw DataError("label '" + item + "' lacks '='", locator);
    try {
      labels[std::stoi(item.substr(0, eq))] = item.substr(eq + 1);
    } catch (const std::logic_error&) {
      throw DataError("label key in '" + item + "' is not an integer", locator);
    }
  }
  return labels;
}

inline std::optional<int> parse_optional_int(const std::string& s, const std::string& locator) {
  if (blank(s)) return std::nullopt;
  try {
    std::size_t used = 0;
    int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    throw DataError("'" + s + "' is not an integer", locator);
  }
}

inline std::map<std::string, std::size_t> header_index(const csv::Row& header,
                                                       const std::vector<std::string>& required,
                                                       const std::string& name) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.fields.size(); ++i) index[header.fields[i]] = i;
  for (const auto& column : required) {
    if (!index.count(column)) throw DataError("missing column '" + column + "'", name + ":1");
  }
  return index;
}

inline Corpus load_csv_pair(const std::filesystem::path& dir, const LoadOptions& options) {
  Corpus corpus;
  const auto manifest_path = dir / "manifest.csv";
  const auto responses_path = dir / "responses.csv";
  std::vector<csv::Row> manifest_rows;
  std::vector<csv::Row> response_rows;
  {
    auto in = open_input(manifest_path);
    manifest_rows = csv::read(in, "manifest.csv");
  }
  {
    auto in = open_input(responses_path);
    response_rows = csv::read(in, "responses.csv");
  }
  if (manifest_rows.empty()) throw DataError("empty manifest", "manifest.csv");
  const std::vector<std::string> manifest_columns = {
      "study_id", "design", "kind", "condition_id", "outcome_id", "text", "min", "max", "labels"};
  auto mcol = header_index(manifest_rows[0], manifest_columns, "manifest.csv");
  for (std::size_t i = 1; i < manifest_rows.size(); ++i) {
    const auto& row = manifest_rows[i];
    const std::string locator = "manifest.csv:" + std::to_string(row.line);
    auto field = [&](const std::string& name) -> std::string {
      std::size_t idx = mcol.at(name);
      return idx < row.fields.size() ? row.fields[idx] : std::string();
    };
    const std::string study_id = field("study_id");
    if (study_id.empty()) throw DataError("empty study_id", locator);
    StudyManifest& m = corpus.studies[study_id];
    m.study_id = study_id;
    if (!field("design").empty()) m.design = parse_design(field("design"));
    const std::string kind = field("kind");
    if (kind == "condition") {
      m.conditions.push_back({field("condition_id"), field("text")});
    } else if (kind == "outcome") {
      Outcome o;
      o.id = field("outcome_id");
      o.question = field("text");
      o.min = parse_optional_int(field("min"), locator);
      o.max = parse_optional_int(field("max"), locator);
      o.labels = parse_labels(field("labels"), locator);
      m.outcomes.push_back(std::move(o));
    } else if (kind == "stimulus") {
      m.composed_stimuli[{field("condition_id"), field("outcome_id")}] = field("text");
    } else {
      throw DataError("unknown manifest row kind '" + kind + "'", locator);
    }
  }
  for (const auto& [id, m] : corpus.studies) check_manifest(m, "manifest.csv (study " + id + ")");

  if (response_rows.empty()) throw DataError("empty responses file", "responses.csv");
  const std::vector<std::string> fixed = {"study_id", "participant_id", "condition_id",
                                          "outcome_id", "response"};
  auto rcol = header_index(response_rows[0], fixed, "responses.csv");
  std::vector<std::pair<std::string, std::size_t>> attribute_columns;
  for (std::size_t i = 0; i < response_rows[0].fields.size(); ++i) {
    const auto& name = response_rows[0].fields[i];
    if (std::find(fixed.begin(), fixed.end(), name) == fixed.end()) {
      attribute_columns.emplace_back(name, i);
    }
  }
  std::set<RecordKey> seen;
  for (std::size_t i = 1; i < response_rows.size(); ++i) {
    const auto& row = response_rows[i];
    const std::string locator = "responses.csv:" + std::to_string(row.line);
    auto field = [&](std::size_t idx) -> std::string {
      return idx < row.fields.size() ? row.fields[idx] : std::string();
    };
    ResponseRecord r;
    try {
      if (row.fields.size() != response_rows[0].fields.size()) {
        throw DataError("expected " + std::to_string(response_rows[0].fields.size()) +
                        " fields, found " + std::to_string(row.fields.size()));
      }
      r.study_id = field(rcol.at("study_id"));
      r.participant_id = field(rcol.at("participant_id"));
      r.condition_id = field(rcol.at("condition_id"));
      r.outcome_id = field(rcol.at("outcome_id"));
      auto response = parse_optional_int(field(rcol.at("response")), "");
      if (!response) throw DataError("empty response");
      r.response = *response;
      for (const auto& [name, idx] : attribute_columns) {
        std::string value = field(idx);
        if (!value.empty()) r.persona.add(name, std::move(value));
      }
    } catch (const DataError& e) {
      if (!options.skip_invalid) throw DataError(e.what(), locator);
      corpus.provenance.rejected.push_back({locator, e.what()});
      continue;
    }
    admit(corpus, std::move(r), locator, options, seen);
  }
  return corpus;
}

}  // namespace detail

// Loads a corpus directory.
//   jsonl:    <dir>/manifests/*.json and <dir>/responses.jsonl
//   csv_pair: <dir>/manifest.csv and <dir>/responses.csv
// Invalid rows abort the load with a located DataError unless
// options.skip_invalid is set, in which case they are listed in
// provenance.rejected. Nothing is coerced.
inline Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format,
                          const LoadOptions& options = {}) {
  if (!std::filesystem::is_directory(path)) {
    throw ConfigError("corpus path " + path.string() + " is not a directory");
  }
  Corpus corpus = format == CorpusFormat::jsonl ? detail::load_jsonl(path, options)
                                                : detail::load_csv_pair(path, options);
  detail::finish(corpus, options);
  corpus.provenance.source = path.string();
  corpus.provenance.format = format == CorpusFormat::jsonl ? "jsonl" : "csv_pair";
  corpus.provenance.ingested_at = detail::utc_now();
  return corpus;
}

// Guesses the format from the directory contents.
inline CorpusFormat detect_corpus_format(const std::filesystem::path& dir) {
  if (std::filesystem::exists(dir / "responses.jsonl")) return CorpusFormat::jsonl;
  if (std::filesystem::exists(dir / "responses.csv")) return CorpusFormat::csv_pair;
  throw ConfigError("no responses.jsonl or responses.csv under " + dir.string());
}

inline void write_jsonl(const Corpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "manifests");
  for (const auto& [id, m] : corpus.studies) {
    std::ofstream out(dir / "manifests" / (id + ".json"), std::ios::binary);
    out << to_json(m).dump(2) << '\n';
    if (!out) throw Error("failed writing manifest for " + id);
  }
  std::ofstream out(dir / "responses.jsonl", std::ios::binary);
  for (const auto& r : corpus.records) out << to_json(r).dump() << '\n';
  if (!out) throw Error("failed writing " + (dir / "responses.jsonl").string());
}

inline void write_csv_pair(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "manifest.csv", std::ios::binary);
    csv::write_row(out, {"study_id", "design", "kind", "condition_id", "outcome_id", "text",
                         "min", "max", "labels"});
    for (const auto& [id, m] : corpus.studies) {
      const std::string design(to_string(m.design));
      for (const auto& c : m.conditions) {
        csv::write_row(out, {id, design, "condition", c.id, "", c.stimulus, "", "", ""});
      }
      for (const auto& o : m.outcomes) {
        std::string labels;
        for (const auto& [v, text] : o.labels) {
          if (!labels.empty()) labels += '|';
          labels += std::to_string(v) + "=" + text;
        }
        csv::write_row(out, {id, design, "outcome", "", o.id, o.question,
                             o.min ? std::to_string(*o.min) : "",
                             o.max ? std::to_string(*o.max) : "", labels});
      }
      for (const auto& [key, text] : m.composed_stimuli) {
        csv::write_row(out, {id, design, "stimulus", key.first, key.second, text, "", "", ""});
      }
    }
  }
  std::vector<std::string> attributes;
  for (const auto& r : corpus.records) {
    for (const auto& [name, value] : r.persona.attributes()) {
      if (std::find(attributes.begin(), attributes.end(), name) == attributes.end()) {
        attributes.push_back(name);
      }
    }
  }
  std::ofstream out(dir / "responses.csv", std::ios::binary);
  std::vector<std::string> header = {"study_id", "participant_id", "condition_id", "outcome_id",
                                     "response"};
  header.insert(header.end(), attributes.begin(), attributes.end());
  csv::write_row(out, header);
  for (const auto& r : corpus.records) {
    std::vector<std::string> row = {r.study_id, r.participant_id, r.condition_id, r.outcome_id,
                                    std::to_string(r.response)};
    for (const auto& name : attributes) {
      const std::string* v = r.persona.find(name);
      row.push_back(v ? *v : "");
    }
    csv::write_row(out, row);
  }
}

// Hash of the canonical serialization; independent of provenance.
inline std::string content_hash(const Corpus& corpus) {
  std::uint64_t h = fnv1a64("");
  for (const auto& [id, m] : corpus.studies) h = fnv1a64(to_json(m).dump(), h);
  for (const auto& r : corpus.records) h = fnv1a64(to_json(r).dump(), h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace socsim
