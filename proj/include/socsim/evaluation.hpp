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

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "socsim/csv.hpp"
#include "socsim/metrics.hpp"

namespace socsim {

// Headline numbers of one prediction set (or bound), the unit the report
// compares. accuracy / alignment are fractions in [0, 1].
struct MacroScore {
  std::string name;
  std::optional<double> accuracy;
  std::optional<double> alignment;
  bool is_bound = false;
  // Base this variant's "%Δ vs Base" is computed against; the report-level
  // base when empty.
  std::optional<std::string> base;
  std::map<std::string, std::map<std::string, double>> subgroups;  // category -> value -> alignment
  std::map<std::string, double> parity;                           // category -> parity
  std::optional<Dispersion> dispersion;

  bool operator==(const MacroScore& o) const {
    return name == o.name && accuracy == o.accuracy && alignment == o.alignment &&
           is_bound == o.is_bound && base == o.base && subgroups == o.subgroups &&
           parity == o.parity;
  }
};

struct Evaluation {
  std::string name;
  MetricOptions options;
  AccuracyResult accuracy;
  AlignmentResult alignment;
  Dispersion dispersion;
  std::map<std::string, std::map<std::string, SubgroupScore>> subgroups;
  std::map<std::string, double> parity;
  std::size_t observed_bound_stimuli = 0;

  MacroScore macro() const {
    MacroScore m;
    m.name = name;
    m.accuracy = accuracy.aggregate.macro;
    m.alignment = alignment.aggregate.macro;
    for (const auto& [category, groups] : subgroups) {
      for (const auto& [value, score] : groups) m.subgroups[category][value] = score.alignment;
    }
    m.parity = parity;
    m.dispersion = dispersion;
    return m;
  }
};

// Persona attribute names present in the records, in first-seen order.
inline std::vector<std::string> persona_categories(const RecordSet& records) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const ResponseRecord* r : records) {
    for (const auto& [name, value] : r->persona.attributes()) {
      if (seen.insert(name).second) out.push_back(name);
    }
  }
  return out;
}

inline Evaluation evaluate(std::string name, const Corpus& corpus, const RecordSet& eval,
                           std::span<const PredictionRecord> preds, const MetricOptions& options,
                           const std::vector<std::string>& categories = {}) {
  Evaluation e;
  e.name = std::move(name);
  e.options = options;
  e.accuracy = accuracy(corpus, eval, preds, options);
  e.alignment = distribution_alignment(corpus, eval, preds, options);
  e.dispersion = dispersion(corpus, eval, preds, options);
  for (const auto& category : categories) {
    auto groups = subgroup_alignment(corpus, eval, preds, category, options);
    if (groups.empty()) continue;
    e.parity[category] = demographic_parity(groups);
    e.subgroups[category] = std::move(groups);
  }
  ScaleBook scales(corpus, options.bounds);
  std::set<StimulusKey> eval_stimuli;
  for (const ResponseRecord* r : eval) eval_stimuli.insert(stimulus_of(*r));
  for (const auto& key : eval_stimuli) e.observed_bound_stimuli += scales.at(key).observed;
  return e;
}

inline MacroScore bound_score(std::string name, const BoundResult& bound) {
  MacroScore m;
  m.name = std::move(name);
  m.is_bound = true;
  m.alignment = bound.alignment.macro;
  if (bound.accuracy) m.accuracy = bound.accuracy->macro;
  return m;
}

// --- serialization ------------------------------------------------------------

namespace detail {

inline Json optional_number(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? Json(*v) : Json(nullptr);
}

inline std::optional<double> number_or_null(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

inline Json aggregate_json(const Aggregate& a) {
  Json studies = Json::array();
  for (const auto& s : a.studies) {
    studies.push_back({{"study_id", s.study_id}, {"value", s.value}, {"n_records", s.n_records}});
  }
  return {{"macro", optional_number(a.macro)}, {"studies", studies}};
}

inline Json counts_json(const PredictionCounts& c) {
  return {{"eval_records", c.eval_records}, {"scored", c.scored},
          {"missing", c.missing},           {"parse_failed", c.parse_failed},
          {"clamped", c.clamped},           {"unmatched", c.unmatched},
          {"degenerate_stimuli", c.degenerate_stimuli}};
}

}  // namespace detail

inline Json to_json(const MacroScore& m) {
  Json j;
  j["name"] = m.name;
  j["accuracy"] = detail::optional_number(m.accuracy);
  j["alignment"] = detail::optional_number(m.alignment);
  j["is_bound"] = m.is_bound;
  if (m.base) j["base"] = *m.base;
  if (!m.subgroups.empty()) j["subgroups"] = m.subgroups;
  if (!m.parity.empty()) j["parity"] = m.parity;
  if (m.dispersion) {
    j["dispersion"] = {{"truth_sd", detail::optional_number(m.dispersion->truth_sd)},
                       {"prediction_sd", detail::optional_number(m.dispersion->prediction_sd)}};
  }
  return j;
}

inline MacroScore macro_score_from_json(const Json& j) {
  MacroScore m;
  m.name = j.at("name").get<std::string>();
  m.accuracy = detail::number_or_null(j, "accuracy");
  m.alignment = detail::number_or_null(j, "alignment");
  m.is_bound = j.value("is_bound", false);
  if (j.contains("base") && j["base"].is_string()) m.base = j["base"].get<std::string>();
  if (j.contains("subgroups")) {
    m.subgroups = j["subgroups"].get<std::map<std::string, std::map<std::string, double>>>();
  }
  if (j.contains("parity")) m.parity = j["parity"].get<std::map<std::string, double>>();
  if (j.contains("dispersion")) {
    m.dispersion = Dispersion{
        detail::number_or_null(j["dispersion"], "truth_sd").value_or(std::nan("")),
        detail::number_or_null(j["dispersion"], "prediction_sd").value_or(std::nan(""))};
  }
  return m;
}

inline Json to_json(const Evaluation& e) {
  Json j;
  j["name"] = e.name;
  j["options"] = {{"bounds", to_string(e.options.bounds)},
                  {"parse_fail", e.options.parse_fail == ParseFailPolicy::exclude ? "exclude"
                                                                                  : "midpoint"},
                  {"records_weighted", e.options.records_weighted},
                  {"min_n", e.options.min_n}};
  j["observed_bound_stimuli"] = e.observed_bound_stimuli;
  j["accuracy"] = detail::aggregate_json(e.accuracy.aggregate);
  j["alignment"] = detail::aggregate_json(e.alignment.aggregate);
  j["alignment"]["skipped_stimuli"] = e.alignment.skipped_stimuli;
  j["counts"] = detail::counts_json(e.accuracy.counts);
  j["dispersion"] = {{"truth_sd", detail::optional_number(e.dispersion.truth_sd)},
                     {"prediction_sd", detail::optional_number(e.dispersion.prediction_sd)}};
  if (!e.subgroups.empty()) {
    Json groups = Json::object();
    for (const auto& [category, scores] : e.subgroups) {
      for (const auto& [value, s] : scores) {
        groups[category][value] = {{"alignment", s.alignment},
                                   {"stimuli", s.stimuli},
                                   {"skipped_stimuli", s.skipped_stimuli},
                                   {"records", s.records}};
      }
    }
    j["subgroups"] = groups;
    j["parity"] = e.parity;
  }
  return j;
}

// One row per scored stimulus: study_id,condition_id,outcome_id,variant,wasserstein,n_truth,n_pred
inline void write_stimulus_rows(std::ostream& out, const std::string& variant,
                                std::span<const StimulusScore> scores) {
  char buf[64];
  for (const auto& s : scores) {
    std::snprintf(buf, sizeof buf, "%.17g", s.wasserstein);
    csv::write_row(out, {s.key.study_id, s.key.condition_id, s.key.outcome_id, variant, buf,
                         std::to_string(s.n_truth), std::to_string(s.n_pred)});
  }
}

inline const std::vector<std::string>& stimulus_csv_header() {
  static const std::vector<std::string> header = {"study_id",    "condition_id", "outcome_id",
                                                  "variant",     "wasserstein",  "n_truth",
                                                  "n_pred"};
  return header;
}

}  // namespace socsim
