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
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "socsim/backends.hpp"
#include "socsim/bounds.hpp"
#include "socsim/corpus.hpp"
#include "socsim/rng.hpp"

namespace socsim {

// Exact 1-Wasserstein distance between the empirical measures of a and b:
// the integral of |F_a - F_b| over the real line. Sizes may differ.
inline double wasserstein_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error("wasserstein_1d needs two non-empty samples");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double m = static_cast<double>(x.size());
  const double n = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double total = 0.0;
  double at = std::min(x.front(), y.front());
  while (i < x.size() || j < y.size()) {
    double next;
    if (j == y.size() || (i < x.size() && x[i] <= y[j])) {
      next = x[i];
    } else {
      next = y[j];
    }
    // |i/m - j/n| on [at, next), scaled by m*n to stay in integers.
    total += std::abs(static_cast<double>(i) * n - static_cast<double>(j) * m) * (next - at);
    at = next;
    while (i < x.size() && x[i] == at) ++i;
    while (j < y.size() && y[j] == at) ++j;
  }
  return total / (m * n);
}

enum class ParseFailPolicy { exclude, midpoint };

inline ParseFailPolicy parse_parse_fail_policy(std::string_view s) {
  if (s == "exclude") return ParseFailPolicy::exclude;
  if (s == "midpoint") return ParseFailPolicy::midpoint;
  throw ConfigError("unknown parse-failure policy '" + std::string(s) + "'");
}

enum class Direction { higher_better, lower_better };

struct MetricOptions {
  BoundsPolicy bounds = BoundsPolicy::declared;
  ParseFailPolicy parse_fail = ParseFailPolicy::exclude;
  // Weight studies by their number of scored records instead of equally.
  bool records_weighted = false;
  // Minimum truth responses per stimulus for subgroup scores.
  std::size_t min_n = 5;
  int n_boot = 100;
  std::uint64_t seed = 0;
};

struct StimulusScore {
  StimulusKey key;
  double wasserstein = 0;
  std::size_t n_truth = 0;
  std::size_t n_pred = 0;
};

struct StudyScore {
  std::string study_id;
  double value = 0;
  std::size_t n_records = 0;  // weight for records-weighted averaging
};

// Per-study scores and their average across studies.
struct Aggregate {
  std::vector<StudyScore> studies;
  double macro = 0;
};

struct PredictionCounts {
  std::size_t eval_records = 0;
  std::size_t scored = 0;
  std::size_t missing = 0;       // eval records without a prediction
  std::size_t parse_failed = 0;  // flagged failures (excluded or midpoint-scored)
  std::size_t clamped = 0;
  std::size_t unmatched = 0;     // predictions whose key is not an eval record
  std::size_t degenerate_stimuli = 0;
};

namespace detail {

inline Aggregate aggregate(std::map<std::string, std::pair<double, std::size_t>> sums_by_study,
                           const std::map<std::string, std::size_t>& counts_by_study,
                           bool records_weighted) {
  Aggregate out;
  double num = 0, den = 0;
  for (const auto& [study, sum] : sums_by_study) {
    if (sum.second == 0) continue;
    StudyScore s{study, sum.first / static_cast<double>(sum.second), counts_by_study.at(study)};
    const double w = records_weighted ? static_cast<double>(s.n_records) : 1.0;
    num += w * s.value;
    den += w;
    out.studies.push_back(s);
  }
  out.macro = den > 0 ? num / den : std::nan("");
  return out;
}

// Eval records joined with their predictions.
struct Joined {
  std::vector<std::pair<const ResponseRecord*, std::optional<double>>> rows;
  PredictionCounts counts;
};

inline Joined join(const ScaleBook& scales, const RecordSet& eval,
                   std::span<const PredictionRecord> preds, ParseFailPolicy policy) {
  std::map<RecordKey, const PredictionRecord*> by_key;
  for (const auto& p : preds) by_key[p.key] = &p;
  Joined j;
  j.counts.eval_records = eval.size();
  std::set<RecordKey> eval_keys;
  for (const ResponseRecord* r : eval) {
    RecordKey key = key_of(*r);
    eval_keys.insert(key);
    auto it = by_key.find(key);
    std::optional<double> value;
    if (it == by_key.end()) {
      ++j.counts.missing;
    } else if (it->second->parse_failed || !it->second->predicted) {
      ++j.counts.parse_failed;
    } else {
      value = *it->second->predicted;
      if (it->second->clamped) ++j.counts.clamped;
    }
    if (!value && policy == ParseFailPolicy::midpoint) {
      value = round_half_up(scales.at(stimulus_of(*r)).midpoint_value());
    }
    if (value) ++j.counts.scored;
    j.rows.emplace_back(r, value);
  }
  for (const auto& [key, p] : by_key) {
    if (!eval_keys.count(key)) ++j.counts.unmatched;
  }
  return j;
}

inline std::map<std::string, std::size_t> records_per_study(const RecordSet& eval) {
  std::map<std::string, std::size_t> n;
  for (const ResponseRecord* r : eval) ++n[r->study_id];
  return n;
}

}  // namespace detail

struct AccuracyResult {
  Aggregate aggregate;
  PredictionCounts counts;
};

// Acc = 1 - (1/N) * sum |pred - r| / (r_max - r_min) per study, then averaged
// across studies.
inline AccuracyResult accuracy(const Corpus& corpus, const RecordSet& eval,
                               std::span<const PredictionRecord> preds,
                               const MetricOptions& options = {}) {
  const ScaleBook scales(corpus, options.bounds);
  auto joined = detail::join(scales, eval, preds, options.parse_fail);
  std::map<std::string, std::pair<double, std::size_t>> sums;
  std::map<std::string, std::size_t> scored;
  std::set<StimulusKey> degenerate;
  for (const auto& [r, value] : joined.rows) {
    if (!value) continue;
    const auto& s = scales.at(stimulus_of(*r));
    if (s.degenerate()) {
      degenerate.insert(stimulus_of(*r));
      continue;
    }
    auto& acc = sums[r->study_id];
    acc.first += 1.0 - std::abs(*value - r->response) / static_cast<double>(s.max - s.min);
    ++acc.second;
    ++scored[r->study_id];
  }
  AccuracyResult out;
  out.counts = joined.counts;
  out.counts.degenerate_stimuli = degenerate.size();
  out.aggregate = detail::aggregate(sums, scored, options.records_weighted);
  return out;
}

struct AlignmentResult {
  std::vector<StimulusScore> stimuli;
  Aggregate aggregate;
  PredictionCounts counts;
  std::size_t skipped_stimuli = 0;  // no valid predictions, degenerate, or below min_n
};

namespace detail {

inline AlignmentResult alignment_from_join(const ScaleBook& scales, const Joined& joined,
                                           const MetricOptions& options, std::size_t min_n) {
  std::map<StimulusKey, std::pair<std::vector<double>, std::vector<double>>> buckets;
  for (const auto& [r, value] : joined.rows) {
    auto& b = buckets[stimulus_of(*r)];
    b.first.push_back(r->response);
    if (value) b.second.push_back(*value);
  }
  AlignmentResult out;
  out.counts = joined.counts;
  std::map<std::string, std::pair<double, std::size_t>> sums;
  std::map<std::string, std::size_t> n_records;
  for (auto& [key, b] : buckets) {
    const auto& s = scales.at(key);
    if (s.degenerate()) ++out.counts.degenerate_stimuli;
    if (s.degenerate() || b.second.empty() || b.first.size() < min_n) {
      ++out.skipped_stimuli;
      continue;
    }
    for (double& v : b.first) v = s.standardize(v);
    for (double& v : b.second) v = s.standardize(v);
    StimulusScore score{key, wasserstein_1d(b.first, b.second), b.first.size(), b.second.size()};
    out.stimuli.push_back(score);
    auto& acc = sums[key.study_id];
    acc.first += score.wasserstein;
    ++acc.second;
    n_records[key.study_id] += score.n_truth;
  }
  out.aggregate = aggregate(sums, n_records, options.records_weighted);
  return out;
}

}  // namespace detail

// Per (c, o): standardize truth and predictions with the same bounds and take
// W1; average per study, then across studies.
inline AlignmentResult distribution_alignment(const Corpus& corpus, const RecordSet& eval,
                                              std::span<const PredictionRecord> preds,
                                              const MetricOptions& options = {}) {
  const ScaleBook scales(corpus, options.bounds);
  return detail::alignment_from_join(scales, detail::join(scales, eval, preds, options.parse_fail),
                                     options, 1);
}

struct BoundResult {
  std::vector<StimulusScore> stimuli;
  Aggregate alignment;
  std::optional<Aggregate> accuracy;
};

// Bootstrap self-distance: per (c, o), the mean over n_boot resamples (with
// replacement) of W1(resample, full truth sample).
inline BoundResult empirical_best(const Corpus& corpus, const RecordSet& eval,
                                  const MetricOptions& options = {}) {
  const ScaleBook scales(corpus, options.bounds);
  std::map<std::string, std::pair<double, std::size_t>> sums;
  std::map<std::string, std::size_t> n_records;
  BoundResult out;
  for (const auto& [key, bucket] : index_by_stimulus(eval)) {
    const auto& s = scales.at(key);
    if (s.degenerate()) continue;
    std::vector<double> truth;
    for (const ResponseRecord* r : bucket) truth.push_back(s.standardize(r->response));
    std::sort(truth.begin(), truth.end());
    Stream rng(options.seed, "bootstrap", detail::stream_key(key));
    std::vector<double> resample(truth.size());
    double total = 0;
    for (int b = 0; b < options.n_boot; ++b) {
      for (auto& v : resample) v = truth[rng.below(truth.size())];
      total += wasserstein_1d(resample, truth);
    }
    StimulusScore score{key, total / options.n_boot, truth.size(), truth.size()};
    out.stimuli.push_back(score);
    sums[key.study_id].first += score.wasserstein;
    ++sums[key.study_id].second;
    n_records[key.study_id] += truth.size();
  }
  out.alignment = detail::aggregate(sums, n_records, options.records_weighted);
  return out;
}

// Uninformed responder realized exactly as the discrete uniform over the
// scale points: alignment is W1(truth, uniform points); accuracy is the
// expectation of the normalized accuracy over (truth, guess) pairs.
inline BoundResult uniform_guess_bound(const Corpus& corpus, const RecordSet& eval,
                                       const MetricOptions& options = {}) {
  const ScaleBook scales(corpus, options.bounds);
  std::map<std::string, std::pair<double, std::size_t>> align_sums, acc_sums;
  std::map<std::string, std::size_t> n_records;
  BoundResult out;
  for (const auto& [key, bucket] : index_by_stimulus(eval)) {
    const auto& s = scales.at(key);
    if (s.degenerate()) continue;
    std::vector<double> truth;
    std::vector<double> points;
    for (int v = s.min; v <= s.max; ++v) points.push_back(s.standardize(v));
    const double width = s.max - s.min;
    for (const ResponseRecord* r : bucket) {
      truth.push_back(s.standardize(r->response));
      double expected = 0;
      for (int g = s.min; g <= s.max; ++g) expected += 1.0 - std::abs(g - r->response) / width;
      acc_sums[key.study_id].first += expected / static_cast<double>(points.size());
      ++acc_sums[key.study_id].second;
    }
    StimulusScore score{key, wasserstein_1d(truth, points), truth.size(), points.size()};
    out.stimuli.push_back(score);
    align_sums[key.study_id].first += score.wasserstein;
    ++align_sums[key.study_id].second;
    n_records[key.study_id] += truth.size();
  }
  out.alignment = detail::aggregate(align_sums, n_records, options.records_weighted);
  out.accuracy = detail::aggregate(acc_sums, n_records, options.records_weighted);
  return out;
}

// |a_method - a_base| / |a_base| * 100, positive when the method improves on
// the base under the given direction.
inline double relative_change(double method, double base, Direction direction) {
  if (base == 0) throw Error("relative change against a zero base");
  const double magnitude = std::abs(method - base) / std::abs(base) * 100.0;
  const bool improves =
      direction == Direction::higher_better ? method > base : method < base;
  return improves ? magnitude : -magnitude;
}

struct SubgroupScore {
  double alignment = 0;
  std::size_t stimuli = 0;
  std::size_t skipped_stimuli = 0;
  std::size_t records = 0;
};

// Alignment recomputed per value of one persona attribute. Stimuli with fewer
// than options.min_n truth responses in the subgroup are skipped; subgroups
// with no scorable stimulus are omitted.
inline std::map<std::string, SubgroupScore> subgroup_alignment(
    const Corpus& corpus, const RecordSet& eval, std::span<const PredictionRecord> preds,
    const std::string& category, const MetricOptions& options = {}) {
  const ScaleBook scales(corpus, options.bounds);
  std::map<std::string, RecordSet> groups;
  for (const ResponseRecord* r : eval) {
    if (const std::string* v = r->persona.find(category)) groups[*v].push_back(r);
  }
  std::map<std::string, SubgroupScore> out;
  for (const auto& [value, records] : groups) {
    auto joined = detail::join(scales, records, preds, options.parse_fail);
    auto result = detail::alignment_from_join(scales, joined, options, options.min_n);
    if (result.stimuli.empty()) continue;
    out[value] = {result.aggregate.macro, result.stimuli.size(), result.skipped_stimuli,
                  records.size()};
  }
  return out;
}

// max - min subgroup alignment within a category.
inline double demographic_parity(const std::map<std::string, double>& subgroup_alignment) {
  if (subgroup_alignment.empty()) throw Error("demographic parity of an empty category");
  auto [lo, hi] = std::minmax_element(
      subgroup_alignment.begin(), subgroup_alignment.end(),
      [](const auto& a, const auto& b) { return a.second < b.second; });
  return hi->second - lo->second;
}

inline double demographic_parity(const std::map<std::string, SubgroupScore>& scores) {
  std::map<std::string, double> values;
  for (const auto& [k, v] : scores) values[k] = v.alignment;
  return demographic_parity(values);
}

struct ParityReduction {
  std::map<std::string, double> per_category;  // relative_change, lower is better
  double mean = 0;
};

// Parity reduction of a method vs a base, per category present in both and
// averaged across those categories.
inline ParityReduction parity_reduction(const std::map<std::string, double>& base_parity,
                                        const std::map<std::string, double>& method_parity) {
  ParityReduction out;
  double sum = 0;
  for (const auto& [category, base] : base_parity) {
    auto it = method_parity.find(category);
    if (it == method_parity.end() || base == 0) continue;
    const double change = relative_change(it->second, base, Direction::lower_better);
    out.per_category[category] = change;
    sum += change;
  }
  out.mean = out.per_category.empty() ? std::nan("") : sum / out.per_category.size();
  return out;
}

// Sample standard deviation (n - 1 denominator).
inline double sample_sd(std::span<const double> values) {
  if (values.size() < 2) return std::nan("");
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (values.size() - 1));
}

struct Dispersion {
  double truth_sd = 0;
  double prediction_sd = 0;
};

// Spread of standardized truth and standardized predictions pooled over the
// evaluation set.
inline Dispersion dispersion(const Corpus& corpus, const RecordSet& eval,
                             std::span<const PredictionRecord> preds,
                             const MetricOptions& options = {}) {
  const ScaleBook scales(corpus, options.bounds);
  auto joined = detail::join(scales, eval, preds, options.parse_fail);
  std::vector<double> truth, predicted;
  for (const auto& [r, value] : joined.rows) {
    const auto& s = scales.at(stimulus_of(*r));
    if (s.degenerate()) continue;
    truth.push_back(s.standardize(r->response));
    if (value) predicted.push_back(s.standardize(*value));
  }
  return {sample_sd(truth), sample_sd(predicted)};
}

}  // namespace socsim
