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

#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "socsim/corpus.hpp"
#include "socsim/rng.hpp"

namespace socsim {

// Response distribution family of generated stimuli.
//   skewed:  one peak at a random scale point, geometric decay around it.
//   bimodal: most mass on the two scale ends, a little in between.
//   mixed:   skewed or bimodal per stimulus, with equal probability.
enum class SynthShape { skewed, bimodal, mixed };

inline SynthShape parse_synth_shape(std::string_view s) {
  if (s == "skewed") return SynthShape::skewed;
  if (s == "bimodal") return SynthShape::bimodal;
  if (s == "mixed") return SynthShape::mixed;
  throw ConfigError("unknown synthetic shape '" + std::string(s) + "'");
}

struct SynthOptions {
  int studies = 20;
  int participants = 100;  // per study
  int min_conditions = 2;
  int max_conditions = 4;
  int min_outcomes = 1;
  int max_outcomes = 3;
  SynthShape shape = SynthShape::skewed;
  double within_fraction = 0;  // share of within-subject studies
  std::uint64_t seed = 0;
  std::string id_prefix = "S";

  void check() const {
    if (studies < 1 || participants < 1) throw ConfigError("synthetic corpus needs studies and participants");
    if (min_conditions < 1 || max_conditions < min_conditions) throw ConfigError("bad condition range");
    if (min_outcomes < 1 || max_outcomes < min_outcomes) throw ConfigError("bad outcome range");
    if (within_fraction < 0 || within_fraction > 1) throw ConfigError("within_fraction must be in [0, 1]");
  }
};

namespace detail {

inline constexpr std::array<std::array<int, 2>, 6> kScales{
    {{1, 5}, {1, 7}, {0, 1}, {1, 4}, {0, 10}, {1, 6}}};
inline constexpr std::array<const char*, 12> kTopics{
    "a new public transit levy",  "an electric car",          "a workplace wellness program",
    "a local housing proposal",   "a school lunch policy",     "a charity appeal",
    "a news report on inflation", "a smartphone privacy law",  "a community recycling scheme",
    "a healthcare price notice",  "a tax refund announcement", "a volunteer firefighter drive"};
inline constexpr std::array<const char*, 4> kFraming{
    "a neutral factual summary", "an emotional personal story", "a statistics-heavy briefing",
    "an endorsement by a local official"};
inline constexpr std::array<const char*, 4> kAges{"18-29", "30-44", "45-59", "60+"};
inline constexpr std::array<const char*, 2> kGenders{"Female", "Male"};
inline constexpr std::array<const char*, 4> kEducation{
    "High school", "Some college", "Bachelor's degree", "Post grad study/professional degree"};
inline constexpr std::array<const char*, 3> kIdeology{"Liberal", "Moderate", "Conservative"};
inline constexpr std::array<const char*, 4> kIncome{"Under 25K", "25-49K", "50-74K", "75K+"};

inline std::string padded(const std::string& prefix, int i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*d", width, i);
  return prefix + buf;
}

template <std::size_t N>
const char* pick(Stream& rng, const std::array<const char*, N>& items) {
  return items[rng.below(N)];
}

inline std::vector<double> skewed_weights(Stream& rng, int lo, int hi) {
  const int peak = static_cast<int>(rng.between(lo, hi));
  const double decay = 0.35 + 0.5 * rng.unit();
  std::vector<double> w;
  for (int k = lo; k <= hi; ++k) w.push_back(std::pow(decay, std::abs(k - peak)) * (0.8 + 0.4 * rng.unit()));
  return w;
}

inline std::vector<double> bimodal_weights(Stream& rng, int lo, int hi) {
  std::vector<double> w(static_cast<std::size_t>(hi - lo + 1), 0.0);
  w.front() = 0.38 + 0.12 * rng.unit();
  w.back() = 0.38 + 0.12 * rng.unit();
  const double rest = w.size() > 2 ? (0.08 + 0.1 * rng.unit()) / (w.size() - 2) : 0.0;
  for (std::size_t i = 1; i + 1 < w.size(); ++i) w[i] = rest;
  return w;
}

inline int draw(Stream& rng, const std::vector<double>& weights, int lo) {
  double total = 0;
  for (double w : weights) total += w;
  double u = rng.unit() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return lo + static_cast<int>(i);
    u -= weights[i];
  }
  return lo + static_cast<int>(weights.size()) - 1;
}

}  // namespace detail

// Generates a corpus of fictional studies that passes validation. Response
// distributions depend on the stimulus and, mildly, on gender and ideology,
// so subgroup metrics are not trivially equal.
inline Corpus synthesize(const SynthOptions& options) {
  options.check();
  Corpus corpus;
  corpus.provenance.source = "synthetic";
  corpus.provenance.format = "synthetic";
  const int width = options.studies >= 1000 ? 4 : 3;
  for (int s = 1; s <= options.studies; ++s) {
    const std::string study_id = detail::padded(options.id_prefix, s, width);
    Stream rng(options.seed, "synth.study", study_id);
    StudyManifest m;
    m.study_id = study_id;
    m.design = rng.unit() < options.within_fraction ? Design::within_subject : Design::between_subject;
    const std::string topic = detail::kTopics[rng.below(detail::kTopics.size())];
    const int n_conditions = static_cast<int>(rng.between(options.min_conditions, options.max_conditions));
    const int n_outcomes = static_cast<int>(rng.between(options.min_outcomes, options.max_outcomes));
    for (int c = 1; c <= n_conditions; ++c) {
      m.conditions.push_back({"c" + std::to_string(c),
                              "a message about " + topic + " presented as " +
                                  detail::kFraming[(c - 1) % detail::kFraming.size()] +
                                  (c > static_cast<int>(detail::kFraming.size())
                                       ? " (variant " + std::to_string(c) + ")"
                                       : "")});
    }
    for (int o = 1; o <= n_outcomes; ++o) {
      auto [lo, hi] = detail::kScales[rng.below(detail::kScales.size())];
      if (options.shape == SynthShape::bimodal && hi - lo < 2) {
        lo = 1;
        hi = 5;
      }
      Outcome out;
      out.id = "o" + std::to_string(o);
      out.min = lo;
      out.max = hi;
      if (hi - lo == 1) {
        out.question = "Would you support " + topic + " (question " + std::to_string(o) + ")?";
        out.labels = {{lo, "No"}, {hi, "Yes"}};
      } else {
        out.question = "How favorable is your view of " + topic + " (question " +
                       std::to_string(o) + ")?";
        out.labels = {{lo, "Very unfavorable"}, {hi, "Very favorable"}};
      }
      m.outcomes.push_back(std::move(out));
    }

    // Per-stimulus response weights.
    std::map<std::pair<int, int>, std::vector<double>> weights;
    for (int c = 0; c < n_conditions; ++c) {
      for (int o = 0; o < n_outcomes; ++o) {
        const int lo = *m.outcomes[o].min, hi = *m.outcomes[o].max;
        bool bimodal = options.shape == SynthShape::bimodal;
        if (options.shape == SynthShape::mixed) bimodal = hi - lo >= 2 && rng.unit() < 0.5;
        weights[{c, o}] = bimodal ? detail::bimodal_weights(rng, lo, hi)
                                  : detail::skewed_weights(rng, lo, hi);
      }
    }

    for (int p = 1; p <= options.participants; ++p) {
      Persona persona;
      persona.add("Age", detail::pick(rng, detail::kAges));
      const std::string gender = detail::pick(rng, detail::kGenders);
      persona.add("Gender", gender);
      persona.add("Education", detail::pick(rng, detail::kEducation));
      const std::string ideology = detail::pick(rng, detail::kIdeology);
      persona.add("Ideology", ideology);
      persona.add("Income", detail::pick(rng, detail::kIncome));
      const std::string pid = detail::padded("P", p, 4);
      std::vector<int> seen;
      if (m.design == Design::within_subject) {
        for (int c = 0; c < n_conditions; ++c) seen.push_back(c);
      } else {
        seen.push_back(static_cast<int>(rng.below(n_conditions)));
      }
      for (int c : seen) {
        for (int o = 0; o < n_outcomes; ++o) {
          const int lo = *m.outcomes[o].min, hi = *m.outcomes[o].max;
          int r = detail::draw(rng, weights[{c, o}], lo);
          if (gender == "Female" && rng.unit() < 0.25) r = std::min(r + 1, hi);
          if (ideology == "Conservative" && rng.unit() < 0.2) r = std::max(r - 1, lo);
          corpus.records.push_back({study_id, pid, persona, m.conditions[c].id, m.outcomes[o].id, r});
        }
      }
    }
    corpus.studies.emplace(study_id, std::move(m));
  }
  return corpus;
}

// Placeholder reasoning for a record, for demos and tests of the reasoning
// pipeline without an oracle model. Never states the response.
inline std::string synthetic_trace(const ResponseRecord& r) {
  std::string who;
  for (const auto& [name, value] : r.persona.attributes()) {
    if (!who.empty()) who += ", ";
    who += name + " " + value;
  }
  return "A respondent with this profile (" + who + ") reads the material in condition " +
         r.condition_id + " and weighs it against prior views before settling on a position "
         "for question " + r.outcome_id + ".";
}

}  // namespace socsim
