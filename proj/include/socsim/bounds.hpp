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

#include <map>
#include <string>
#include <string_view>

#include "socsim/corpus.hpp"

namespace socsim {

// Where r_min / r_max come from when standardizing a stimulus.
//   declared: the manifest's response scale; stimuli whose outcome has no
//             usable declared scale fall back to observed.
//   observed: min / max of the ground-truth responses under (c, o).
enum class BoundsPolicy { declared, observed };

inline std::string_view to_string(BoundsPolicy p) {
  return p == BoundsPolicy::declared ? "declared" : "observed";
}

inline BoundsPolicy parse_bounds_policy(std::string_view s) {
  if (s == "declared") return BoundsPolicy::declared;
  if (s == "observed") return BoundsPolicy::observed;
  throw ConfigError("unknown bounds policy '" + std::string(s) + "' (declared or observed)");
}

struct ResolvedScale {
  int min = 0;
  int max = 0;
  bool observed = false;

  bool degenerate() const { return max <= min; }
  double standardize(double r) const { return socsim::standardize(r, min, max); }
  double midpoint_value() const { return 0.5 * (min + max); }
};

// Resolved bounds for every stimulus of a corpus.
class ScaleBook {
 public:
  ScaleBook(const Corpus& corpus, BoundsPolicy policy) : policy_(policy) {
    for (const auto& r : corpus.records) {
      auto [it, inserted] = observed_.try_emplace(stimulus_of(r), ResolvedScale{r.response, r.response, true});
      if (!inserted) {
        it->second.min = std::min(it->second.min, r.response);
        it->second.max = std::max(it->second.max, r.response);
      }
    }
    for (const auto& [key, obs] : observed_) {
      ResolvedScale s = obs;
      if (policy == BoundsPolicy::declared) {
        if (auto declared = corpus.outcome(key.study_id, key.outcome_id).scale()) {
          s = {declared->min, declared->max, false};
        }
      }
      if (s.observed) ++fallbacks_;
      resolved_.emplace(key, s);
    }
  }

  const ResolvedScale& at(const StimulusKey& key) const {
    auto it = resolved_.find(key);
    if (it == resolved_.end()) {
      throw DataError("no responses for stimulus (" + key.study_id + ", " + key.condition_id +
                      ", " + key.outcome_id + ")");
    }
    return it->second;
  }

  BoundsPolicy policy() const { return policy_; }
  // Stimuli standardized with observed bounds although declared was asked for
  // (or all of them under the observed policy).
  std::size_t observed_count() const { return fallbacks_; }

 private:
  BoundsPolicy policy_;
  std::map<StimulusKey, ResolvedScale> observed_;
  std::map<StimulusKey, ResolvedScale> resolved_;
  std::size_t fallbacks_ = 0;
};

}  // namespace socsim
