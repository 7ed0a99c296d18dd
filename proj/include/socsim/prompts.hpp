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
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "socsim/corpus.hpp"
#include "socsim/rng.hpp"

namespace socsim {

enum class PromptMode { direct, reasoning, fewshot, oracle_trace };

inline std::string_view to_string(PromptMode m) {
  switch (m) {
    case PromptMode::direct: return "direct";
    case PromptMode::reasoning: return "reasoning";
    case PromptMode::fewshot: return "fewshot";
    case PromptMode::oracle_trace: return "oracle_trace";
  }
  return "?";
}

inline PromptMode parse_prompt_mode(std::string_view s) {
  if (s == "direct") return PromptMode::direct;
  if (s == "reasoning") return PromptMode::reasoning;
  if (s == "fewshot" || s == "few-shot") return PromptMode::fewshot;
  if (s == "oracle_trace") return PromptMode::oracle_trace;
  throw ConfigError("unknown prompt mode '" + std::string(s) + "'");
}

struct PromptBundle {
  std::string system;
  std::string user;
  PromptMode mode = PromptMode::direct;
  StimulusKey stimulus_key;
  std::string participant_id;
};

struct Exemplar {
  std::string stimulus_text;
  Persona persona;
  int answer = 0;
  std::string participant_id;
};

// Template text. Transcribed byte for byte, including the original's
// spacing and punctuation quirks.
namespace templates {

inline constexpr std::string_view kDirectSystem =
    "You are simulating a survey respondent. Answer exactly as instructed, following the "
    "specified response format without additional commentary.";

inline constexpr std::string_view kUserPreamble =
    "You are a survey respondent with the following demographic profile:\n";

inline constexpr std::string_view kUserInstruction =
    "Read the question below and answer exactly as this person would. Follow the response "
    "instructions precisely.";

inline constexpr std::string_view kReasoningSystem =
    "You are simulating a survey respondent. You are to answer exactly as instructed, but also "
    "include your reasoning (5 sentences or less) before you output your answer.Please follow "
    "the exact output format below.\n"
    "### Output format\n"
    "<trace>\n"
    "…your step-by-step reasoning here…\n"
    "</trace>\n"
    "PREDICTION: <verbatim answer> (conclude with predicted answer, use exactly the option "
    "label/number with no extra commentary)";

inline constexpr std::string_view kFewshotLead =
    "As you answer, consider how the following similar question was answered by other "
    "participants:";

inline constexpr std::string_view kOracleSystem =
    "You are an expert behavioral scientist asked to write a plausible, forward‑looking "
    "reasoning trace that *predicts* which answer a survey respondent will give. Draw on "
    "knowledge of behavioral and social science theory to explain how and why this person "
    "responded the way they did.\n"
    "\n"
    "**Key constraints for the reasoning trace**\n"
    "1. **Prospective viewpoint.** Write as if you do *not* know the final choice yet. Describe "
    "the mental steps a typical person with the given persona might take when first seeing the "
    "stimuli.\n"
    "2. **No answer leakage inside the trace.** The true answer is supplied only for your "
    "private verification. Do **not** quote, paraphrase, or rely on it within the narrative.\n"
    "3. Be concise but specific in your reasoning and avoid repetition. Keep the reasoning "
    "trace 5 sentences or less.\"\n"
    "\n"
    "### Output format\n"
    "<trace> …your step‑by‑step reasoning here (written as if before 'knowing' "
    "the answer)… </trace>\n"
    "PREDICTION: <verbatim answer> (conclude with predicted answer, use exactly the option "
    "label/number with no extra commentary)";

inline constexpr std::string_view kOracleTrueAnswerOpen =
    "<!-- TRUE ANSWER (use only to verify your prediction; do NOT reference inside <trace>): ";

inline constexpr std::string_view kOracleClosing =
    "Write the reasoning trace and final prediction now, following the format above.";

inline constexpr std::string_view kPredictionMarker = "PREDICTION:";

}  // namespace templates

// One "- Name: Value" line per attribute, in source order.
inline std::string render_persona(const Persona& persona) {
  std::string out;
  for (const auto& [name, value] : persona.attributes()) {
    if (!out.empty()) out += '\n';
    out += "- ";
    out += name;
    out += ": ";
    out += value;
  }
  return out;
}

// "Only return an integer from 1 to 5[, where 1 means X and 5 means Y], nothing else."
// The label clause appears when both endpoints are labelled.
inline std::string format_instruction(const ResponseScale& scale) {
  std::string out = "Only return an integer from " + std::to_string(scale.min) + " to " +
                    std::to_string(scale.max);
  auto lo = scale.labels.find(scale.min);
  auto hi = scale.labels.find(scale.max);
  if (lo != scale.labels.end() && hi != scale.labels.end()) {
    out += ", where " + std::to_string(scale.min) + " means " + lo->second + " and " +
           std::to_string(scale.max) + " means " + hi->second;
  }
  out += ", nothing else.";
  return out;
}

namespace detail {

inline const Outcome& resolve_outcome(const StudyManifest& m, const std::string& outcome_id) {
  const Outcome* o = m.find_outcome(outcome_id);
  if (!o) throw DataError("unknown outcome '" + outcome_id + "' in study '" + m.study_id + "'");
  return *o;
}

inline ResponseScale resolve_scale(const StudyManifest& m, const std::string& outcome_id) {
  auto scale = resolve_outcome(m, outcome_id).scale();
  if (!scale) {
    throw DataError("outcome '" + outcome_id + "' in study '" + m.study_id +
                    "' has no usable response scale");
  }
  return *scale;
}

}  // namespace detail

// The stimulus shown to a respondent: the verbatim composed text when the
// manifest has one, otherwise
//   You read '<condition>' and then were asked: '<question>' <instruction>
inline std::string compose_stimulus(const StudyManifest& m, const std::string& condition_id,
                                    const std::string& outcome_id) {
  const Condition* c = m.find_condition(condition_id);
  if (!c) {
    throw DataError("unknown condition '" + condition_id + "' in study '" + m.study_id + "'");
  }
  const Outcome& o = detail::resolve_outcome(m, outcome_id);
  if (const std::string* composed = m.find_composed(condition_id, outcome_id)) {
    if (!detail::blank(*composed)) return *composed;
  }
  if (detail::blank(c->stimulus)) {
    throw DataError("condition '" + condition_id + "' in study '" + m.study_id +
                    "' has no stimulus description");
  }
  return "You read '" + c->stimulus + "' and then were asked: '" + o.question + "' " +
         format_instruction(detail::resolve_scale(m, outcome_id));
}

namespace detail {

inline std::string render_user(const Persona& persona, const std::string& stimulus) {
  std::string out(templates::kUserPreamble);
  out += render_persona(persona);
  out += "\n\n";
  out += templates::kUserInstruction;
  out += "\n\n";
  out += stimulus;
  return out;
}

inline PromptBundle bundle(PromptMode mode, const StudyManifest& m, const std::string& c,
                           const std::string& o, std::string participant_id) {
  PromptBundle b;
  b.mode = mode;
  b.stimulus_key = {m.study_id, c, o};
  b.participant_id = std::move(participant_id);
  return b;
}

}  // namespace detail

inline PromptBundle render_direct(const Persona& persona, const StudyManifest& m,
                                  const std::string& condition_id, const std::string& outcome_id,
                                  std::string participant_id = {}) {
  detail::resolve_scale(m, outcome_id);
  PromptBundle b =
      detail::bundle(PromptMode::direct, m, condition_id, outcome_id, std::move(participant_id));
  b.system = templates::kDirectSystem;
  b.user = detail::render_user(persona, compose_stimulus(m, condition_id, outcome_id));
  return b;
}

inline PromptBundle render_reasoning(const Persona& persona, const StudyManifest& m,
                                     const std::string& condition_id,
                                     const std::string& outcome_id,
                                     std::string participant_id = {}) {
  PromptBundle b = render_direct(persona, m, condition_id, outcome_id, std::move(participant_id));
  b.mode = PromptMode::reasoning;
  b.system = templates::kReasoningSystem;
  return b;
}

// With no exemplars the system message is the direct one.
inline PromptBundle render_fewshot(const Persona& persona, const StudyManifest& m,
                                   const std::string& condition_id, const std::string& outcome_id,
                                   std::span<const Exemplar> exemplars,
                                   std::string participant_id = {}) {
  PromptBundle b = render_direct(persona, m, condition_id, outcome_id, std::move(participant_id));
  b.mode = PromptMode::fewshot;
  if (exemplars.empty()) return b;
  std::string system(templates::kDirectSystem);
  system += "\n\n";
  system += templates::kFewshotLead;
  system += "\n\nQuestion: ";
  system += exemplars.front().stimulus_text;
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    system += "\n\nPerson " + std::to_string(i + 1) + " Profile:\n";
    system += render_persona(exemplars[i].persona);
    system += "\nAnswer: " + std::to_string(exemplars[i].answer);
  }
  b.system = std::move(system);
  return b;
}

// The true answer appears only inside the HTML comment.
inline PromptBundle render_oracle_trace_prompt(const Persona& persona, const StudyManifest& m,
                                               const std::string& condition_id,
                                               const std::string& outcome_id, int true_response,
                                               std::string participant_id = {}) {
  detail::resolve_scale(m, outcome_id);
  PromptBundle b = detail::bundle(PromptMode::oracle_trace, m, condition_id, outcome_id,
                                  std::move(participant_id));
  b.system = templates::kOracleSystem;
  b.user = "**Persona**: " + render_persona(persona) + "\n**Stimuli**: " +
           compose_stimulus(m, condition_id, outcome_id) + "\n" +
           std::string(templates::kOracleTrueAnswerOpen) + std::to_string(true_response) +
           " -->\n\n" + std::string(templates::kOracleClosing);
  return b;
}

inline PromptBundle render(PromptMode mode, const ResponseRecord& r, const StudyManifest& m,
                           std::span<const Exemplar> exemplars = {}) {
  switch (mode) {
    case PromptMode::direct:
      return render_direct(r.persona, m, r.condition_id, r.outcome_id, r.participant_id);
    case PromptMode::reasoning:
      return render_reasoning(r.persona, m, r.condition_id, r.outcome_id, r.participant_id);
    case PromptMode::fewshot:
      return render_fewshot(r.persona, m, r.condition_id, r.outcome_id, exemplars,
                            r.participant_id);
    case PromptMode::oracle_trace:
      return render_oracle_trace_prompt(r.persona, m, r.condition_id, r.outcome_id, r.response,
                                        r.participant_id);
  }
  throw Error("unreachable");
}

// --- reply parsing ------------------------------------------------------------

enum class ClampPolicy { clamp, reject };

inline ClampPolicy parse_clamp_policy(std::string_view s) {
  if (s == "clamp") return ClampPolicy::clamp;
  if (s == "reject") return ClampPolicy::reject;
  throw ConfigError("unknown out-of-scale policy '" + std::string(s) + "'");
}

struct ParsedPrediction {
  std::optional<int> value;  // empty on failure
  bool clamped = false;
  std::string error;

  bool failed() const { return !value.has_value(); }
};

namespace detail {

inline bool word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

struct IntegerToken {
  std::size_t begin;
  std::size_t end;
};

// Integers not glued to letters, digits, '_' or '.', with an optional
// leading '-' or '+'.
inline std::vector<IntegerToken> standalone_integers(std::string_view s) {
  std::vector<IntegerToken> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) {
      ++i;
      continue;
    }
    std::size_t begin = i;
    std::size_t end = i;
    while (end < s.size() && std::isdigit(static_cast<unsigned char>(s[end]))) ++end;
    if (begin > 0 && (s[begin - 1] == '-' || s[begin - 1] == '+') &&
        (begin == 1 || !word_char(s[begin - 2]))) {
      --begin;
    }
    const bool glued_left = begin > 0 && word_char(s[begin - 1]);
    const bool glued_right =
        end < s.size() && (word_char(s[end]) &&
                           !(s[end] == '.' && (end + 1 == s.size() ||
                                               !std::isalnum(static_cast<unsigned char>(s[end + 1])))));
    if (!glued_left && !glued_right) out.push_back({begin, end});
    i = end;
  }
  return out;
}

inline std::optional<long long> to_integer(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// Reads an integer answer out of a model reply.
//   direct: the trimmed reply must be a bare integer.
//   reasoning / fewshot / oracle_trace: the first integer after the last
//   "PREDICTION:" marker, else the last standalone integer in the reply.
// Off-scale values are clamped (flagged) or rejected according to policy.
inline ParsedPrediction parse_prediction(std::string_view reply, PromptMode mode,
                                         const ResponseScale& scale,
                                         ClampPolicy policy = ClampPolicy::clamp) {
  ParsedPrediction result;
  std::optional<long long> value;
  if (mode == PromptMode::direct) {
    value = detail::to_integer(detail::trim(reply));
    if (!value) {
      result.error = "reply is not a bare integer";
      return result;
    }
  } else {
    const auto marker = reply.rfind(templates::kPredictionMarker);
    if (marker != std::string_view::npos) {
      const auto tail = reply.substr(marker + templates::kPredictionMarker.size());
      auto tokens = detail::standalone_integers(tail);
      if (!tokens.empty()) {
        value = detail::to_integer(tail.substr(tokens.front().begin,
                                               tokens.front().end - tokens.front().begin));
      }
    }
    if (!value) {
      auto tokens = detail::standalone_integers(reply);
      if (!tokens.empty()) {
        value = detail::to_integer(
            reply.substr(tokens.back().begin, tokens.back().end - tokens.back().begin));
      }
    }
    if (!value) {
      result.error = "no integer found in reply";
      return result;
    }
  }
  if (*value < scale.min || *value > scale.max) {
    if (policy == ClampPolicy::reject) {
      result.error = "answer " + std::to_string(*value) + " outside scale [" +
                     std::to_string(scale.min) + ", " + std::to_string(scale.max) + "]";
      return result;
    }
    result.clamped = true;
    value = std::clamp<long long>(*value, scale.min, scale.max);
  }
  result.value = static_cast<int>(*value);
  return result;
}

// --- few-shot exemplar selection ----------------------------------------------

// Scores candidate texts against a query; higher is more similar.
class SimilarityProvider {
 public:
  virtual ~SimilarityProvider() = default;
  virtual std::vector<double> similarities(const std::string& query,
                                           std::span<const std::string> candidates) = 0;
};

inline double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("cosine of vectors with different dimensions");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Cosine over term-frequency vectors of lower-cased alphanumeric words.
// Deterministic and offline.
class LexicalSimilarity : public SimilarityProvider {
 public:
  static std::map<std::string, double> term_frequencies(std::string_view text) {
    std::map<std::string, double> tf;
    std::string word;
    for (char ch : text) {
      unsigned char c = static_cast<unsigned char>(ch);
      if (std::isalnum(c)) {
        word += static_cast<char>(std::tolower(c));
      } else if (!word.empty()) {
        tf[word] += 1;
        word.clear();
      }
    }
    if (!word.empty()) tf[word] += 1;
    return tf;
  }

  static double cosine(const std::map<std::string, double>& a,
                       const std::map<std::string, double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (const auto& [w, x] : a) {
      na += x * x;
      if (auto it = b.find(w); it != b.end()) dot += x * it->second;
    }
    for (const auto& [w, y] : b) nb += y * y;
    if (na == 0 || nb == 0) return 0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
  }

  std::vector<double> similarities(const std::string& query,
                                   std::span<const std::string> candidates) override {
    const auto q = term_frequencies(query);
    std::vector<double> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) out.push_back(cosine(q, term_frequencies(c)));
    return out;
  }
};

struct FewshotSelection {
  StimulusKey neighbor;
  double similarity = 0;
  std::vector<Exemplar> exemplars;
  bool short_pool = false;  // fewer than k participants were available
};

// Picks the pool stimulus most similar to the query stimulus (an identical
// text scores exactly 1; ties go to the lexicographically smallest key),
// then k distinct participants under it, uniformly at random.
inline FewshotSelection select_fewshot(const StimulusKey& query, const Corpus& corpus,
                                       const RecordSet& pool, std::size_t k,
                                       SimilarityProvider& similarity, std::uint64_t seed) {
  if (pool.empty()) throw DataError("few-shot pool is empty");
  const auto index = index_by_stimulus(pool);
  const std::string query_text =
      compose_stimulus(corpus.study(query.study_id), query.condition_id, query.outcome_id);

  std::vector<StimulusKey> keys;
  std::vector<std::string> texts;
  for (const auto& [key, records] : index) {
    keys.push_back(key);
    texts.push_back(compose_stimulus(corpus.study(key.study_id), key.condition_id, key.outcome_id));
  }
  std::vector<double> scores = similarity.similarities(query_text, texts);
  if (scores.size() != texts.size()) throw Error("similarity provider returned wrong count");
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (texts[i] == query_text) scores[i] = 1.0;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }

  FewshotSelection sel;
  sel.neighbor = keys[best];
  sel.similarity = scores[best];
  RecordSet bucket = index.at(keys[best]);
  std::sort(bucket.begin(), bucket.end(), [](const auto* a, const auto* b) {
    return a->participant_id < b->participant_id;
  });
  const std::string stream_key =
      query.study_id + '\x1f' + query.condition_id + '\x1f' + query.outcome_id;
  Stream rng(seed, "fewshot", stream_key);
  rng.shuffle(std::span(bucket));
  sel.short_pool = bucket.size() < k;
  const std::size_t n = std::min(k, bucket.size());
  for (std::size_t i = 0; i < n; ++i) {
    sel.exemplars.push_back({texts[best], bucket[i]->persona, bucket[i]->response,
                             bucket[i]->participant_id});
  }
  return sel;
}

}  // namespace socsim
