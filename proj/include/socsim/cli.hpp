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
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "socsim/backends.hpp"
#include "socsim/corpus.hpp"
#include "socsim/evaluation.hpp"
#include "socsim/http.hpp"
#include "socsim/metrics.hpp"
#include "socsim/prompts.hpp"
#include "socsim/report.hpp"
#include "socsim/splits.hpp"
#include "socsim/synth.hpp"
#include "socsim/trainset.hpp"

namespace socsim {

inline constexpr std::string_view kVersion = "0.1.0";

namespace cli {

namespace fs = std::filesystem;

// Every option of every subcommand. Values from --config are applied first,
// command-line flags override them.
struct RunConfig {
  std::string corpus;
  std::string format = "auto";
  bool skip_invalid = false;
  std::optional<std::uint64_t> seed;
  std::string out = "socsim-out";

  // split
  std::string split_kind = "study";
  int train_count = 0;
  double train_frac = 0.75;
  int min_arms = 4;
  std::vector<double> pilot_fractions = default_pilot_fractions();
  std::string study_split;
  std::string split;  // assignment used by later stages

  // emit-train
  std::vector<std::string> modes = {"plain", "reasoning", "dpo"};
  std::string traces;
  int pairs_per_record = 1;
  std::optional<double> pilot;
  std::string oracle_endpoint;
  std::string oracle_model = "gpt-4o-mini";

  // predict
  std::string backend = "resampler";
  std::string name;
  std::string from;  // file backend input
  std::string endpoint;
  std::string model;
  std::string api_key_env = "SOCSIM_API_KEY";
  std::string prompt_mode = "direct";
  int concurrency = 4;
  double temperature = 0.6;
  double top_p = 0.9;
  int max_tokens = 4096;
  double timeout = 120;
  int fewshot_k = 5;
  std::string similarity = "lexical";
  std::string embedding_model = "text-embedding-3-large";
  bool leave_one_out = false;
  std::string clamp = "clamp";

  // evaluate / report
  std::vector<std::string> predictions;
  std::string base;
  std::string reference;
  std::vector<std::string> variant_bases;
  bool no_bound_rows = false;
  std::string bounds = "declared";
  std::string parse_fail = "exclude";
  int min_n = 5;
  int n_boot = 100;
  bool records_weighted = false;
  std::vector<std::string> categories;
  std::string scores;

  // synth
  int studies = 12;
  int participants = 40;
  int min_conditions = 2;
  int max_conditions = 5;
  int min_outcomes = 1;
  int max_outcomes = 2;
  std::string shape = "mixed";
  double within_fraction = 0.2;
  bool with_traces = false;
  std::string corpus_format = "jsonl";
};

inline Json to_json(const RunConfig& c) {
  Json j;
  j["corpus"] = c.corpus;
  j["format"] = c.format;
  j["skip-invalid"] = c.skip_invalid;
  j["seed"] = c.seed ? Json(*c.seed) : Json(nullptr);
  j["out"] = c.out;
  j["split-kind"] = c.split_kind;
  j["train-count"] = c.train_count;
  j["train-frac"] = c.train_frac;
  j["min-arms"] = c.min_arms;
  j["pilot-fractions"] = c.pilot_fractions;
  j["study-split"] = c.study_split;
  j["split"] = c.split;
  j["modes"] = c.modes;
  j["traces"] = c.traces;
  j["pairs-per-record"] = c.pairs_per_record;
  j["pilot"] = c.pilot ? Json(*c.pilot) : Json(nullptr);
  j["oracle-endpoint"] = c.oracle_endpoint;
  j["oracle-model"] = c.oracle_model;
  j["backend"] = c.backend;
  j["name"] = c.name;
  j["from"] = c.from;
  j["endpoint"] = c.endpoint;
  j["model"] = c.model;
  j["api-key-env"] = c.api_key_env;
  j["prompt-mode"] = c.prompt_mode;
  j["concurrency"] = c.concurrency;
  j["temperature"] = c.temperature;
  j["top-p"] = c.top_p;
  j["max-tokens"] = c.max_tokens;
  j["timeout"] = c.timeout;
  j["fewshot-k"] = c.fewshot_k;
  j["similarity"] = c.similarity;
  j["embedding-model"] = c.embedding_model;
  j["leave-one-out"] = c.leave_one_out;
  j["clamp"] = c.clamp;
  j["predictions"] = c.predictions;
  j["base"] = c.base;
  j["reference"] = c.reference;
  j["variant-base"] = c.variant_bases;
  j["no-bound-rows"] = c.no_bound_rows;
  j["bounds"] = c.bounds;
  j["parse-fail"] = c.parse_fail;
  j["min-n"] = c.min_n;
  j["n-boot"] = c.n_boot;
  j["records-weighted"] = c.records_weighted;
  j["categories"] = c.categories;
  j["scores"] = c.scores;
  j["studies"] = c.studies;
  j["participants"] = c.participants;
  j["min-conditions"] = c.min_conditions;
  j["max-conditions"] = c.max_conditions;
  j["min-outcomes"] = c.min_outcomes;
  j["max-outcomes"] = c.max_outcomes;
  j["shape"] = c.shape;
  j["within-fraction"] = c.within_fraction;
  j["with-traces"] = c.with_traces;
  j["corpus-format"] = c.corpus_format;
  return j;
}

// Reads a flat JSON object as CLI11 configuration: keys are long flag names
// without the dashes, arrays become repeated values.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override {
    return "{}";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    Json j;
    try {
      j = Json::parse(input);
    } catch (const Json::exception& e) {
      throw CLI::ParseError(std::string("config file is not valid JSON: ") + e.what(),
                            CLI::ExitCodes::ConversionError);
    }
    if (!j.is_object()) {
      throw CLI::ParseError("config file must hold a JSON object", CLI::ExitCodes::ConversionError);
    }
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      if (value.is_null()) continue;
      CLI::ConfigItem item;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  static std::string scalar(const Json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }
};

struct Io {
  std::ostream& out;
  std::ostream& err;
};

namespace detail {

inline std::uint64_t require_seed(const RunConfig& c, const std::string& stage) {
  if (!c.seed) throw ConfigError("--seed is required for " + stage);
  return *c.seed;
}

inline Corpus load(const RunConfig& c) {
  if (c.corpus.empty()) throw ConfigError("--corpus is required");
  const fs::path path(c.corpus);
  if (!fs::is_directory(path)) throw ConfigError("corpus directory " + c.corpus + " not found");
  const CorpusFormat format =
      c.format == "auto" ? detect_corpus_format(path) : parse_corpus_format(c.format);
  return load_corpus(path, format, LoadOptions{c.skip_invalid});
}

inline fs::path split_path(const RunConfig& c) {
  if (!c.split.empty()) return c.split;
  return fs::path(c.out) / "split.json";
}

inline std::optional<SplitAssignment> load_split(const RunConfig& c, bool required) {
  const fs::path path = split_path(c);
  if (!fs::exists(path)) {
    if (required || !c.split.empty()) {
      throw ConfigError("split file " + path.string() + " not found (run `socsim split` or pass --split)");
    }
    return std::nullopt;
  }
  return read_split(path);
}

inline RecordSet eval_records(const Corpus& corpus, const std::optional<SplitAssignment>& split) {
  return split ? select_records(corpus, *split, Side::eval) : all_records(corpus);
}

inline MetricOptions metric_options(const RunConfig& c, std::uint64_t seed) {
  MetricOptions m;
  m.bounds = parse_bounds_policy(c.bounds);
  if (c.parse_fail == "exclude") m.parse_fail = ParseFailPolicy::exclude;
  else if (c.parse_fail == "midpoint") m.parse_fail = ParseFailPolicy::midpoint;
  else throw ConfigError("--parse-fail must be exclude or midpoint");
  if (c.min_n < 1) throw ConfigError("--min-n must be at least 1");
  if (c.n_boot < 1) throw ConfigError("--n-boot must be at least 1");
  m.min_n = static_cast<std::size_t>(c.min_n);
  m.n_boot = c.n_boot;
  m.records_weighted = c.records_weighted;
  m.seed = seed;
  return m;
}

inline ChatConfig chat_config(const RunConfig& c, const std::string& endpoint,
                              const std::string& model) {
  ChatConfig chat;
  chat.endpoint = endpoint;
  chat.model = model;
  chat.api_key_env = c.api_key_env;
  chat.temperature = c.temperature;
  chat.top_p = c.top_p;
  chat.max_tokens = c.max_tokens;
  chat.concurrency = c.concurrency;
  chat.timeout_seconds = c.timeout;
  chat.check();
  return chat;
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

inline std::string hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline void write_manifest(const RunConfig& c, const std::string& command,
                           const std::optional<std::string>& corpus_hash) {
  Json config = to_json(c);
  Json m;
  m["tool"] = "socsim";
  m["version"] = std::string(kVersion);
  m["command"] = command;
  m["config"] = config;
  m["config_hash"] = hex(fnv1a64(config.dump()));
  m["corpus_hash"] = corpus_hash ? Json(*corpus_hash) : Json(nullptr);
  m["seed"] = c.seed ? Json(*c.seed) : Json(nullptr);
  m["created_at"] = socsim::detail::utc_now();
  write_text(fs::path(c.out) / "run_manifest.json", m.dump(2) + "\n");
}

// "name=value" -> (name, value); a bare value gets an empty name.
inline std::pair<std::string, std::string> split_assignment(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) return {"", s};
  return {s.substr(0, eq), s.substr(eq + 1)};
}

}  // namespace detail

// --- subcommands --------------------------------------------------------------

inline int cmd_validate(const RunConfig& c, Io io) {
  const Corpus corpus = detail::load(c);
  const auto reports = validate_corpus(corpus);
  Json j;
  j["corpus_hash"] = content_hash(corpus);
  j["studies"] = corpus.studies.size();
  j["records"] = corpus.records.size();
  j["rejected"] = Json::array();
  for (const auto& r : corpus.provenance.rejected) {
    j["rejected"].push_back({{"locator", r.locator}, {"message", r.message}});
  }
  j["reports"] = Json::array();
  std::size_t failed = 0;
  for (const auto& report : reports) {
    Json violations = Json::array();
    for (const auto& v : report.violations) {
      violations.push_back({{"rule", v.rule_id}, {"message", v.message}, {"locator", v.locator}});
      io.err << report.study_id << ": [" << v.rule_id << "] " << v.locator << ": " << v.message << '\n';
    }
    failed += !report.passed;
    j["reports"].push_back(
        {{"study_id", report.study_id}, {"passed", report.passed}, {"violations", violations}});
  }
  for (const auto& r : corpus.provenance.rejected) {
    io.err << "skipped " << r.locator << ": " << r.message << '\n';
  }
  detail::write_text(fs::path(c.out) / "validation.json", j.dump(2) + "\n");
  detail::write_manifest(c, "validate", content_hash(corpus));
  io.out << corpus.studies.size() << " studies, " << corpus.records.size() << " records, "
         << failed << " studies failing validation, " << corpus.provenance.rejected.size()
         << " rows skipped\n";
  return failed ? 1 : 0;
}

inline int cmd_split(const RunConfig& c, Io io) {
  const Corpus corpus = detail::load(c);
  const std::uint64_t seed = detail::require_seed(c, "split");
  SplitAssignment a;
  switch (parse_split_kind(c.split_kind)) {
    case SplitKind::study:
      a = split_studies(corpus, c.train_count, seed);
      break;
    case SplitKind::condition:
      a = split_conditions(corpus, c.train_frac, c.min_arms, seed);
      break;
    case SplitKind::outcome:
      a = split_outcomes(corpus, c.train_frac, c.min_arms, seed);
      break;
    case SplitKind::participant_sweep: {
      const SplitAssignment studies = c.study_split.empty()
                                          ? split_studies(corpus, c.train_count, seed)
                                          : read_split(c.study_split);
      a = split_participants(corpus, studies, c.pilot_fractions, seed);
      break;
    }
  }
  const fs::path path = c.split.empty() ? fs::path(c.out) / "split.json" : fs::path(c.split);
  write_split(a, path);
  detail::write_manifest(c, "split", content_hash(corpus));
  io.out << "split " << to_string(a.spec.kind) << ": " << a.train_keys.size() << " train / "
         << a.eval_keys.size() << " eval units";
  if (!a.excluded_studies.empty()) io.out << ", " << a.excluded_studies.size() << " studies excluded";
  io.out << " -> " << path.string() << '\n';
  return 0;
}

inline int cmd_emit_train(const RunConfig& c, Io io) {
  const Corpus corpus = detail::load(c);
  const SplitAssignment split = *detail::load_split(c, true);
  const RecordSet train = c.pilot ? select_pilot(corpus, split, *c.pilot)
                                  : select_records(corpus, split, Side::train);
  const fs::path dir = fs::path(c.out) / "train";
  Json summary;
  summary["train_records"] = train.size();
  for (const auto& mode : c.modes) {
    if (mode == "plain") {
      const auto s = emit_sft(corpus, train, SftMode::plain, nullptr, dir / "sft.jsonl");
      summary["plain"] = to_json(s);
      io.out << "plain SFT: " << s.emitted << " examples\n";
    } else if (mode == "reasoning") {
      std::unique_ptr<TraceProvider> provider;
      std::unique_ptr<ChatClient> client;
      if (!c.traces.empty()) {
        provider = std::make_unique<OfflineTraces>(c.traces);
      } else if (!c.oracle_endpoint.empty()) {
        client = std::make_unique<ChatClient>(detail::chat_config(c, c.oracle_endpoint, c.oracle_model));
        provider = std::make_unique<HttpTraceProvider>(*client);
      } else {
        throw ConfigError("reasoning mode needs --traces or --oracle-endpoint");
      }
      const auto s = emit_sft(corpus, train, SftMode::reasoning, provider.get(),
                              dir / "sft_reasoning.jsonl", SftOptions{c.concurrency});
      summary["reasoning"] = to_json(s);
      io.out << "reasoning SFT: " << s.emitted << " examples, " << s.trace_failures
             << " trace failures, " << s.leaks_skipped << " skipped for leaks\n";
    } else if (mode == "dpo") {
      const auto build = build_dpo_pairs(corpus, train, c.pairs_per_record,
                                         detail::require_seed(c, "DPO pairing"));
      emit_dpo(build.pairs, dir / "dpo.jsonl");
      summary["dpo"] = to_json(build.summary);
      io.out << "DPO: " << build.summary.pairs << " pairs, " << build.summary.zero_pair_records
             << " records without a contrasting response\n";
    } else {
      throw ConfigError("unknown training mode '" + mode + "' (plain, reasoning, dpo)");
    }
  }
  detail::write_text(dir / "summary.json", summary.dump(2) + "\n");
  detail::write_manifest(c, "emit-train", content_hash(corpus));
  return 0;
}

namespace detail {

inline std::vector<PromptBundle> eval_prompts(const RunConfig& c, const Corpus& corpus,
                                              const RecordSet& eval,
                                              const std::optional<SplitAssignment>& split,
                                              PromptMode mode, SimilarityProvider* similarity) {
  std::vector<PromptBundle> prompts;
  std::map<StimulusKey, std::vector<Exemplar>> exemplars;
  RecordSet pool;
  if (mode == PromptMode::fewshot) {
    if (!split) throw ConfigError("few-shot prompting needs a split (exemplars come from train)");
    pool = select_records(corpus, *split, Side::train);
    if (pool.empty()) throw ConfigError("the split has no train records for few-shot exemplars");
  }
  for (const ResponseRecord* r : eval) {
    const StudyManifest& m = corpus.study(r->study_id);
    if (mode != PromptMode::fewshot) {
      prompts.push_back(render(mode, *r, m));
      continue;
    }
    const StimulusKey key = stimulus_of(*r);
    auto it = exemplars.find(key);
    if (it == exemplars.end()) {
      auto sel = select_fewshot(key, corpus, pool, static_cast<std::size_t>(c.fewshot_k),
                                *similarity, require_seed(c, "few-shot selection"));
      it = exemplars.emplace(key, std::move(sel.exemplars)).first;
    }
    prompts.push_back(render(mode, *r, m, it->second));
  }
  return prompts;
}

}  // namespace detail

inline int cmd_predict(const RunConfig& c, Io io) {
  const Corpus corpus = detail::load(c);
  const auto split = detail::load_split(c, false);
  const RecordSet eval = detail::eval_records(corpus, split);
  const BackendKind kind = parse_backend_kind(c.backend);
  const BoundsPolicy bounds = parse_bounds_policy(c.bounds);
  std::vector<PredictionRecord> preds;
  switch (kind) {
    case BackendKind::file:
      if (c.from.empty()) throw ConfigError("--from is required for the file backend");
      if (!fs::exists(c.from)) throw ConfigError("prediction file " + c.from + " not found");
      preds = predict_file(c.from);
      break;
    case BackendKind::midpoint:
      preds = baseline_midpoint(corpus, eval, bounds);
      break;
    case BackendKind::uniform:
      preds = baseline_uniform(corpus, eval, detail::require_seed(c, "the uniform baseline"), bounds);
      break;
    case BackendKind::resampler:
      preds = oracle_resampler(corpus, eval, detail::require_seed(c, "the resampler"),
                               ResamplerOptions{c.leave_one_out});
      break;
    case BackendKind::http: {
      const ChatClient client(detail::chat_config(c, c.endpoint, c.model));
      const PromptMode mode = parse_prompt_mode(c.prompt_mode);
      if (mode == PromptMode::oracle_trace) throw ConfigError("oracle_trace prompts are for trace generation");
      std::unique_ptr<SimilarityProvider> similarity;
      std::unique_ptr<ChatClient> embed_client;
      if (c.similarity == "lexical") {
        similarity = std::make_unique<LexicalSimilarity>();
      } else if (c.similarity == "embedding") {
        embed_client = std::make_unique<ChatClient>(detail::chat_config(c, c.endpoint, c.embedding_model));
        similarity = std::make_unique<HttpEmbeddingSimilarity>(*embed_client);
      } else {
        throw ConfigError("--similarity must be lexical or embedding");
      }
      const auto prompts = detail::eval_prompts(c, corpus, eval, split, mode, similarity.get());
      preds = predict_http(client, prompts, ScaleBook(corpus, bounds), parse_clamp_policy(c.clamp));
      break;
    }
  }
  const std::string name = c.name.empty() ? c.backend : c.name;
  const fs::path path = fs::path(c.out) / "predictions" / (name + ".jsonl");
  write_predictions(preds, path);
  detail::write_manifest(c, "predict", content_hash(corpus));
  std::size_t failed = 0;
  for (const auto& p : preds) failed += p.parse_failed;
  io.out << name << ": " << preds.size() << " predictions (" << failed << " parse failures) -> "
         << path.string() << '\n';
  return 0;
}

inline int cmd_evaluate(const RunConfig& c, Io io) {
  const Corpus corpus = detail::load(c);
  const auto split = detail::load_split(c, false);
  const RecordSet eval = detail::eval_records(corpus, split);
  const std::uint64_t seed = detail::require_seed(c, "evaluation (bootstrap bound)");
  const MetricOptions options = detail::metric_options(c, seed);

  std::vector<std::pair<std::string, fs::path>> inputs;
  for (const auto& p : c.predictions) {
    auto [name, path] = detail::split_assignment(p);
    if (name.empty()) name = fs::path(path).stem().string();
    inputs.emplace_back(name, path);
  }
  if (inputs.empty()) {
    const fs::path dir = fs::path(c.out) / "predictions";
    if (fs::is_directory(dir)) {
      for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".jsonl") inputs.emplace_back(entry.path().stem().string(), entry.path());
      }
      std::sort(inputs.begin(), inputs.end());
    }
  }
  if (inputs.empty()) throw ConfigError("no prediction files given (--predictions NAME=PATH)");
  for (const auto& [name, path] : inputs) {
    if (!fs::exists(path)) throw ConfigError("prediction file " + path.string() + " not found");
  }

  std::map<std::string, std::string> bases;
  for (const auto& vb : c.variant_bases) {
    auto [variant, base] = detail::split_assignment(vb);
    if (variant.empty()) throw ConfigError("--variant-base expects VARIANT=BASE");
    bases[variant] = base;
  }
  const std::vector<std::string> categories =
      c.categories.empty() ? persona_categories(eval) : c.categories;

  Json evaluations = Json::array();
  Json variants = Json::array();
  std::ostringstream per_stimulus;
  csv::write_row(per_stimulus, stimulus_csv_header());
  for (const auto& [name, path] : inputs) {
    const auto preds = predict_file(path);
    const Evaluation e = evaluate(name, corpus, eval, preds, options, categories);
    MacroScore m = e.macro();
    if (auto it = bases.find(name); it != bases.end()) m.base = it->second;
    variants.push_back(to_json(m));
    evaluations.push_back(to_json(e));
    write_stimulus_rows(per_stimulus, name, e.alignment.stimuli);
    io.out << name << ": accuracy "
           << (m.accuracy ? socsim::detail::fixed(*m.accuracy * 100, 1) : std::string("--"))
           << ", distribution "
           << (m.alignment ? socsim::detail::fixed(*m.alignment, 3) : std::string("--")) << '\n';
    if (e.accuracy.counts.unmatched) {
      io.err << name << ": " << e.accuracy.counts.unmatched
             << " predictions match no evaluation record\n";
    }
  }
  if (!c.no_bound_rows) {
    const BoundResult best = empirical_best(corpus, eval, options);
    const BoundResult uniform = uniform_guess_bound(corpus, eval, options);
    variants.push_back(to_json(bound_score("Empirical Best", best)));
    variants.push_back(to_json(bound_score("Uniform Guess", uniform)));
    write_stimulus_rows(per_stimulus, "Empirical Best", best.stimuli);
    write_stimulus_rows(per_stimulus, "Uniform Guess", uniform.stimuli);
  }
  std::string base = c.base;
  if (base.empty()) {
    base = inputs.front().first;
    for (const auto& [name, path] : inputs) {
      if (name == "midpoint") base = name;
    }
  }
  Json j;
  j["base"] = base;
  j["reference"] = c.reference.empty() ? Json(nullptr) : Json(c.reference);
  j["variants"] = variants;
  j["evaluations"] = evaluations;
  j["eval_records"] = eval.size();
  detail::write_text(fs::path(c.out) / "evaluation.json", j.dump(2) + "\n");
  detail::write_text(fs::path(c.out) / "per_stimulus.csv", per_stimulus.str());
  detail::write_manifest(c, "evaluate", content_hash(corpus));
  return 0;
}

namespace detail {

// Variants named "<curve>@<fraction>" form learning curves instead of rows.
inline std::optional<std::pair<std::string, double>> sweep_member(const std::string& name) {
  const auto at = name.rfind('@');
  if (at == std::string::npos || at == 0) return std::nullopt;
  try {
    std::size_t used = 0;
    const double f = std::stod(name.substr(at + 1), &used);
    if (used != name.size() - at - 1) return std::nullopt;
    return std::make_pair(name.substr(0, at), f);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline std::string subgroup_csv(const EvalReport& report) {
  std::ostringstream out;
  csv::write_row(out, {"variant", "category", "group", "alignment"});
  for (const auto& row : report.rows) {
    for (const auto& [category, groups] : row.score.subgroups) {
      for (const auto& [value, a] : groups) {
        csv::write_row(out, {row.score.name, category, value, socsim::detail::full(a)});
      }
    }
  }
  return out.str();
}

inline std::string sweep_csv(const EvalReport& report) {
  std::ostringstream out;
  csv::write_row(out, {"curve", "fraction", "accuracy", "alignment", "saturation"});
  for (const auto& s : report.sweeps) {
    for (const auto& p : s.points) {
      csv::write_row(out, {s.name, socsim::detail::full(p.fraction),
                           p.accuracy ? socsim::detail::full(*p.accuracy) : "",
                           p.alignment ? socsim::detail::full(*p.alignment) : "",
                           s.saturation && *s.saturation == p.fraction ? "1" : "0"});
    }
  }
  return out.str();
}

}  // namespace detail

inline int cmd_report(const RunConfig& c, Io io) {
  const fs::path scores = c.scores.empty() ? fs::path(c.out) / "evaluation.json" : fs::path(c.scores);
  if (!fs::exists(scores)) throw ConfigError("scores file " + scores.string() + " not found (run `socsim evaluate`)");
  Json j;
  {
    std::ifstream in(scores, std::ios::binary);
    try {
      j = Json::parse(in);
    } catch (const Json::exception& e) {
      throw DataError(e.what(), scores.filename().string());
    }
  }
  std::vector<MacroScore> rows;
  std::map<std::string, std::map<double, MacroScore>> curves;
  for (const auto& v : j.at("variants")) {
    MacroScore m = macro_score_from_json(v);
    if (auto member = detail::sweep_member(m.name)) {
      curves[member->first][member->second] = m;
    } else {
      rows.push_back(std::move(m));
    }
  }
  std::string base = c.base.empty() ? j.value("base", std::string()) : c.base;
  std::optional<std::string> reference;
  if (!c.reference.empty()) reference = c.reference;
  else if (j.contains("reference") && j["reference"].is_string()) reference = j["reference"].get<std::string>();
  if (rows.empty()) throw DataError("no variants to report", scores.filename().string());
  if (std::none_of(rows.begin(), rows.end(), [&](const MacroScore& m) { return m.name == base; })) {
    throw ConfigError("base variant '" + base + "' not among the scores");
  }
  EvalReport report = build_report(rows, base, reference);
  for (const auto& [name, points] : curves) report.sweeps.push_back(build_sweep(points, name));

  const fs::path dir(c.out);
  emit(report, ReportFormat::markdown, dir);
  emit(report, ReportFormat::csv, dir);
  emit(report, ReportFormat::json, dir);
  emit(report, ReportFormat::plotdata, dir);
  detail::write_text(dir / "plot" / "subgroups.csv", detail::subgroup_csv(report));
  detail::write_text(dir / "plot" / "sweep.csv", detail::sweep_csv(report));
  const fs::path stimuli = scores.parent_path() / "per_stimulus.csv";
  if (fs::exists(stimuli) && !fs::exists(dir / "per_stimulus.csv")) {
    fs::copy_file(stimuli, dir / "per_stimulus.csv");
  } else if (fs::exists(stimuli) && !fs::equivalent(stimuli, dir / "per_stimulus.csv")) {
    fs::copy_file(stimuli, dir / "per_stimulus.csv", fs::copy_options::overwrite_existing);
  }
  detail::write_manifest(c, "report", std::nullopt);
  io.out << "report with " << report.rows.size() << " variants -> " << (dir / "report.md").string() << '\n';
  return 0;
}

inline int cmd_synth(const RunConfig& c, Io io) {
  SynthOptions o;
  o.studies = c.studies;
  o.participants = c.participants;
  o.min_conditions = c.min_conditions;
  o.max_conditions = c.max_conditions;
  o.min_outcomes = c.min_outcomes;
  o.max_outcomes = c.max_outcomes;
  o.shape = parse_synth_shape(c.shape);
  o.within_fraction = c.within_fraction;
  o.seed = detail::require_seed(c, "synth");
  const Corpus corpus = synthesize(o);
  const fs::path dir(c.out);
  if (parse_corpus_format(c.corpus_format) == CorpusFormat::jsonl) write_jsonl(corpus, dir);
  else write_csv_pair(corpus, dir);
  if (c.with_traces) {
    std::ofstream out(dir / "traces.jsonl", std::ios::binary);
    for (const auto& r : corpus.records) out << trace_line(key_of(r), synthetic_trace(r)).dump() << '\n';
  }
  io.out << corpus.studies.size() << " studies, " << corpus.records.size() << " records -> "
         << dir.string() << '\n';
  return 0;
}

// --- entry point --------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  RunConfig c;
  CLI::App app{"Survey-response simulation toolkit: corpus validation, splits, training sets, "
               "predictions, metrics and reports.",
               "socsim"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file with option values; flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);

  auto in_set = [](std::initializer_list<std::string> values) { return CLI::IsMember(std::vector<std::string>(values)); };

  app.add_option("--corpus", c.corpus, "Corpus directory");
  app.add_option("--format", c.format, "Corpus format")->check(in_set({"auto", "jsonl", "csv", "csv_pair"}));
  app.add_flag("--skip-invalid", c.skip_invalid, "Skip invalid rows instead of failing");
  app.add_option("--seed", c.seed, "Seed for every stochastic stage");
  app.add_option("--out", c.out, "Output directory");
  app.add_option("--split-kind", c.split_kind, "study, condition, outcome or participant_sweep")
      ->check(in_set({"study", "condition", "outcome", "participant_sweep"}));
  app.add_option("--train-count", c.train_count, "Training studies (study split)");
  app.add_option("--train-frac", c.train_frac, "Training share of arms (condition/outcome split)");
  app.add_option("--min-arms", c.min_arms, "Minimum arms for a study to be split");
  app.add_option("--pilot-fractions", c.pilot_fractions, "Pilot fractions (participant sweep)")->delimiter(',');
  app.add_option("--study-split", c.study_split, "Study split file for a participant sweep");
  app.add_option("--split", c.split, "Split file (default <out>/split.json)");
  app.add_option("--modes", c.modes, "Training sets: plain, reasoning, dpo")->delimiter(',');
  app.add_option("--traces", c.traces, "Offline reasoning-trace JSONL");
  app.add_option("--pairs-per-record", c.pairs_per_record, "DPO pairs per focal record");
  app.add_option("--pilot", c.pilot, "Train on the pilot subset at this fraction");
  app.add_option("--oracle-endpoint", c.oracle_endpoint, "Chat endpoint for live trace generation");
  app.add_option("--oracle-model", c.oracle_model, "Model for trace generation");
  app.add_option("--backend", c.backend, "file, midpoint, uniform, resampler or http")
      ->check(in_set({"file", "midpoint", "uniform", "resampler", "http"}));
  app.add_option("--name", c.name, "Variant name for the prediction file");
  app.add_option("--from", c.from, "Prediction JSONL for the file backend");
  app.add_option("--endpoint", c.endpoint, "Chat-completions base URL");
  app.add_option("--model", c.model, "Model name sent to the endpoint");
  app.add_option("--api-key-env", c.api_key_env, "Environment variable holding the bearer token");
  app.add_option("--prompt-mode", c.prompt_mode, "direct, reasoning or fewshot")
      ->check(in_set({"direct", "reasoning", "fewshot", "few-shot"}));
  app.add_option("--concurrency", c.concurrency, "Maximum parallel requests")->check(CLI::PositiveNumber);
  app.add_option("--temperature", c.temperature, "Sampling temperature")->check(CLI::NonNegativeNumber);
  app.add_option("--top-p", c.top_p, "Nucleus sampling mass");
  app.add_option("--max-tokens", c.max_tokens, "Maximum reply tokens");
  app.add_option("--timeout", c.timeout, "Per-request timeout in seconds");
  app.add_option("--fewshot-k", c.fewshot_k, "Exemplars per few-shot prompt");
  app.add_option("--similarity", c.similarity, "lexical or embedding");
  app.add_option("--embedding-model", c.embedding_model, "Model for the embeddings endpoint");
  app.add_flag("--leave-one-out", c.leave_one_out, "Resampler excludes the focal record");
  app.add_option("--clamp", c.clamp, "Off-scale answers: clamp or reject")->check(in_set({"clamp", "reject"}));
  app.add_option("--predictions", c.predictions, "Prediction files as NAME=PATH");
  app.add_option("--base", c.base, "Base variant for relative change");
  app.add_option("--reference", c.reference, "Reference variant column");
  app.add_option("--variant-base", c.variant_bases, "Per-variant base as VARIANT=BASE");
  app.add_flag("--no-bound-rows", c.no_bound_rows, "Skip the Empirical Best and Uniform Guess rows");
  app.add_option("--bounds", c.bounds, "Standardization bounds: declared or observed")
      ->check(in_set({"declared", "observed"}));
  app.add_option("--parse-fail", c.parse_fail, "Parse failures: exclude or midpoint")
      ->check(in_set({"exclude", "midpoint"}));
  app.add_option("--min-n", c.min_n, "Minimum truth responses per subgroup stimulus");
  app.add_option("--n-boot", c.n_boot, "Bootstrap resamples for the Empirical Best bound");
  app.add_flag("--records-weighted", c.records_weighted, "Weight studies by record count");
  app.add_option("--categories", c.categories, "Persona attributes for subgroup tables")->delimiter(',');
  app.add_option("--scores", c.scores, "evaluation.json to report (default <out>/evaluation.json)");
  app.add_option("--studies", c.studies, "Synthetic studies");
  app.add_option("--participants", c.participants, "Synthetic participants per study");
  app.add_option("--min-conditions", c.min_conditions, "Synthetic conditions per study (min)");
  app.add_option("--max-conditions", c.max_conditions, "Synthetic conditions per study (max)");
  app.add_option("--min-outcomes", c.min_outcomes, "Synthetic outcomes per study (min)");
  app.add_option("--max-outcomes", c.max_outcomes, "Synthetic outcomes per study (max)");
  app.add_option("--shape", c.shape, "Synthetic response shape: skewed, bimodal or mixed")
      ->check(in_set({"skewed", "bimodal", "mixed"}));
  app.add_option("--within-fraction", c.within_fraction, "Share of within-subject synthetic studies");
  app.add_flag("--with-traces", c.with_traces, "Also write placeholder traces.jsonl");
  app.add_option("--corpus-format", c.corpus_format, "Synthetic corpus format: jsonl or csv")
      ->check(in_set({"jsonl", "csv", "csv_pair"}));

  using Command = int (*)(const RunConfig&, Io);
  const std::vector<std::tuple<std::string, std::string, Command>> commands = {
      {"validate", "Load a corpus and check the reconstruction rules", cmd_validate},
      {"split", "Write a train/eval assignment", cmd_split},
      {"emit-train", "Write SFT, reasoning-SFT and DPO training files", cmd_emit_train},
      {"predict", "Produce predictions for the eval records", cmd_predict},
      {"evaluate", "Score prediction files", cmd_evaluate},
      {"report", "Build comparison tables and plot data", cmd_report},
      {"synth", "Generate a synthetic corpus", cmd_synth},
  };
  for (const auto& [name, help, fn] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion& e) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    for (const auto& [name, help, fn] : commands) {
      if (app.got_subcommand(name)) return fn(c, Io{out, err});
    }
    return 2;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const ServiceError& e) {
    err << "service error: " << e.what() << '\n';
    return e.fatal() ? 2 : 1;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const Json::exception& e) {
    err << "data error: " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "file error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace cli
}  // namespace socsim
