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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "socsim/csv.hpp"
#include "socsim/evaluation.hpp"
#include "socsim/metrics.hpp"

namespace socsim {

// Relative changes in percent; empty where the cell is "--" (a variant
// against itself, bounds against a base, or a missing metric).
struct Delta {
  std::optional<double> accuracy;
  std::optional<double> alignment;
  bool operator==(const Delta&) const = default;
};

enum class Mark { none, best, second };

struct VariantRow {
  MacroScore score;
  Delta vs_base;
  std::optional<Delta> vs_reference;
  Mark accuracy_mark = Mark::none;
  Mark alignment_mark = Mark::none;
};

struct SweepPoint {
  double fraction = 0;
  std::optional<double> accuracy;
  std::optional<double> alignment;
  bool operator==(const SweepPoint&) const = default;
};

struct SweepTable {
  std::string name;
  std::vector<SweepPoint> points;  // ascending fraction
  std::optional<double> saturation;
};

struct ParitySummary {
  std::vector<std::string> categories;
  // variant -> mean-across-categories parity reduction vs its base
  std::map<std::string, ParityReduction> reductions;
};

struct EvalReport {
  std::vector<VariantRow> rows;
  std::string base_name;
  std::optional<std::string> reference_name;
  std::vector<SweepTable> sweeps;
  ParitySummary parity;
};

namespace detail {

inline std::optional<double> change(const std::optional<double>& method,
                                    const std::optional<double>& base, Direction d) {
  if (!method || !base || *base == 0) return std::nullopt;
  return relative_change(*method, *base, d);
}

inline Delta delta(const MacroScore& method, const MacroScore& base) {
  return {change(method.accuracy, base.accuracy, Direction::higher_better),
          change(method.alignment, base.alignment, Direction::lower_better)};
}

inline const MacroScore& find_score(const std::vector<MacroScore>& results,
                                    const std::string& name) {
  for (const auto& r : results) {
    if (r.name == name) return r;
  }
  throw ConfigError("no variant named '" + name + "' in the report inputs");
}

// Best / second-best marks within each group of rows sharing a base; bounds
// are not ranked.
template <typename Get, typename Set>
void rank(std::vector<VariantRow>& rows, const std::string& default_base, bool higher_better,
          Get get, Set set) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].score.is_bound || !get(rows[i].score)) continue;
    groups[rows[i].score.base.value_or(default_base)].push_back(i);
  }
  for (const auto& [base, members] : groups) {
    std::vector<double> values;
    for (auto i : members) values.push_back(*get(rows[i].score));
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    if (higher_better) std::reverse(values.begin(), values.end());
    if (members.size() < 2) continue;
    for (auto i : members) {
      const double v = *get(rows[i].score);
      if (v == values[0]) set(rows[i], Mark::best);
      else if (values.size() > 1 && v == values[1]) set(rows[i], Mark::second);
    }
  }
}

}  // namespace detail

// Fills "%Δ vs Base" (each variant against its own base, or `base`) and
// "vs <reference>" columns, plus best / second-best marks per column.
inline EvalReport build_report(const std::vector<MacroScore>& results, const std::string& base,
                               const std::optional<std::string>& reference = std::nullopt) {
  EvalReport report;
  report.base_name = base;
  report.reference_name = reference;
  detail::find_score(results, base);
  const MacroScore* ref = reference ? &detail::find_score(results, *reference) : nullptr;

  for (const auto& r : results) {
    VariantRow row;
    row.score = r;
    const std::string own_base = r.base.value_or(base);
    if (!r.is_bound && own_base != r.name) {
      row.vs_base = detail::delta(r, detail::find_score(results, own_base));
    }
    if (ref) row.vs_reference = r.name == ref->name ? Delta{} : detail::delta(r, *ref);
    report.rows.push_back(std::move(row));
  }
  detail::rank(
      report.rows, base, true, [](const MacroScore& s) { return s.accuracy; },
      [](VariantRow& row, Mark m) { row.accuracy_mark = m; });
  detail::rank(
      report.rows, base, false, [](const MacroScore& s) { return s.alignment; },
      [](VariantRow& row, Mark m) { row.alignment_mark = m; });

  std::set<std::string> categories;
  for (const auto& r : results) {
    for (const auto& [category, p] : r.parity) categories.insert(category);
  }
  report.parity.categories.assign(categories.begin(), categories.end());
  for (const auto& r : results) {
    const std::string own_base = r.base.value_or(base);
    if (r.parity.empty() || own_base == r.name) continue;
    const auto& b = detail::find_score(results, own_base);
    if (b.parity.empty()) continue;
    report.parity.reductions[r.name] = parity_reduction(b.parity, r.parity);
  }
  return report;
}

// Learning curve ordered by pilot fraction. The saturation fraction is the
// smallest fraction whose alignment is within 2% (relative) of the 50% point,
// or of the largest fraction when 50% is absent. Needs at least two points.
inline SweepTable build_sweep(const std::map<double, MacroScore>& results, std::string name = {}) {
  SweepTable table;
  table.name = std::move(name);
  for (const auto& [f, score] : results) table.points.push_back({f, score.accuracy, score.alignment});
  if (table.points.size() < 2) return table;
  auto ref = std::find_if(table.points.begin(), table.points.end(),
                          [](const SweepPoint& p) { return std::abs(p.fraction - 0.5) < 1e-12; });
  if (ref == table.points.end()) ref = std::prev(table.points.end());
  if (!ref->alignment || *ref->alignment == 0) return table;
  for (const auto& p : table.points) {
    if (p.alignment && std::abs(*p.alignment - *ref->alignment) / std::abs(*ref->alignment) <=
                           0.02 + 1e-12) {
      table.saturation = p.fraction;
      break;
    }
  }
  return table;
}

// --- emission -----------------------------------------------------------------

enum class ReportFormat { markdown, csv, json, plotdata };

namespace detail {

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

inline std::string percent(const std::optional<double>& v) {
  return v ? fixed(*v, 1) + "%" : "--";
}

inline std::string marked(const std::string& text, Mark m) {
  switch (m) {
    case Mark::best: return "**" + text + "**";
    case Mark::second: return "<u>" + text + "</u>";
    case Mark::none: break;
  }
  return text;
}

inline std::string full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline Json delta_json(const Delta& d) {
  return {{"accuracy", optional_number(d.accuracy)}, {"alignment", optional_number(d.alignment)}};
}

inline std::string_view mark_name(Mark m) {
  return m == Mark::best ? "best" : m == Mark::second ? "second" : "none";
}

}  // namespace detail

inline std::string to_markdown(const EvalReport& report) {
  std::ostringstream out;
  const std::string ref = report.reference_name.value_or("");
  out << "# Evaluation report\n\n";
  out << "Accuracy is normalized accuracy in percent (higher is better). Distribution is the "
         "mean Wasserstein distance between standardized predicted and true response "
         "distributions (lower is better). Changes are relative.\n\n";
  out << "| Variant | Accuracy | %Δ vs Base |";
  if (report.reference_name) out << " vs " << ref << " |";
  out << " Distribution | %Δ vs Base |";
  if (report.reference_name) out << " vs " << ref << " |";
  out << "\n|---|---|---|";
  if (report.reference_name) out << "---|";
  out << "---|---|";
  if (report.reference_name) out << "---|";
  out << '\n';
  for (const auto& row : report.rows) {
    const auto& s = row.score;
    out << "| " << s.name << " | "
        << (s.accuracy ? detail::marked(detail::fixed(*s.accuracy * 100, 1), row.accuracy_mark)
                       : "--")
        << " | " << detail::percent(row.vs_base.accuracy) << " |";
    if (report.reference_name) {
      out << ' ' << detail::percent(row.vs_reference ? row.vs_reference->accuracy : std::nullopt)
          << " |";
    }
    out << ' '
        << (s.alignment ? detail::marked(detail::fixed(*s.alignment, 3), row.alignment_mark)
                        : "--")
        << " | " << detail::percent(row.vs_base.alignment) << " |";
    if (report.reference_name) {
      out << ' '
          << detail::percent(row.vs_reference ? row.vs_reference->alignment : std::nullopt)
          << " |";
    }
    out << '\n';
  }

  if (!report.parity.categories.empty()) {
    out << "\n## Demographic parity\n\nParity is the gap between the best- and worst-aligned "
           "subgroup of a category (lower is better).\n\n| Category |";
    std::vector<const VariantRow*> with_parity;
    for (const auto& row : report.rows) {
      if (!row.score.parity.empty()) with_parity.push_back(&row);
    }
    for (const auto* row : with_parity) out << ' ' << row->score.name << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < with_parity.size(); ++i) out << "---|";
    out << '\n';
    for (const auto& category : report.parity.categories) {
      out << "| " << category << " |";
      for (const auto* row : with_parity) {
        auto it = row->score.parity.find(category);
        out << ' ' << (it == row->score.parity.end() ? "--" : detail::fixed(it->second, 4))
            << " |";
      }
      out << '\n';
    }
    for (const auto& [variant, reduction] : report.parity.reductions) {
      out << "\nMean parity reduction of " << variant << " across categories: "
          << detail::percent(std::isfinite(reduction.mean) ? std::optional(reduction.mean)
                                                           : std::nullopt)
          << '\n';
    }
  }

  for (const auto& sweep : report.sweeps) {
    out << "\n## Learning curve" << (sweep.name.empty() ? "" : " (" + sweep.name + ")")
        << "\n\n| Pilot fraction | Accuracy | Distribution |\n|---|---|---|\n";
    for (const auto& p : sweep.points) {
      out << "| " << detail::fixed(p.fraction * 100, 0) << "% | "
          << (p.accuracy ? detail::fixed(*p.accuracy * 100, 1) : "--") << " | "
          << (p.alignment ? detail::fixed(*p.alignment, 3) : "--") << " |\n";
    }
    out << "\nSaturation: "
        << (sweep.saturation ? detail::fixed(*sweep.saturation * 100, 0) + "% of participants"
                             : std::string("not determined"))
        << '\n';
  }
  return out.str();
}

inline std::string to_csv(const EvalReport& report) {
  std::ostringstream out;
  csv::write_row(out, {"variant", "base", "is_bound", "accuracy", "accuracy_vs_base",
                       "accuracy_vs_reference", "alignment", "alignment_vs_base",
                       "alignment_vs_reference"});
  auto num = [](const std::optional<double>& v) { return v ? detail::full(*v) : std::string(); };
  for (const auto& row : report.rows) {
    const auto& s = row.score;
    csv::write_row(out, {s.name, s.base.value_or(report.base_name), s.is_bound ? "1" : "0",
                         num(s.accuracy), num(row.vs_base.accuracy),
                         num(row.vs_reference ? row.vs_reference->accuracy : std::nullopt),
                         num(s.alignment), num(row.vs_base.alignment),
                         num(row.vs_reference ? row.vs_reference->alignment : std::nullopt)});
  }
  return out.str();
}

inline Json to_json(const EvalReport& report) {
  Json j;
  j["base"] = report.base_name;
  j["reference"] = report.reference_name ? Json(*report.reference_name) : Json(nullptr);
  j["variants"] = Json::array();
  for (const auto& row : report.rows) {
    Json v = to_json(row.score);
    v["derived"] = {{"vs_base", detail::delta_json(row.vs_base)},
                    {"vs_reference",
                     row.vs_reference ? detail::delta_json(*row.vs_reference) : Json(nullptr)},
                    {"marks",
                     {{"accuracy", detail::mark_name(row.accuracy_mark)},
                      {"alignment", detail::mark_name(row.alignment_mark)}}}};
    j["variants"].push_back(v);
  }
  if (!report.parity.reductions.empty()) {
    Json p = Json::object();
    for (const auto& [variant, r] : report.parity.reductions) {
      p[variant] = {{"per_category", r.per_category}, {"mean", detail::optional_number(r.mean)}};
    }
    j["parity_reduction"] = p;
  }
  if (!report.sweeps.empty()) {
    j["sweeps"] = Json::array();
    for (const auto& sweep : report.sweeps) {
      Json points = Json::array();
      for (const auto& p : sweep.points) {
        points.push_back({{"fraction", p.fraction},
                          {"accuracy", detail::optional_number(p.accuracy)},
                          {"alignment", detail::optional_number(p.alignment)}});
      }
      j["sweeps"].push_back({{"name", sweep.name},
                             {"points", points},
                             {"saturation", detail::optional_number(sweep.saturation)}});
    }
  }
  return j;
}

// Rebuilds a report from the raw scores stored in its JSON; derived fields
// in the input are ignored.
inline EvalReport report_from_json(const Json& j) {
  std::vector<MacroScore> scores;
  for (const auto& v : j.at("variants")) scores.push_back(macro_score_from_json(v));
  std::optional<std::string> reference;
  if (j.contains("reference") && j["reference"].is_string()) {
    reference = j["reference"].get<std::string>();
  }
  EvalReport report = build_report(scores, j.at("base").get<std::string>(), reference);
  if (j.contains("sweeps")) {
    for (const auto& s : j["sweeps"]) {
      std::map<double, MacroScore> points;
      for (const auto& p : s.at("points")) {
        MacroScore m;
        m.accuracy = detail::number_or_null(p, "accuracy");
        m.alignment = detail::number_or_null(p, "alignment");
        points[p.at("fraction").get<double>()] = m;
      }
      report.sweeps.push_back(build_sweep(points, s.value("name", std::string())));
    }
  }
  return report;
}

// Tidy rows (variant, metric, group, value) for plotting.
inline std::string to_plotdata(const EvalReport& report) {
  std::ostringstream out;
  csv::write_row(out, {"variant", "metric", "group", "value"});
  auto emit = [&](const std::string& variant, const std::string& metric, const std::string& group,
                  const std::optional<double>& v) {
    if (v && std::isfinite(*v)) csv::write_row(out, {variant, metric, group, detail::full(*v)});
  };
  for (const auto& row : report.rows) {
    const auto& s = row.score;
    emit(s.name, "accuracy", "all", s.accuracy);
    emit(s.name, "alignment", "all", s.alignment);
    emit(s.name, "accuracy_vs_base", "all", row.vs_base.accuracy);
    emit(s.name, "alignment_vs_base", "all", row.vs_base.alignment);
    if (row.vs_reference) {
      emit(s.name, "accuracy_vs_reference", "all", row.vs_reference->accuracy);
      emit(s.name, "alignment_vs_reference", "all", row.vs_reference->alignment);
    }
    for (const auto& [category, groups] : s.subgroups) {
      for (const auto& [value, a] : groups) {
        emit(s.name, "subgroup_alignment", category + "=" + value, a);
      }
    }
    for (const auto& [category, p] : s.parity) emit(s.name, "parity", category, p);
  }
  for (const auto& sweep : report.sweeps) {
    for (const auto& p : sweep.points) {
      const std::string group = "fraction=" + detail::full(p.fraction);
      emit(sweep.name.empty() ? "sweep" : sweep.name, "sweep_accuracy", group, p.accuracy);
      emit(sweep.name.empty() ? "sweep" : sweep.name, "sweep_alignment", group, p.alignment);
    }
  }
  return out.str();
}

// Writes report.md, report.csv, scores.json or plot/metrics.csv under dir.
inline std::filesystem::path emit(const EvalReport& report, ReportFormat format,
                                  const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  fs::path path;
  std::string body;
  switch (format) {
    case ReportFormat::markdown:
      path = dir / "report.md";
      body = to_markdown(report);
      break;
    case ReportFormat::csv:
      path = dir / "report.csv";
      body = to_csv(report);
      break;
    case ReportFormat::json:
      path = dir / "scores.json";
      body = to_json(report).dump(2) + "\n";
      break;
    case ReportFormat::plotdata:
      fs::create_directories(dir / "plot");
      path = dir / "plot" / "metrics.csv";
      body = to_plotdata(report);
      break;
  }
  std::ofstream out(path, std::ios::binary);
  out << body;
  if (!out) throw Error("failed writing " + path.string());
  return path;
}

}  // namespace socsim
