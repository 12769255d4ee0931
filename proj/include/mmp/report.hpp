/*
 * Copyright 2026 The MMP Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Evaluation report serialization (JSON, flat CSV) and text rendering.

#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "mmp/harness.hpp"

namespace mmp {

struct EvalReport {
  std::vector<std::string> modalities;
  std::vector<RunRecord> runs;
};

/// Rounds to 9 significant digits, the precision reports are written with.
inline double round9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::strtod(buf, nullptr);
}

inline constexpr std::string_view kReportFormat = "mmp-eval-report";
inline constexpr int kReportVersion = 1;

struct CellStats {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

inline CellStats stats_of(const std::vector<double>& xs) { return {mean_of(xs), stddev_of(xs), xs.size()}; }

/// Column of a comparison table: which training tag, evaluated in which mode.
using Column = std::pair<std::string, std::string>;

struct AccuracySummary {
  std::vector<std::string> scenarios;  // in first-seen order
  std::vector<std::size_t> num_masked;
  std::vector<Column> columns;
  std::map<std::pair<std::string, Column>, CellStats> cells;
  /// Per column: stats over seeds of each run's missing-scenario average.
  std::map<Column, CellStats> missing_average;
};

inline AccuracySummary summarize_accuracy(const EvalReport& report) {
  AccuracySummary s;
  std::map<std::pair<std::string, Column>, std::vector<double>> values;
  std::map<Column, std::vector<double>> missing;
  for (const auto& run : report.runs) {
    std::map<Column, std::pair<double, std::size_t>> run_missing;
    for (const auto& a : run.accuracy) {
      const Column col{run.tag, std::string(to_string(a.mode))};
      if (std::find(s.columns.begin(), s.columns.end(), col) == s.columns.end()) s.columns.push_back(col);
      if (std::find(s.scenarios.begin(), s.scenarios.end(), a.scenario) == s.scenarios.end()) {
        s.scenarios.push_back(a.scenario);
        s.num_masked.push_back(a.num_masked);
      }
      values[{a.scenario, col}].push_back(a.accuracy);
      if (a.num_masked > 0) {
        run_missing[col].first += a.accuracy;
        ++run_missing[col].second;
      }
    }
    for (const auto& [col, acc] : run_missing) missing[col].push_back(acc.first / static_cast<double>(acc.second));
  }
  for (const auto& [key, xs] : values) s.cells[key] = stats_of(xs);
  for (const auto& [col, xs] : missing) s.missing_average[col] = stats_of(xs);
  return s;
}

struct AlignmentSummaryCell {
  CellStats smooth_l1, mse, cosine;
};

/// Alignment diagnostics per (scenario, modality, column), seeds aggregated.
inline std::map<std::tuple<std::string, std::string, Column>, AlignmentSummaryCell> summarize_alignment(
    const EvalReport& report) {
  std::map<std::tuple<std::string, std::string, Column>, std::array<std::vector<double>, 3>> values;
  for (const auto& run : report.runs) {
    for (const auto& d : run.alignment) {
      auto& v = values[{d.scenario, d.modality, Column{run.tag, std::string(to_string(d.mode))}}];
      v[0].push_back(d.smooth_l1);
      v[1].push_back(d.mse);
      v[2].push_back(d.cosine);
    }
  }
  std::map<std::tuple<std::string, std::string, Column>, AlignmentSummaryCell> out;
  for (const auto& [key, v] : values) out[key] = {stats_of(v[0]), stats_of(v[1]), stats_of(v[2])};
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json to_json(const RunRecord& r) {
  nlohmann::ordered_json j;
  j["tag"] = r.tag;
  j["seed"] = r.seed;
  auto& acc = j["accuracy"] = nlohmann::ordered_json::array();
  for (const auto& a : r.accuracy) {
    acc.push_back({{"scenario", a.scenario},
                   {"mode", std::string(to_string(a.mode))},
                   {"num_masked", a.num_masked},
                   {"accuracy", round9(a.accuracy)}});
  }
  auto& al = j["alignment"] = nlohmann::ordered_json::array();
  for (const auto& d : r.alignment) {
    al.push_back({{"scenario", d.scenario},
                  {"modality", d.modality},
                  {"mode", std::string(to_string(d.mode))},
                  {"num_masked", d.num_masked},
                  {"smooth_l1", round9(d.smooth_l1)},
                  {"mse", round9(d.mse)},
                  {"cosine", round9(d.cosine)}});
  }
  return j;
}

inline nlohmann::ordered_json to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["format"] = kReportFormat;
  j["version"] = kReportVersion;
  j["modalities"] = report.modalities;
  auto& runs = j["runs"] = nlohmann::ordered_json::array();
  for (const auto& r : report.runs) runs.push_back(to_json(r));
  // Derived view for readers; ignored when parsing.
  const auto s = summarize_accuracy(report);
  auto& summary = j["summary"] = nlohmann::ordered_json::array();
  for (const auto& col : s.columns) {
    nlohmann::ordered_json c{{"tag", col.first}, {"mode", col.second}};
    auto& sc = c["scenarios"] = nlohmann::ordered_json::array();
    for (const auto& name : s.scenarios) {
      auto it = s.cells.find({name, col});
      if (it == s.cells.end()) continue;
      sc.push_back({{"scenario", name}, {"mean", round9(it->second.mean)}, {"std", round9(it->second.std)},
                    {"n", it->second.n}});
    }
    if (auto it = s.missing_average.find(col); it != s.missing_average.end()) {
      c["missing_average"] = {{"mean", round9(it->second.mean)}, {"std", round9(it->second.std)}, {"n", it->second.n}};
    }
    summary.push_back(std::move(c));
  }
  return j;
}

inline std::string to_json_string(const EvalReport& report) { return to_json(report).dump(2) + "\n"; }

/// Throws ValidationError naming what is wrong with the document.
inline EvalReport report_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kReportFormat) throw ValidationError("not an evaluation report");
    if (j.at("version").get<int>() != kReportVersion) throw ValidationError("unsupported report version");
    EvalReport report;
    report.modalities = j.at("modalities").get<std::vector<std::string>>();
    for (const auto& rj : j.at("runs")) {
      RunRecord r;
      r.tag = rj.at("tag").get<std::string>();
      r.seed = rj.at("seed").get<std::uint64_t>();
      for (const auto& a : rj.at("accuracy")) {
        ScenarioAccuracy s;
        s.scenario = a.at("scenario").get<std::string>();
        s.mode = parse_substitution_mode(a.at("mode").get<std::string>());
        s.num_masked = a.at("num_masked").get<std::size_t>();
        s.accuracy = a.at("accuracy").get<double>();
        if (!(s.accuracy >= 0.0 && s.accuracy <= 1.0)) throw ValidationError("accuracy outside [0,1]");
        r.accuracy.push_back(std::move(s));
      }
      for (const auto& a : rj.at("alignment")) {
        AlignmentDiagnostic d;
        d.scenario = a.at("scenario").get<std::string>();
        d.modality = a.at("modality").get<std::string>();
        d.mode = parse_substitution_mode(a.at("mode").get<std::string>());
        d.num_masked = a.at("num_masked").get<std::size_t>();
        d.smooth_l1 = a.at("smooth_l1").get<double>();
        d.mse = a.at("mse").get<double>();
        d.cosine = a.at("cosine").get<double>();
        if (!(d.cosine >= -1.0 && d.cosine <= 1.0)) throw ValidationError("cosine outside [-1,1]");
        r.alignment.push_back(std::move(d));
      }
      report.runs.push_back(std::move(r));
    }
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
}

inline EvalReport parse_report(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("report is not valid JSON: ") + e.what());
  }
  return report_from_json(j);
}

inline EvalReport load_report(const std::string& path) {
  const auto bytes = io::read_file(path);
  try {
    return parse_report(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

/// Concatenates runs; modality names must agree.
inline EvalReport merge_reports(const std::vector<EvalReport>& reports) {
  EvalReport out;
  for (const auto& r : reports) {
    if (out.modalities.empty()) out.modalities = r.modalities;
    else if (r.modalities != out.modalities) throw ValidationError("reports disagree on modality names");
    out.runs.insert(out.runs.end(), r.runs.begin(), r.runs.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV and text

inline std::string to_csv(const EvalReport& report) {
  std::string out = "tag,scenario,mode,seed,metric,value\n";
  char buf[64];
  auto row = [&](const std::string& tag, const std::string& scenario, std::string_view mode, std::uint64_t seed,
                 const std::string& metric, double v) {
    std::snprintf(buf, sizeof buf, "%.9g", v);
    out += tag + "," + scenario + "," + std::string(mode) + "," + std::to_string(seed) + "," + metric + "," + buf + "\n";
  };
  for (const auto& r : report.runs) {
    for (const auto& a : r.accuracy) row(r.tag, a.scenario, to_string(a.mode), r.seed, "accuracy", a.accuracy);
    for (const auto& d : r.alignment) {
      row(r.tag, d.scenario, to_string(d.mode), r.seed, "smooth_l1:" + d.modality, d.smooth_l1);
      row(r.tag, d.scenario, to_string(d.mode), r.seed, "mse:" + d.modality, d.mse);
      row(r.tag, d.scenario, to_string(d.mode), r.seed, "cosine:" + d.modality, d.cosine);
    }
  }
  return out;
}

namespace detail {

inline std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

inline std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths(header.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c) widths[c] = header[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) widths[c] = std::max(widths[c], r[c].size());
  auto line = [&](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t c = 0; c < cells.size(); ++c) s += (c ? " | " : "") + pad(cells[c], widths[c]);
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s + "\n";
  };
  std::string out = line(header);
  std::string rule;
  for (std::size_t c = 0; c < widths.size(); ++c) rule += (c ? "-+-" : "") + std::string(widths[c], '-');
  out += rule + "\n";
  for (const auto& r : rows) out += line(r);
  return out;
}

inline std::string pct(const CellStats& s) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f±%.2f", 100.0 * s.mean, 100.0 * s.std);
  return buf;
}

}  // namespace detail

/// Accuracy table (rows = scenarios, columns = tag/mode) followed by the
/// missing-scenario average and an alignment table.
inline std::string render_report(const EvalReport& report) {
  const auto s = summarize_accuracy(report);
  std::vector<std::string> header{"scenario"};
  for (const auto& [tag, mode] : s.columns) header.push_back(tag + "/" + mode);
  std::vector<std::vector<std::string>> rows;
  for (const auto& name : s.scenarios) {
    std::vector<std::string> row{name};
    for (const auto& col : s.columns) {
      auto it = s.cells.find({name, col});
      row.push_back(it == s.cells.end() ? "-" : detail::pct(it->second));
    }
    rows.push_back(std::move(row));
  }
  std::string out = "accuracy (%, mean±std over seeds)\n" + detail::render_table(header, rows);
  out += "missing-modality average:";
  for (const auto& col : s.columns) {
    auto it = s.missing_average.find(col);
    out += "  " + col.first + "/" + col.second + " " + (it == s.missing_average.end() ? "-" : detail::pct(it->second));
  }
  out += "\n";

  const auto al = summarize_alignment(report);
  if (!al.empty()) {
    std::vector<std::string> ah{"scenario", "modality"};
    for (const auto& [tag, mode] : s.columns) ah.push_back(tag + "/" + mode + " cos | mse");
    std::vector<std::vector<std::string>> arows;
    for (const auto& name : s.scenarios) {
      for (const auto& mod : report.modalities) {
        std::vector<std::string> row{name, mod};
        bool any = false;
        for (const auto& col : s.columns) {
          auto it = al.find({name, mod, col});
          if (it == al.end()) {
            row.push_back("-");
            continue;
          }
          any = true;
          char buf[64];
          std::snprintf(buf, sizeof buf, "%.3f | %.4f", it->second.cosine.mean, it->second.mse.mean);
          row.push_back(buf);
        }
        if (any) arows.push_back(std::move(row));
      }
    }
    out += "\nalignment (logit cosine real vs substituted | token MSE)\n" + detail::render_table(ah, arows);
  }
  return out;
}

}  // namespace mmp
