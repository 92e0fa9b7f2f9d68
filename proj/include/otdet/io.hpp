/*
 * Copyright 2026 The otdet Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Text outputs: scores.csv, metrics.json and density.csv.

#ifndef OTDET_IO_HPP_
#define OTDET_IO_HPP_

#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "otdet/error.hpp"
#include "otdet/featstore.hpp"
#include "otdet/metrics.hpp"
#include "otdet/scoring.hpp"

namespace otdet {

inline constexpr std::string_view kScoresHeader =
    "sample_id,s_sem,s_dist,s_ot,s_mcm,predicted_label";
inline constexpr std::string_view kDensityHeader = "bin_left,bin_right,id_count,ood_count";

// 17 significant digits: enough to round-trip any double.
inline std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string ScoresToCsv(std::span<const ScoreRecord> records) {
  std::string out(kScoresHeader);
  out += '\n';
  for (const auto& r : records) {
    if (r.sample_id.find_first_of(",\n\r\"") != std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument,
                  "sample id '" + r.sample_id + "' cannot be written to CSV");
    }
    out += r.sample_id;
    out += ',' + FormatDouble(r.s_sem);
    out += ',' + FormatDouble(r.s_dist);
    out += ',' + FormatDouble(r.s_ot);
    out += ',';
    if (r.s_mcm) out += FormatDouble(*r.s_mcm);
    out += ',' + std::to_string(r.predicted_label);
    out += '\n';
  }
  return out;
}

inline void WriteScoresCsv(std::span<const ScoreRecord> records,
                           const std::filesystem::path& path) {
  detail::DumpFile(path, ScoresToCsv(records));
}

namespace detail {

inline std::vector<std::string> SplitCsvLine(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    fields.emplace_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

inline double ParseDouble(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, where + ": cannot parse '" + s + "'");
  }
}

}  // namespace detail

inline std::vector<ScoreRecord> ScoresFromCsv(std::string_view text,
                                              const std::string& source = "<csv>") {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::kInvalidArgument, source + ": empty file");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kScoresHeader) {
    throw Error(ErrorCode::kInvalidArgument, source + ": unexpected header '" + line + "'");
  }
  std::vector<ScoreRecord> records;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::SplitCsvLine(line);
    const std::string where = source + ":" + std::to_string(lineno);
    if (f.size() != 6) {
      throw Error(ErrorCode::kInvalidArgument, where + ": expected 6 fields");
    }
    ScoreRecord r;
    r.sample_id = f[0];
    r.s_sem = detail::ParseDouble(f[1], where);
    r.s_dist = detail::ParseDouble(f[2], where);
    r.s_ot = detail::ParseDouble(f[3], where);
    if (!f[4].empty()) r.s_mcm = detail::ParseDouble(f[4], where);
    r.predicted_label = static_cast<std::size_t>(detail::ParseDouble(f[5], where));
    records.push_back(std::move(r));
  }
  return records;
}

inline std::vector<ScoreRecord> ReadScoresCsv(const std::filesystem::path& path) {
  const auto bytes = detail::SlurpFile(path);
  return ScoresFromCsv({bytes.data(), bytes.size()}, path.string());
}

enum class ScoreColumn { kOt, kSem, kDist, kMcm };

inline ScoreColumn ParseScoreColumn(std::string_view s) {
  if (s == "s_ot") return ScoreColumn::kOt;
  if (s == "s_sem") return ScoreColumn::kSem;
  if (s == "s_dist") return ScoreColumn::kDist;
  if (s == "s_mcm") return ScoreColumn::kMcm;
  throw Error(ErrorCode::kInvalidArgument, "unknown score column '" + std::string(s) + "'");
}

inline std::vector<double> ExtractColumn(std::span<const ScoreRecord> records,
                                         ScoreColumn column) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    switch (column) {
      case ScoreColumn::kOt: out.push_back(r.s_ot); break;
      case ScoreColumn::kSem: out.push_back(r.s_sem); break;
      case ScoreColumn::kDist: out.push_back(r.s_dist); break;
      case ScoreColumn::kMcm:
        if (!r.s_mcm) {
          throw Error(ErrorCode::kInvalidArgument,
                      "column s_mcm is blank for sample '" + r.sample_id + "'");
        }
        out.push_back(*r.s_mcm);
        break;
    }
  }
  return out;
}

inline std::string MetricsToJson(const DetectionReport& r) {
  nlohmann::ordered_json j;
  j["fpr95"] = r.fpr95;
  j["auroc"] = r.auroc;
  j["threshold"] = r.threshold;
  j["n_id"] = r.n_id;
  j["n_ood"] = r.n_ood;
  return j.dump(2) + "\n";
}

inline DetectionReport MetricsFromJson(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    return {j.at("fpr95").get<double>(), j.at("auroc").get<double>(),
            j.at("threshold").get<double>(), j.at("n_id").get<std::size_t>(),
            j.at("n_ood").get<std::size_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("metrics json: ") + e.what());
  }
}

inline std::string DensityToCsv(const DensityExport& d) {
  std::string out(kDensityHeader);
  out += '\n';
  for (std::size_t b = 0; b < d.id_counts.size(); ++b) {
    out += FormatDouble(d.bin_edges[b]) + ',' + FormatDouble(d.bin_edges[b + 1]) + ',' +
           std::to_string(d.id_counts[b]) + ',' + std::to_string(d.ood_counts[b]) + '\n';
  }
  return out;
}

}  // namespace otdet

#endif  // OTDET_IO_HPP_
