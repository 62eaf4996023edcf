/*
 * Copyright 2026 The safemarl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


// Metrics CSV: a schema line "# safemarl-metrics v1", a header row, then one
// row per evaluation. Wall-clock time is kept out of this file (see
// write_timing_csv) so identical runs produce identical bytes.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace safemarl::harness {

inline constexpr const char* kMetricsSchema = "# safemarl-metrics v1";

struct MetricsRow {
  std::uint64_t step = 0;
  std::size_t episodes = 0;
  double leader_return = 0.0;  // undiscounted, mean over episodes
  double follower_return = 0.0;
  double leader_discounted_return = 0.0;
  double follower_discounted_return = 0.0;
  double leader_cost = 0.0;  // undiscounted episodic cost
  double follower_cost = 0.0;
  double collision_rate = 0.0;  // episodes with any collision
  double safety_rate = 1.0;     // episodes with zero collisions
  double leader_first_rate = 0.0;
  double follower_first_rate = 0.0;
  double unfinished_rate = 0.0;  // nobody crossed the finish line
  double lambda1 = std::numeric_limits<double>::quiet_NaN();
  double lambda2 = std::numeric_limits<double>::quiet_NaN();
  double loss_q1 = std::numeric_limits<double>::quiet_NaN();
  double loss_q2 = std::numeric_limits<double>::quiet_NaN();
  double loss_g1 = std::numeric_limits<double>::quiet_NaN();
  double loss_g2 = std::numeric_limits<double>::quiet_NaN();
  double actor1_objective = std::numeric_limits<double>::quiet_NaN();
  double actor2_objective = std::numeric_limits<double>::quiet_NaN();
  double exploration = std::numeric_limits<double>::quiet_NaN();  // epsilon or noise scale
  double wall_clock = 0.0;  // seconds since training start; not written to the metrics CSV
};

namespace detail {

struct Column {
  const char* name;
  double MetricsRow::*field;
};

inline constexpr std::array<Column, 20> kColumns = {{
    {"leader_return", &MetricsRow::leader_return},
    {"follower_return", &MetricsRow::follower_return},
    {"leader_discounted_return", &MetricsRow::leader_discounted_return},
    {"follower_discounted_return", &MetricsRow::follower_discounted_return},
    {"leader_cost", &MetricsRow::leader_cost},
    {"follower_cost", &MetricsRow::follower_cost},
    {"collision_rate", &MetricsRow::collision_rate},
    {"safety_rate", &MetricsRow::safety_rate},
    {"leader_first_rate", &MetricsRow::leader_first_rate},
    {"follower_first_rate", &MetricsRow::follower_first_rate},
    {"unfinished_rate", &MetricsRow::unfinished_rate},
    {"lambda1", &MetricsRow::lambda1},
    {"lambda2", &MetricsRow::lambda2},
    {"loss_q1", &MetricsRow::loss_q1},
    {"loss_q2", &MetricsRow::loss_q2},
    {"loss_g1", &MetricsRow::loss_g1},
    {"loss_g2", &MetricsRow::loss_g2},
    {"actor1_objective", &MetricsRow::actor1_objective},
    {"actor2_objective", &MetricsRow::actor2_objective},
    {"exploration", &MetricsRow::exploration},
}};

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace detail

inline std::string metrics_header() {
  std::string h = "step,episodes";
  for (const auto& c : detail::kColumns) h += std::string(",") + c.name;
  return h;
}

inline void write_metrics_preamble(std::ostream& out) { out << kMetricsSchema << "\n" << metrics_header() << "\n"; }

inline void write_metrics_row(std::ostream& out, const MetricsRow& row) {
  out << row.step << "," << row.episodes;
  for (const auto& c : detail::kColumns) out << "," << detail::format_double(row.*(c.field));
  out << "\n";
}

inline void write_timing_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << "step,wall_clock_s\n";
  for (const auto& r : rows) out << r.step << "," << detail::format_double(r.wall_clock) << "\n";
}

struct ParsedMetrics {
  std::vector<MetricsRow> rows;
  std::size_t malformed = 0;
  std::vector<std::string> warnings;
};

/// Reads a metrics CSV. Lines starting with '#' are comments; rows with the
/// wrong field count or unparsable numbers are skipped and reported.
inline ParsedMetrics parse_metrics(std::istream& in) {
  ParsedMetrics out;
  std::string line;
  bool header_seen = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != metrics_header()) {
        out.warnings.push_back("line " + std::to_string(line_no) + ": unexpected header");
        return out;
      }
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    auto bad = [&] {
      ++out.malformed;
      out.warnings.push_back("line " + std::to_string(line_no) + ": malformed row skipped");
    };
    if (fields.size() != detail::kColumns.size() + 2) {
      bad();
      continue;
    }
    MetricsRow row;
    bool ok = true;
    auto parse = [&](const std::string& s) {
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size()) ok = false;
      return v;
    };
    row.step = static_cast<std::uint64_t>(parse(fields[0]));
    row.episodes = static_cast<std::size_t>(parse(fields[1]));
    for (std::size_t k = 0; k < detail::kColumns.size(); ++k) row.*(detail::kColumns[k].field) = parse(fields[k + 2]);
    if (!ok) {
      bad();
      continue;
    }
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace safemarl::harness
