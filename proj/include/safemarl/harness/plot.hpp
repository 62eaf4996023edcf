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


// SVG line charts from metrics CSV files. One chart per quantity, one series
// per input file, legend in the top-right corner.

#pragma once

#include "safemarl/harness/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace safemarl::harness {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline constexpr std::array<const char*, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                        "#9467bd", "#8c564b", "#e377c2", "#17becf"};

}  // namespace detail

/// Renders one chart. Empty input gives empty axes over [0, 1] x [0, 1].
inline std::string render_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                              const std::vector<Series>& series) {
  constexpr double width = 720.0;
  constexpr double height = 440.0;
  constexpr double left = 70.0;
  constexpr double right = 20.0;
  constexpr double top = 40.0;
  constexpr double bottom = 50.0;

  double x0 = std::numeric_limits<double>::infinity();
  double x1 = -x0;
  double y0 = x0;
  double y1 = -x0;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (!std::isfinite(x0)) {
    x0 = 0.0;
    x1 = 1.0;
    y0 = 0.0;
    y1 = 1.0;
  }
  if (x1 == x0) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (y1 == y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pw = width - left - right;
  const double ph = height - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  using detail::coord;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << detail::xml_escape(title)
      << "</text>\n";
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = x0 + (x1 - x0) * k / 4.0;
    const double fy = y0 + (y1 - y0) * k / 4.0;
    svg << "<line x1=\"" << coord(px(fx)) << "\" y1=\"" << top << "\" x2=\"" << coord(px(fx)) << "\" y2=\""
        << top + ph << "\" stroke=\"#ddd\"/>\n";
    svg << "<line x1=\"" << left << "\" y1=\"" << coord(py(fy)) << "\" x2=\"" << left + pw << "\" y2=\""
        << coord(py(fy)) << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << coord(px(fx)) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">"
        << detail::num(fx) << "</text>\n";
    svg << "<text x=\"" << left - 6 << "\" y=\"" << coord(py(fy) + 4) << "\" text-anchor=\"end\">" << detail::num(fy)
        << "</text>\n";
  }
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\">"
      << detail::xml_escape(x_label) << "</text>\n";
  svg << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << detail::xml_escape(y_label) << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = detail::kPalette[i % detail::kPalette.size()];
    svg << "<g class=\"series\">\n";
    if (s.points.size() > 1) {
      svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (const auto& [x, y] : s.points) svg << coord(px(x)) << "," << coord(py(y)) << " ";
      svg << "\"/>\n";
    }
    for (const auto& [x, y] : s.points) {
      svg << "<circle cx=\"" << coord(px(x)) << "\" cy=\"" << coord(py(y)) << "\" r=\"2.5\" fill=\"" << color
          << "\"/>\n";
    }
    svg << "</g>\n";
  }
  if (!series.empty()) {
    const double lx = left + pw - 10.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
      const double ly = top + 16.0 + 16.0 * static_cast<double>(i);
      const char* color = detail::kPalette[i % detail::kPalette.size()];
      svg << "<g class=\"legend-entry\"><line x1=\"" << lx - 150 << "\" y1=\"" << ly - 4 << "\" x2=\"" << lx - 132
          << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/><text x=\"" << lx - 128
          << "\" y=\"" << ly << "\">" << detail::xml_escape(series[i].label) << "</text></g>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

struct PlotOutcome {
  std::vector<std::filesystem::path> written;
  std::vector<std::string> warnings;
};

class PlotInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes leader_reward, follower_reward, total_reward, collision_rate and
/// lambda charts to `out_dir`. Throws PlotInputError when a file cannot be
/// read or every data row in it is malformed.
inline PlotOutcome emit_plots(const std::vector<std::filesystem::path>& files, const std::filesystem::path& out_dir) {
  if (files.empty()) throw PlotInputError("no metrics files given");
  PlotOutcome outcome;
  std::vector<std::pair<std::string, std::vector<MetricsRow>>> runs;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw PlotInputError("cannot read " + f.string());
    ParsedMetrics parsed = parse_metrics(in);
    for (const auto& w : parsed.warnings) outcome.warnings.push_back(f.string() + ": " + w);
    if (parsed.rows.empty() && (parsed.malformed > 0 || !parsed.warnings.empty())) {
      throw PlotInputError(f.string() + ": no parsable metrics rows");
    }
    std::string label = f.stem().string();
    if (label == "metrics" && f.has_parent_path() && !f.parent_path().filename().empty()) {
      label = f.parent_path().filename().string();
    }
    runs.emplace_back(label, std::move(parsed.rows));
  }

  using Pick = std::function<double(const MetricsRow&)>;
  auto series_of = [&](const Pick& pick, const std::string& suffix) {
    std::vector<Series> out;
    for (const auto& [label, rows] : runs) {
      Series s{label + suffix, {}};
      for (const auto& r : rows) {
        const double v = pick(r);
        if (std::isfinite(v)) s.points.emplace_back(static_cast<double>(r.step), v);
      }
      out.push_back(std::move(s));
    }
    return out;
  };

  std::filesystem::create_directories(out_dir);
  auto write = [&](const std::string& name, const std::string& title, const std::string& y,
                   const std::vector<Series>& s) {
    const auto path = out_dir / name;
    std::ofstream out(path, std::ios::trunc);
    out << render_svg(title, "environment steps", y, s);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    outcome.written.push_back(path);
  };

  write("leader_reward.svg", "Leader episodic reward", "J1",
        series_of([](const MetricsRow& r) { return r.leader_return; }, ""));
  write("follower_reward.svg", "Follower episodic reward", "J2",
        series_of([](const MetricsRow& r) { return r.follower_return; }, ""));
  write("total_reward.svg", "Total episodic reward", "J1 + J2",
        series_of([](const MetricsRow& r) { return r.leader_return + r.follower_return; }, ""));
  write("collision_rate.svg", "Evaluation collision rate", "collision rate",
        series_of([](const MetricsRow& r) { return r.collision_rate; }, ""));
  std::vector<Series> lambdas = series_of([](const MetricsRow& r) { return r.lambda1; }, " lambda1");
  std::vector<Series> l2 = series_of([](const MetricsRow& r) { return r.lambda2; }, " lambda2");
  lambdas.insert(lambdas.end(), l2.begin(), l2.end());
  std::erase_if(lambdas, [](const Series& s) { return s.points.empty(); });
  write("lambda.svg", "Lagrange multipliers", "lambda", lambdas);
  return outcome;
}

}  // namespace safemarl::harness
