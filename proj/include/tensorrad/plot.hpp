/*
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

// Static SVG line plots of ROC and precision-recall curves. Coordinates are
// printed with fixed precision so the same curves always give the same bytes.

#include <cstdio>
#include <string>
#include <vector>

#include "tensorrad/ml/metrics.hpp"

namespace tensorrad {

struct CurveSeries {
  std::string label;
  std::vector<ml::CurvePoint> points;
};

namespace detail {

inline std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

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

inline const char* series_colour(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return palette[i % 8];
}

}  // namespace detail

/// Unit-square line plot with axes, ticks at 0.2 steps, an optional diagonal and a legend.
inline std::string curves_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                              const std::vector<CurveSeries>& series, bool diagonal) {
  using detail::fixed;
  constexpr double W = 720, H = 420, L = 60, T = 40, S = 320;  // plot square of side S at (L, T)
  auto px = [&](double x) { return fixed(L + S * x); };
  auto py = [&](double y) { return fixed(T + S * (1.0 - y)); };
  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(W, 0) + "\" height=\"" + fixed(H, 0) +
         "\" viewBox=\"0 0 " + fixed(W, 0) + " " + fixed(H, 0) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + fixed(L + S / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" +
         detail::xml_escape(title) + "</text>\n";
  out += "<rect x=\"" + px(0) + "\" y=\"" + py(1) + "\" width=\"" + fixed(S) + "\" height=\"" + fixed(S) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    out += "<text x=\"" + px(v) + "\" y=\"" + fixed(T + S + 16) + "\" text-anchor=\"middle\">" + fixed(v, 1) + "</text>\n";
    out += "<text x=\"" + fixed(L - 6) + "\" y=\"" + fixed(T + S * (1.0 - v) + 4) + "\" text-anchor=\"end\">" +
           fixed(v, 1) + "</text>\n";
  }
  out += "<text x=\"" + fixed(L + S / 2) + "\" y=\"" + fixed(T + S + 34) + "\" text-anchor=\"middle\">" +
         detail::xml_escape(x_label) + "</text>\n";
  out += "<text x=\"16\" y=\"" + fixed(T + S / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         fixed(T + S / 2) + ")\">" + detail::xml_escape(y_label) + "</text>\n";
  if (diagonal)
    out += "<line x1=\"" + px(0) + "\" y1=\"" + py(0) + "\" x2=\"" + px(1) + "\" y2=\"" + py(1) +
           "\" stroke=\"#999999\" stroke-dasharray=\"4 4\"/>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    std::string pts;
    for (const auto& p : series[i].points) pts += (pts.empty() ? "" : " ") + px(p.x) + "," + py(p.y);
    out += "<polyline fill=\"none\" stroke=\"" + std::string(detail::series_colour(i)) +
           "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    const double ly = T + 16 + 16 * static_cast<double>(i);
    out += "<line x1=\"" + fixed(L + S + 10) + "\" y1=\"" + fixed(ly - 4) + "\" x2=\"" + fixed(L + S + 24) + "\" y2=\"" +
           fixed(ly - 4) + "\" stroke=\"" + detail::series_colour(i) + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + fixed(L + S + 28) + "\" y=\"" + fixed(ly) + "\">" + detail::xml_escape(series[i].label) +
           "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

inline std::string roc_svg(const std::vector<CurveSeries>& series) {
  return curves_svg("ROC", "False positive rate", "True positive rate", series, true);
}

/// PR curves start at recall 0 with the first point's precision.
inline std::string pr_svg(std::vector<CurveSeries> series) {
  for (auto& s : series)
    if (!s.points.empty()) s.points.insert(s.points.begin(), {s.points.front().threshold, 0.0, s.points.front().y});
  return curves_svg("Precision-recall", "Recall", "Precision", series, false);
}

}  // namespace tensorrad
