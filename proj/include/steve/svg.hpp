#pragma once

// Minimal SVG emitters for the standard diagnostics: training loss
// curves, per-scenario metric bars, and the learned-prior heatmap over
// day type and hour of day.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "steve/errors.hpp"

namespace steve::svg {

struct Series {
  std::string label;
  std::vector<double> values;
};

namespace detail {

inline const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                 "#9467bd", "#8c564b", "#17becf"};

inline std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

}  // namespace detail

// Multi-series line chart over a shared integer x axis (epochs).
inline void write_line_chart(const std::string& path, const std::string& title,
                             const std::vector<Series>& series) {
  if (series.empty() || series[0].values.empty())
    throw ConfigError("write_line_chart: no data");
  const double w = 640, h = 400, ml = 60, mr = 140, mt = 40, mb = 40;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t n = 0;
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (hi <= lo) hi = lo + 1.0;
  auto sx = [&](double i) { return ml + (n > 1 ? i / double(n - 1) : 0.5) * (w - ml - mr); };
  auto sy = [&](double v) { return h - mb - (v - lo) / (hi - lo) * (h - mt - mb); };
  std::ofstream out(path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
      << "<text x='" << w / 2 << "' y='20' text-anchor='middle' font-size='14'>"
      << title << "</text>\n"
      << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='"
      << h - mb << "' stroke='black'/>\n"
      << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
      << "' stroke='black'/>\n"
      << "<text x='" << ml - 8 << "' y='" << sy(hi) + 4
      << "' text-anchor='end' font-size='10'>" << detail::fmt(hi) << "</text>\n"
      << "<text x='" << ml - 8 << "' y='" << sy(lo) + 4
      << "' text-anchor='end' font-size='10'>" << detail::fmt(lo) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = detail::kPalette[s % 7];
    out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < series[s].values.size(); ++i)
      out << sx(double(i)) << "," << sy(series[s].values[i]) << " ";
    out << "'/>\n<text x='" << w - mr + 10 << "' y='" << mt + 16 * s + 10
        << "' font-size='11' fill='" << color << "'>" << series[s].label << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw ConfigError("write_line_chart: write failed: " + path);
}

struct Bar {
  std::string label;
  double value = 0;
};

inline void write_bar_chart(const std::string& path, const std::string& title,
                            const std::vector<Bar>& bars) {
  if (bars.empty()) throw ConfigError("write_bar_chart: no data");
  const double w = 640, h = 400, ml = 60, mr = 20, mt = 40, mb = 90;
  double hi = 0;
  for (const auto& b : bars) hi = std::max(hi, b.value);
  if (hi <= 0) hi = 1.0;
  const double band = (w - ml - mr) / bars.size();
  std::ofstream out(path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
      << "<text x='" << w / 2 << "' y='20' text-anchor='middle' font-size='14'>"
      << title << "</text>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    double bh = bars[i].value / hi * (h - mt - mb);
    double x = ml + i * band + band * 0.15;
    out << "<rect x='" << x << "' y='" << h - mb - bh << "' width='" << band * 0.7
        << "' height='" << bh << "' fill='" << detail::kPalette[i % 7] << "'/>\n"
        << "<text x='" << ml + i * band + band / 2 << "' y='" << h - mb + 12
        << "' text-anchor='end' font-size='10' transform='rotate(-40 "
        << ml + i * band + band / 2 << " " << h - mb + 12 << ")'>" << bars[i].label
        << "</text>\n"
        << "<text x='" << ml + i * band + band / 2 << "' y='" << h - mb - bh - 4
        << "' text-anchor='middle' font-size='10'>" << detail::fmt(bars[i].value)
        << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw ConfigError("write_bar_chart: write failed: " + path);
}

// rows x cols matrix of values in [0, 1] rendered as a blue-red heatmap.
inline void write_heatmap(const std::string& path, const std::string& title,
                          const std::vector<std::string>& row_labels,
                          const std::vector<std::string>& col_labels,
                          const std::vector<std::vector<double>>& cells) {
  if (cells.empty() || cells[0].empty()) throw ConfigError("write_heatmap: no data");
  const std::size_t rows = cells.size(), cols = cells[0].size();
  const double cw = 22, ch = 40, ml = 80, mt = 50;
  const double w = ml + cols * cw + 20, h = mt + rows * ch + 40;
  std::ofstream out(path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
      << "<text x='" << w / 2 << "' y='20' text-anchor='middle' font-size='14'>"
      << title << "</text>\n";
  for (std::size_t r = 0; r < rows; ++r) {
    out << "<text x='" << ml - 6 << "' y='" << mt + r * ch + ch / 2 + 4
        << "' text-anchor='end' font-size='11'>" << row_labels[r] << "</text>\n";
    for (std::size_t c = 0; c < cols; ++c) {
      double v = std::clamp(cells[r][c], 0.0, 1.0);
      int red = static_cast<int>(std::lround(255 * v));
      int blue = 255 - red;
      out << "<rect x='" << ml + c * cw << "' y='" << mt + r * ch << "' width='" << cw
          << "' height='" << ch << "' fill='rgb(" << red << ",80," << blue
          << ")' stroke='white'/>\n";
    }
  }
  for (std::size_t c = 0; c < cols; ++c)
    out << "<text x='" << ml + c * cw + cw / 2 << "' y='" << mt + rows * ch + 14
        << "' text-anchor='middle' font-size='9'>" << col_labels[c] << "</text>\n";
  out << "</svg>\n";
  if (!out) throw ConfigError("write_heatmap: write failed: " + path);
}

}  // namespace steve::svg
