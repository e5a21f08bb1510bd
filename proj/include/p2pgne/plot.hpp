#pragma once

// SVG chart of the average regret R_i(t)/t: a linear panel and a log-y panel,
// one polyline per prosumer. Non-positive samples are skipped on the log panel.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "p2pgne/io.hpp"

namespace p2pgne {

namespace detail {

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"};
  return colors[i % (sizeof colors / sizeof colors[0])];
}

struct Panel {
  double x0, y0, w, h;
};

inline void draw_panel(std::ostream& out, const AverageSeries& s, const Panel& p, bool logy, const std::string& title) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& series : s.avg) {
    for (double v : series) {
      if (logy && !(v > 0.0)) continue;
      const double y = logy ? std::log10(v) : v;
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) hi = lo + 1.0;
  const double tmin = s.t.empty() ? 0.0 : s.t.front();
  const double tmax = s.t.empty() ? 1.0 : std::max<double>(s.t.back(), tmin + 1.0);
  auto X = [&](double t) { return p.x0 + (t - tmin) / (tmax - tmin) * p.w; };
  auto Y = [&](double y) { return p.y0 + p.h - (y - lo) / (hi - lo) * p.h; };

  out << "<g>\n<rect x=\"" << p.x0 << "\" y=\"" << p.y0 << "\" width=\"" << p.w << "\" height=\"" << p.h
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  out << "<text x=\"" << p.x0 << "\" y=\"" << p.y0 - 8 << "\" font-size=\"13\">" << title << "</text>\n";
  out << "<text x=\"" << p.x0 - 6 << "\" y=\"" << p.y0 + 4 << "\" font-size=\"10\" text-anchor=\"end\">"
      << (logy ? "1e" + fmt(std::round(hi * 100) / 100) : fmt(hi)) << "</text>\n";
  out << "<text x=\"" << p.x0 - 6 << "\" y=\"" << p.y0 + p.h << "\" font-size=\"10\" text-anchor=\"end\">"
      << (logy ? "1e" + fmt(std::round(lo * 100) / 100) : fmt(lo)) << "</text>\n";
  out << "<text x=\"" << p.x0 + p.w << "\" y=\"" << p.y0 + p.h + 14
      << "\" font-size=\"10\" text-anchor=\"end\">t = " << tmax << "</text>\n";
  for (std::size_t i = 0; i < s.avg.size(); ++i) {
    std::string points;
    auto flush = [&] {
      if (!points.empty()) {
        out << "<polyline class=\"prosumer-" << i + 1 << "\" fill=\"none\" stroke=\"" << palette(i)
            << "\" stroke-width=\"1.2\" points=\"" << points << "\"/>\n";
      }
      points.clear();
    };
    for (std::size_t k = 0; k < s.t.size(); ++k) {
      const double v = s.avg[i][k];
      if (logy && !(v > 0.0)) {
        flush();
        continue;
      }
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", X(s.t[k]), Y(logy ? std::log10(v) : v));
      points += buf;
    }
    flush();
  }
  out << "</g>\n";
}

}  // namespace detail

inline void write_regret_svg(std::ostream& out, const AverageSeries& s) {
  const double width = 900, height = 380;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\">\n";
  detail::draw_panel(out, s, {60, 40, 360, 280}, false, "R_i(t)/t");
  detail::draw_panel(out, s, {510, 40, 360, 280}, true, "R_i(t)/t, log scale");
  for (std::size_t i = 0; i < s.avg.size(); ++i) {
    out << "<text x=\"" << 60 + 70 * i << "\" y=\"" << height - 12 << "\" font-size=\"11\" fill=\""
        << detail::palette(i) << "\">prosumer " << i + 1 << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace p2pgne
