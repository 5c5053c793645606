#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "smoothgcn/errors.hpp"
#include "smoothgcn/matrix.hpp"

namespace smoothgcn::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool markers = false;
};

struct Panel {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

namespace detail {

// fixed precision keeps the output byte-stable across platforms
inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
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

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!(lo <= hi)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  }
};

inline void axes(std::ostringstream& o, double x0, double y0, double w, double h, const Range& xr,
                 const Range& yr, const Panel& p) {
  o << "<rect x=\"" << num(x0) << "\" y=\"" << num(y0) << "\" width=\"" << num(w)
    << "\" height=\"" << num(h) << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = x0 + w * k / 4.0, fy = y0 + h - h * k / 4.0;
    o << "<text x=\"" << num(fx) << "\" y=\"" << num(y0 + h + 14) << "\" font-size=\"10\" "
      << "text-anchor=\"middle\">" << num(xr.lo + (xr.hi - xr.lo) * k / 4.0) << "</text>\n";
    o << "<text x=\"" << num(x0 - 4) << "\" y=\"" << num(fy + 3) << "\" font-size=\"10\" "
      << "text-anchor=\"end\">" << num(yr.lo + (yr.hi - yr.lo) * k / 4.0) << "</text>\n";
  }
  o << "<text x=\"" << num(x0 + w / 2) << "\" y=\"" << num(y0 - 8)
    << "\" font-size=\"12\" text-anchor=\"middle\">" << escape(p.title) << "</text>\n";
  o << "<text x=\"" << num(x0 + w / 2) << "\" y=\"" << num(y0 + h + 30)
    << "\" font-size=\"11\" text-anchor=\"middle\">" << escape(p.x_label) << "</text>\n";
  o << "<text x=\"" << num(x0 - 40) << "\" y=\"" << num(y0 + h / 2) << "\" font-size=\"11\" "
    << "text-anchor=\"middle\" transform=\"rotate(-90 " << num(x0 - 40) << ' ' << num(y0 + h / 2)
    << ")\">" << escape(p.y_label) << "</text>\n";
}

}  // namespace detail

/// Line plots, one panel per entry, laid out left to right.
inline std::string line_panels(const std::vector<Panel>& panels) {
  if (panels.empty()) throw InputError("svg::line_panels: no panels");
  const double pw = 320, ph = 220, margin = 60;
  const double width = panels.size() * (pw + margin) + margin, height = ph + 2 * margin + 20;
  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::num(width) << "\" height=\""
    << detail::num(height) << "\" viewBox=\"0 0 " << detail::num(width) << ' '
    << detail::num(height) << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t k = 0; k < panels.size(); ++k) {
    const Panel& p = panels[k];
    detail::Range xr, yr;
    for (const auto& s : p.series) {
      if (s.x.size() != s.y.size()) throw ShapeError("svg::line_panels: x and y lengths differ");
      for (double v : s.x) xr.add(v);
      for (double v : s.y) yr.add(v);
    }
    xr.pad();
    yr.pad();
    const double x0 = margin + k * (pw + margin), y0 = margin;
    detail::axes(o, x0, y0, pw, ph, xr, yr, p);
    const auto px = [&](double v) { return x0 + (v - xr.lo) / (xr.hi - xr.lo) * pw; };
    const auto py = [&](double v) { return y0 + ph - (v - yr.lo) / (yr.hi - yr.lo) * ph; };
    double legend_y = y0 + 12;
    for (const auto& s : p.series) {
      o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.2\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        if (std::isfinite(s.x[i]) && std::isfinite(s.y[i]))
          o << detail::num(px(s.x[i])) << ',' << detail::num(py(s.y[i])) << ' ';
      o << "\"/>\n";
      if (s.markers)
        for (std::size_t i = 0; i < s.x.size(); ++i)
          o << "<circle cx=\"" << detail::num(px(s.x[i])) << "\" cy=\"" << detail::num(py(s.y[i]))
            << "\" r=\"1.5\" fill=\"" << s.color << "\"/>\n";
      if (!s.label.empty()) {
        o << "<text x=\"" << detail::num(x0 + pw - 6) << "\" y=\"" << detail::num(legend_y)
          << "\" font-size=\"10\" text-anchor=\"end\" fill=\"" << s.color << "\">"
          << detail::escape(s.label) << "</text>\n";
        legend_y += 12;
      }
    }
  }
  o << "</svg>\n";
  return o.str();
}

/// Heat map of `values` (rows top to bottom) on a white-to-blue scale over [lo, hi].
inline std::string heatmap(const Matrix& values, const std::string& title, const std::string& x_label,
                           const std::string& y_label, double lo = 0.0, double hi = 1.0) {
  if (values.empty()) throw InputError("svg::heatmap: empty matrix");
  const double cell = std::clamp(400.0 / static_cast<double>(std::max(values.rows(), values.cols())), 4.0, 24.0);
  const double margin = 60, w = cell * values.cols(), h = cell * values.rows();
  const double width = w + 2 * margin + 60, height = h + 2 * margin;
  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::num(width) << "\" height=\""
    << detail::num(height) << "\" viewBox=\"0 0 " << detail::num(width) << ' '
    << detail::num(height) << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const auto color = [&](double v) {
    double t = hi > lo ? (v - lo) / (hi - lo) : 0.0;
    t = std::isfinite(t) ? std::clamp(t, 0.0, 1.0) : 0.0;
    const int r = static_cast<int>(std::lround(255 - 225 * t));
    const int g = static_cast<int>(std::lround(255 - 175 * t));
    const int b = static_cast<int>(std::lround(255 - 75 * t));
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return std::string(buf);
  };
  for (std::size_t r = 0; r < values.rows(); ++r)
    for (std::size_t c = 0; c < values.cols(); ++c)
      o << "<rect x=\"" << detail::num(margin + c * cell) << "\" y=\"" << detail::num(margin + r * cell)
        << "\" width=\"" << detail::num(cell) << "\" height=\"" << detail::num(cell) << "\" fill=\""
        << color(values(r, c)) << "\"/>\n";
  o << "<text x=\"" << detail::num(margin + w / 2) << "\" y=\"" << detail::num(margin - 10)
    << "\" font-size=\"12\" text-anchor=\"middle\">" << detail::escape(title) << "</text>\n";
  o << "<text x=\"" << detail::num(margin + w / 2) << "\" y=\"" << detail::num(margin + h + 20)
    << "\" font-size=\"11\" text-anchor=\"middle\">" << detail::escape(x_label) << "</text>\n";
  o << "<text x=\"" << detail::num(margin - 10) << "\" y=\"" << detail::num(margin + h / 2)
    << "\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 "
    << detail::num(margin - 10) << ' ' << detail::num(margin + h / 2) << ")\">"
    << detail::escape(y_label) << "</text>\n";
  // color bar
  const double bx = margin + w + 20;
  for (int k = 0; k < 20; ++k)
    o << "<rect x=\"" << detail::num(bx) << "\" y=\"" << detail::num(margin + h - (k + 1) * h / 20)
      << "\" width=\"12\" height=\"" << detail::num(h / 20) << "\" fill=\""
      << color(lo + (hi - lo) * (k + 0.5) / 20) << "\"/>\n";
  o << "<text x=\"" << detail::num(bx + 16) << "\" y=\"" << detail::num(margin + h)
    << "\" font-size=\"10\">" << detail::num(lo) << "</text>\n"
    << "<text x=\"" << detail::num(bx + 16) << "\" y=\"" << detail::num(margin + 8)
    << "\" font-size=\"10\">" << detail::num(hi) << "</text>\n</svg>\n";
  return o.str();
}

}  // namespace smoothgcn::svg
