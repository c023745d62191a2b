#include "lpvsd/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace lpvsd::svg {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Indices kept when drawing: first, last, and min/max of each bucket.
std::vector<std::size_t> thin(const std::vector<double>& y, std::size_t max_points) {
  std::vector<std::size_t> idx;
  const std::size_t n = y.size();
  if (n <= max_points || max_points < 4) {
    idx.resize(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
  }
  const std::size_t buckets = max_points / 2;
  for (std::size_t b = 0; b < buckets; ++b) {
    std::size_t lo = b * n / buckets, hi = (b + 1) * n / buckets;
    if (lo >= hi) continue;
    std::size_t imin = lo, imax = lo;
    for (std::size_t i = lo; i < hi; ++i) {
      if (y[i] < y[imin]) imin = i;
      if (y[i] > y[imax]) imax = i;
    }
    idx.push_back(std::min(imin, imax));
    if (imin != imax) idx.push_back(std::max(imin, imax));
  }
  if (idx.front() != 0) idx.insert(idx.begin(), 0);
  if (idx.back() != n - 1) idx.push_back(n - 1);
  return idx;
}

}  // namespace

std::string render(const std::string& title, const std::string& x_label,
                   const std::vector<Panel>& panels, int width, int panel_height,
                   std::size_t max_points) {
  const int left = 70, right = 150, top = 40, gap = 40, bottom = 40;
  const int plot_w = width - left - right;
  const int height = top + static_cast<int>(panels.size()) * (panel_height + gap) + bottom;

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  for (const auto& p : panels) {
    for (const auto& s : p.series) {
      for (double v : s.x) {
        if (std::isfinite(v)) {
          xmin = std::min(xmin, v);
          xmax = std::max(xmax, v);
        }
      }
    }
  }
  if (!(xmax > xmin)) {
    xmin = 0.0;
    xmax = 1.0;
  }

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
    << escape(title) << "</text>\n";

  int y0 = top;
  for (const auto& p : panels) {
    double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
    for (const auto& s : p.series) {
      for (double v : s.y) {
        if (std::isfinite(v)) {
          ymin = std::min(ymin, v);
          ymax = std::max(ymax, v);
        }
      }
    }
    if (!(ymax > ymin)) {
      double c = std::isfinite(ymin) ? ymin : 0.0;
      ymin = c - 1.0;
      ymax = c + 1.0;
    }
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * plot_w; };
    auto py = [&](double y) { return y0 + (ymax - y) / (ymax - ymin) * panel_height; };

    o << "<g>\n<rect x=\"" << left << "\" y=\"" << y0 << "\" width=\"" << plot_w
      << "\" height=\"" << panel_height << "\" fill=\"none\" stroke=\"#444\"/>\n";
    o << "<text x=\"" << left << "\" y=\"" << y0 - 6 << "\" font-size=\"12\">" << escape(p.title)
      << "</text>\n";
    o << "<text transform=\"translate(15," << y0 + panel_height / 2
      << ") rotate(-90)\" text-anchor=\"middle\">" << escape(p.y_label) << "</text>\n";
    for (int k = 0; k <= 4; ++k) {
      double yv = ymin + (ymax - ymin) * k / 4.0;
      double xv = xmin + (xmax - xmin) * k / 4.0;
      o << "<line x1=\"" << left << "\" x2=\"" << left + plot_w << "\" y1=\"" << num(py(yv))
        << "\" y2=\"" << num(py(yv)) << "\" stroke=\"#eee\"/>\n";
      o << "<text x=\"" << left - 4 << "\" y=\"" << num(py(yv) + 4)
        << "\" text-anchor=\"end\">" << tick(yv) << "</text>\n";
      o << "<text x=\"" << num(px(xv)) << "\" y=\"" << y0 + panel_height + 14
        << "\" text-anchor=\"middle\">" << tick(xv) << "</text>\n";
    }
    int legend_y = y0 + 12;
    for (const auto& s : p.series) {
      const std::size_t n = std::min(s.x.size(), s.y.size());
      std::vector<double> ys(s.y.begin(), s.y.begin() + static_cast<long>(n));
      o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.2\"";
      if (s.dashed) o << " stroke-dasharray=\"5,3\"";
      o << " points=\"";
      bool first = true;
      for (std::size_t i : thin(ys, max_points)) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        if (!first) o << ' ';
        o << num(px(s.x[i])) << ',' << num(py(s.y[i]));
        first = false;
      }
      o << "\"/>\n";
      o << "<line x1=\"" << left + plot_w + 10 << "\" x2=\"" << left + plot_w + 30 << "\" y1=\""
        << legend_y - 4 << "\" y2=\"" << legend_y - 4 << "\" stroke=\"" << s.color << "\"";
      if (s.dashed) o << " stroke-dasharray=\"5,3\"";
      o << "/>\n<text x=\"" << left + plot_w + 34 << "\" y=\"" << legend_y << "\">"
        << escape(s.label) << "</text>\n";
      legend_y += 14;
    }
    o << "</g>\n";
    y0 += panel_height + gap;
  }
  o << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 8
    << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

}  // namespace lpvsd::svg
