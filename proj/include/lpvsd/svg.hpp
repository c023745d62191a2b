#pragma once

#include <string>
#include <vector>

namespace lpvsd::svg {

struct Series {
  std::string label;
  std::vector<double> x, y;
  std::string color = "#1f77b4";
  bool dashed = false;
};

struct Panel {
  std::string title;
  std::string y_label;
  std::vector<Series> series;
};

/// Stacked static line charts sharing the x axis. Series longer than
/// `max_points` are thinned by keeping per-bucket minima and maxima.
std::string render(const std::string& title, const std::string& x_label,
                   const std::vector<Panel>& panels, int width = 900, int panel_height = 200,
                   std::size_t max_points = 1500);

}  // namespace lpvsd::svg
