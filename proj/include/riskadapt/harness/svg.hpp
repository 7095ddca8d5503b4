#pragma once

#include <string>
#include <vector>

namespace riskadapt::harness {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> err;  ///< optional symmetric band, same length as y
};

struct Band {
  double x0 = 0.0;
  double x1 = 0.0;
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  std::vector<Band> shaded;  ///< drawn behind the curves
};

struct BarGroup {
  std::string label;
  std::vector<double> values;  ///< one per series label
};

struct BarPlot {
  std::string title;
  std::string y_label;
  std::vector<std::string> series_labels;
  std::vector<BarGroup> groups;
};

/// Fixed 800x500 viewBox, fixed palette, no timestamps. Empty input still
/// renders axes plus a "no data" note.
std::string render_line_plot(const LinePlot& plot);
std::string render_bar_plot(const BarPlot& plot);

}  // namespace riskadapt::harness
