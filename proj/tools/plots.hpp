#pragma once

#include <string>
#include <vector>

namespace lart::cli {

struct Series {
  std::string name;
  std::vector<double> x, y;
};

struct BarGroup {
  std::string label;
  std::vector<double> values;  // one per series
  std::vector<double> errors;  // optional, same length
};

// Static SVG charts. Output depends only on the inputs: fixed number
// formatting, no timestamps, series drawn in the given order.
std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series);
std::string bar_chart_svg(const std::string& title, const std::string& y_label,
                          const std::vector<std::string>& series_names, const std::vector<BarGroup>& groups);

}  // namespace lart::cli
