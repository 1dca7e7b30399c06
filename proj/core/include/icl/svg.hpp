#pragma once

#include <string>
#include <vector>

namespace icl {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Minimal polyline chart, enough for loss curves and sweep plots. With
// log_y, nonpositive values are dropped from the plotted series.
std::string render_line_chart(const std::string& title,
                              const std::string& x_label,
                              const std::string& y_label,
                              const std::vector<Series>& series, bool log_y);

}  // namespace icl
