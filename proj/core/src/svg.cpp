#include "icl/svg.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

namespace icl {

namespace {

constexpr double kWidth = 860, kHeight = 520;
constexpr double kLeft = 80, kRight = 830, kTop = 50, kBottom = 460;

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c",
                         "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 2);
  return std::string(buf, ptr);
}

std::string sci(double v) {
  std::ostringstream ss;
  ss.precision(3);
  ss << v;
  return ss.str();
}

}  // namespace

std::string render_line_chart(const std::string& title,
                              const std::string& x_label,
                              const std::string& y_label,
                              const std::vector<Series>& series, bool log_y) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      const double y = s.y[i];
      if (log_y && !(y > 0)) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      const double yv = log_y ? std::log10(y) : y;
      ymin = std::min(ymin, yv);
      ymax = std::max(ymax, yv);
    }
  }
  if (!(xmin <= xmax)) { xmin = 0; xmax = 1; }
  if (!(ymin <= ymax)) { ymin = 0; ymax = 1; }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;

  auto px = [&](double x) {
    return kLeft + (x - xmin) / (xmax - xmin) * (kRight - kLeft);
  };
  auto py = [&](double yv) {
    return kBottom - (yv - ymin) / (ymax - ymin) * (kBottom - kTop);
  };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
      << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << (kWidth / 2) << "\" y=\"28\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kBottom << "\" x2=\"" << kRight
      << "\" y2=\"" << kBottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
      << "\" y2=\"" << kBottom << "\" stroke=\"black\"/>\n";

  for (int i = 0; i <= 5; ++i) {
    const double x = xmin + (xmax - xmin) * i / 5.0;
    out << "<line x1=\"" << num(px(x)) << "\" y1=\"" << kBottom << "\" x2=\""
        << num(px(x)) << "\" y2=\"" << (kBottom + 5) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << num(px(x)) << "\" y=\"" << (kBottom + 20)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">" << sci(x) << "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    const double yv = ymin + (ymax - ymin) * i / 5.0;
    const double shown = log_y ? std::pow(10.0, yv) : yv;
    out << "<line x1=\"" << (kLeft - 5) << "\" y1=\"" << num(py(yv)) << "\" x2=\""
        << kLeft << "\" y2=\"" << num(py(yv)) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << (kLeft - 8) << "\" y=\"" << num(py(yv) + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << sci(shown) << "</text>\n";
  }
  out << "<text x=\"" << (kWidth / 2) << "\" y=\"" << (kHeight - 10)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << x_label << "</text>\n";
  out << "<text x=\"20\" y=\"" << ((kTop + kBottom) / 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         "transform=\"rotate(-90 20 " << ((kTop + kBottom) / 2) << ")\">"
      << y_label << (log_y ? " (log scale)" : "") << "</text>\n";

  int color = 0;
  double legend_y = kTop + 8;
  for (const auto& s : series) {
    const char* col = kColors[color % 6];
    std::ostringstream pts;
    for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      const double y = s.y[i];
      if (log_y && !(y > 0)) continue;
      pts << num(px(s.x[i])) << "," << num(py(log_y ? std::log10(y) : y)) << " ";
    }
    out << "<polyline fill=\"none\" stroke=\"" << col
        << "\" stroke-width=\"1.6\" points=\"" << pts.str() << "\"/>\n";
    out << "<line x1=\"" << (kRight - 150) << "\" y1=\"" << num(legend_y)
        << "\" x2=\"" << (kRight - 125) << "\" y2=\"" << num(legend_y)
        << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << (kRight - 120) << "\" y=\"" << num(legend_y + 4)
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.name
        << "</text>\n";
    legend_y += 18;
    ++color;
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace icl
