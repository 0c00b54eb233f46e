#include "plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace lart::cli {

namespace {

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 60;

const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"};

std::string f2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
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

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

std::string header(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f2(kWidth) + "\" height=\"" + f2(kHeight) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         "<text x=\"" + f2(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) +
         "</text>\n";
}

std::string axes(const Frame& f, const std::string& x_label, const std::string& y_label, bool x_ticks) {
  std::string s;
  const double left = f.px(f.x0), right = f.px(f.x1), bottom = f.py(f.y0), top = f.py(f.y1);
  s += "<path d=\"M" + f2(left) + " " + f2(top) + " V" + f2(bottom) + " H" + f2(right) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double y = f.y0 + (f.y1 - f.y0) * i / 5;
    s += "<text x=\"" + f2(left - 6) + "\" y=\"" + f2(f.py(y) + 4) + "\" text-anchor=\"end\">" + tick(y) + "</text>\n";
    s += "<line x1=\"" + f2(left) + "\" x2=\"" + f2(right) + "\" y1=\"" + f2(f.py(y)) + "\" y2=\"" + f2(f.py(y)) +
         "\" stroke=\"#ddd\"/>\n";
    if (x_ticks) {
      const double x = f.x0 + (f.x1 - f.x0) * i / 5;
      s += "<text x=\"" + f2(f.px(x)) + "\" y=\"" + f2(bottom + 16) + "\" text-anchor=\"middle\">" + tick(x) +
           "</text>\n";
    }
  }
  s += "<text x=\"" + f2((left + right) / 2) + "\" y=\"" + f2(kHeight - 16) + "\" text-anchor=\"middle\">" +
       escape(x_label) + "</text>\n";
  s += "<text transform=\"translate(18 " + f2((top + bottom) / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
       escape(y_label) + "</text>\n";
  return s;
}

std::string legend(const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 14 + 18 * static_cast<double>(i);
    const double x = kWidth - kRight + 16;
    s += "<rect x=\"" + f2(x) + "\" y=\"" + f2(y - 9) + "\" width=\"12\" height=\"10\" fill=\"" +
         kPalette[i % std::size(kPalette)] + "\"/>\n";
    s += "<text x=\"" + f2(x + 18) + "\" y=\"" + f2(y) + "\">" + escape(names[i]) + "</text>\n";
  }
  return s;
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series) {
  Frame f{std::numeric_limits<double>::max(), std::numeric_limits<double>::lowest(), 0,
          std::numeric_limits<double>::lowest()};
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      f.x0 = std::min(f.x0, s.x[i]);
      f.x1 = std::max(f.x1, s.x[i]);
      f.y0 = std::min(f.y0, s.y[i]);
      f.y1 = std::max(f.y1, s.y[i]);
    }
  if (f.x0 >= f.x1) {
    f.x0 = std::min(f.x0, 0.0);
    f.x1 = f.x0 + 1;
  }
  if (f.y1 <= f.y0) f.y1 = f.y0 + 1;
  std::string out = header(title) + axes(f, x_label, y_label, true);
  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    names.push_back(s.name);
    std::string d;
    for (std::size_t i = 0; i < s.x.size(); ++i) d += (i ? " L" : "M") + f2(f.px(s.x[i])) + " " + f2(f.py(s.y[i]));
    out += "<path d=\"" + d + "\" fill=\"none\" stroke=\"" + kPalette[k % std::size(kPalette)] +
           "\" stroke-width=\"1.5\"/>\n";
  }
  return out + legend(names) + "</svg>\n";
}

std::string bar_chart_svg(const std::string& title, const std::string& y_label,
                          const std::vector<std::string>& series_names, const std::vector<BarGroup>& groups) {
  double lo = 0, hi = 0;
  for (const auto& g : groups)
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      const double e = i < g.errors.size() ? g.errors[i] : 0;
      if (std::isnan(g.values[i])) continue;
      lo = std::min(lo, g.values[i] - e);
      hi = std::max(hi, g.values[i] + e);
    }
  if (hi <= lo) hi = lo + 1;
  const Frame f{0, static_cast<double>(std::max<std::size_t>(groups.size(), 1)), lo, hi};
  std::string out = header(title) + axes(f, "", y_label, false);
  const double slot = (f.px(1) - f.px(0));
  const double bar = slot * 0.8 / static_cast<double>(std::max<std::size_t>(series_names.size(), 1));
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& g = groups[gi];
    const double base_x = f.px(static_cast<double>(gi)) + slot * 0.1;
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      const double v = g.values[i];
      if (std::isnan(v)) continue;
      const double x = base_x + bar * static_cast<double>(i);
      const double y_top = f.py(std::max(v, 0.0)), y_bottom = f.py(std::min(v, 0.0));
      out += "<rect x=\"" + f2(x) + "\" y=\"" + f2(y_top) + "\" width=\"" + f2(bar) + "\" height=\"" +
             f2(y_bottom - y_top) + "\" fill=\"" + kPalette[i % std::size(kPalette)] + "\"/>\n";
      if (i < g.errors.size() && g.errors[i] > 0) {
        const double cx = x + bar / 2;
        out += "<line x1=\"" + f2(cx) + "\" x2=\"" + f2(cx) + "\" y1=\"" + f2(f.py(v - g.errors[i])) + "\" y2=\"" +
               f2(f.py(v + g.errors[i])) + "\" stroke=\"black\"/>\n";
      }
    }
    out += "<text transform=\"translate(" + f2(base_x + slot * 0.4) + " " + f2(f.py(lo) + 12) +
           ") rotate(30)\" font-size=\"10\">" + escape(g.label) + "</text>\n";
  }
  return out + legend(series_names) + "</svg>\n";
}

}  // namespace lart::cli
