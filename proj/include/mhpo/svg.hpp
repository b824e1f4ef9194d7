#ifndef MHPO_SVG_HPP
#define MHPO_SVG_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

// Dependency-free SVG line charts for the run reports: fixed layout, one
// polyline per series, legend in the top-right corner.

namespace mhpo {

class LineChart {
 public:
  LineChart(std::string title, std::string x_label, std::string y_label)
      : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

  void add_series(std::string name, std::vector<double> xs, std::vector<double> ys) {
    series_.push_back({std::move(name), std::move(xs), std::move(ys)});
  }

  std::string render() const {
    const double width = 860.0, height = 480.0;
    const double ml = 70.0, mr = 170.0, mt = 48.0, mb = 56.0;
    const double pw = width - ml - mr;
    const double ph = height - mt - mb;

    double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
    bool any = false;
    for (const auto& s : series_) {
      for (std::size_t i = 0; i < s.xs.size(); ++i) {
        if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
        if (!any) {
          xmin = xmax = s.xs[i];
          ymin = ymax = s.ys[i];
          any = true;
        } else {
          xmin = std::min(xmin, s.xs[i]);
          xmax = std::max(xmax, s.xs[i]);
          ymin = std::min(ymin, s.ys[i]);
          ymax = std::max(ymax, s.ys[i]);
        }
      }
    }
    if (xmax <= xmin) xmax = xmin + 1.0;
    if (ymax <= ymin) ymax = ymin + 1.0;
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << ml << "\" y=\"28\" font-family=\"sans-serif\" font-size=\"18\">"
       << escape(title_) << "</text>\n";

    // Axes and gridlines with 5 ticks per axis.
    os << "<g stroke=\"#444\" stroke-width=\"1\">\n";
    os << line(ml, mt + ph, ml + pw, mt + ph) << line(ml, mt, ml, mt + ph);
    os << "</g>\n";
    os << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
    for (int i = 0; i <= 5; ++i) {
      const double fx = xmin + (xmax - xmin) * i / 5.0;
      const double fy = ymin + (ymax - ymin) * i / 5.0;
      os << "<line x1=\"" << fmt(px(fx)) << "\" y1=\"" << fmt(mt) << "\" x2=\"" << fmt(px(fx))
         << "\" y2=\"" << fmt(mt + ph) << "\" stroke=\"#ddd\"/>\n";
      os << "<line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(py(fy)) << "\" x2=\"" << fmt(ml + pw)
         << "\" y2=\"" << fmt(py(fy)) << "\" stroke=\"#ddd\"/>\n";
      os << "<text x=\"" << fmt(px(fx)) << "\" y=\"" << fmt(mt + ph + 16)
         << "\" text-anchor=\"middle\">" << fmt(fx) << "</text>\n";
      os << "<text x=\"" << fmt(ml - 6) << "\" y=\"" << fmt(py(fy) + 4)
         << "\" text-anchor=\"end\">" << fmt(fy) << "</text>\n";
    }
    os << "<text x=\"" << fmt(ml + pw / 2) << "\" y=\"" << fmt(height - 12)
       << "\" text-anchor=\"middle\" font-size=\"13\">" << escape(x_label_) << "</text>\n";
    os << "<text x=\"18\" y=\"" << fmt(mt + ph / 2)
       << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
       << fmt(mt + ph / 2) << ")\">" << escape(y_label_) << "</text>\n";
    os << "</g>\n";

    for (std::size_t si = 0; si < series_.size(); ++si) {
      const auto& s = series_[si];
      os << "<polyline fill=\"none\" stroke=\"" << color(si)
         << "\" stroke-width=\"1.6\" points=\"";
      for (std::size_t i = 0; i < s.xs.size(); ++i) {
        if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
        os << fmt(px(s.xs[i])) << "," << fmt(py(s.ys[i])) << " ";
      }
      os << "\"/>\n";
      const double ly = mt + 16 + 18.0 * static_cast<double>(si);
      os << "<line x1=\"" << fmt(ml + pw + 12) << "\" y1=\"" << fmt(ly - 4) << "\" x2=\""
         << fmt(ml + pw + 34) << "\" y2=\"" << fmt(ly - 4) << "\" stroke=\"" << color(si)
         << "\" stroke-width=\"2\"/>\n";
      os << "<text x=\"" << fmt(ml + pw + 40) << "\" y=\"" << fmt(ly)
         << "\" font-family=\"sans-serif\" font-size=\"12\">" << escape(s.name)
         << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
  }

 private:
  struct Series {
    std::string name;
    std::vector<double> xs;
    std::vector<double> ys;
  };

  static std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
  }

  static std::string line(double x1, double y1, double x2, double y2) {
    std::ostringstream os;
    os << "<line x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(x2)
       << "\" y2=\"" << fmt(y2) << "\"/>\n";
    return os.str();
  }

  static std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        default: out += c;
      }
    }
    return out;
  }

  static const char* color(std::size_t i) {
    static const char* palette[] = {"#1f3a6d", "#c23b22", "#2a7f3f", "#8a5dbb",
                                    "#c78a1f", "#4aa3c2", "#888888"};
    return palette[i % (sizeof(palette) / sizeof(palette[0]))];
  }

  std::string title_;
  std::string x_label_;
  std::string y_label_;
  std::vector<Series> series_;
};

}  // namespace mhpo

#endif  // MHPO_SVG_HPP
