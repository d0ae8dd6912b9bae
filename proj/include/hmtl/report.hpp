#pragma once

// CSV tables and SVG line charts for run reports. The CSV is the record;
// the chart only renders it.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "hmtl/error.hpp"

namespace hmtl {

inline std::string fmt_num(double v, int precision = 6) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

/// Writes through a temporary file and renames, so readers never see a
/// half-written file.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw LoadError(tmp.string(), "cannot write");
    out << text;
    if (!out) throw LoadError(tmp.string(), "write failed");
  }
  std::filesystem::rename(tmp, path);
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string str() const {
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& c = cells[i];
        if (i) os << ',';
        if (c.find_first_of(",\"\n") != std::string::npos) {
          os << '"';
          for (char ch : c) os << (ch == '"' ? "\"\"" : std::string(1, ch));
          os << '"';
        } else {
          os << c;
        }
      }
      os << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return os.str();
  }

  void save(const std::filesystem::path& path) const { write_text_atomic(path, str()); }
};

/// Append-only CSV; every row is flushed so an aborted run keeps its log.
class CsvLog {
 public:
  CsvLog() = default;
  explicit CsvLog(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::trunc);
    if (!out_) throw LoadError(path.string(), "cannot open log for writing");
  }

  bool is_open() const { return out_.is_open(); }

  void row(const std::vector<std::string>& cells) {
    if (!out_.is_open()) return;
    CsvTable t{cells, {}};
    out_ << t.str();
    out_.flush();
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
};

struct PlotPanel {
  std::string title, xlabel, ylabel;
  std::vector<PlotSeries> series;
  bool integer_x = false;  // tick labels at integer positions only
};

namespace detail::svg {

inline std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else if (c == '"') o += "&quot;";
    else o += c;
  }
  return o;
}

inline std::vector<double> ticks(double lo, double hi, int target = 5) {
  const double span = hi - lo;
  if (!(span > 0)) return {lo};
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (raw <= m * mag) {
      step = m * mag;
      break;
    }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) t.push_back(v);
  return t;
}

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  return palette[i % 7];
}

}  // namespace detail::svg

/// Panels side by side in one SVG document.
inline std::string render_svg(const std::vector<PlotPanel>& panels) {
  using namespace detail::svg;
  const double pw = 420, ph = 300, ml = 60, mr = 20, mt = 30, mb = 45;
  std::ostringstream os;
  const double total_w = pw * static_cast<double>(std::max<std::size_t>(panels.size(), 1));
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << total_w << "\" height=\"" << ph + 70
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& panel = panels[p];
    const double ox = pw * static_cast<double>(p);
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : panel.series)
      for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        x0 = std::min(x0, s.x[i]);
        x1 = std::max(x1, s.x[i]);
        y0 = std::min(y0, s.y[i]);
        y1 = std::max(y1, s.y[i]);
      }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x0 -= 0.5, x1 += 0.5;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    const double iw = pw - ml - mr, ih = ph - mt - mb;
    auto sx = [&](double v) { return ox + ml + (v - x0) / (x1 - x0) * iw; };
    auto sy = [&](double v) { return mt + (1.0 - (v - y0) / (y1 - y0)) * ih; };
    os << "<text x=\"" << ox + pw / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << esc(panel.title)
       << "</text>\n";
    os << "<rect x=\"" << ox + ml << "\" y=\"" << mt << "\" width=\"" << iw << "\" height=\"" << ih
       << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (double t : ticks(x0, x1)) {
      if (panel.integer_x && std::abs(t - std::round(t)) > 1e-9) continue;
      os << "<line x1=\"" << sx(t) << "\" y1=\"" << mt + ih << "\" x2=\"" << sx(t) << "\" y2=\"" << mt + ih + 4
         << "\" stroke=\"#444\"/><text x=\"" << sx(t) << "\" y=\"" << mt + ih + 16 << "\" text-anchor=\"middle\">"
         << fmt_num(t, 4) << "</text>\n";
    }
    for (double t : ticks(y0, y1)) {
      os << "<line x1=\"" << ox + ml - 4 << "\" y1=\"" << sy(t) << "\" x2=\"" << ox + ml + iw << "\" y2=\"" << sy(t)
         << "\" stroke=\"#ddd\"/><text x=\"" << ox + ml - 6 << "\" y=\"" << sy(t) + 4 << "\" text-anchor=\"end\">"
         << fmt_num(t, 4) << "</text>\n";
    }
    os << "<text x=\"" << ox + ml + iw / 2 << "\" y=\"" << ph - 8 << "\" text-anchor=\"middle\">" << esc(panel.xlabel)
       << "</text>\n";
    os << "<text transform=\"translate(" << ox + 14 << "," << mt + ih / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
       << esc(panel.ylabel) << "</text>\n";
    for (std::size_t k = 0; k < panel.series.size(); ++k) {
      const auto& s = panel.series[k];
      std::ostringstream pts;
      std::size_t shown = 0;
      for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        pts << sx(s.x[i]) << ',' << sy(s.y[i]) << ' ';
        ++shown;
      }
      if (shown > 1)
        os << "<polyline fill=\"none\" stroke=\"" << color(k) << "\" stroke-width=\"1.6\" points=\"" << pts.str()
           << "\"/>\n";
      for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()) && shown <= 40; ++i)
        if (std::isfinite(s.x[i]) && std::isfinite(s.y[i]))
          os << "<circle cx=\"" << sx(s.x[i]) << "\" cy=\"" << sy(s.y[i]) << "\" r=\"2.5\" fill=\"" << color(k)
             << "\"/>\n";
      const double ly = ph + 14 + 14 * static_cast<double>(k % 4);
      const double lx = ox + ml + static_cast<double>(k / 4) * 200;
      os << "<rect x=\"" << lx << "\" y=\"" << ly - 8 << "\" width=\"10\" height=\"10\" fill=\"" << color(k)
         << "\"/><text x=\"" << lx + 14 << "\" y=\"" << ly + 1 << "\">" << esc(s.label) << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

inline void write_svg(const std::filesystem::path& path, const std::vector<PlotPanel>& panels) {
  write_text_atomic(path, render_svg(panels));
}

}  // namespace hmtl
