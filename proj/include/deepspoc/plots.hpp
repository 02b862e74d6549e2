#pragma once

// Static SVG figures from an artifact directory: density cuts and
// metric-versus-epoch curves.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepspoc/problems.hpp"

namespace deepspoc {

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool dashed = false;
};

struct PlotSpec {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  std::vector<PlotSeries> series;
  std::optional<double> hline;  ///< horizontal target line
  std::string hline_label;
};

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

inline Range plot_range_x(const PlotSpec& p) {
  Range r{1e300, -1e300};
  for (const auto& s : p.series) {
    for (double v : s.x) {
      if (!std::isfinite(v)) continue;
      r.lo = std::min(r.lo, v);
      r.hi = std::max(r.hi, v);
    }
  }
  if (r.lo > r.hi) return {0.0, 1.0};
  if (r.lo == r.hi) return {r.lo - 0.5, r.hi + 0.5};
  return r;
}

inline Range plot_range_y(const PlotSpec& p) {
  Range r{1e300, -1e300};
  for (const auto& s : p.series) {
    for (double v : s.y) {
      if (!std::isfinite(v)) continue;
      r.lo = std::min(r.lo, v);
      r.hi = std::max(r.hi, v);
    }
  }
  if (p.hline) {
    r.lo = std::min(r.lo, *p.hline);
    r.hi = std::max(r.hi, *p.hline);
  }
  if (r.lo > r.hi) return {0.0, 1.0};
  const double pad = r.hi > r.lo ? 0.05 * (r.hi - r.lo) : 0.5;
  return {r.lo - pad, r.hi + pad};
}

inline void write_svg(std::ostream& os, const PlotSpec& p) {
  const double W = 640, H = 420, L = 70, R = 20, T = 40, B = 50;
  const Range rx = plot_range_x(p), ry = plot_range_y(p);
  auto sx = [&](double v) { return L + (v - rx.lo) / (rx.hi - rx.lo) * (W - L - R); };
  auto sy = [&](double v) { return H - B - (v - ry.lo) / (ry.hi - ry.lo) * (H - T - B); };
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << p.title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double vx = rx.lo + (rx.hi - rx.lo) * k / 4.0;
    const double vy = ry.lo + (ry.hi - ry.lo) * k / 4.0;
    os << "<text x=\"" << sx(vx) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
       << vx << "</text>\n";
    os << "<text x=\"" << L - 6 << "\" y=\"" << sy(vy) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << vy
       << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\" font-size=\"12\">"
     << p.xlabel << "</text>\n";
  os << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
     << (T + H - B) / 2 << ")\">" << p.ylabel << "</text>\n";
  if (p.hline) {
    os << "<line x1=\"" << L << "\" y1=\"" << sy(*p.hline) << "\" x2=\"" << W - R << "\" y2=\"" << sy(*p.hline)
       << "\" stroke=\"#d62728\" stroke-dasharray=\"6 4\"/>\n";
  }
  int legend = 0;
  for (const auto& s : p.series) {
    os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\""
       << (s.dashed ? " stroke-dasharray=\"5 3\"" : "") << " points=\"";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      os << sx(s.x[i]) << ',' << sy(s.y[i]) << ' ';
    }
    os << "\"/>\n";
    const double ly = T + 14 + 16 * legend++;
    os << "<line x1=\"" << W - R - 150 << "\" y1=\"" << ly << "\" x2=\"" << W - R - 126 << "\" y2=\"" << ly
       << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - R - 120 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << s.name << "</text>\n";
  }
  if (p.hline && !p.hline_label.empty()) {
    const double ly = T + 14 + 16 * legend;
    os << "<line x1=\"" << W - R - 150 << "\" y1=\"" << ly << "\" x2=\"" << W - R - 126 << "\" y2=\"" << ly
       << "\" stroke=\"#d62728\" stroke-dasharray=\"6 4\"/>\n";
    os << "<text x=\"" << W - R - 120 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << p.hline_label
       << "</text>\n";
  }
  os << "</svg>\n";
}

/// Minimal CSV reader: header names and numeric rows (non-numeric fields
/// become NaN, except in string columns listed in `text`).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
  }

  static double number(const std::string& s) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      return pos == s.size() ? v : std::nan("");
    } catch (...) {
      return std::nan("");
    }
  }
};

inline std::optional<CsvTable> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  CsvTable t;
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::stringstream ss(l);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  if (!std::getline(in, line)) return t;
  t.header = split(line);
  while (std::getline(in, line)) {
    if (!line.empty()) t.rows.push_back(split(line));
  }
  return t;
}

/// Writes the figures an artifact directory supports and returns their
/// paths; every figure that cannot be drawn gets one warning line.
inline std::vector<std::filesystem::path> export_plots(const std::filesystem::path& dir, std::ostream& warn) {
  namespace fs = std::filesystem;
  std::vector<fs::path> written;
  std::string problem_kind;
  if (std::ifstream mi(dir / "manifest.json"); mi) {
    try {
      const auto j = nlohmann::json::parse(mi);
      problem_kind = j.at("config").at("problem").at("kind").get<std::string>();
    } catch (...) {
      warn << "manifest.json unreadable; problem-specific decorations skipped\n";
    }
  }

  // Density cut: initial model, terminal model and terminal reference.
  if (auto slices = read_csv(dir / "slices.csv"); !slices) {
    warn << "density_cut: slices.csv missing\n";
  } else if (slices->rows.empty()) {
    warn << "density_cut: slices.csv has no rows\n";
  } else {
    const int ct = slices->col("t"), cx = slices->col("x0"), cm = slices->col("density_model"),
              cr = slices->col("density_reference");
    if (ct < 0 || cx < 0 || cm < 0 || cr < 0) {
      warn << "density_cut: slices.csv lacks required columns\n";
    } else {
      double t_first = 1e300, t_last = -1e300;
      for (const auto& r : slices->rows) {
        const double t = CsvTable::number(r[ct]);
        t_first = std::min(t_first, t);
        t_last = std::max(t_last, t);
      }
      PlotSeries init{"initial", {}, {}, "#7f7f7f", true};
      PlotSeries num{"numerical", {}, {}, "#1f77b4", false};
      PlotSeries exact{"exact", {}, {}, "#ff7f0e", true};
      for (const auto& r : slices->rows) {
        const double t = CsvTable::number(r[ct]);
        const double x = CsvTable::number(r[cx]);
        if (t == t_first) {
          init.x.push_back(x);
          init.y.push_back(CsvTable::number(r[cm]));
        }
        if (t == t_last) {
          num.x.push_back(x);
          num.y.push_back(CsvTable::number(r[cm]));
          const double ref = CsvTable::number(r[cr]);
          if (std::isfinite(ref)) {
            exact.x.push_back(x);
            exact.y.push_back(ref);
          }
        }
      }
      PlotSpec spec;
      spec.title = "density cut";
      spec.xlabel = "x0";
      spec.ylabel = "density";
      spec.series = {init, num};
      if (!exact.x.empty()) spec.series.push_back(exact);
      const fs::path out = dir / "density_cut.svg";
      std::ofstream os(out);
      write_svg(os, spec);
      written.push_back(out);
    }
  }

  // One curve per metric.
  auto metrics = read_csv(dir / "metrics.csv");
  if (!metrics) {
    warn << "metrics: metrics.csv missing\n";
  } else if (metrics->rows.empty()) {
    warn << "metrics: metrics.csv has no rows; no metric figures written\n";
  } else {
    const int ce = metrics->col("epoch"), cm = metrics->col("metric"), cv = metrics->col("value");
    if (ce < 0 || cm < 0 || cv < 0) {
      warn << "metrics: metrics.csv lacks required columns\n";
    } else {
      std::map<std::string, PlotSeries> series;
      for (const auto& r : metrics->rows) {
        auto& s = series[r[cm]];
        s.name = r[cm];
        s.x.push_back(CsvTable::number(r[ce]));
        s.y.push_back(CsvTable::number(r[cv]));
      }
      for (auto& [name, s] : series) {
        PlotSpec spec;
        spec.title = name + " vs epoch";
        spec.xlabel = "epoch";
        spec.ylabel = name;
        spec.series = {s};
        if (name == "second_moment_slope" && problem_kind == "keller_segel") {
          spec.hline = ks_second_moment_slope();
          spec.hline_label = "4(1-1/(8 pi))";
        }
        const fs::path out = dir / (name + "_vs_epoch.svg");
        std::ofstream os(out);
        write_svg(os, spec);
        written.push_back(out);
      }
    }
  }
  return written;
}

}  // namespace deepspoc
