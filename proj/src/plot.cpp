#include "iscc/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace iscc::bench {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

void validate_table(const PlotTable& t) {
  if (t.series.empty()) throw std::invalid_argument("export_plot: table has no series");
  for (const PlotSeries& s : t.series) {
    if (s.x.empty()) {
      throw std::invalid_argument("export_plot: series '" + s.label + "' is empty");
    }
    if (s.x.size() != s.y.size() || (!s.yerr.empty() && s.yerr.size() != s.y.size())) {
      throw std::invalid_argument("export_plot: series '" + s.label +
                                  "' has inconsistent column lengths");
    }
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) ||
          (!s.yerr.empty() && !std::isfinite(s.yerr[i]))) {
        throw std::invalid_argument("export_plot: series '" + s.label +
                                    "' contains non-finite values");
      }
    }
  }
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (hi <= lo) {
      const double d = std::max(1.0, std::abs(lo) * 0.1);
      lo -= d;
      hi += d;
    } else {
      const double d = 0.04 * (hi - lo);
      lo -= d;
      hi += d;
    }
  }
};

/// Tick step of the form {1, 2, 5} * 10^k giving roughly `target` ticks.
double nice_step(double range, int target) {
  const double raw = range / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double frac = raw / mag;
  if (frac <= 1.5) return mag;
  if (frac <= 3.5) return 2.0 * mag;
  if (frac <= 7.5) return 5.0 * mag;
  return 10.0 * mag;
}

const char* series_color(size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#ff7f0e", "#9467bd", "#8c564b"};
  return palette[i % 6];
}

std::string render_svg(const PlotTable& t) {
  const double width = 640, height = 440;
  const double ml = 72, mr = 22, mt = 42, mb = 58;
  const double pw = width - ml - mr, ph = height - mt - mb;

  Range rx, ry;
  for (const PlotSeries& s : t.series) {
    for (size_t i = 0; i < s.x.size(); ++i) {
      rx.add(s.x[i]);
      ry.add(s.y[i]);
      if (!s.yerr.empty()) {
        ry.add(s.y[i] - s.yerr[i]);
        ry.add(s.y[i] + s.yerr[i]);
      }
    }
  }
  rx.pad();
  ry.pad();
  auto px = [&](double x) { return ml + (x - rx.lo) / (rx.hi - rx.lo) * pw; };
  auto py = [&](double y) { return mt + (ry.hi - y) / (ry.hi - ry.lo) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
     << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        "font-family=\"sans-serif\" font-size=\"15\">"
     << to_string(t.kind) << "</text>\n";

  // grid + ticks
  const double sx = nice_step(rx.hi - rx.lo, 5);
  const double sy = nice_step(ry.hi - ry.lo, 5);
  os << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
  for (double x = std::ceil(rx.lo / sx) * sx; x <= rx.hi + 1e-9 * sx; x += sx) {
    os << "<line x1=\"" << fmt2(px(x)) << "\" y1=\"" << fmt2(mt) << "\" x2=\"" << fmt2(px(x))
       << "\" y2=\"" << fmt2(mt + ph) << "\" stroke=\"#ddd\"/>\n"
       << "<text x=\"" << fmt2(px(x)) << "\" y=\"" << fmt2(mt + ph + 16)
       << "\" text-anchor=\"middle\">" << fmt(x) << "</text>\n";
  }
  for (double y = std::ceil(ry.lo / sy) * sy; y <= ry.hi + 1e-9 * sy; y += sy) {
    os << "<line x1=\"" << fmt2(ml) << "\" y1=\"" << fmt2(py(y)) << "\" x2=\"" << fmt2(ml + pw)
       << "\" y2=\"" << fmt2(py(y)) << "\" stroke=\"#ddd\"/>\n"
       << "<text x=\"" << fmt2(ml - 6) << "\" y=\"" << fmt2(py(y) + 4)
       << "\" text-anchor=\"end\">" << fmt(y) << "</text>\n";
  }
  os << "</g>\n";

  // axes + labels
  os << "<rect x=\"" << fmt2(ml) << "\" y=\"" << fmt2(mt) << "\" width=\"" << fmt2(pw)
     << "\" height=\"" << fmt2(ph) << "\" fill=\"none\" stroke=\"#333\"/>\n"
     << "<text x=\"" << fmt2(ml + pw / 2) << "\" y=\"" << fmt2(height - 14)
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << t.x_label
     << "</text>\n"
     << "<text x=\"18\" y=\"" << fmt2(mt + ph / 2)
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
        "transform=\"rotate(-90 18 "
     << fmt2(mt + ph / 2) << ")\">" << t.y_label << "</text>\n";

  // series
  for (size_t si = 0; si < t.series.size(); ++si) {
    const PlotSeries& s = t.series[si];
    const char* color = series_color(si);
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.6\" points=\"";
    for (size_t i = 0; i < s.x.size(); ++i) {
      os << fmt2(px(s.x[i])) << ',' << fmt2(py(s.y[i])) << (i + 1 < s.x.size() ? " " : "");
    }
    os << "\"/>\n";
    for (size_t i = 0; i < s.x.size(); ++i) {
      os << "<circle cx=\"" << fmt2(px(s.x[i])) << "\" cy=\"" << fmt2(py(s.y[i]))
         << "\" r=\"2.4\" fill=\"" << color << "\"/>\n";
      if (!s.yerr.empty() && s.yerr[i] > 0) {
        const double x = px(s.x[i]);
        const double ylo = py(s.y[i] - s.yerr[i]), yhi = py(s.y[i] + s.yerr[i]);
        os << "<line x1=\"" << fmt2(x) << "\" y1=\"" << fmt2(ylo) << "\" x2=\"" << fmt2(x)
           << "\" y2=\"" << fmt2(yhi) << "\" stroke=\"" << color << "\"/>\n"
           << "<line x1=\"" << fmt2(x - 3) << "\" y1=\"" << fmt2(ylo) << "\" x2=\""
           << fmt2(x + 3) << "\" y2=\"" << fmt2(ylo) << "\" stroke=\"" << color << "\"/>\n"
           << "<line x1=\"" << fmt2(x - 3) << "\" y1=\"" << fmt2(yhi) << "\" x2=\""
           << fmt2(x + 3) << "\" y2=\"" << fmt2(yhi) << "\" stroke=\"" << color << "\"/>\n";
      }
    }
  }

  if (t.has_marker) {
    os << "<circle cx=\"" << fmt2(px(t.marker_x)) << "\" cy=\"" << fmt2(py(t.marker_y))
       << "\" r=\"5\" fill=\"none\" stroke=\"#000\" stroke-width=\"1.5\"/>\n"
       << "<text x=\"" << fmt2(px(t.marker_x) + 8) << "\" y=\"" << fmt2(py(t.marker_y) - 8)
       << "\" font-family=\"sans-serif\" font-size=\"11\">peak " << fmt(t.marker_x)
       << "</text>\n";
  }

  // legend
  os << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  for (size_t si = 0; si < t.series.size(); ++si) {
    const double ly = mt + 14 + 16 * static_cast<double>(si);
    os << "<line x1=\"" << fmt2(ml + pw - 150) << "\" y1=\"" << fmt2(ly) << "\" x2=\""
       << fmt2(ml + pw - 128) << "\" y2=\"" << fmt2(ly) << "\" stroke=\"" << series_color(si)
       << "\" stroke-width=\"2\"/>\n"
       << "<text x=\"" << fmt2(ml + pw - 122) << "\" y=\"" << fmt2(ly + 4) << "\">"
       << t.series[si].label << "</text>\n";
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

}  // namespace

const char* to_string(PlotKind k) {
  switch (k) {
    case PlotKind::convergence: return "convergence";
    case PlotKind::beampattern: return "beampattern";
    case PlotKind::sweep: return "sweep";
  }
  return "unknown";
}

PlotTable convergence_table(const algorithms::SolveResult& result, const std::string& label) {
  PlotTable t;
  t.kind = PlotKind::convergence;
  t.x_label = "iteration";
  t.y_label = "crb_db";
  PlotSeries s;
  s.label = label;
  for (size_t i = 0; i < result.trace.iters.size(); ++i) {
    const double obj = result.trace.iters[i].objective;
    if (!(obj > 0) || !std::isfinite(obj)) continue;
    s.x.push_back(static_cast<double>(i + 1));
    s.y.push_back(10.0 * std::log10(obj));
  }
  if (!s.x.empty()) t.series.push_back(std::move(s));
  return t;
}

PlotTable beampattern_table(const SystemConfig& cfg, const BeamformingSolution& sol,
                            const std::string& label, double step_deg) {
  if (!(step_deg > 0)) throw std::invalid_argument("beampattern_table: need a positive step");
  PlotTable t;
  t.kind = PlotKind::beampattern;
  t.x_label = "angle_deg";
  t.y_label = "gain_db";
  const int n = static_cast<int>(std::lround(180.0 / step_deg)) + 1;
  RVec thetas(n);
  for (int i = 0; i < n; ++i) thetas(i) = (-90.0 + i * step_deg) * kPi / 180.0;
  const RVec gains = beampattern(sol.r_s, thetas, cfg.element_spacing);
  PlotSeries s;
  s.label = label;
  int imax = -1;
  for (int i = 0; i < n; ++i) {
    if (!(gains(i) > 0)) continue;  // zero covariance direction: no dB value
    s.x.push_back(-90.0 + i * step_deg);
    s.y.push_back(10.0 * std::log10(gains(i)));
    if (imax < 0 || s.y.back() > s.y[static_cast<size_t>(imax)]) {
      imax = static_cast<int>(s.y.size()) - 1;
    }
  }
  if (!s.x.empty()) {
    t.has_marker = true;
    t.marker_x = s.x[static_cast<size_t>(imax)];
    t.marker_y = s.y[static_cast<size_t>(imax)];
    t.series.push_back(std::move(s));
  }
  return t;
}

PlotTable sweep_plot_table(const SweepTable& table) {
  PlotTable t;
  t.kind = PlotKind::sweep;
  t.x_label = to_string(table.spec.param);
  t.y_label = "crb_db";
  const std::vector<SweepSummary> sums = summarize(table);
  for (const std::string& algo : table.spec.algorithms) {
    PlotSeries s;
    s.label = algo;
    for (const SweepSummary& sm : sums) {
      if (sm.algorithm != algo || sm.n_ok == 0 || !std::isfinite(sm.crb_db_mean)) continue;
      s.x.push_back(sm.value);
      s.y.push_back(sm.crb_db_mean);
      s.yerr.push_back(sm.crb_db_std);
    }
    if (!s.x.empty()) t.series.push_back(std::move(s));
  }
  return t;
}

std::string plot_csv(const PlotTable& t) {
  std::ostringstream os;
  os << "kind,series,x_label,y_label,x,y,yerr\n";
  for (const PlotSeries& s : t.series) {
    for (size_t i = 0; i < s.x.size(); ++i) {
      os << to_string(t.kind) << ',' << s.label << ',' << t.x_label << ',' << t.y_label << ','
         << fmt(s.x[i]) << ',' << fmt(s.y[i]) << ','
         << (s.yerr.empty() ? "" : fmt(s.yerr[i])) << '\n';
    }
  }
  return os.str();
}

void export_plot(const PlotTable& table, const std::string& out_base) {
  validate_table(table);
  const std::string csv = plot_csv(table);
  const std::string svg = render_svg(table);
  const std::string csv_path = out_base + ".csv";
  const std::string svg_path = out_base + ".svg";
  {
    std::ofstream f(csv_path, std::ios::binary);
    if (!f) throw std::runtime_error("export_plot: cannot write " + csv_path);
    f << csv;
    if (!f.good()) throw std::runtime_error("export_plot: write failed for " + csv_path);
  }
  std::ofstream f(svg_path, std::ios::binary);
  if (!f) {
    std::remove(csv_path.c_str());  // no partial exports
    throw std::runtime_error("export_plot: cannot write " + svg_path);
  }
  f << svg;
  if (!f.good()) {
    f.close();
    std::remove(csv_path.c_str());
    std::remove(svg_path.c_str());
    throw std::runtime_error("export_plot: write failed for " + svg_path);
  }
}

}  // namespace iscc::bench
