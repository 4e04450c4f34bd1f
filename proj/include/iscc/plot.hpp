#ifndef ISCC_PLOT_HPP
#define ISCC_PLOT_HPP

#include <string>
#include <vector>

#include "iscc/algorithms.hpp"
#include "iscc/bench.hpp"
#include "iscc/metrics.hpp"
#include "iscc/scenario.hpp"

/**
 * Static artifact export: every plot is a plain CSV plus a self-contained SVG
 * (no external renderer). CRB and beam gain are reported in dB, angles in
 * degrees. Schemas are documented in docs/csv-schemas.md.
 */
namespace iscc::bench {

enum class PlotKind { convergence, beampattern, sweep };
const char* to_string(PlotKind k);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> yerr;  ///< optional; empty or one entry per point
};

struct PlotTable {
  PlotKind kind = PlotKind::sweep;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
  bool has_marker = false;  ///< beampattern main-lobe marker
  double marker_x = 0.0;
  double marker_y = 0.0;
};

/// Objective trace of one solve: x = outer iteration, y = CRB in dB.
PlotTable convergence_table(const algorithms::SolveResult& result, const std::string& label);

/// Transmit beampattern of a solution over [-90, 90] degrees; y in dB. The
/// main-lobe marker is placed at the sampled argmax.
PlotTable beampattern_table(const SystemConfig& cfg, const BeamformingSolution& sol,
                            const std::string& label, double step_deg = 0.1);

/// Seed-averaged CRB (dB) versus the swept value, one series per algorithm,
/// std across seeds as the error bar.
PlotTable sweep_plot_table(const SweepTable& table);

/**
 * Writes out_base + ".csv" and out_base + ".svg". The table is validated
 * first (at least one nonempty series, consistent lengths) and an invalid
 * table raises std::invalid_argument before any file is created; I/O
 * failures raise std::runtime_error naming the offending path.
 */
void export_plot(const PlotTable& table, const std::string& out_base);

/// The CSV body export_plot writes (exposed for golden-file tests).
std::string plot_csv(const PlotTable& table);

}  // namespace iscc::bench

#endif  // ISCC_PLOT_HPP
