#ifndef ISCC_BENCH_HPP
#define ISCC_BENCH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "iscc/algorithms.hpp"
#include "iscc/metrics.hpp"
#include "iscc/scenario.hpp"

/**
 * Seeded experiment sweeps and reference baselines.
 *
 * A sweep varies one scenario parameter over a value list and solves every
 * (value, algorithm, seed) cell. Cells are independent, so they run on an
 * OpenMP work pool; results land in spec order and the per-cell channel seeds
 * are derived ahead of time, so thread scheduling never changes a number.
 * A serial reference runner with identical semantics is kept for testing.
 */
namespace iscc::bench {

/// Scenario parameter a sweep varies.
enum class SweepParam { n_users, power_budget, sinr_threshold, rate_min };

const char* to_string(SweepParam p);
/// Inverse of to_string; throws std::invalid_argument for unknown names.
SweepParam sweep_param_from_string(const std::string& name);

/// Solver names accepted in sweeps and on the command line.
/// "ao" / "sca" are the full designs, "nocomm" the sensing-only design
/// (requires all SINR thresholds zero), and "offloading_only", "local_only",
/// "sdr_bound" the reference baselines.
const std::vector<std::string>& algorithm_names();
bool algorithm_name_valid(const std::string& name);

struct SweepSpec {
  SystemConfig base = SystemConfig::desk_default();
  TargetMode mode = TargetMode::point;
  SweepParam param = SweepParam::power_budget;
  std::vector<double> values;                    ///< nonempty, strictly monotone
  std::vector<std::string> algorithms{"ao", "sca"};
  int n_seeds = 10;
  std::uint64_t base_seed = 1;
  double cell_budget_s = 120.0;  ///< cells slower than this are marked numerical_limit
  algorithms::SolveOptions options;

  /// Throws std::invalid_argument on any violated invariant (empty or
  /// non-monotone values, unknown algorithm, non-integer user counts, ...).
  void validate() const;
};

/// One solved (value, algorithm, seed) combination.
struct SweepCell {
  double value = 0.0;
  std::string algorithm;
  int seed_index = 0;
  std::uint64_t channel_seed = 0;
  /// converged / iteration_limit / infeasible / numerical_limit / "error: ..."
  std::string status;
  bool feasible = false;
  double crb = 0.0;     ///< NaN when no solution was produced
  double crb_db = 0.0;  ///< 10 log10(crb)
  double relaxed_crb = 0.0;
  int iterations = 0;   ///< outer iterations spent
  double f_hz = 0.0;
  double wall_ms = 0.0;  ///< recorded for reporting; never exported to CSV
  /// Recovered solution, kept so the reported CRB can be re-validated against
  /// a metrics-module recomputation. Absent for bound-only and failed cells.
  bool has_solution = false;
  BeamformingSolution solution;
};

/// Mean/std aggregate of one (value, algorithm) column across seeds.
struct SweepSummary {
  double value = 0.0;
  std::string algorithm;
  int n_cells = 0;
  int n_ok = 0;  ///< feasible cells with a finite CRB
  double crb_mean = 0.0;
  double crb_std = 0.0;
  double crb_db_mean = 0.0;
  double crb_db_std = 0.0;
};

struct SweepTable {
  SweepSpec spec;
  /// Value-major, then algorithm, then seed: the order the spec enumerates.
  std::vector<SweepCell> cells;
};

/// Runs every cell of the sweep on an OpenMP pool. Per-cell failures are
/// recorded in the cell status and never abort the sweep.
SweepTable run_sweep(const SweepSpec& spec);
/// Serial reference with identical results (up to wall_ms).
SweepTable run_sweep_serial(const SweepSpec& spec);

/// Seed aggregates in cell order (value-major, then algorithm).
std::vector<SweepSummary> summarize(const SweepTable& table);

/// Largest relative disagreement between a stored CRB and its recomputation
/// from the stored solution, over all cells that carry one.
double max_revalidation_error(const SweepTable& table);

/// Deterministic CSV of the per-cell results (schema documented in
/// docs/csv-schemas.md; wall-clock times are deliberately not included).
std::string sweep_csv(const SweepTable& table);

/// Reference designs the full algorithms are compared against:
///  - "offloading_only": CPU frequency pinned to 0, the computation
///    requirement met by the offload link alone;
///  - "local_only": offload beam pinned to zero, the requirement met by local
///    computing alone (infeasible when f_max / cycles_per_bit < rate_min);
///  - "sdr_bound": the relaxed objective of the full design before rank-one
///    recovery, a lower bound on any achievable CRB.
/// Throws std::invalid_argument for any other name.
CrbReport run_baseline(const std::string& name, const SystemConfig& cfg, const ChannelSet& ch,
                       TargetMode mode = TargetMode::point,
                       const algorithms::SolveOptions& opt = {});

}  // namespace iscc::bench

#endif  // ISCC_BENCH_HPP
