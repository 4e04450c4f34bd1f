// Command-line front end: solve one scenario, run parameter sweeps, export
// beampatterns, validate the bounds by Monte Carlo, and compare baselines.
// Every artifact is a CSV (schemas in docs/csv-schemas.md) plus, for plots, a
// self-contained SVG.

#include <CLI11.hpp>

#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "iscc/algorithms.hpp"
#include "iscc/bench.hpp"
#include "iscc/mcval.hpp"
#include "iscc/metrics.hpp"
#include "iscc/plot.hpp"
#include "iscc/scenario.hpp"

namespace {

using iscc::BeamformingSolution;
using iscc::ChannelSet;
using iscc::CrbReport;
using iscc::SystemConfig;
using iscc::TargetMode;
using iscc::algorithms::SolveOptions;
using iscc::algorithms::SolveResult;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// Options shared by every subcommand: scenario source, seed, output dir.
struct CommonArgs {
  std::string config_path;
  bool paper_scale = false;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  auto* config = cmd->add_option("--config", args.config_path,
                                 "Scenario file (key = value lines; keys are the "
                                 "SystemConfig field names, _dbm/_db variants accepted)")
                     ->check(CLI::ExistingFile);
  cmd->add_flag("--paper-scale", args.paper_scale,
                "Full-size scenario (16 tx / 20 rx antennas, 20 dB SINR) "
                "instead of the desk-scale default")
      ->excludes(config);
  cmd->add_option("--seed", args.seed, "Base seed for channels / trials / sweeps");
  cmd->add_option("--out", args.out_dir, "Artifact output directory (created if absent)");
}

SystemConfig load_config(const CommonArgs& args) {
  if (!args.config_path.empty()) return SystemConfig::from_file(args.config_path);
  return args.paper_scale ? SystemConfig::paper_default() : SystemConfig::desk_default();
}

void add_solver_options(CLI::App* cmd, SolveOptions& opt) {
  cmd->add_option("--tol-obj", opt.tol_obj, "Relative objective tolerance of the outer loop");
  cmd->add_option("--max-outer", opt.max_outer, "Outer iteration cap");
  cmd->add_option("--f-search-tol", opt.f_search_tol,
                  "Golden-section tolerance over the CPU frequency [Hz]");
  std::map<std::string, SolveOptions::ScaInit> inits{
      {"feasibility", SolveOptions::ScaInit::feasibility},
      {"ao-pass", SolveOptions::ScaInit::ao_pass}};
  cmd->add_option("--sca-init", opt.sca_init, "SCA expansion-point initialization")
      ->transform(CLI::CheckedTransformer(inits, CLI::ignore_case));
  cmd->add_option("--rank-tol", opt.rank_tol, "lambda2/lambda1 rank-one certification bound");
  cmd->add_flag("--force-sdp", opt.force_sdp,
                "Sensing-only design: always take the SDP path, never the closed form");
  cmd->add_option("--sinr-margin", opt.sinr_margin, "Relative tightening of SINR/rate rows");
  cmd->add_option("--power-margin", opt.power_margin, "Relative tightening of the power budget");
  cmd->add_option("--conic-tol-feas", opt.conic.tol_feas, "Interior-point feasibility tolerance");
  cmd->add_option("--conic-tol-gap", opt.conic.tol_gap, "Interior-point duality-gap tolerance");
}

/// Solver registry: the names accepted by `solve` and `beampattern`.
const std::vector<std::string>& solver_names() {
  static const std::vector<std::string> names{"point-ao", "point-sca", "ext-ao", "ext-sca",
                                              "nocomm", "ext-nocomm"};
  return names;
}

SolveResult run_named_solver(const std::string& name, const SystemConfig& cfg,
                             const ChannelSet& ch, const SolveOptions& opt) {
  if (name == "point-ao") return iscc::algorithms::solve_point_ao(cfg, ch, opt);
  if (name == "point-sca") return iscc::algorithms::solve_point_sca(cfg, ch, opt);
  if (name == "ext-ao") return iscc::algorithms::solve_extended_ao(cfg, ch, opt);
  if (name == "ext-sca") return iscc::algorithms::solve_extended_sca(cfg, ch, opt);
  if (name == "nocomm") return iscc::algorithms::solve_point_nocomm(cfg, ch, opt);
  if (name == "ext-nocomm") return iscc::algorithms::solve_extended_nocomm(cfg, ch, opt);
  throw std::invalid_argument("unknown solver '" + name + "'");
}

std::filesystem::path prepare_out_dir(const CommonArgs& args) {
  std::filesystem::path dir(args.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir.string() + "'");
  return dir;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os || !(os << content) || !os.flush())
    throw std::runtime_error("cannot write '" + path.string() + "'");
}

/// Constraint-slack audit of a report (exact metric re-evaluations).
std::string report_csv(const CrbReport& report) {
  std::string out = "name,value,slack\n";
  for (const auto& s : report.slacks)
    out += s.name + "," + fmt(s.value) + "," + fmt(s.slack) + "\n";
  return out;
}

void print_report(const CrbReport& report) {
  std::printf("crb        %s  (%.2f dB)\n", fmt(report.crb_value).c_str(), report.crb_db);
  std::printf("mode       %s\n", report.mode == TargetMode::point ? "point" : "extended");
  std::printf("feasible   %s\n", report.feasible ? "yes" : "no");
  std::printf("%-14s %16s %16s\n", "constraint", "value", "slack");
  for (const auto& s : report.slacks)
    std::printf("%-14s %16s %16s\n", s.name.c_str(), fmt(s.value).c_str(), fmt(s.slack).c_str());
}

/// Direct beampattern export (theta_deg, gain_db) next to the plot artifact.
std::string pattern_csv(const SystemConfig& cfg, const BeamformingSolution& sol,
                        double step_deg) {
  const double deg = M_PI / 180.0;
  const int n = static_cast<int>(std::lround(180.0 / step_deg)) + 1;
  iscc::RVec thetas(n);
  for (int i = 0; i < n; ++i) thetas[i] = (-90.0 + i * step_deg) * deg;
  const iscc::RVec gains = iscc::beampattern(sol.r_s, thetas, cfg.element_spacing);
  std::string out = "theta_deg,gain_db\n";
  for (int i = 0; i < n; ++i)
    out += fmt(thetas[i] / deg) + "," + fmt(10.0 * std::log10(std::max(gains[i], 1e-300))) + "\n";
  return out;
}

int cmd_solve(const CommonArgs& args, const std::string& solver, const SolveOptions& opt,
              double step_deg) {
  const SystemConfig cfg = load_config(args);
  const ChannelSet ch = iscc::generate_channels(cfg, args.seed);
  const SolveResult res = run_named_solver(solver, cfg, ch, opt);

  std::printf("solver     %s\n", solver.c_str());
  std::printf("scenario   %016" PRIx64 "  (seed %" PRIu64 ")\n", cfg.hash(), args.seed);
  std::printf("status     %s\n", iscc::algorithms::to_string(res.status));
  if (res.status == iscc::algorithms::AlgoStatus::infeasible) {
    std::printf("the constraint set admits no transmit design at this budget\n");
    return 2;
  }
  std::printf("iterations %zu\n", res.trace.iters.size());
  std::printf("f_hz       %s\n", fmt(res.solution.f_hz).c_str());
  std::printf("bound      %s  (relaxed objective)\n", fmt(res.relaxed_crb).c_str());
  if (!res.rank_ratios.empty()) {
    double worst = 0.0;
    for (double r : res.rank_ratios) worst = std::max(worst, r);
    std::printf("rank       worst lambda2/lambda1 = %s\n", fmt(worst).c_str());
  }
  print_report(res.report);

  const auto dir = prepare_out_dir(args);
  write_file(dir / "report.csv", report_csv(res.report));
  iscc::bench::export_plot(iscc::bench::convergence_table(res, solver),
                           (dir / "convergence").string());
  iscc::bench::export_plot(iscc::bench::beampattern_table(cfg, res.solution, solver, step_deg),
                           (dir / "beampattern").string());
  write_file(dir / "solve_pattern.csv", pattern_csv(cfg, res.solution, step_deg));
  std::printf("artifacts  %s: report.csv, convergence.{csv,svg}, beampattern.{csv,svg}, "
              "solve_pattern.csv\n",
              dir.string().c_str());
  return res.report.feasible ? 0 : 1;
}

int cmd_sweep(const CommonArgs& args, iscc::bench::SweepSpec spec, bool serial) {
  spec.base = load_config(args);
  spec.base_seed = args.seed;
  const iscc::bench::SweepTable table =
      serial ? iscc::bench::run_sweep_serial(spec) : iscc::bench::run_sweep(spec);

  std::printf("%-14s %-16s %6s %10s %10s\n", "value", "algorithm", "ok", "crb_db", "std_db");
  for (const auto& s : iscc::bench::summarize(table)) {
    std::printf("%-14s %-16s %3d/%-2d %10.3f %10.3f\n", fmt(s.value).c_str(),
                s.algorithm.c_str(), s.n_ok, s.n_cells, s.crb_db_mean, s.crb_db_std);
  }
  std::printf("revalidation: max |crb - recomputed| / crb = %s\n",
              fmt(iscc::bench::max_revalidation_error(table)).c_str());

  const auto dir = prepare_out_dir(args);
  write_file(dir / "sweep.csv", iscc::bench::sweep_csv(table));
  try {
    iscc::bench::export_plot(iscc::bench::sweep_plot_table(table), (dir / "sweep_plot").string());
    std::printf("artifacts  %s: sweep.csv, sweep_plot.{csv,svg}\n", dir.string().c_str());
  } catch (const std::invalid_argument&) {
    std::printf("artifacts  %s: sweep.csv (no feasible cells, plot skipped)\n",
                dir.string().c_str());
  }
  return 0;
}

int cmd_beampattern(const CommonArgs& args, const std::string& solver, const SolveOptions& opt,
                    double step_deg) {
  const SystemConfig cfg = load_config(args);
  const ChannelSet ch = iscc::generate_channels(cfg, args.seed);
  const SolveResult res = run_named_solver(solver, cfg, ch, opt);
  if (res.status == iscc::algorithms::AlgoStatus::infeasible) {
    std::printf("infeasible scenario: no beampattern to export\n");
    return 2;
  }
  const auto table = iscc::bench::beampattern_table(cfg, res.solution, solver, step_deg);
  std::printf("peak       %.2f deg at %.2f dB (target at %.2f deg)\n", table.marker_x,
              table.marker_y, cfg.target_angle_rad * 180.0 / M_PI);

  const auto dir = prepare_out_dir(args);
  write_file(dir / "beampattern.csv", pattern_csv(cfg, res.solution, step_deg));
  iscc::bench::export_plot(table, (dir / "beampattern_plot").string());
  std::printf("artifacts  %s: beampattern.csv, beampattern_plot.{csv,svg}\n",
              dir.string().c_str());
  return 0;
}

int cmd_validate_crb(const CommonArgs& args, TargetMode mode, int trials, double step_deg,
                     const SolveOptions& opt) {
  const SystemConfig cfg = load_config(args);
  const ChannelSet ch = iscc::generate_channels(cfg, args.seed);

  // Validate the bound where it matters: at the optimized transmit design.
  const SolveResult res = mode == TargetMode::point
                              ? iscc::algorithms::solve_point_sca(cfg, ch, opt)
                              : iscc::algorithms::solve_extended_sca(cfg, ch, opt);
  if (res.status == iscc::algorithms::AlgoStatus::infeasible)
    throw std::runtime_error("scenario infeasible: nothing to validate");

  iscc::mcval::TrialBatch batch;
  if (mode == TargetMode::point) {
    const double deg = M_PI / 180.0;
    const auto grid = iscc::mcval::make_theta_grid(-90.0 * deg, 90.0 * deg, step_deg * deg);
    batch = iscc::mcval::mle_crb_batch(cfg, ch.alpha, res.solution.r_s, grid, 1e-6, trials,
                                       args.seed);
  } else {
    // The response-matrix bound is waveform-driven; any fixed response works.
    // A three-scatterer spread around the nominal angle keeps the echo physical.
    const std::vector<iscc::Scatterer> scat{{ch.alpha, cfg.target_angle_rad - 0.15},
                                            {ch.alpha, cfg.target_angle_rad},
                                            {ch.alpha, cfg.target_angle_rad + 0.15}};
    const iscc::CMat g =
        iscc::target_response_extended(scat, cfg.m_tx, cfg.m_rx, cfg.element_spacing);
    batch = iscc::mcval::ls_crb_batch(g, res.solution.r_s, cfg.n_symbols, cfg.noise_sense_w,
                                      trials, args.seed);
  }

  char row[256];
  std::snprintf(row, sizeof row, "%016" PRIx64 ",%s,%d,%" PRIu64 ",%s,%s,%s\n", cfg.hash(),
                mode == TargetMode::point ? "point" : "extended", batch.n_trials, batch.seed,
                fmt(batch.crb).c_str(), fmt(batch.mse).c_str(), fmt(batch.ratio).c_str());
  const std::string csv = std::string("scenario_hash,mode,n_trials,seed,crb,mse,ratio\n") + row;
  std::fputs(csv.c_str(), stdout);

  const auto dir = prepare_out_dir(args);
  write_file(dir / "validate_crb.csv", csv);
  // The bound claims MSE >= CRB for unbiased estimators; flag a violation
  // beyond sampling slack as a hard failure.
  return batch.ratio >= 0.95 ? 0 : 1;
}

int cmd_baselines(const CommonArgs& args, TargetMode mode, const SolveOptions& opt) {
  const SystemConfig cfg = load_config(args);
  const ChannelSet ch = iscc::generate_channels(cfg, args.seed);

  std::string csv = "name,feasible,crb,crb_db\n";
  std::printf("%-16s %8s %16s %10s\n", "design", "feasible", "crb", "crb_db");
  auto emit = [&](const std::string& name, const CrbReport& report) {
    csv += name + "," + (report.feasible ? "1" : "0") + "," + fmt(report.crb_value) + "," +
           fmt(report.crb_db) + "\n";
    std::printf("%-16s %8s %16s %10.3f\n", name.c_str(), report.feasible ? "yes" : "no",
                fmt(report.crb_value).c_str(), report.crb_db);
  };

  emit("sca", (mode == TargetMode::point ? iscc::algorithms::solve_point_sca(cfg, ch, opt)
                                         : iscc::algorithms::solve_extended_sca(cfg, ch, opt))
                  .report);
  emit("ao", (mode == TargetMode::point ? iscc::algorithms::solve_point_ao(cfg, ch, opt)
                                        : iscc::algorithms::solve_extended_ao(cfg, ch, opt))
                 .report);
  for (const char* name : {"offloading_only", "local_only", "sdr_bound"})
    emit(name, iscc::bench::run_baseline(name, cfg, ch, mode, opt));

  const auto dir = prepare_out_dir(args);
  write_file(dir / "baselines.csv", csv);
  std::printf("artifacts  %s: baselines.csv\n", dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ISCC beamforming designer: minimize the target-estimation CRB under "
               "SINR, computation-rate, and power constraints"};
  app.require_subcommand(1);
  std::map<std::string, TargetMode> modes{{"point", TargetMode::point},
                                          {"extended", TargetMode::extended}};

  CommonArgs solve_args;
  std::string solve_solver = "point-sca";
  SolveOptions solve_opt;
  double solve_step_deg = 0.1;
  auto* solve = app.add_subcommand("solve", "Optimize one scenario and export its artifacts");
  add_common(solve, solve_args);
  solve->add_option("--solver", solve_solver, "Design algorithm")
      ->check(CLI::IsMember(solver_names()));
  solve->add_option("--step-deg", solve_step_deg, "Beampattern grid spacing [deg]")
      ->check(CLI::PositiveNumber);
  add_solver_options(solve, solve_opt);

  CommonArgs sweep_args;
  iscc::bench::SweepSpec spec;
  std::string sweep_param = "power_budget";
  std::string sweep_mode = "point";
  bool sweep_serial = false;
  auto* sweep = app.add_subcommand("sweep", "Solve a grid of scenarios and aggregate over seeds");
  add_common(sweep, sweep_args);
  sweep->add_option("--param", sweep_param, "Swept scenario parameter")
      ->check(CLI::IsMember({"n_users", "power_budget", "sinr_threshold", "rate_min"}));
  sweep->add_option("--values", spec.values, "Swept values (strictly monotone)")
      ->required()
      ->expected(-1);
  sweep->add_option("--algorithms", spec.algorithms, "Designs to compare")
      ->expected(-1)
      ->check(CLI::IsMember(iscc::bench::algorithm_names()));
  sweep->add_option("--mode", sweep_mode, "Target model")->check(CLI::IsMember({"point",
                                                                                "extended"}));
  sweep->add_option("--seeds", spec.n_seeds, "Channel seeds per cell")->check(CLI::PositiveNumber);
  sweep->add_option("--budget-s", spec.cell_budget_s, "Per-cell wall-clock budget [s]")
      ->check(CLI::PositiveNumber);
  sweep->add_flag("--serial", sweep_serial, "Use the serial reference runner");
  add_solver_options(sweep, spec.options);

  CommonArgs beam_args;
  std::string beam_solver = "point-sca";
  SolveOptions beam_opt;
  double beam_step_deg = 0.1;
  auto* beam = app.add_subcommand("beampattern", "Export the transmit beampattern of a design");
  add_common(beam, beam_args);
  beam->add_option("--solver", beam_solver, "Design algorithm")
      ->check(CLI::IsMember(solver_names()));
  beam->add_option("--step-deg", beam_step_deg, "Grid spacing [deg]")
      ->check(CLI::PositiveNumber);
  add_solver_options(beam, beam_opt);

  CommonArgs val_args;
  TargetMode val_mode = TargetMode::point;
  int val_trials = 200;
  double val_step_deg = 0.1;
  SolveOptions val_opt;
  auto* val = app.add_subcommand(
      "validate-crb", "Monte-Carlo check that the optimized bound is a real MSE floor");
  add_common(val, val_args);
  val->add_option("--mode", val_mode, "Target model")
      ->transform(CLI::CheckedTransformer(modes, CLI::ignore_case));
  val->add_option("--trials", val_trials, "Monte-Carlo trials")->check(CLI::PositiveNumber);
  val->add_option("--step-deg", val_step_deg, "Angle-search grid spacing [deg]")
      ->check(CLI::PositiveNumber);
  add_solver_options(val, val_opt);

  CommonArgs base_args;
  TargetMode base_mode = TargetMode::point;
  SolveOptions base_opt;
  auto* base =
      app.add_subcommand("baselines", "Compare the full designs against reference strategies");
  add_common(base, base_args);
  base->add_option("--mode", base_mode, "Target model")
      ->transform(CLI::CheckedTransformer(modes, CLI::ignore_case));
  add_solver_options(base, base_opt);

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) return cmd_solve(solve_args, solve_solver, solve_opt, solve_step_deg);
    if (sweep->parsed()) {
      spec.param = iscc::bench::sweep_param_from_string(sweep_param);
      spec.mode = sweep_mode == "point" ? TargetMode::point : TargetMode::extended;
      return cmd_sweep(sweep_args, spec, sweep_serial);
    }
    if (beam->parsed()) return cmd_beampattern(beam_args, beam_solver, beam_opt, beam_step_deg);
    if (val->parsed()) return cmd_validate_crb(val_args, val_mode, val_trials, val_step_deg,
                                               val_opt);
    if (base->parsed()) return cmd_baselines(base_args, base_mode, base_opt);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
