#include "iscc/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "iscc/errors.hpp"
#include "iscc/mcval.hpp"

namespace iscc::bench {

namespace {

using algorithms::AlgoStatus;
using algorithms::AlgoTrace;
using algorithms::IterRecord;
using algorithms::SolveOptions;
using algorithms::SolveResult;
namespace ad = iscc::algorithms::detail;

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

CMat hermitize(const CMat& m) { return 0.5 * (m + m.adjoint()); }

SystemConfig apply_param(const SystemConfig& base, SweepParam p, double v) {
  SystemConfig cfg = base;
  switch (p) {
    case SweepParam::n_users: {
      cfg.n_users = static_cast<int>(std::llround(v));
      const double pad = cfg.sinr_thresholds.empty() ? 100.0 : cfg.sinr_thresholds.back();
      cfg.sinr_thresholds.resize(static_cast<size_t>(cfg.n_users), pad);
      break;
    }
    case SweepParam::power_budget:
      cfg.power_budget_w = v;
      break;
    case SweepParam::sinr_threshold:
      std::fill(cfg.sinr_thresholds.begin(), cfg.sinr_thresholds.end(), v);
      break;
    case SweepParam::rate_min:
      cfg.rate_min_bps = v;
      break;
  }
  cfg.validate();
  return cfg;
}

/// First k users of a larger channel draw, with the server entry kept last.
/// Shrinking a draw instead of redrawing keeps the k-user scenario nested in
/// the (k+1)-user one, so per-seed trends across a user-count sweep reflect
/// the added constraint and not a fresh channel realization.
ChannelSet slice_channels(const ChannelSet& full, int k) {
  const size_t n = full.h.size();
  ChannelSet out;
  out.alpha = full.alpha;
  out.h.assign(full.h.begin(), full.h.begin() + k);
  out.h.push_back(full.h[n - 1]);
  out.q.assign(full.q.begin(), full.q.begin() + k);
  out.q.push_back(full.q[n - 1]);
  out.positions.assign(full.positions.begin(), full.positions.begin() + k);
  out.positions.push_back(full.positions[n - 1]);
  return out;
}

SolveResult infeasible_result(TargetMode mode, bool numerical) {
  SolveResult r;
  r.status = numerical ? AlgoStatus::numerical_limit : AlgoStatus::infeasible;
  r.trace.status = r.status;
  r.report.mode = mode;
  r.report.feasible = false;
  r.report.crb_value = kInf;
  r.report.crb_db = kInf;
  return r;
}

/// Computation met by the offload link alone: one exact conic solve of the
/// joint design at f = 0 (the offload requirement is linear at fixed f),
/// finished through the regular recovery path.
SolveResult solve_offloading_only(const SystemConfig& cfg, const ChannelSet& ch,
                                  TargetMode mode, const SolveOptions& opt) {
  const ad::Inputs in = ad::make_inputs(cfg, ch, opt);
  AlgoTrace trace;
  if (mode == TargetMode::point) {
    const ad::PointSub sub = ad::solve_point_fixed(in, 0.0, nullptr, nullptr, nullptr);
    if (!sub.feasible) return infeasible_result(mode, sub.numerical);
    IterRecord rec;
    rec.objective = sub.crb;
    rec.f_hz = 0.0;
    rec.conic_iterations = sub.iterations;
    rec.slacks = ad::relaxed_slacks(in, sub.w, nullptr, 0.0);
    trace.iters.push_back(std::move(rec));
    return ad::finalize_point(in, sub, 0.0, trace, AlgoStatus::converged);
  }
  const ad::ExtSub sub = ad::solve_ext_joint(in, 0.0, nullptr, nullptr);
  if (!sub.feasible) return infeasible_result(mode, sub.numerical);
  CMat wr = sub.r_s;
  for (const CMat& wi : sub.w) wr -= wi;
  wr = hermitize(wr);
  IterRecord rec;
  rec.objective = sub.crb;
  rec.f_hz = 0.0;
  rec.conic_iterations = sub.iterations;
  rec.slacks = ad::relaxed_slacks(in, sub.w, &wr, 0.0);
  trace.iters.push_back(std::move(rec));
  return ad::finalize_extended(in, sub, 0.0, trace, AlgoStatus::converged);
}

/// Computation met by local processing alone: the offload beam is pinned to
/// zero and the CPU frequency to the smallest value meeting the rate floor
/// (any more only burns transmit budget). Infeasible when even f_max cannot
/// process rate_min.
SolveResult solve_local_only(const SystemConfig& cfg, const ChannelSet& ch, TargetMode mode,
                             const SolveOptions& opt) {
  const double f_need = cfg.cycles_per_bit * cfg.rate_min_bps;
  if (f_need > cfg.f_max_hz * (1.0 + 1e-12)) return infeasible_result(mode, false);
  // Nudge above the exact requirement so the (vacuous) offload row is dropped
  // rather than kept with a roundoff-sized threshold the zero beam cannot meet.
  const double f_hz = std::min(cfg.f_max_hz, f_need * (1.0 + 1e-9));
  const ad::Inputs in = ad::make_inputs(cfg, ch, opt);
  const CMat wp0 = CMat::Zero(cfg.m_tx, cfg.m_tx);
  AlgoTrace trace;
  if (mode == TargetMode::point) {
    const ad::PointSub sub = ad::solve_point_fixed(in, f_hz, nullptr, &wp0, nullptr);
    if (!sub.feasible) return infeasible_result(mode, sub.numerical);
    IterRecord rec;
    rec.objective = sub.crb;
    rec.f_hz = f_hz;
    rec.conic_iterations = sub.iterations;
    rec.slacks = ad::relaxed_slacks(in, sub.w, nullptr, f_hz);
    trace.iters.push_back(std::move(rec));
    return ad::finalize_point(in, sub, f_hz, trace, AlgoStatus::converged);
  }
  const ad::ExtSub sub = ad::solve_ext_joint(in, f_hz, &wp0, nullptr);
  if (!sub.feasible) return infeasible_result(mode, sub.numerical);
  CMat wr = sub.r_s;
  for (const CMat& wi : sub.w) wr -= wi;
  wr = hermitize(wr);
  IterRecord rec;
  rec.objective = sub.crb;
  rec.f_hz = f_hz;
  rec.conic_iterations = sub.iterations;
  rec.slacks = ad::relaxed_slacks(in, sub.w, &wr, f_hz);
  trace.iters.push_back(std::move(rec));
  return ad::finalize_extended(in, sub, f_hz, trace, AlgoStatus::converged);
}

SolveResult run_full(const SystemConfig& cfg, const ChannelSet& ch, TargetMode mode,
                     const std::string& algo, const SolveOptions& opt) {
  if (algo == "ao") {
    return mode == TargetMode::point ? algorithms::solve_point_ao(cfg, ch, opt)
                                     : algorithms::solve_extended_ao(cfg, ch, opt);
  }
  if (algo == "sca" || algo == "sdr_bound") {
    return mode == TargetMode::point ? algorithms::solve_point_sca(cfg, ch, opt)
                                     : algorithms::solve_extended_sca(cfg, ch, opt);
  }
  if (algo == "nocomm") {
    return mode == TargetMode::point ? algorithms::solve_point_nocomm(cfg, ch, opt)
                                     : algorithms::solve_extended_nocomm(cfg, ch, opt);
  }
  if (algo == "offloading_only") return solve_offloading_only(cfg, ch, mode, opt);
  if (algo == "local_only") return solve_local_only(cfg, ch, mode, opt);
  throw std::invalid_argument("unknown algorithm '" + algo + "'");
}

bool solver_ok(AlgoStatus s) {
  return s == AlgoStatus::converged || s == AlgoStatus::iteration_limit;
}

std::string sanitize_csv_field(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

SweepTable run_sweep_impl(const SweepSpec& spec, bool parallel) {
  spec.validate();
  const int nv = static_cast<int>(spec.values.size());
  const int na = static_cast<int>(spec.algorithms.size());
  const int ns = spec.n_seeds;

  // Channels are drawn once per seed at the largest user count the sweep
  // touches and sliced per cell, so every value/algorithm column sees the
  // same realization and per-seed comparisons are paired.
  SystemConfig master_cfg = spec.base;
  if (spec.param == SweepParam::n_users) {
    const double vmax = std::max(spec.values.front(), spec.values.back());
    master_cfg = apply_param(spec.base, SweepParam::n_users, vmax);
  }
  std::vector<std::uint64_t> seeds(ns);
  std::vector<ChannelSet> master(ns);
  for (int si = 0; si < ns; ++si) {
    seeds[si] = mcval::derive_seed(spec.base_seed, static_cast<std::uint64_t>(si));
    master[si] = generate_channels(master_cfg, seeds[si]);
  }

  SweepTable table;
  table.spec = spec;
  table.cells.resize(static_cast<size_t>(nv) * na * ns);

  auto run_cell = [&](int idx) {
    const int vi = idx / (na * ns);
    const int ai = (idx / ns) % na;
    const int si = idx % ns;
    SweepCell& cell = table.cells[static_cast<size_t>(idx)];
    cell.value = spec.values[static_cast<size_t>(vi)];
    cell.algorithm = spec.algorithms[static_cast<size_t>(ai)];
    cell.seed_index = si;
    cell.channel_seed = seeds[static_cast<size_t>(si)];
    cell.crb = kNan;
    cell.crb_db = kNan;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const SystemConfig cfg = apply_param(spec.base, spec.param, cell.value);
      const ChannelSet ch = slice_channels(master[static_cast<size_t>(si)], cfg.n_users);
      const SolveResult r = run_full(cfg, ch, spec.mode, cell.algorithm, spec.options);
      cell.status = algorithms::to_string(r.status);
      cell.iterations = static_cast<int>(r.trace.iters.size());
      cell.relaxed_crb = r.relaxed_crb;
      if (solver_ok(r.status)) {
        if (cell.algorithm == "sdr_bound") {
          // The bound is not a recovered solution; there is nothing to
          // re-validate, so no solution is stored.
          cell.crb = r.relaxed_crb;
          cell.crb_db = 10.0 * std::log10(r.relaxed_crb);
          cell.feasible = true;
        } else {
          cell.crb = r.report.crb_value;
          cell.crb_db = r.report.crb_db;
          cell.feasible = r.report.feasible;
          cell.f_hz = r.solution.f_hz;
          cell.solution = r.solution;
          cell.has_solution = true;
        }
      }
    } catch (const std::exception& e) {
      cell.status = std::string("error: ") + e.what();
    } catch (...) {
      cell.status = "error: unknown";
    }
    const std::chrono::duration<double, std::milli> dt = std::chrono::steady_clock::now() - t0;
    cell.wall_ms = dt.count();
    if (cell.wall_ms > spec.cell_budget_s * 1e3) cell.status = "numerical_limit";
  };

  const int n_cells = static_cast<int>(table.cells.size());
  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int idx = 0; idx < n_cells; ++idx) run_cell(idx);
  } else {
    for (int idx = 0; idx < n_cells; ++idx) run_cell(idx);
  }
  return table;
}

}  // namespace

const char* to_string(SweepParam p) {
  switch (p) {
    case SweepParam::n_users: return "n_users";
    case SweepParam::power_budget: return "power_budget";
    case SweepParam::sinr_threshold: return "sinr_threshold";
    case SweepParam::rate_min: return "rate_min";
  }
  return "unknown";
}

SweepParam sweep_param_from_string(const std::string& name) {
  if (name == "n_users") return SweepParam::n_users;
  if (name == "power_budget") return SweepParam::power_budget;
  if (name == "sinr_threshold") return SweepParam::sinr_threshold;
  if (name == "rate_min") return SweepParam::rate_min;
  throw std::invalid_argument("unknown sweep parameter '" + name +
                              "' (expected n_users, power_budget, sinr_threshold or rate_min)");
}

const std::vector<std::string>& algorithm_names() {
  static const std::vector<std::string> names{"ao",         "sca",
                                              "nocomm",     "offloading_only",
                                              "local_only", "sdr_bound"};
  return names;
}

bool algorithm_name_valid(const std::string& name) {
  const auto& names = algorithm_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

void SweepSpec::validate() const {
  base.validate();
  if (values.empty()) throw std::invalid_argument("sweep: value list must be nonempty");
  if (values.size() > 1) {
    const bool increasing = values[1] > values[0];
    for (size_t i = 1; i < values.size(); ++i) {
      const bool up = values[i] > values[i - 1];
      if (values[i] == values[i - 1] || up != increasing) {
        throw std::invalid_argument("sweep: values must be strictly monotone");
      }
    }
  }
  if (param == SweepParam::n_users) {
    for (double v : values) {
      if (v < 0 || std::abs(v - std::llround(v)) > 1e-9) {
        throw std::invalid_argument("sweep: user counts must be nonnegative integers");
      }
    }
  }
  if (algorithms.empty()) throw std::invalid_argument("sweep: algorithm list must be nonempty");
  for (const std::string& a : algorithms) {
    if (!algorithm_name_valid(a)) {
      throw std::invalid_argument("sweep: unknown algorithm '" + a + "'");
    }
  }
  if (n_seeds < 1) throw std::invalid_argument("sweep: need at least one seed");
  if (!(cell_budget_s > 0)) throw std::invalid_argument("sweep: cell budget must be positive");
}

SweepTable run_sweep(const SweepSpec& spec) { return run_sweep_impl(spec, true); }

SweepTable run_sweep_serial(const SweepSpec& spec) { return run_sweep_impl(spec, false); }

std::vector<SweepSummary> summarize(const SweepTable& table) {
  const int nv = static_cast<int>(table.spec.values.size());
  const int na = static_cast<int>(table.spec.algorithms.size());
  const int ns = table.spec.n_seeds;
  std::vector<SweepSummary> out;
  out.reserve(static_cast<size_t>(nv) * na);
  for (int vi = 0; vi < nv; ++vi) {
    for (int ai = 0; ai < na; ++ai) {
      SweepSummary s;
      s.value = table.spec.values[static_cast<size_t>(vi)];
      s.algorithm = table.spec.algorithms[static_cast<size_t>(ai)];
      s.n_cells = ns;
      double sum = 0.0, sum_db = 0.0;
      std::vector<double> ok, ok_db;
      for (int si = 0; si < ns; ++si) {
        const SweepCell& c = table.cells[static_cast<size_t>((vi * na + ai) * ns + si)];
        if (c.feasible && std::isfinite(c.crb)) {
          ok.push_back(c.crb);
          ok_db.push_back(c.crb_db);
          sum += c.crb;
          sum_db += c.crb_db;
        }
      }
      s.n_ok = static_cast<int>(ok.size());
      if (s.n_ok > 0) {
        s.crb_mean = sum / s.n_ok;
        s.crb_db_mean = sum_db / s.n_ok;
        double var = 0.0, var_db = 0.0;
        for (int i = 0; i < s.n_ok; ++i) {
          var += (ok[static_cast<size_t>(i)] - s.crb_mean) * (ok[static_cast<size_t>(i)] - s.crb_mean);
          var_db += (ok_db[static_cast<size_t>(i)] - s.crb_db_mean) *
                    (ok_db[static_cast<size_t>(i)] - s.crb_db_mean);
        }
        s.crb_std = s.n_ok > 1 ? std::sqrt(var / (s.n_ok - 1)) : 0.0;
        s.crb_db_std = s.n_ok > 1 ? std::sqrt(var_db / (s.n_ok - 1)) : 0.0;
      } else {
        s.crb_mean = s.crb_std = s.crb_db_mean = s.crb_db_std = kNan;
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

double max_revalidation_error(const SweepTable& table) {
  double worst = 0.0;
  for (const SweepCell& cell : table.cells) {
    if (!cell.has_solution || !std::isfinite(cell.crb)) continue;
    const SystemConfig cfg = apply_param(table.spec.base, table.spec.param, cell.value);
    const ChannelSet master = generate_channels(
        table.spec.param == SweepParam::n_users
            ? apply_param(table.spec.base, SweepParam::n_users,
                          std::max(table.spec.values.front(), table.spec.values.back()))
            : table.spec.base,
        cell.channel_seed);
    const ChannelSet ch = slice_channels(master, cfg.n_users);
    const CrbReport rep = evaluate_solution(cfg, ch, SteeringBundle::at(cfg), cell.solution,
                                            table.spec.mode);
    const double rel =
        std::abs(rep.crb_value - cell.crb) / std::max(std::abs(cell.crb), 1e-300);
    worst = std::max(worst, rel);
  }
  return worst;
}

std::string sweep_csv(const SweepTable& table) {
  std::ostringstream os;
  os << "param,value,algorithm,seed_index,channel_seed,status,feasible,crb,crb_db,"
        "relaxed_crb,iterations,f_hz\n";
  for (const SweepCell& c : table.cells) {
    os << to_string(table.spec.param) << ',' << fmt(c.value) << ',' << c.algorithm << ','
       << c.seed_index << ',' << c.channel_seed << ',' << sanitize_csv_field(c.status) << ','
       << (c.feasible ? 1 : 0) << ',' << fmt(c.crb) << ',' << fmt(c.crb_db) << ','
       << fmt(c.relaxed_crb) << ',' << c.iterations << ',' << fmt(c.f_hz) << '\n';
  }
  return os.str();
}

CrbReport run_baseline(const std::string& name, const SystemConfig& cfg, const ChannelSet& ch,
                       TargetMode mode, const algorithms::SolveOptions& opt) {
  cfg.validate();
  if (name == "offloading_only") return solve_offloading_only(cfg, ch, mode, opt).report;
  if (name == "local_only") return solve_local_only(cfg, ch, mode, opt).report;
  if (name != "sdr_bound") {
    throw std::invalid_argument(
        "unknown baseline '" + name +
        "' (expected offloading_only, local_only or sdr_bound)");
  }
  const SolveResult r = run_full(cfg, ch, mode, "sdr_bound", opt);
  CrbReport rep;
  rep.mode = mode;
  if (!solver_ok(r.status) || r.trace.iters.empty()) {
    rep.feasible = false;
    rep.crb_value = kInf;
    rep.crb_db = kInf;
    return rep;
  }
  rep.crb_value = r.relaxed_crb;
  rep.crb_db = 10.0 * std::log10(r.relaxed_crb);
  rep.feasible = true;
  // Slacks of the relaxed iterate the bound belongs to, in the same shape the
  // metrics module reports for recovered solutions.
  const IterRecord& last = r.trace.iters.back();
  const size_t k = cfg.sinr_thresholds.size();
  for (size_t i = 0; i < last.slacks.size(); ++i) {
    ConstraintSlack cs;
    cs.slack = last.slacks[i];
    if (i < k) {
      cs.name = "sinr_user_" + std::to_string(i);
      cs.value = cs.slack + cfg.sinr_thresholds[i];
    } else if (i == k) {
      cs.name = "process_rate";
      cs.value = cs.slack + cfg.rate_min_bps;
    } else {
      cs.name = "power";
      cs.value = cfg.power_budget_w - cs.slack;
    }
    rep.slacks.push_back(std::move(cs));
  }
  return rep;
}

}  // namespace iscc::bench
