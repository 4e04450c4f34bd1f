#include "iscc/algorithms.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "iscc/errors.hpp"

namespace iscc::algorithms {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

CMat hermitize(const CMat& m) { return 0.5 * (m + m.adjoint()); }

double real_trace(const CMat& h, const CMat& w) { return (h * w).trace().real(); }

/// tr(R_s^{-1}) of a (numerically) positive definite covariance.
double trace_inverse(const CMat& r_s) {
  Eigen::LLT<CMat> llt(r_s);
  if (llt.info() != Eigen::Success) {
    throw SingularCovarianceError("trace_inverse: covariance not positive definite");
  }
  const int n = static_cast<int>(r_s.rows());
  return llt.solve(CMat::Identity(n, n)).trace().real();
}

}  // namespace

const char* to_string(AlgoStatus s) {
  switch (s) {
    case AlgoStatus::converged: return "converged";
    case AlgoStatus::iteration_limit: return "iteration_limit";
    case AlgoStatus::infeasible: return "infeasible";
    case AlgoStatus::numerical_limit: return "numerical_limit";
  }
  return "unknown";
}

RankOneResult extract_rank_one(const CMat& w_mat, double rank_tol) {
  if (w_mat.rows() != w_mat.cols() || w_mat.rows() == 0) {
    throw std::invalid_argument("extract_rank_one: matrix must be square and nonempty");
  }
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitize(w_mat));
  const int n = static_cast<int>(w_mat.rows());
  const double l1 = es.eigenvalues()(n - 1);
  RankOneResult out;
  if (!(l1 > 0.0)) {  // PSD input with lambda1 <= 0 is the zero matrix
    out.w = CVec::Zero(n);
    out.ratio = 0.0;
    out.certified = true;
    return out;
  }
  const double l2 = n >= 2 ? std::max(0.0, es.eigenvalues()(n - 2)) : 0.0;
  CVec v = es.eigenvectors().col(n - 1);
  int imax = 0;
  for (int i = 1; i < n; ++i) {
    if (std::abs(v(i)) > std::abs(v(imax))) imax = i;
  }
  const double mag = std::abs(v(imax));
  if (mag > 0) v *= std::conj(v(imax)) / mag;  // largest-|entry| made real positive
  out.w = std::sqrt(l1) * v;
  out.ratio = l2 / l1;
  out.certified = out.ratio <= rank_tol;
  return out;
}

bool lemma2_eigen_check(const CVec& x, const CVec& y) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("lemma2_eigen_check: vectors must have equal length");
  }
  const double nx = x.squaredNorm();
  const double ny = y.squaredNorm();
  const double scale = nx + ny;
  if (scale == 0.0) return true;  // Z = 0, eigenvalues trivially coincide
  // Nonzero eigenvalues of x x^H + y y^H are (nx + ny)/2 +- sqrt(delta)/2.
  const double delta =
      (nx - ny) * (nx - ny) + 4.0 * std::norm(x.dot(y));  // Eigen dot conjugates x
  return std::sqrt(delta) <= 1e-9 * scale;
}

namespace detail {

double Inputs::gamma_req(double f_hz) const {
  return std::exp2((r_min - f_hz / rho) / bw) - 1.0;
}

double Inputs::budget(double f_hz) const {
  return (p0 - kappa * f_hz * f_hz * f_hz) * (1.0 - opt.power_margin);
}

double Inputs::crb_point_of_t(double t) const {
  const double a2 = std::norm(ch->alpha);
  return sigma_s2 / (2.0 * a2 * t_syms) / t;
}

double Inputs::crb_ext_of_trinv(double trinv) const {
  return sigma_s2 * static_cast<double>(cfg->m_rx) / t_syms * trinv;
}

Inputs make_inputs(const SystemConfig& cfg, const ChannelSet& ch, const SolveOptions& opt) {
  cfg.validate();
  if (static_cast<int>(ch.h.size()) != cfg.n_users + 1) {
    throw std::invalid_argument("make_inputs: channel set does not match n_users + 1 receivers");
  }
  Inputs in;
  in.cfg = &cfg;
  in.ch = &ch;
  in.steer = SteeringBundle::at(cfg);
  in.opt = opt;
  in.m = cfg.m_tx;
  in.k = cfg.n_users;
  in.p0 = cfg.power_budget_w;
  in.sigma_c2 = cfg.noise_comm_w;
  in.sigma_s2 = cfg.noise_sense_w;
  in.kappa = cfg.cpu_eff;
  in.rho = cfg.cycles_per_bit;
  in.bw = cfg.bandwidth_hz;
  in.f_max = cfg.f_max_hz;
  in.r_min = cfg.rate_min_bps;
  in.t_syms = static_cast<double>(cfg.n_symbols);
  in.gamma = cfg.sinr_thresholds;
  in.q = ch.q;
  in.q_target = in.steer.a * in.steer.a.adjoint();
  const CMat m_da = in.steer.A_dot.adjoint() * in.steer.A;
  in.m_dd = hermitize(in.steer.A_dot.adjoint() * in.steer.A_dot);
  in.m_aa = hermitize(in.steer.A.adjoint() * in.steer.A);
  in.m_da_re = 0.5 * (m_da + m_da.adjoint());
  in.m_da_im = (m_da - m_da.adjoint()) / cdouble(0.0, 2.0);
  return in;
}

double golden_section(const std::function<double(double)>& value, double lo, double hi,
                      double tol, double* best_value) {
  constexpr double invphi = 0.6180339887498948482;
  double a = lo, b = hi;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = value(c);
  double fd = value(d);
  double bx = c, bv = fc;
  if (fd < bv) {
    bx = d;
    bv = fd;
  }
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = value(c);
      if (fc < bv) {
        bx = c;
        bv = fc;
      }
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = value(d);
      if (fd < bv) {
        bx = d;
        bv = fd;
      }
    }
  }
  if (best_value != nullptr) *best_value = bv;
  return bx;
}

namespace {

/// Per-beam handle: either a variable PSD block or a fixed matrix.
struct BeamVars {
  std::vector<int> blk;           // block id, -1 when fixed
  std::vector<const CMat*> fixed; // fixed value, nullptr when variable

  // tr(H W_i), a variable term or a constant folded into the offset.
  conic::LinExpr trace(const conic::ConicProblem& p, int i, const CMat& h) const {
    if (fixed[i] != nullptr) return conic::LinExpr(real_trace(h, *fixed[i]));
    return p.trace_term(blk[i], h);
  }
  conic::LinExpr trace_sum(const conic::ConicProblem& p, const CMat& h) const {
    conic::LinExpr e;
    for (int i = 0; i < static_cast<int>(blk.size()); ++i) e += trace(p, i, h);
    return e;
  }
};

BeamVars add_beam_vars(conic::ConicProblem& p, int n, int n_beams,
                       const std::vector<CMat>* users, const CMat* wp) {
  BeamVars bv;
  bv.blk.assign(n_beams, -1);
  bv.fixed.assign(n_beams, nullptr);
  for (int i = 0; i < n_beams; ++i) {
    if (users != nullptr && i < n_beams - 1) {
      bv.fixed[i] = &(*users)[i];
    } else if (wp != nullptr && i == n_beams - 1) {
      bv.fixed[i] = wp;
    } else {
      bv.blk[i] = p.add_psd_block(n, "w" + std::to_string(i + 1));
    }
  }
  return bv;
}

/// SINR rows for the users with positive thresholds, against an R_s expression.
void add_user_sinr_rows(conic::ConicProblem& p, const Inputs& in, const BeamVars& bv,
                        const std::function<conic::LinExpr(const CMat&)>& rs_trace) {
  for (int k = 0; k < in.k; ++k) {
    if (!(in.gamma[k] > 0)) continue;
    const double g = in.gamma[k] * (1.0 + in.opt.sinr_margin);
    conic::LinExpr e = (1.0 + 1.0 / g) * bv.trace(p, k, in.q[k]) - rs_trace(in.q[k]);
    p.add_ge(e, in.sigma_c2, "sinr_" + std::to_string(k + 1));
  }
}

/// Offload constraint at fixed f. Returns the row index (-1 when the
/// requirement is vacuous). With `lin` the bilinear form is replaced by its
/// concave surrogate in (gamma_p, tr(Q_p W_p)); otherwise gamma_p is pinned at
/// gamma_req(f) and the row is linear. `interference` is the expression for
/// tr(Q_p R_s) - tr(Q_p W_p) (without the noise constant).
int add_offload_row(conic::ConicProblem& p, const Inputs& in, double f_hz,
                    const conic::LinExpr& tr_wp, const conic::LinExpr& interference,
                    const ScaPoint* lin, int* gamma_blk) {
  const double grq = in.gamma_req(f_hz) * (1.0 + in.opt.sinr_margin);
  if (gamma_blk != nullptr) *gamma_blk = -1;
  if (!(grq > 0)) return -1;
  if (lin == nullptr) {
    conic::LinExpr e = tr_wp - grq * interference;
    p.add_ge(e, grq * in.sigma_c2, "offload");
    return static_cast<int>(p.constraints.size()) - 1;
  }
  const int gb = p.add_scalar("gamma_p");
  if (gamma_blk != nullptr) *gamma_blk = gb;
  const conic::LinExpr gam = p.scalar_term(gb);
  p.add_ge(gam, grq, "gamma_floor");
  // The squared lifts mix tr(Q_p W_p) (channel scale, orders below unity in
  // physical units) with 1/gamma_p (order one); the offload inequality is
  // invariant under a common rescaling of the offload channel, so divide it
  // by the expansion trace to bring both lift arguments to comparable size.
  // Without this the 2x2 lift blocks are conditioned like the squared scale
  // gap and the interior-point solve grinds to its iteration cap.
  const double s = std::max(lin->tr_wp, in.sigma_c2);
  const conic::LinExpr tr_hat = (1.0 / s) * tr_wp;
  const double gi = std::max(lin->gamma_p, 1e-12);
  const double tr0 = lin->tr_wp / s;
  const double c0 = tr0 + 1.0 / gi;
  const conic::LinExpr u = p.lift_square(tr_hat);      // u >= (tr(Q_p W_p)/s)^2
  const conic::LinExpr winv = p.lift_inverse(gam);     // winv >= 1 / gamma_p
  const conic::LinExpr v = p.lift_square(winv);        // v >= gamma_p^{-2}
  // Surrogate: 0.5 c0^2 + c0 (tr - tr0) - c0 gi^{-2} (gamma - gi) - 0.5 u - 0.5 v
  // >= (interference + sigma_c^2) / s, tight at (tr0, gi).
  conic::LinExpr lhs =
      c0 * tr_hat - (c0 / (gi * gi)) * gam - 0.5 * u - 0.5 * v - (1.0 / s) * interference;
  const double rhs = in.sigma_c2 / s - 0.5 * c0 * c0 + c0 * tr0 - c0 / gi;
  p.add_ge(lhs, rhs, "offload");
  return static_cast<int>(p.constraints.size()) - 1;
}

double row_slack(const conic::ConicProblem& p, const conic::ConicSolution& sol, int row) {
  if (row < 0) return 0.0;
  return p.constraints[row].rhs - sol.value(p.constraints[row].expr);
}

/// Offload SINR of a candidate set of beam covariances (and optional radar part).
double achieved_offload_sinr(const Inputs& in, const std::vector<CMat>& w, const CMat* wr) {
  const CMat& qp = in.q[in.k];
  const double sig = real_trace(qp, w[in.k]);
  double interf = in.sigma_c2;
  for (int i = 0; i < in.k; ++i) interf += real_trace(qp, w[i]);
  if (wr != nullptr && wr->size() > 0) interf += real_trace(qp, *wr);
  return sig / interf;
}

}  // namespace

PointSub solve_point_fixed(const Inputs& in, double f_hz, const std::vector<CMat>* users,
                           const CMat* wp, const ScaPoint* lin) {
  // An overflowing SINR requirement (rate floor far beyond what local
  // computation can absorb) is unattainable at any power; report infeasible
  // before inf coefficients can reach the model.
  if (!std::isfinite(in.gamma_req(f_hz))) return PointSub{};
  const int n = in.m;
  const int nb = in.k + 1;
  conic::ConicProblem p;
  const BeamVars bv = add_beam_vars(p, n, nb, users, wp);
  const int zb = p.add_psd_block(2, "z");
  const int tb = p.add_scalar("t");

  auto rs_trace = [&](const CMat& h) { return bv.trace_sum(p, h); };
  // Schur block ties: Z = [[tr(M_dd R) - t, tr(M_da R)], [., tr(M_aa R)]].
  p.add_eq(p.entry_re(zb, 0, 0) - rs_trace(in.m_dd) + p.scalar_term(tb), 0.0, "z00");
  p.add_eq(p.entry_re(zb, 0, 1) - rs_trace(in.m_da_re), 0.0, "z01re");
  p.add_eq(p.entry_im(zb, 0, 1) - rs_trace(in.m_da_im), 0.0, "z01im");
  p.add_eq(p.entry_re(zb, 1, 1) - rs_trace(in.m_aa), 0.0, "z11");

  add_user_sinr_rows(p, in, bv, rs_trace);

  conic::LinExpr interference;  // tr(Q_p R_s) - tr(Q_p W_p) = user-beam leakage
  for (int i = 0; i < in.k; ++i) interference += bv.trace(p, i, in.q[in.k]);
  int gamma_blk = -1;
  const int offload_row =
      add_offload_row(p, in, f_hz, bv.trace(p, in.k, in.q[in.k]), interference, lin, &gamma_blk);

  p.add_le(rs_trace(CMat::Identity(n, n)), in.budget(f_hz), "power");
  p.minimize(p.scalar_term(tb, -1.0));

  const conic::ConicSolution sol = conic::solve(p, in.opt.conic);
  PointSub out;
  out.iterations = sol.iterations;
  if (sol.status == conic::SolveStatus::infeasible) return out;
  if (sol.status == conic::SolveStatus::numerical_limit) {
    out.numerical = true;
    return out;
  }
  out.feasible = true;
  out.w.resize(nb);
  for (int i = 0; i < nb; ++i) {
    out.w[i] = bv.fixed[i] != nullptr ? *bv.fixed[i] : hermitize(sol.psd_values[bv.blk[i]]);
  }
  out.t = sol.scalar_values[tb];
  CMat r_s = CMat::Zero(n, n);
  for (const CMat& wi : out.w) r_s += wi;
  out.crb = in.crb_point_of_t(schur_t_star(r_s, in.steer));
  out.gamma_p = achieved_offload_sinr(in, out.w, nullptr);
  out.offload_mult = offload_row >= 0 ? sol.multiplier(p, offload_row) : 0.0;
  out.offload_slack = row_slack(p, sol, offload_row);
  return out;
}

GainSub solve_point_beamgain(const Inputs& in, double f_hz) {
  if (!std::isfinite(in.gamma_req(f_hz))) return GainSub{};  // requirement overflows
  const int n = in.m;
  conic::ConicProblem p;
  const int wb = p.add_psd_block(n, "w");
  const double grq = in.gamma_req(f_hz) * (1.0 + in.opt.sinr_margin);
  int offload_row = -1;
  if (grq > 0) {
    p.add_ge(p.trace_term(wb, in.q[in.k]), grq * in.sigma_c2, "offload");
    offload_row = static_cast<int>(p.constraints.size()) - 1;
  }
  p.add_le(p.trace_term(wb, CMat::Identity(n, n)), in.budget(f_hz), "power");
  p.minimize(-1.0 * p.trace_term(wb, in.q_target));

  const conic::ConicSolution sol = conic::solve(p, in.opt.conic);
  GainSub out;
  out.iterations = sol.iterations;
  if (sol.status == conic::SolveStatus::infeasible) return out;
  if (sol.status == conic::SolveStatus::numerical_limit) {
    out.numerical = true;
    return out;
  }
  out.feasible = true;
  out.w = hermitize(sol.psd_values[wb]);
  out.gain = real_trace(in.q_target, out.w);
  out.offload_mult = offload_row >= 0 ? sol.multiplier(p, offload_row) : 0.0;
  out.offload_slack = row_slack(p, sol, offload_row);
  return out;
}

namespace {

/// Adds the trace-inverse epigraph block V = [[U, I], [I, R_s]] (2n x 2n) with
/// the corner pinned to the identity. R_s is addressed through trace_sub_term
/// on the bottom-right corner; the objective is tr(U) = top-left trace.
int add_trinv_block(conic::ConicProblem& p, int n) {
  const int vb = p.add_psd_block(2 * n, "v_trinv");
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      p.add_eq(p.entry_re(vb, i, n + j), i == j ? 1.0 : 0.0, "tie_corner");
      p.add_eq(p.entry_im(vb, i, n + j), 0.0, "tie_corner");
    }
  }
  return vb;
}

}  // namespace

ExtSub solve_ext_block1(const Inputs& in, double f_hz, const std::vector<CMat>& users,
                        const CMat& wr_fixed) {
  if (!std::isfinite(in.gamma_req(f_hz))) return ExtSub{};  // requirement overflows
  const int n = in.m;
  CMat c_fix = wr_fixed.size() > 0 ? CMat(wr_fixed) : CMat(CMat::Zero(n, n));
  for (const CMat& wu : users) c_fix += wu;
  c_fix = hermitize(c_fix);

  conic::ConicProblem p;
  const int wb = p.add_psd_block(n, "wp");
  const int vb = add_trinv_block(p, n);
  // Bottom-right corner tied to R_s = C_fix + W_p.
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      p.add_eq(p.entry_re(vb, n + i, n + j) - p.entry_re(wb, i, j), c_fix(i, j).real(),
               "tie_rs");
      if (j > i) {
        p.add_eq(p.entry_im(vb, n + i, n + j) - p.entry_im(wb, i, j), c_fix(i, j).imag(),
                 "tie_rs");
      }
    }
  }
  for (int k = 0; k < in.k; ++k) {
    if (!(in.gamma[k] > 0)) continue;
    const double g = in.gamma[k] * (1.0 + in.opt.sinr_margin);
    const double lhs_const =
        (1.0 + 1.0 / g) * real_trace(in.q[k], users[k]) - real_trace(in.q[k], c_fix);
    p.add_ge(conic::LinExpr(lhs_const) - p.trace_term(wb, in.q[k]), in.sigma_c2,
             "sinr_" + std::to_string(k + 1));
  }
  const double grq = in.gamma_req(f_hz) * (1.0 + in.opt.sinr_margin);
  int offload_row = -1;
  if (grq > 0) {
    p.add_ge(p.trace_term(wb, in.q[in.k]),
             grq * (real_trace(in.q[in.k], c_fix) + in.sigma_c2), "offload");
    offload_row = static_cast<int>(p.constraints.size()) - 1;
  }
  p.add_le(p.trace_term(wb, CMat::Identity(n, n)), in.budget(f_hz) - c_fix.trace().real(),
           "power");
  p.minimize(p.trace_sub_term(vb, 0, 0, CMat::Identity(n, n)));

  const conic::ConicSolution sol = conic::solve(p, in.opt.conic);
  ExtSub out;
  out.iterations = sol.iterations;
  if (sol.status == conic::SolveStatus::infeasible) return out;
  if (sol.status == conic::SolveStatus::numerical_limit) {
    out.numerical = true;
    return out;
  }
  out.feasible = true;
  out.w = users;
  out.w.push_back(hermitize(sol.psd_values[wb]));
  out.r_s = hermitize(c_fix + out.w.back());
  out.wr_hat = wr_fixed.size() > 0 ? wr_fixed : CMat::Zero(n, n);
  out.trinv = trace_inverse(out.r_s);
  out.crb = in.crb_ext_of_trinv(out.trinv);
  out.gamma_p = achieved_offload_sinr(in, out.w, &out.wr_hat);
  out.offload_mult = offload_row >= 0 ? sol.multiplier(p, offload_row) : 0.0;
  out.offload_slack = row_slack(p, sol, offload_row);
  return out;
}

ExtSub solve_ext_joint(const Inputs& in, double f_hz, const CMat* wp, const ScaPoint* lin) {
  if (!std::isfinite(in.gamma_req(f_hz))) return ExtSub{};  // requirement overflows
  const int n = in.m;
  const int nb = in.k + 1;
  conic::ConicProblem p;
  const BeamVars bv = add_beam_vars(p, n, nb, nullptr, wp);
  const int vb = add_trinv_block(p, n);
  const int db = p.add_psd_block(n, "wr_hat");
  // D = R_s - sum_i W_i entrywise (fixed beams fold into the right-hand side).
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      conic::LinExpr re = p.entry_re(db, i, j) - p.entry_re(vb, n + i, n + j);
      conic::LinExpr im_part;
      if (j > i) im_part = p.entry_im(db, i, j) - p.entry_im(vb, n + i, n + j);
      double rhs_re = 0.0, rhs_im = 0.0;
      for (int l = 0; l < nb; ++l) {
        if (bv.fixed[l] != nullptr) {
          rhs_re -= (*bv.fixed[l])(i, j).real();
          rhs_im -= (*bv.fixed[l])(i, j).imag();
        } else {
          re += p.entry_re(bv.blk[l], i, j);
          if (j > i) im_part += p.entry_im(bv.blk[l], i, j);
        }
      }
      p.add_eq(re, rhs_re, "tie_radar");
      if (j > i) p.add_eq(im_part, rhs_im, "tie_radar");
    }
  }
  auto rs_trace = [&](const CMat& h) { return p.trace_sub_term(vb, n, n, h); };
  add_user_sinr_rows(p, in, bv, rs_trace);

  int gamma_blk = -1;
  const conic::LinExpr tr_wp = bv.trace(p, in.k, in.q[in.k]);
  const conic::LinExpr interference = rs_trace(in.q[in.k]) - tr_wp;
  const int offload_row =
      add_offload_row(p, in, f_hz, tr_wp, interference, lin, &gamma_blk);

  p.add_le(rs_trace(CMat::Identity(n, n)), in.budget(f_hz), "power");
  p.minimize(p.trace_sub_term(vb, 0, 0, CMat::Identity(n, n)));

  const conic::ConicSolution sol = conic::solve(p, in.opt.conic);
  ExtSub out;
  out.iterations = sol.iterations;
  if (sol.status == conic::SolveStatus::infeasible) return out;
  if (sol.status == conic::SolveStatus::numerical_limit) {
    out.numerical = true;
    return out;
  }
  out.feasible = true;
  out.w.resize(nb);
  for (int i = 0; i < nb; ++i) {
    out.w[i] = bv.fixed[i] != nullptr ? *bv.fixed[i] : hermitize(sol.psd_values[bv.blk[i]]);
  }
  out.r_s = hermitize(sol.psd_values[vb].block(n, n, n, n));
  out.wr_hat = hermitize(sol.psd_values[db]);
  out.trinv = trace_inverse(out.r_s);
  out.crb = in.crb_ext_of_trinv(out.trinv);
  CMat r_minus_wp = out.r_s - out.w[in.k];
  out.gamma_p = real_trace(in.q[in.k], out.w[in.k]) /
                (real_trace(in.q[in.k], r_minus_wp) + in.sigma_c2);
  out.offload_mult = offload_row >= 0 ? sol.multiplier(p, offload_row) : 0.0;
  out.offload_slack = row_slack(p, sol, offload_row);
  return out;
}

StartPoint feasibility_phase(const Inputs& in, bool extended) {
  const int n = in.m;
  const int nb = in.k + 1;
  StartPoint sp;
  std::vector<double> f_candidates{0.0};
  if (in.r_min > 0) {
    const double f_cap = std::min(in.f_max, in.rho * in.r_min);
    if (f_cap > 0) f_candidates.push_back(f_cap);
  }

  // Matched filters at a common power, scaled until every (margined) SINR
  // requirement is met; SINRs are monotone in the common power.
  std::vector<CVec> dirs(nb);
  for (int i = 0; i < nb; ++i) {
    const double nrm = in.ch->h[i].norm();
    dirs[i] = nrm > 0 ? CVec(in.ch->h[i] / nrm) : CVec(CVec::Zero(n));
  }
  auto sinr_ok = [&](double power, double grq) {
    for (int k = 0; k < nb; ++k) {
      const double need = k < in.k ? (in.gamma[k] > 0 ? in.gamma[k] * (1.0 + in.opt.sinr_margin)
                                                      : 0.0)
                                   : grq;
      if (!(need > 0)) continue;
      const CVec& h = in.ch->h[k];
      double sig = 0.0, interf = in.sigma_c2;
      for (int j = 0; j < nb; ++j) {
        const double g = power * std::norm(h.dot(dirs[j]));
        if (j == k) {
          sig = g;
        } else {
          interf += g;
        }
      }
      if (sig < need * interf) return false;
    }
    return true;
  };
  for (double f0 : f_candidates) {
    const double grq = std::max(0.0, in.gamma_req(f0)) * (1.0 + in.opt.sinr_margin);
    const double pmax = in.budget(f0) / nb;
    if (!(pmax > 0) || !sinr_ok(pmax, grq)) continue;
    double lo = 0.0, hi = pmax;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (sinr_ok(mid, grq) ? hi : lo) = mid;
    }
    const double power = std::min(pmax, hi * 1.05);
    sp.feasible = true;
    sp.w.resize(nb);
    for (int i = 0; i < nb; ++i) sp.w[i] = power * dirs[i] * dirs[i].adjoint();
    sp.f_hz = f0;
    sp.gamma_p = achieved_offload_sinr(in, sp.w, nullptr);
    return sp;
  }

  // Fall back to an interior point of the joint convex problem. The joint
  // solve is run with extra constraint headroom (tighter SINR targets, a small
  // power backoff) so the returned start is strictly interior for the actual
  // targets; block and surrogate stages seeded on the constraint boundary
  // would otherwise have no Slater point. If even the padded problem is
  // infeasible, retry without the pad before giving up.
  auto joint_probe = [&](const Inputs& prob, double f) -> std::pair<double, std::vector<CMat>> {
    if (extended) {
      ExtSub s = solve_ext_joint(prob, f, nullptr, nullptr);
      return {s.feasible ? s.crb : kInf, s.w};
    }
    PointSub s = solve_point_fixed(prob, f, nullptr, nullptr, nullptr);
    return {s.feasible ? s.crb : kInf, s.w};
  };
  Inputs padded = in;
  padded.opt.sinr_margin = std::max(1e-2, in.opt.sinr_margin);
  padded.p0 = in.p0 * (1.0 - 1e-2);
  const std::vector<double> scan{0.0, 0.25 * in.f_max, 0.5 * in.f_max, 0.75 * in.f_max,
                                 in.f_max};
  const std::array<const Inputs*, 2> attempts{&padded, &in};
  for (const Inputs* prob : attempts) {
    double best_f = 0.0, best_v = kInf;
    std::vector<CMat> best_w;
    for (double f : scan) {
      auto [v, w] = joint_probe(*prob, f);
      if (v < best_v) {
        best_v = v;
        best_f = f;
        best_w = std::move(w);
      }
    }
    if (!std::isfinite(best_v)) {
      double bv = kInf;
      const double bf = golden_section([&](double f) { return joint_probe(*prob, f).first; },
                                       0.0, in.f_max,
                                       std::max(in.opt.f_search_tol, 1e-3 * in.f_max), &bv);
      if (!std::isfinite(bv)) continue;  // infeasible for every frequency probed
      best_f = bf;
      best_w = joint_probe(*prob, bf).second;
    }
    sp.feasible = true;
    sp.w = std::move(best_w);
    sp.f_hz = best_f;
    sp.gamma_p = achieved_offload_sinr(in, sp.w, nullptr);
    return sp;
  }
  return sp;
}

std::vector<double> relaxed_slacks(const Inputs& in, const std::vector<CMat>& w,
                                   const CMat* wr_hat, double f_hz) {
  std::vector<double> s;
  s.reserve(in.k + 2);
  CMat r_s = CMat::Zero(in.m, in.m);
  for (const CMat& wi : w) r_s += wi;
  if (wr_hat != nullptr && wr_hat->size() > 0) r_s += *wr_hat;
  for (int k = 0; k < in.k; ++k) {
    if (!(in.gamma[k] > 0)) {
      s.push_back(0.0);
      continue;
    }
    const double sig = real_trace(in.q[k], w[k]);
    const double interf = real_trace(in.q[k], r_s) - sig + in.sigma_c2;
    s.push_back(sig / interf - in.gamma[k]);
  }
  const double gp = achieved_offload_sinr(in, w, wr_hat);
  s.push_back(f_hz / in.rho + in.bw * std::log2(1.0 + gp) - in.r_min);
  s.push_back(in.p0 - (r_s.trace().real() + in.kappa * f_hz * f_hz * f_hz));
  return s;
}

}  // namespace detail

namespace {

using detail::ExtSub;
using detail::GainSub;
using detail::Inputs;
using detail::PointSub;
using detail::ScaPoint;
using detail::StartPoint;

/// Best fixed-f subproblem over the golden-section search; probes f = 0 first
/// and stops there when the offload requirement is already vacuous (the value
/// function is convex in f and its derivative at 0 is then nonnegative).
template <typename Sub>
struct FSearchOut {
  bool found = false;
  bool any_numerical = false;
  double f = 0.0;
  Sub sub;
  int iterations = 0;
};

template <typename Sub>
FSearchOut<Sub> search_f(const Inputs& in, const std::function<Sub(double)>& solve_at,
                         const std::function<double(const Sub&)>& value_of,
                         const double* f_prev) {
  FSearchOut<Sub> out;
  auto probe = [&](double f) {
    Sub s = solve_at(f);
    out.iterations += s.iterations;
    if (s.numerical) out.any_numerical = true;
    const double v = s.feasible ? value_of(s) : kInf;
    if (!out.found || v < value_of(out.sub) || (!out.sub.feasible && s.feasible)) {
      if (s.feasible) {
        out.found = true;
        out.f = f;
        out.sub = std::move(s);
      }
    }
    return v;
  };
  if (!(in.gamma_req(0.0) > 0)) {
    // With no offload pressure at f = 0 the value function cannot improve for
    // f > 0 (smaller budget, same constraints); and f = 0 infeasible at the
    // largest budget means infeasible for every f.
    probe(0.0);
    return out;
  }
  double bv = kInf;
  detail::golden_section([&](double f) { return probe(f); }, 0.0, in.f_max,
                         in.opt.f_search_tol, &bv);
  if (f_prev != nullptr && std::isfinite(*f_prev) &&
      (!out.found || std::abs(*f_prev - out.f) > 1e-9 * (1.0 + std::abs(out.f)))) {
    probe(*f_prev);
  }
  return out;
}

/// Extraction finish for the point target: leading-eigenvector beams, no
/// dedicated radar covariance.
SolveResult finish_point(const Inputs& in, const PointSub& sub, double f_hz, AlgoTrace trace,
                         AlgoStatus status) {
  SolveResult r;
  r.status = status;
  trace.status = status;
  std::vector<CVec> beams;
  beams.reserve(sub.w.size());
  for (const CMat& wi : sub.w) {
    RankOneResult ro = extract_rank_one(wi, in.opt.rank_tol);
    r.rank_ratios.push_back(ro.ratio);
    beams.push_back(std::move(ro.w));
  }
  r.solution = BeamformingSolution::from_parts(std::move(beams), CMat(), f_hz);
  r.report = evaluate_solution(*in.cfg, *in.ch, in.steer, r.solution, TargetMode::point);
  r.trace = std::move(trace);
  r.relaxed_crb = sub.crb;
  r.schur_t = sub.t;
  return r;
}

/// Construction finish for the extended target: SINR-preserving rank-one
/// beams, radar covariance from the residual, pivoted-Cholesky factor.
SolveResult finish_extended(const Inputs& in, const ExtSub& sub, double f_hz, AlgoTrace trace,
                            AlgoStatus status) {
  const int n = in.m;
  SolveResult r;
  r.status = status;
  trace.status = status;
  std::vector<CVec> beams;
  beams.reserve(sub.w.size());
  for (int i = 0; i < static_cast<int>(sub.w.size()); ++i) {
    r.rank_ratios.push_back(extract_rank_one(sub.w[i], in.opt.rank_tol).ratio);
    const CVec& h = in.ch->h[i];
    const CVec wh = sub.w[i] * h;
    const double sig = h.dot(wh).real();  // h^H W h
    const double scale = sub.w[i].trace().real();
    if (sig > 1e-14 * std::max(1.0, scale)) {
      beams.push_back(wh / std::sqrt(sig));
    } else {
      beams.push_back(CVec::Zero(n));  // unused beam, absorbed by the radar part
    }
  }
  CMat resid = sub.r_s;
  for (const CVec& b : beams) resid -= b * b.adjoint();
  resid = hermitize(resid);
  Eigen::SelfAdjointEigenSolver<CMat> es(resid);
  const double lmax_rs =
      Eigen::SelfAdjointEigenSolver<CMat>(sub.r_s, Eigen::EigenvaluesOnly).eigenvalues()(n - 1);
  RVec lam = es.eigenvalues();
  for (int i = 0; i < n; ++i) {
    if (lam(i) < 0) {
      if (lam(i) < -1e-9 * std::max(lmax_rs, 0.0)) {
        std::ostringstream msg;
        msg << "extended construction: residual covariance eigenvalue " << lam(i)
            << " below the -1e-9 * lambda_max clip window";
        throw ConstructionViolationError(msg.str());
      }
      lam(i) = 0.0;
    }
  }
  const CMat wr_cov =
      hermitize(es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().adjoint());
  Eigen::LDLT<CMat> ldlt(wr_cov);  // pivoted factorization of the PSD residual
  RVec d = ldlt.vectorD().real().cwiseMax(0.0);
  CMat factor = CMat(ldlt.matrixL());
  factor = ldlt.transpositionsP().transpose() * factor;
  r.radar_factor = factor * d.cwiseSqrt().asDiagonal();
  const CMat wr_exact = hermitize(r.radar_factor * r.radar_factor.adjoint());

  r.solution = BeamformingSolution::from_parts(std::move(beams), wr_exact, f_hz);
  r.report = evaluate_solution(*in.cfg, *in.ch, in.steer, r.solution, TargetMode::extended);
  if (!r.report.feasible) {
    double worst = 0.0;
    std::string name;
    for (const ConstraintSlack& cs : r.report.slacks) {
      if (cs.slack < worst) {
        worst = cs.slack;
        name = cs.name;
      }
    }
    std::ostringstream msg;
    msg << "extended construction: constraint '" << name << "' violated by " << -worst;
    throw ConstructionViolationError(msg.str());
  }
  r.trace = std::move(trace);
  r.relaxed_crb = sub.crb;
  return r;
}

void require_no_active_users(const SystemConfig& cfg, const char* who) {
  for (double g : cfg.sinr_thresholds) {
    if (g > 0) {
      throw std::invalid_argument(std::string(who) +
                                  ": requires K = 0 or all SINR thresholds zero");
    }
  }
}

void require_users(const SystemConfig& cfg, const char* who) {
  if (cfg.n_users < 1) {
    throw std::invalid_argument(std::string(who) + ": requires K >= 1");
  }
}

SolveResult infeasible_result() {
  SolveResult r;
  r.status = AlgoStatus::infeasible;
  r.trace.status = AlgoStatus::infeasible;
  return r;
}

/// Re-evaluates a known-feasible set of beam covariances as a point-target
/// iterate (used when a block stage cannot improve on the current iterate).
PointSub point_iterate_from(const Inputs& in, const std::vector<CMat>& w) {
  PointSub s;
  s.w = w;
  CMat r_s = CMat::Zero(in.m, in.m);
  for (const CMat& wi : w) r_s += wi;
  s.t = schur_t_star(hermitize(r_s), in.steer);
  s.feasible = s.t > 0;
  s.crb = s.feasible ? in.crb_point_of_t(s.t) : kInf;
  const double sig = real_trace(in.q[in.k], w[in.k]);
  double interf = in.sigma_c2;
  for (int i = 0; i < in.k; ++i) interf += real_trace(in.q[in.k], w[i]);
  s.gamma_p = sig / interf;
  return s;
}

void push_point_record(const Inputs& in, AlgoTrace& trace, const PointSub& sub, double f,
                       int conic_iters) {
  IterRecord rec;
  rec.objective = sub.crb;
  rec.f_hz = f;
  rec.conic_iterations = conic_iters;
  rec.slacks = detail::relaxed_slacks(in, sub.w, nullptr, f);
  trace.iters.push_back(std::move(rec));
}

/// Shared alternating-optimization loop for the point target. Returns the
/// final iterate; `trace` accumulates one record per outer iteration. A block
/// stage whose subproblem has no strictly interior point (the seed sits on the
/// constraint boundary, which happens when the loop is started from or reaches
/// a joint optimum) cannot certify an improvement over the current feasible
/// iterate, so the loop keeps that iterate and reports convergence.
struct PointLoopOut {
  bool ok = false;
  bool numerical = false;
  PointSub last;
  double f = 0.0;
  AlgoStatus status = AlgoStatus::numerical_limit;
};

PointLoopOut run_point_ao_loop(const Inputs& in, const StartPoint& start, int max_outer,
                               AlgoTrace& trace) {
  PointLoopOut out;
  std::vector<CMat> users(start.w.begin(), start.w.begin() + in.k);
  double f_prev = start.f_hz;
  const PointSub start_sub = point_iterate_from(in, start.w);
  // Monotone guard: iterates must not regress below the warm iterate (or,
  // first time through, below the start point itself).
  double prev_crb = !trace.iters.empty()            ? trace.iters.back().objective
                    : start_sub.feasible            ? start_sub.crb
                                                    : kInf;
  auto stall = [&](int conic_iters) {
    if (!out.ok) {  // never improved: keep the start point as the iterate
      out.last = start_sub;
      out.f = start.f_hz;
      out.ok = out.last.feasible;
      if (out.ok) push_point_record(in, trace, out.last, out.f, conic_iters);
    }
    out.status = out.ok ? AlgoStatus::converged : AlgoStatus::numerical_limit;
    return out;
  };
  for (int outer = 0; outer < max_outer; ++outer) {
    FSearchOut<PointSub> fs = search_f<PointSub>(
        in, [&](double f) { return detail::solve_point_fixed(in, f, &users, nullptr, nullptr); },
        [](const PointSub& s) { return s.crb; }, &f_prev);
    if (!fs.found) return stall(fs.iterations);
    const CMat wp = fs.sub.w[in.k];
    PointSub sub2 = detail::solve_point_fixed(in, fs.f, nullptr, &wp, nullptr);
    const PointSub& cand = sub2.feasible ? sub2 : fs.sub;
    if (cand.crb > prev_crb * (1.0 + 1e-9)) return stall(fs.iterations + sub2.iterations);
    users.assign(cand.w.begin(), cand.w.begin() + in.k);
    push_point_record(in, trace, cand, fs.f, fs.iterations + sub2.iterations);
    out.ok = true;
    out.last = cand;
    out.f = fs.f;
    f_prev = fs.f;
    if (!sub2.feasible || std::abs(prev_crb - out.last.crb) < in.opt.tol_obj * std::abs(prev_crb)) {
      out.status = AlgoStatus::converged;
      return out;
    }
    prev_crb = out.last.crb;
  }
  out.status = AlgoStatus::iteration_limit;
  return out;
}

/// Successive-convex-approximation loop for the point target. The offload
/// frequency is chosen first by a golden-section search over exact fixed-f
/// solves (at fixed f the offload SINR requirement is pinned, so the
/// subproblem is convex and needs no surrogate); the surrogate iteration then
/// runs at that frequency from the supplied expansion point.
PointLoopOut run_point_sca_loop(const Inputs& in, const std::vector<CMat>& w0, double f0,
                                double gamma0, int max_outer, AlgoTrace& trace) {
  PointLoopOut out;
  double f_prev = f0;
  const PointSub seed_sub = point_iterate_from(in, w0);
  double prev_crb = !trace.iters.empty() ? trace.iters.back().objective
                    : seed_sub.feasible  ? seed_sub.crb
                                         : kInf;
  FSearchOut<PointSub> fs = search_f<PointSub>(
      in, [&](double f) { return detail::solve_point_fixed(in, f, nullptr, nullptr, nullptr); },
      [](const PointSub& s) { return s.crb; }, &f_prev);
  if (!fs.found || fs.sub.crb > prev_crb * (1.0 + 1e-9)) {
    // No frequency admitted an interior point (or none improved on the warm
    // iterate): fall back to the seed itself.
    out.last = seed_sub;
    out.f = f0;
    out.ok = out.last.feasible;
    if (out.ok) push_point_record(in, trace, out.last, out.f, fs.iterations);
    out.status = out.ok ? AlgoStatus::converged
                        : (fs.any_numerical ? AlgoStatus::numerical_limit
                                            : AlgoStatus::infeasible);
    return out;
  }
  const double grq = in.gamma_req(fs.f) * (1.0 + in.opt.sinr_margin);
  ScaPoint lin;
  lin.tr_wp = real_trace(in.q[in.k], w0[in.k]);
  lin.gamma_p = std::max({gamma0, grq, 1e-12});
  auto adopt_exact = [&]() {  // surrogate stage degenerated: keep the exact solution
    if (!out.ok) {
      push_point_record(in, trace, fs.sub, fs.f, fs.iterations);
      out.last = fs.sub;
      out.ok = true;
    }
    out.f = fs.f;
    out.status = AlgoStatus::converged;
    return out;
  };
  for (int outer = 0; outer < max_outer; ++outer) {
    PointSub sub = detail::solve_point_fixed(in, fs.f, nullptr, nullptr,
                                             grq > 0 ? &lin : nullptr);
    if (!sub.feasible && !out.ok) {
      // The expansion point may be too far from the feasible set at the chosen
      // frequency (the surrogate is an inner approximation); reseed it there.
      lin.tr_wp = real_trace(in.q[in.k], fs.sub.w[in.k]);
      lin.gamma_p = std::max({fs.sub.gamma_p, grq, 1e-12});
      sub = detail::solve_point_fixed(in, fs.f, nullptr, nullptr, grq > 0 ? &lin : nullptr);
    }
    if (!sub.feasible || sub.crb > prev_crb * (1.0 + 1e-9)) return adopt_exact();
    push_point_record(in, trace, sub, fs.f, sub.iterations);
    lin.tr_wp = real_trace(in.q[in.k], sub.w[in.k]);
    lin.gamma_p = std::max({sub.gamma_p, grq, 1e-12});
    out.ok = true;
    out.last = std::move(sub);
    out.f = fs.f;
    if (std::abs(prev_crb - out.last.crb) < in.opt.tol_obj * std::abs(prev_crb)) {
      out.status = AlgoStatus::converged;
      return out;
    }
    prev_crb = out.last.crb;
  }
  out.status = AlgoStatus::iteration_limit;
  return out;
}

}  // namespace

namespace detail {

SolveResult finalize_point(const Inputs& in, const PointSub& sub, double f_hz,
                           AlgoTrace trace, AlgoStatus status) {
  return finish_point(in, sub, f_hz, std::move(trace), status);
}

SolveResult finalize_extended(const Inputs& in, const ExtSub& sub, double f_hz,
                              AlgoTrace trace, AlgoStatus status) {
  return finish_extended(in, sub, f_hz, std::move(trace), status);
}

}  // namespace detail

SolveResult solve_point_nocomm(const SystemConfig& cfg, const ChannelSet& ch,
                               const SolveOptions& opt) {
  require_no_active_users(cfg, "solve_point_nocomm");
  const Inputs in = detail::make_inputs(cfg, ch, opt);
  const int n = in.m;
  const CVec& a = in.steer.a;
  const CVec& hp = in.ch->h[in.k];

  // Closed form: the full-power matched-filter beam meets the computation
  // requirement by offloading alone.
  const double gamma_mf = in.p0 * std::norm(hp.dot(a)) / (a.squaredNorm() * in.sigma_c2);
  const bool condition = in.bw * std::log2(1.0 + gamma_mf) >= in.r_min;
  if (condition && !opt.force_sdp) {
    std::vector<CVec> beams(in.k + 1, CVec::Zero(n));
    beams[in.k] = std::sqrt(in.p0 / a.squaredNorm()) * a;
    SolveResult r;
    r.status = AlgoStatus::converged;
    std::vector<CMat> w_cov(in.k + 1, CMat::Zero(n, n));
    w_cov[in.k] = beams[in.k] * beams[in.k].adjoint();
    r.solution = BeamformingSolution::from_parts(std::move(beams), CMat(), 0.0);
    r.report = evaluate_solution(cfg, ch, in.steer, r.solution, TargetMode::point);
    r.relaxed_crb = r.report.crb_value;
    r.schur_t = schur_t_star(r.solution.r_s, in.steer);
    r.rank_ratios.assign(in.k + 1, 0.0);
    IterRecord rec{r.report.crb_value, 0.0, 0, detail::relaxed_slacks(in, w_cov, nullptr, 0.0)};
    r.trace.iters.push_back(std::move(rec));
    r.trace.status = r.status;
    return r;
  }

  FSearchOut<GainSub> fs = search_f<GainSub>(
      in, [&](double f) { return detail::solve_point_beamgain(in, f); },
      [](const GainSub& s) { return -s.gain; }, nullptr);
  if (!fs.found) {
    SolveResult r = infeasible_result();
    if (fs.any_numerical) r.status = r.trace.status = AlgoStatus::numerical_limit;
    return r;
  }
  SolveResult r;
  r.status = AlgoStatus::converged;
  RankOneResult ro = extract_rank_one(fs.sub.w, opt.rank_tol);
  std::vector<CVec> beams(in.k + 1, CVec::Zero(n));
  beams[in.k] = ro.w;
  r.rank_ratios.assign(in.k + 1, 0.0);
  r.rank_ratios[in.k] = ro.ratio;
  r.solution = BeamformingSolution::from_parts(std::move(beams), CMat(), fs.f);
  r.report = evaluate_solution(cfg, ch, in.steer, r.solution, TargetMode::point);
  r.relaxed_crb = crb_point(fs.sub.w, in.steer, ch.alpha, cfg.n_symbols, in.sigma_s2);
  r.schur_t = schur_t_star(r.solution.r_s, in.steer);
  std::vector<CMat> w_cov(in.k + 1, CMat::Zero(n, n));
  w_cov[in.k] = fs.sub.w;
  IterRecord rec{r.report.crb_value, fs.f, fs.iterations,
                 detail::relaxed_slacks(in, w_cov, nullptr, fs.f)};
  r.trace.iters.push_back(std::move(rec));
  r.trace.status = r.status;
  return r;
}

SolveResult solve_point_ao(const SystemConfig& cfg, const ChannelSet& ch,
                           const SolveOptions& opt) {
  require_users(cfg, "solve_point_ao");
  const Inputs in = detail::make_inputs(cfg, ch, opt);
  const StartPoint start = detail::feasibility_phase(in, false);
  if (!start.feasible) return infeasible_result();
  AlgoTrace trace;
  PointLoopOut loop = run_point_ao_loop(in, start, opt.max_outer, trace);
  if (!loop.ok) {
    SolveResult r;
    r.status = loop.status;
    trace.status = loop.status;
    r.trace = std::move(trace);
    return r;
  }
  return finish_point(in, loop.last, loop.f, std::move(trace), loop.status);
}

SolveResult solve_point_sca(const SystemConfig& cfg, const ChannelSet& ch,
                            const SolveOptions& opt) {
  require_users(cfg, "solve_point_sca");
  const Inputs in = detail::make_inputs(cfg, ch, opt);
  const StartPoint start = detail::feasibility_phase(in, false);
  if (!start.feasible) return infeasible_result();
  AlgoTrace trace;
  std::vector<CMat> w0 = start.w;
  double f0 = start.f_hz;
  double gamma0 = start.gamma_p;
  if (opt.sca_init == SolveOptions::ScaInit::ao_pass) {
    PointLoopOut warm = run_point_ao_loop(in, start, 1, trace);
    if (warm.ok) {
      w0 = warm.last.w;
      f0 = warm.f;
      gamma0 = warm.last.gamma_p;
    }
  }
  PointLoopOut loop = run_point_sca_loop(in, std::move(w0), f0, gamma0, opt.max_outer, trace);
  if (!loop.ok) {
    SolveResult r;
    r.status = loop.status;
    trace.status = loop.status;
    r.trace = std::move(trace);
    return r;
  }
  return finish_point(in, loop.last, loop.f, std::move(trace), loop.status);
}

namespace {

struct ExtLoopOut {
  bool ok = false;
  ExtSub last;
  double f = 0.0;
  AlgoStatus status = AlgoStatus::numerical_limit;
};

/// Re-evaluates known-feasible beam covariances (plus a dedicated radar part)
/// as an extended-target iterate; not usable when the total covariance is
/// singular, since the objective is then unbounded.
ExtSub ext_iterate_from(const Inputs& in, const std::vector<CMat>& w, const CMat& wr) {
  ExtSub s;
  s.w = w;
  s.wr_hat = wr.size() > 0 ? wr : CMat(CMat::Zero(in.m, in.m));
  CMat r_s = s.wr_hat;
  for (const CMat& wi : w) r_s += wi;
  s.r_s = hermitize(r_s);
  Eigen::LLT<CMat> llt(s.r_s);
  if (llt.info() != Eigen::Success) return s;
  s.trinv = llt.solve(CMat::Identity(in.m, in.m)).trace().real();
  s.crb = in.crb_ext_of_trinv(s.trinv);
  s.feasible = true;
  const double sig = real_trace(in.q[in.k], w[in.k]);
  double interf = in.sigma_c2 + real_trace(in.q[in.k], s.wr_hat);
  for (int i = 0; i < in.k; ++i) interf += real_trace(in.q[in.k], w[i]);
  s.gamma_p = sig / interf;
  return s;
}

void push_ext_record(const Inputs& in, AlgoTrace& trace, const ExtSub& sub, double f,
                     int conic_iters) {
  IterRecord rec;
  rec.objective = sub.crb;
  rec.f_hz = f;
  rec.conic_iterations = conic_iters;
  // Record slacks with the radar part taken as R_s - sum_i W_i (what the
  // construction step realizes) rather than the solver's auxiliary radar
  // block; the two differ by the tie-row residuals, and the gamma-scaled
  // SINR ratios would amplify that gap into the recorded slacks.
  CMat wr_res = sub.r_s;
  for (const CMat& wi : sub.w) wr_res -= wi;
  wr_res = hermitize(wr_res);
  rec.slacks = detail::relaxed_slacks(in, sub.w, &wr_res, f);
  trace.iters.push_back(std::move(rec));
}

ExtLoopOut run_ext_ao_loop(const Inputs& in, const StartPoint& start, int max_outer,
                           AlgoTrace& trace) {
  ExtLoopOut out;
  std::vector<CMat> users(start.w.begin(), start.w.begin() + in.k);
  CMat wr_hat = CMat::Zero(in.m, in.m);
  double f_prev = start.f_hz;
  const ExtSub start_sub = ext_iterate_from(in, start.w, wr_hat);
  double prev_crb = !trace.iters.empty()            ? trace.iters.back().objective
                    : start_sub.feasible            ? start_sub.crb
                                                    : kInf;
  auto stall = [&](int conic_iters) {
    if (!out.ok) {
      out.last = start_sub;
      out.f = start.f_hz;
      out.ok = out.last.feasible;
      if (out.ok) push_ext_record(in, trace, out.last, out.f, conic_iters);
    }
    out.status = out.ok ? AlgoStatus::converged : AlgoStatus::numerical_limit;
    return out;
  };
  for (int outer = 0; outer < max_outer; ++outer) {
    FSearchOut<ExtSub> fs = search_f<ExtSub>(
        in, [&](double f) { return detail::solve_ext_block1(in, f, users, wr_hat); },
        [](const ExtSub& s) { return s.crb; }, &f_prev);
    if (!fs.found) return stall(fs.iterations);
    const CMat wp = fs.sub.w[in.k];
    ExtSub sub2 = detail::solve_ext_joint(in, fs.f, &wp, nullptr);
    const ExtSub& cand = sub2.feasible ? sub2 : fs.sub;
    if (cand.crb > prev_crb * (1.0 + 1e-9)) return stall(fs.iterations + sub2.iterations);
    users.assign(cand.w.begin(), cand.w.begin() + in.k);
    wr_hat = cand.wr_hat;
    push_ext_record(in, trace, cand, fs.f, fs.iterations + sub2.iterations);
    out.ok = true;
    out.last = cand;
    out.f = fs.f;
    f_prev = fs.f;
    if (!sub2.feasible || std::abs(prev_crb - out.last.crb) < in.opt.tol_obj * std::abs(prev_crb)) {
      out.status = AlgoStatus::converged;
      return out;
    }
    prev_crb = out.last.crb;
  }
  out.status = AlgoStatus::iteration_limit;
  return out;
}

/// Extended-target surrogate loop, structured like the point version: exact
/// golden-section frequency choice first, surrogate iteration at that
/// frequency second.
ExtLoopOut run_ext_sca_loop(const Inputs& in, const std::vector<CMat>& w0, double f0,
                            double gamma0, int max_outer, AlgoTrace& trace) {
  ExtLoopOut out;
  double f_prev = f0;
  const ExtSub seed_sub = ext_iterate_from(in, w0, CMat());
  double prev_crb = !trace.iters.empty() ? trace.iters.back().objective
                    : seed_sub.feasible  ? seed_sub.crb
                                         : kInf;
  FSearchOut<ExtSub> fs = search_f<ExtSub>(
      in, [&](double f) { return detail::solve_ext_joint(in, f, nullptr, nullptr); },
      [](const ExtSub& s) { return s.crb; }, &f_prev);
  if (!fs.found || fs.sub.crb > prev_crb * (1.0 + 1e-9)) {
    out.last = seed_sub;
    out.f = f0;
    out.ok = out.last.feasible;
    if (out.ok) push_ext_record(in, trace, out.last, out.f, fs.iterations);
    out.status = out.ok ? AlgoStatus::converged
                        : (fs.any_numerical ? AlgoStatus::numerical_limit
                                            : AlgoStatus::infeasible);
    return out;
  }
  const double grq = in.gamma_req(fs.f) * (1.0 + in.opt.sinr_margin);
  ScaPoint lin;
  lin.tr_wp = real_trace(in.q[in.k], w0[in.k]);
  lin.gamma_p = std::max({gamma0, grq, 1e-12});
  auto adopt_exact = [&]() {
    if (!out.ok) {
      push_ext_record(in, trace, fs.sub, fs.f, fs.iterations);
      out.last = fs.sub;
      out.ok = true;
    }
    out.f = fs.f;
    out.status = AlgoStatus::converged;
    return out;
  };
  for (int outer = 0; outer < max_outer; ++outer) {
    ExtSub sub = detail::solve_ext_joint(in, fs.f, nullptr, grq > 0 ? &lin : nullptr);
    if (!sub.feasible && !out.ok) {
      lin.tr_wp = real_trace(in.q[in.k], fs.sub.w[in.k]);
      lin.gamma_p = std::max({fs.sub.gamma_p, grq, 1e-12});
      sub = detail::solve_ext_joint(in, fs.f, nullptr, grq > 0 ? &lin : nullptr);
    }
    if (!sub.feasible || sub.crb > prev_crb * (1.0 + 1e-9)) return adopt_exact();
    push_ext_record(in, trace, sub, fs.f, sub.iterations);
    lin.tr_wp = real_trace(in.q[in.k], sub.w[in.k]);
    lin.gamma_p = std::max({sub.gamma_p, grq, 1e-12});
    out.ok = true;
    out.last = std::move(sub);
    out.f = fs.f;
    if (std::abs(prev_crb - out.last.crb) < in.opt.tol_obj * std::abs(prev_crb)) {
      out.status = AlgoStatus::converged;
      return out;
    }
    prev_crb = out.last.crb;
  }
  out.status = AlgoStatus::iteration_limit;
  return out;
}

SolveResult finish_ext_loop(const Inputs& in, const ExtLoopOut& loop, AlgoTrace trace) {
  if (!loop.ok) {
    SolveResult r;
    r.status = loop.status;
    trace.status = loop.status;
    r.trace = std::move(trace);
    return r;
  }
  return finish_extended(in, loop.last, loop.f, std::move(trace), loop.status);
}

}  // namespace

SolveResult solve_extended_nocomm(const SystemConfig& cfg, const ChannelSet& ch,
                                  const SolveOptions& opt) {
  require_no_active_users(cfg, "solve_extended_nocomm");
  const Inputs in = detail::make_inputs(cfg, ch, opt);
  const StartPoint start = detail::feasibility_phase(in, true);
  if (!start.feasible) return infeasible_result();
  AlgoTrace trace;
  ExtLoopOut loop = run_ext_sca_loop(in, start.w, start.f_hz, start.gamma_p, opt.max_outer, trace);
  return finish_ext_loop(in, loop, std::move(trace));
}

SolveResult solve_extended_ao(const SystemConfig& cfg, const ChannelSet& ch,
                              const SolveOptions& opt) {
  require_users(cfg, "solve_extended_ao");
  const Inputs in = detail::make_inputs(cfg, ch, opt);
  const StartPoint start = detail::feasibility_phase(in, true);
  if (!start.feasible) return infeasible_result();
  AlgoTrace trace;
  ExtLoopOut loop = run_ext_ao_loop(in, start, opt.max_outer, trace);
  return finish_ext_loop(in, loop, std::move(trace));
}

SolveResult solve_extended_sca(const SystemConfig& cfg, const ChannelSet& ch,
                               const SolveOptions& opt) {
  require_users(cfg, "solve_extended_sca");
  const Inputs in = detail::make_inputs(cfg, ch, opt);
  const StartPoint start = detail::feasibility_phase(in, true);
  if (!start.feasible) return infeasible_result();
  AlgoTrace trace;
  std::vector<CMat> w0 = start.w;
  double f0 = start.f_hz;
  double gamma0 = start.gamma_p;
  if (opt.sca_init == SolveOptions::ScaInit::ao_pass) {
    ExtLoopOut warm = run_ext_ao_loop(in, start, 1, trace);
    if (warm.ok) {
      w0 = warm.last.w;
      f0 = warm.f;
      gamma0 = warm.last.gamma_p;
    }
  }
  ExtLoopOut loop = run_ext_sca_loop(in, w0, f0, gamma0, opt.max_outer, trace);
  return finish_ext_loop(in, loop, std::move(trace));
}

}  // namespace iscc::algorithms
