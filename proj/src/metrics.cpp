#include "iscc/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "iscc/errors.hpp"

namespace iscc {

namespace {

// tr(M R) for Hermitian R; the result is real when M is Hermitian, and for
// general M the real part is what the CRB expressions consume.
cdouble trace_prod(const CMat& m, const CMat& r) { return (m * r).trace(); }

void check_covariance_arg(const CMat& r_s, int n) {
  if (r_s.rows() != n || r_s.cols() != n)
    throw std::invalid_argument("covariance has wrong dimensions");
}

}  // namespace

BeamformingSolution BeamformingSolution::from_parts(std::vector<CVec> w_c, CMat w_r_cov,
                                                    double f_hz) {
  BeamformingSolution sol;
  sol.w_c = std::move(w_c);
  sol.w_r_cov = std::move(w_r_cov);
  sol.f_hz = f_hz;
  sol.r_s = covariance(sol);
  return sol;
}

CMat covariance(const BeamformingSolution& sol) {
  if (sol.w_c.empty() && sol.w_r_cov.size() == 0)
    throw std::invalid_argument("covariance: empty solution");
  const Eigen::Index n = sol.w_c.empty() ? sol.w_r_cov.rows() : sol.w_c.front().size();
  CMat r = CMat::Zero(n, n);
  for (const CVec& w : sol.w_c) {
    if (w.size() != n) throw std::invalid_argument("covariance: beam length mismatch");
    r.noalias() += w * w.adjoint();
  }
  if (sol.w_r_cov.size() != 0) {
    if (sol.w_r_cov.rows() != n || sol.w_r_cov.cols() != n)
      throw std::invalid_argument("covariance: radar covariance dimension mismatch");
    r += sol.w_r_cov;
  }
  return r;
}

double crb_point(const CMat& r_s, const SteeringBundle& s, cdouble alpha, int n_symbols,
                 double noise_sense_w) {
  const int m_tx = static_cast<int>(s.a.size());
  check_covariance_arg(r_s, m_tx);
  if (n_symbols < 1) throw std::invalid_argument("crb_point: n_symbols must be >= 1");
  if (noise_sense_w <= 0) throw std::invalid_argument("crb_point: noise power must be > 0");
  const double a2 = std::norm(alpha);
  if (a2 <= 0) throw std::invalid_argument("crb_point: |alpha|^2 must be > 0");

  const double t_aa = trace_prod(s.A.adjoint() * s.A, r_s).real();
  const double t_dd = trace_prod(s.A_dot.adjoint() * s.A_dot, r_s).real();
  const cdouble t_da = trace_prod(s.A_dot.adjoint() * s.A, r_s);
  const double denom = t_dd * t_aa - std::norm(t_da);
  const double scale = std::abs(t_dd * t_aa) + std::norm(t_da);
  if (!(denom > 0) || denom <= 1e-14 * scale)
    throw SingularFisherError("crb_point: degenerate Fisher information for the target angle");
  return noise_sense_w / (2.0 * a2 * n_symbols) * t_aa / denom;
}

double crb_extended(const CMat& r_s, int m_rx, int n_symbols, double noise_sense_w) {
  if (r_s.rows() != r_s.cols() || r_s.rows() < 1)
    throw std::invalid_argument("crb_extended: covariance must be square");
  if (m_rx < 1) throw std::invalid_argument("crb_extended: m_rx must be >= 1");
  if (n_symbols < 1) throw std::invalid_argument("crb_extended: n_symbols must be >= 1");
  if (noise_sense_w <= 0) throw std::invalid_argument("crb_extended: noise power must be > 0");

  Eigen::SelfAdjointEigenSolver<CMat> eig(r_s);
  const RVec& ev = eig.eigenvalues();
  const double lmax = ev.maxCoeff();
  if (!(lmax > 0) || ev.minCoeff() < 1e-12 * lmax)
    throw SingularCovarianceError(
        "crb_extended: transmit covariance must be full rank M_tx to estimate the "
        "full response matrix");
  double tr_inv = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) tr_inv += 1.0 / ev[i];
  return noise_sense_w * m_rx / n_symbols * tr_inv;
}

Eigen::Matrix2cd schur_crb_matrix(const CMat& r_s, const SteeringBundle& s, double t) {
  check_covariance_arg(r_s, static_cast<int>(s.a.size()));
  Eigen::Matrix2cd z;
  const cdouble t_da = trace_prod(s.A_dot.adjoint() * s.A, r_s);
  z(0, 0) = trace_prod(s.A_dot.adjoint() * s.A_dot, r_s).real() - t;
  z(0, 1) = t_da;
  z(1, 0) = std::conj(t_da);
  z(1, 1) = trace_prod(s.A.adjoint() * s.A, r_s).real();
  return z;
}

double schur_t_star(const CMat& r_s, const SteeringBundle& s) {
  const double t_aa = trace_prod(s.A.adjoint() * s.A, r_s).real();
  const double t_dd = trace_prod(s.A_dot.adjoint() * s.A_dot, r_s).real();
  const cdouble t_da = trace_prod(s.A_dot.adjoint() * s.A, r_s);
  if (!(t_aa > 0)) throw SingularFisherError("schur_t_star: tr(A^H A R_s) must be positive");
  return t_dd - std::norm(t_da) / t_aa;
}

double comm_sinr(const ChannelSet& ch, const BeamformingSolution& sol, int k,
                 double noise_comm_w) {
  const int n_rx = static_cast<int>(ch.h.size());
  if (k < 0 || k >= n_rx - 1) throw std::invalid_argument("comm_sinr: user index out of range");
  if (noise_comm_w <= 0) throw std::invalid_argument("comm_sinr: noise power must be > 0");
  const CVec& h = ch.h[k];
  double signal = 0.0;
  double interference = 0.0;
  for (std::size_t i = 0; i < sol.w_c.size(); ++i) {
    const double p = std::norm(h.dot(sol.w_c[i]));  // |h^H w|^2
    if (static_cast<int>(i) == k)
      signal = p;
    else
      interference += p;
  }
  if (sol.w_r_cov.size() != 0) interference += (h.adjoint() * sol.w_r_cov * h)(0, 0).real();
  return signal / (interference + noise_comm_w);
}

double offload_sinr(const ChannelSet& ch, const BeamformingSolution& sol, double noise_comm_w) {
  if (ch.h.empty()) throw std::invalid_argument("offload_sinr: empty channel set");
  if (noise_comm_w <= 0) throw std::invalid_argument("offload_sinr: noise power must be > 0");
  const CVec& h = ch.h.back();
  const int k_server = static_cast<int>(ch.h.size()) - 1;
  double signal = 0.0;
  double interference = 0.0;
  for (std::size_t i = 0; i < sol.w_c.size(); ++i) {
    const double p = std::norm(h.dot(sol.w_c[i]));
    if (static_cast<int>(i) == k_server)
      signal = p;
    else
      interference += p;
  }
  if (sol.w_r_cov.size() != 0) interference += (h.adjoint() * sol.w_r_cov * h)(0, 0).real();
  return signal / (interference + noise_comm_w);
}

double process_rate(double f_hz, double cycles_per_bit, double bandwidth_hz, double gamma_p) {
  if (cycles_per_bit <= 0) throw std::invalid_argument("process_rate: cycles_per_bit must be > 0");
  if (bandwidth_hz <= 0) throw std::invalid_argument("process_rate: bandwidth must be > 0");
  if (f_hz < 0) throw std::invalid_argument("process_rate: f must be >= 0");
  if (gamma_p < 0) throw std::invalid_argument("process_rate: gamma_p must be >= 0");
  return f_hz / cycles_per_bit + bandwidth_hz * std::log2(1.0 + gamma_p);
}

double power_used(const BeamformingSolution& sol, double cpu_eff) {
  double p = cpu_eff * sol.f_hz * sol.f_hz * sol.f_hz;
  for (const CVec& w : sol.w_c) p += w.squaredNorm();
  if (sol.w_r_cov.size() != 0) p += sol.w_r_cov.trace().real();
  return p;
}

RVec beampattern_serial(const CMat& r_s, const RVec& thetas_rad, double delta) {
  const int n = static_cast<int>(r_s.rows());
  RVec gains(thetas_rad.size());
  for (Eigen::Index i = 0; i < thetas_rad.size(); ++i) {
    const CVec a = steering_vector(thetas_rad[i], n, delta);
    gains[i] = (a.adjoint() * r_s * a)(0, 0).real();
  }
  return gains;
}

RVec beampattern(const CMat& r_s, const RVec& thetas_rad, double delta, bool parallel) {
  if (!parallel) return beampattern_serial(r_s, thetas_rad, delta);
  const int n = static_cast<int>(r_s.rows());
  RVec gains(thetas_rad.size());
  const Eigen::Index count = thetas_rad.size();
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < count; ++i) {
    const CVec a = steering_vector(thetas_rad[i], n, delta);
    gains[i] = (a.adjoint() * r_s * a)(0, 0).real();
  }
  return gains;
}

CrbReport evaluate_solution(const SystemConfig& cfg, const ChannelSet& ch,
                            const SteeringBundle& s, const BeamformingSolution& sol,
                            TargetMode mode) {
  CrbReport rep;
  rep.mode = mode;
  try {
    rep.crb_value = mode == TargetMode::point
                        ? crb_point(sol.r_s, s, ch.alpha, cfg.n_symbols, cfg.noise_sense_w)
                        : crb_extended(sol.r_s, cfg.m_rx, cfg.n_symbols, cfg.noise_sense_w);
  } catch (const SingularFisherError&) {
    rep.crb_value = std::numeric_limits<double>::infinity();
  } catch (const SingularCovarianceError&) {
    rep.crb_value = std::numeric_limits<double>::infinity();
  }
  rep.crb_db = 10.0 * std::log10(rep.crb_value);

  rep.slacks.push_back({"f_lower", sol.f_hz, sol.f_hz});
  rep.slacks.push_back({"f_upper", sol.f_hz, cfg.f_max_hz - sol.f_hz});
  for (int k = 0; k < cfg.n_users; ++k) {
    const double g = comm_sinr(ch, sol, k, cfg.noise_comm_w);
    rep.slacks.push_back({"sinr_user_" + std::to_string(k), g, g - cfg.sinr_thresholds[k]});
  }
  const double gamma_p = offload_sinr(ch, sol, cfg.noise_comm_w);
  const double rate = process_rate(sol.f_hz, cfg.cycles_per_bit, cfg.bandwidth_hz, gamma_p);
  rep.slacks.push_back({"process_rate", rate, rate - cfg.rate_min_bps});
  const double pw = power_used(sol, cfg.cpu_eff);
  rep.slacks.push_back({"power", pw, cfg.power_budget_w - pw});

  // Acceptance floor: -1e-8 relative to the constraint level (1.0 minimum).
  auto level = [&](std::size_t i) -> double {
    if (i == 0 || i == 1) return cfg.f_max_hz;
    if (i < 2 + static_cast<std::size_t>(cfg.n_users)) return cfg.sinr_thresholds[i - 2];
    if (i == 2 + static_cast<std::size_t>(cfg.n_users)) return cfg.rate_min_bps;
    return cfg.power_budget_w;
  };
  rep.feasible = true;
  for (std::size_t i = 0; i < rep.slacks.size(); ++i)
    if (rep.slacks[i].slack < -1e-8 * std::max(1.0, std::abs(level(i)))) rep.feasible = false;
  return rep;
}

}  // namespace iscc
