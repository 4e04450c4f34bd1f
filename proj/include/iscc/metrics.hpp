#ifndef ISCC_METRICS_HPP
#define ISCC_METRICS_HPP

#include <string>
#include <vector>

#include "iscc/scenario.hpp"

namespace iscc {

/**
 * @brief One transmit design: user/server beams, radar covariance, CPU speed.
 *
 * r_s always equals sum_k w_c[k] w_c[k]^H + w_r_cov; use from_parts() to keep
 * that invariant.
 */
struct BeamformingSolution {
  std::vector<CVec> w_c;  ///< K user beams followed by the offload beam
  CMat w_r_cov;           ///< dedicated radar covariance W_r W_r^H (may be 0x0)
  double f_hz = 0.0;      ///< edge-CPU frequency
  CMat r_s;               ///< total transmit covariance

  static BeamformingSolution from_parts(std::vector<CVec> w_c, CMat w_r_cov, double f_hz);
};

/// Recompute the transmit covariance from the solution's parts.
CMat covariance(const BeamformingSolution& sol);

/// Angle CRB of a point target (rad^2). Throws SingularFisherError when the
/// Fisher denominator degenerates (e.g. M_rx = 1).
double crb_point(const CMat& r_s, const SteeringBundle& s, cdouble alpha, int n_symbols,
                 double noise_sense_w);

/// Response-matrix CRB of an extended target: sigma_s^2 M_rx / T * tr(R_s^-1).
/// Throws SingularCovarianceError when r_s is numerically singular.
double crb_extended(const CMat& r_s, int m_rx, int n_symbols, double noise_sense_w);

/// 2x2 Schur-complement matrix whose PSD-ness encodes t <= Fisher margin.
Eigen::Matrix2cd schur_crb_matrix(const CMat& r_s, const SteeringBundle& s, double t);

/// Largest t for which schur_crb_matrix stays PSD (closed form).
double schur_t_star(const CMat& r_s, const SteeringBundle& s);

/// Downlink SINR of user k (0-based, k < K).
double comm_sinr(const ChannelSet& ch, const BeamformingSolution& sol, int k,
                 double noise_comm_w);

/// Offloading SINR at the edge server (receiver K).
double offload_sinr(const ChannelSet& ch, const BeamformingSolution& sol, double noise_comm_w);

/// Computation rate: f/rho + B log2(1 + gamma_p) [bit/s].
double process_rate(double f_hz, double cycles_per_bit, double bandwidth_hz, double gamma_p);

/// Total transmit + CPU power: sum ||w||^2 + tr(W_r_cov) + kappa f^3.
double power_used(const BeamformingSolution& sol, double cpu_eff);

/// Transmit beampattern a(theta)^H R_s a(theta) on a grid (radians).
RVec beampattern(const CMat& r_s, const RVec& thetas_rad, double delta, bool parallel = true);
RVec beampattern_serial(const CMat& r_s, const RVec& thetas_rad, double delta);

enum class TargetMode { point, extended };

struct ConstraintSlack {
  std::string name;
  double value;  ///< achieved quantity (SINR, rate, power, f)
  double slack;  ///< >= 0 when satisfied, natural units
};

/**
 * @brief Exact re-evaluation of one solution against its scenario.
 *
 * Slacks are recomputed from the solution through the metric functions above,
 * never copied from solver state. A slack is accepted down to
 * -1e-8 * max(1, |constraint level|).
 */
struct CrbReport {
  double crb_value = 0.0;
  double crb_db = 0.0;
  TargetMode mode = TargetMode::point;
  bool feasible = false;
  std::vector<ConstraintSlack> slacks;
};

CrbReport evaluate_solution(const SystemConfig& cfg, const ChannelSet& ch,
                            const SteeringBundle& s, const BeamformingSolution& sol,
                            TargetMode mode);

}  // namespace iscc

#endif  // ISCC_METRICS_HPP
