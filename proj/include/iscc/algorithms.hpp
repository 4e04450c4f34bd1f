#ifndef ISCC_ALGORITHMS_HPP
#define ISCC_ALGORITHMS_HPP

#include <functional>
#include <optional>
#include <vector>

#include "iscc/conic.hpp"
#include "iscc/metrics.hpp"
#include "iscc/scenario.hpp"

namespace iscc::algorithms {

/**
 * @brief Tuning knobs shared by all beamforming solvers.
 *
 * The margins tighten the conic-model constraints slightly so that the
 * rank-one solutions recovered afterwards still re-validate through the
 * metrics module (slack >= -1e-8 in natural units) despite solver gap and
 * factorization error. They are relative to each constraint's level and small
 * enough to move the objective by far less than tol_obj.
 */
struct SolveOptions {
  double tol_obj = 1e-5;      ///< relative objective tolerance of the outer loops
  int max_outer = 100;        ///< outer-iteration cap
  double f_search_tol = 1e3;  ///< golden-section tolerance over the CPU frequency [Hz]
  enum class ScaInit {
    feasibility,  ///< scaled matched filters, else an interior feasible point
    ao_pass,      ///< one alternating-optimization pass from the feasibility point
  };
  ScaInit sca_init = ScaInit::feasibility;
  double rank_tol = 1e-6;   ///< lambda2/lambda1 threshold for rank-one certification
  bool force_sdp = false;   ///< no-communication: skip the closed form even when it applies
  double sinr_margin = 1e-7;   ///< relative tightening of SINR / rate rows
  double power_margin = 1e-8;  ///< relative tightening of the power budget
  conic::ConicSolverOptions conic{1e-9, 1e-9};
};

enum class AlgoStatus { converged, iteration_limit, infeasible, numerical_limit };
const char* to_string(AlgoStatus s);

/// One outer iteration of an AO / SCA loop, as seen from the relaxed iterate.
struct IterRecord {
  double objective = 0.0;  ///< CRB after this iteration (rad^2 or TRM-MSE units)
  double f_hz = 0.0;       ///< CPU frequency selected this iteration
  int conic_iterations = 0;  ///< interior-point iterations spent (all probes)
  /// Constraint slacks of the relaxed iterate, natural units:
  /// [sinr_1..K, process_rate, power]; SINR slots for zero thresholds hold 0.
  std::vector<double> slacks;
};

struct AlgoTrace {
  std::vector<IterRecord> iters;
  AlgoStatus status = AlgoStatus::numerical_limit;
};

/// Leading-eigenpair factorization of a PSD matrix with rank-one diagnostics.
struct RankOneResult {
  CVec w;                  ///< sqrt(lambda1) * v1, largest-|entry| made real positive
  double ratio = 0.0;      ///< lambda2 / lambda1 (0 for the zero matrix)
  bool certified = false;  ///< ratio <= rank_tol
};
RankOneResult extract_rank_one(const CMat& w_mat, double rank_tol);

/// True iff the two nonzero eigenvalues of x x^H + y y^H coincide, which
/// happens exactly when ||x|| = ||y|| and x^H y = 0 (tolerance 1e-9 relative).
bool lemma2_eigen_check(const CVec& x, const CVec& y);

struct SolveResult {
  AlgoStatus status = AlgoStatus::numerical_limit;
  BeamformingSolution solution;
  CrbReport report;  ///< metrics-module re-evaluation of `solution`
  AlgoTrace trace;
  double relaxed_crb = 0.0;  ///< objective of the final relaxed iterate (lower bound)
  std::vector<double> rank_ratios;  ///< lambda2/lambda1 per recovered beam
  double schur_t = 0.0;             ///< point target: achieved epigraph value t*
  CMat radar_factor;                ///< extended target: W_r with W_r W_r^H = w_r_cov
};

/// Sensing-only design with an offloading requirement (no user SINRs).
/// Closed form when the full-power matched-filter beam already meets the
/// computation rate by offloading alone; otherwise a beam-gain SDP with the
/// CPU frequency eliminated by golden-section.
SolveResult solve_point_nocomm(const SystemConfig& cfg, const ChannelSet& ch,
                               const SolveOptions& opt = {});

/// Alternating optimization for the point target: offload beam + CPU frequency
/// in one block, user beams in the other, CRB epigraph via the Schur lemma.
SolveResult solve_point_ao(const SystemConfig& cfg, const ChannelSet& ch,
                           const SolveOptions& opt = {});

/// Successive convex approximation for the point target: one conic problem per
/// iteration over all beams and the offload-SINR slack, with the bilinear
/// offload constraint replaced by a tight concave surrogate.
SolveResult solve_point_sca(const SystemConfig& cfg, const ChannelSet& ch,
                            const SolveOptions& opt = {});

/// Extended target without users: trace-inverse objective over beam + radar
/// covariance, SCA handling of the offload constraint.
SolveResult solve_extended_nocomm(const SystemConfig& cfg, const ChannelSet& ch,
                                  const SolveOptions& opt = {});

/// Alternating optimization for the extended target with the total covariance
/// as an explicit variable; rank-one beams rebuilt by the SINR-preserving
/// construction and the radar covariance by pivoted Cholesky.
SolveResult solve_extended_ao(const SystemConfig& cfg, const ChannelSet& ch,
                              const SolveOptions& opt = {});

/// SCA for the extended target: all beams, the total covariance and the
/// offload-SINR slack in one conic problem per iteration.
SolveResult solve_extended_sca(const SystemConfig& cfg, const ChannelSet& ch,
                               const SolveOptions& opt = {});

namespace detail {

/// Precomputed scenario data shared by the conic model builders.
struct Inputs {
  const SystemConfig* cfg = nullptr;
  const ChannelSet* ch = nullptr;
  SteeringBundle steer;
  SolveOptions opt;
  int m = 0;  ///< transmit antennas
  int k = 0;  ///< number of users (offload receiver has index k)
  double p0 = 0.0, sigma_c2 = 0.0, sigma_s2 = 0.0;
  double kappa = 0.0, rho = 0.0, bw = 0.0, f_max = 0.0, r_min = 0.0;
  double t_syms = 0.0;
  std::vector<double> gamma;  ///< user SINR thresholds (size k)
  std::vector<CMat> q;        ///< channel outer products, q[k] is the server's
  CMat q_target;              ///< a a^H
  CMat m_dd, m_aa, m_da_re, m_da_im;  ///< Hermitian pieces of the Fisher traces

  double gamma_req(double f_hz) const;   ///< offload-SINR floor at CPU speed f
  double budget(double f_hz) const;      ///< margined transmit power budget
  double crb_point_of_t(double t) const; ///< sigma_s^2 / (2 |alpha|^2 T) / t
  double crb_ext_of_trinv(double trinv) const;  ///< sigma_s^2 M_r / T * trinv
};
Inputs make_inputs(const SystemConfig& cfg, const ChannelSet& ch, const SolveOptions& opt);

/**
 * Golden-section minimization of a unimodal value function on [lo, hi];
 * +inf marks infeasible probes. Returns the best argument found;
 * *best_value receives its value (+inf when every probe failed).
 */
double golden_section(const std::function<double(double)>& value, double lo, double hi,
                      double tol, double* best_value);

/// Linearization point of the offload-SINR surrogate.
struct ScaPoint {
  double tr_wp = 0.0;   ///< tr(Q_p W_p) at the expansion point
  double gamma_p = 0.0; ///< offload-SINR slack at the expansion point (> 0)
};

/// Result of one fixed-frequency conic solve (point target).
struct PointSub {
  bool feasible = false;
  bool numerical = false;
  double t = 0.0;    ///< Schur epigraph value (Fisher margin)
  double crb = 0.0;
  std::vector<CMat> w;  ///< all K+1 beam covariances (fixed blocks copied through)
  double gamma_p = 0.0; ///< offload-SINR variable (or its pinned value)
  double offload_mult = 0.0;   ///< multiplier of the offload-rate row (0 if dropped)
  double offload_slack = 0.0;  ///< slack of that row at the relaxed solution
  int iterations = 0;
};

/**
 * CRB-epigraph problem at fixed f. Fixing `users` yields AO block 1 (offload
 * beam only), fixing `wp` yields AO block 2 (user beams only); both null with
 * lin == nullptr solves the exact joint problem (offload row linear at
 * gamma_req(f)); lin != nullptr replaces it by the SCA surrogate.
 */
PointSub solve_point_fixed(const Inputs& in, double f_hz, const std::vector<CMat>* users,
                           const CMat* wp, const ScaPoint* lin);

/// Beam-gain maximization at fixed f (no-communication point design).
struct GainSub {
  bool feasible = false;
  bool numerical = false;
  double gain = 0.0;  ///< a^H W a
  CMat w;
  double offload_mult = 0.0;
  double offload_slack = 0.0;
  int iterations = 0;
};
GainSub solve_point_beamgain(const Inputs& in, double f_hz);

/// Result of one fixed-frequency conic solve (extended target).
struct ExtSub {
  bool feasible = false;
  bool numerical = false;
  double trinv = 0.0;  ///< tr(R_s^{-1}) epigraph value
  double crb = 0.0;
  std::vector<CMat> w;  ///< all K+1 beam covariances
  CMat r_s;
  CMat wr_hat;          ///< R_s - sum W (the dedicated radar covariance)
  double gamma_p = 0.0;
  double offload_mult = 0.0;
  double offload_slack = 0.0;
  int iterations = 0;
};

/// Extended AO block 1: offload beam with user beams and radar covariance fixed.
ExtSub solve_ext_block1(const Inputs& in, double f_hz, const std::vector<CMat>& users,
                        const CMat& wr_fixed);

/**
 * Extended joint problem at fixed f over ({W_k}, R_s). `wp` fixed yields AO
 * block 2; lin == nullptr keeps the offload row linear at gamma_req(f),
 * lin != nullptr applies the SCA surrogate. K = 0 gives the
 * no-communication extended design.
 */
ExtSub solve_ext_joint(const Inputs& in, double f_hz, const CMat* wp, const ScaPoint* lin);

/// Feasible starting block ({W_k}, f) for the outer loops, or infeasible.
struct StartPoint {
  bool feasible = false;
  std::vector<CMat> w;  ///< K+1 beam covariances
  double f_hz = 0.0;
  double gamma_p = 0.0;  ///< offload SINR at the start (by definition)
};
StartPoint feasibility_phase(const Inputs& in, bool extended);

/// Relaxed-iterate slacks in natural units: [sinr_1..K, rate, power].
std::vector<double> relaxed_slacks(const Inputs& in, const std::vector<CMat>& w,
                                   const CMat* wr_hat, double f_hz);

/// Rank-one extraction finish for a point-target relaxed iterate: the same
/// path the outer loops use once converged (leading-eigenvector beams,
/// metrics re-evaluation). Lets fixed-frequency designs such as the
/// benchmark baselines produce full solve results.
SolveResult finalize_point(const Inputs& in, const PointSub& sub, double f_hz,
                           AlgoTrace trace, AlgoStatus status);

/// Construction finish for an extended-target relaxed iterate
/// (SINR-preserving beams, radar covariance from the clipped residual).
SolveResult finalize_extended(const Inputs& in, const ExtSub& sub, double f_hz,
                              AlgoTrace trace, AlgoStatus status);

}  // namespace detail

}  // namespace iscc::algorithms

#endif  // ISCC_ALGORITHMS_HPP
