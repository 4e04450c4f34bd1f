#ifndef ISCC_MCVAL_HPP
#define ISCC_MCVAL_HPP

#include <cstdint>
#include <vector>

#include "iscc/scenario.hpp"

/**
 * @file Monte-Carlo validation of the estimation-theoretic bounds.
 *
 * The optimizer minimizes closed-form lower bounds on estimator variance;
 * this module checks those formulas against physics: simulate echoes from the
 * designed transmit covariance, run reference estimators (least squares for
 * the whole response matrix, concentrated-likelihood search for the target
 * angle), and compare the empirical mean squared error with the bound.
 *
 * All randomness is counter-based and keyed by explicit seeds, so every batch
 * is reproducible bit-for-bit regardless of thread count.
 */
namespace iscc::mcval {

/// Deterministic per-trial sub-seed (splitmix-style avalanche of (seed, index));
/// trial i of a batch draws its signal from derive_seed(seed, 2i) and its noise
/// from derive_seed(seed, 2i + 1).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// t columns i.i.d. CN(0, r_s), generated through the eigenfactor of r_s.
/// Rank-deficient covariances are supported: samples stay in the column space.
/// Throws std::invalid_argument when r_s is not Hermitian PSD (eigenvalues
/// below -1e-9 * lambda_max).
CMat sample_signal(const CMat& r_s, int t, std::uint64_t seed);

/// Echo model Y = G S + N with N i.i.d. CN(0, sigma_s2).
CMat simulate_echo(const CMat& g, const CMat& s, double sigma_s2, std::uint64_t seed);

/// Least-squares response-matrix estimate Ghat = Y S^H (S S^H)^{-1}.
/// Throws RankDeficientSignalError when S S^H is numerically singular.
CMat ls_estimate_trm(const CMat& y, const CMat& s);

/// Closed-form total mean squared error of ls_estimate_trm conditioned on the
/// transmitted S: sigma_s2 * m_rx * tr((S S^H)^{-1}). This equals the
/// response-matrix CRB evaluated at the realized waveform, which the
/// least-squares estimator attains with equality.
double ls_trm_mse(const CMat& s, double sigma_s2, int m_rx);

struct PointEstimate {
  double theta_rad = 0.0;
  cdouble alpha{0.0, 0.0};
};

/**
 * Concentrated-likelihood angle estimate for the point-target echo model
 * Y = alpha b(theta) a(theta)^H S + N: for each candidate angle the optimal
 * alpha is eliminated in closed form, the resulting statistic
 * |b^H Y S^H a|^2 / (||b||^2 a^H S S^H a) is maximized over theta_grid, and
 * the best cell is refined by golden section to refine_tol. alpha is then the
 * closed-form least-squares coefficient at the refined angle.
 * Throws std::invalid_argument on an empty grid or mismatched dimensions.
 */
PointEstimate mle_point(const CMat& y, const CMat& s, const SystemConfig& cfg,
                        const std::vector<double>& theta_grid, double refine_tol);

/// Uniform inclusive grid over [lo, hi] with spacing <= step_rad.
std::vector<double> make_theta_grid(double lo, double hi, double step_rad);

/**
 * @brief One seeded validation batch: empirical MSE against the bound.
 *
 * `estimates` holds one scalar per trial: the squared Frobenius error for the
 * response-matrix batch (the estimate itself is a matrix) and the estimated
 * angle for the angle batch. `crb` is the mean over trials of the per-trial
 * bound evaluated at the realized waveform.
 */
struct TrialBatch {
  int n_trials = 0;
  std::uint64_t seed = 0;
  std::vector<double> estimates;
  double mse = 0.0;
  double crb = 0.0;
  double ratio = 0.0;  ///< mse / crb
};

/**
 * Response-matrix validation: per trial, draw S ~ CN(0, r_s) columns and
 * noise at sigma_s2, estimate G by least squares, and record the squared
 * Frobenius error. The reference bound is the realized-waveform CRB
 * sigma_s2 * m_rx * tr((S S^H)^{-1}) averaged over trials.
 * Throws std::invalid_argument on inconsistent dimensions or n_trials < 1 and
 * RankDeficientSignalError when r_s is singular (every draw would be too).
 */
TrialBatch ls_crb_batch(const CMat& g, const CMat& r_s, int t_symbols, double sigma_s2,
                        int n_trials, std::uint64_t seed, bool parallel = true);
/// Serial reference implementation; bit-identical to ls_crb_batch.
TrialBatch ls_crb_batch_serial(const CMat& g, const CMat& r_s, int t_symbols, double sigma_s2,
                               int n_trials, std::uint64_t seed);

/**
 * Angle validation: the true target sits at cfg.target_angle_rad with
 * reflection coefficient alpha; per trial, draw S ~ CN(0, r_s) columns of
 * length cfg.n_symbols, simulate the echo at cfg.noise_sense_w, estimate the
 * angle by mle_point over theta_grid, and record the squared angle error.
 * The reference bound is the point-target angle CRB evaluated at the realized
 * sample covariance S S^H / T, averaged over trials.
 */
TrialBatch mle_crb_batch(const SystemConfig& cfg, cdouble alpha, const CMat& r_s,
                         const std::vector<double>& theta_grid, double refine_tol,
                         int n_trials, std::uint64_t seed, bool parallel = true);
/// Serial reference implementation; bit-identical to mle_crb_batch.
TrialBatch mle_crb_batch_serial(const SystemConfig& cfg, cdouble alpha, const CMat& r_s,
                                const std::vector<double>& theta_grid, double refine_tol,
                                int n_trials, std::uint64_t seed);

}  // namespace iscc::mcval

#endif  // ISCC_MCVAL_HPP
