#include "iscc/mcval.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "iscc/algorithms.hpp"
#include "iscc/errors.hpp"
#include "iscc/metrics.hpp"
#include "iscc/rng.hpp"

namespace iscc::mcval {

namespace {

// Distinct stream ids so a caller reusing one seed for the signal and the
// noise still gets independent draws.
constexpr std::uint64_t kSignalStream = 1;
constexpr std::uint64_t kNoiseStream = 2;

/// Eigenvalues and vectors of a Hermitian PSD matrix with a relative clip
/// window for roundoff-negative eigenvalues.
struct PsdEigen {
  RVec lambda;
  CMat vectors;
};

PsdEigen psd_eigen(const CMat& m, const char* who) {
  Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (m + m.adjoint()));
  RVec lam = es.eigenvalues();
  const double lmax = std::max(lam.maxCoeff(), 0.0);
  for (int i = 0; i < lam.size(); ++i) {
    if (lam(i) < 0) {
      if (lam(i) < -1e-9 * std::max(lmax, 1e-300)) {
        throw std::invalid_argument(std::string(who) + ": matrix is not positive semidefinite");
      }
      lam(i) = 0.0;
    }
  }
  return {lam, es.eigenvectors()};
}

/// tr((S S^H)^{-1}) with a relative singularity threshold.
double trace_inv_gram(const CMat& s) {
  const CMat gram = s * s.adjoint();
  Eigen::SelfAdjointEigenSolver<CMat> es(gram, Eigen::EigenvaluesOnly);
  const RVec lam = es.eigenvalues();
  const double lmax = lam.maxCoeff();
  if (!(lmax > 0) || lam.minCoeff() <= 1e-12 * lmax) {
    throw RankDeficientSignalError("ls_estimate_trm: S S^H is numerically singular");
  }
  return lam.cwiseInverse().sum();
}

/// Runs body(i) for i in [0, n); parallel fan-out writes disjoint slots, so
/// together with the serial aggregation pass the results are bit-identical to
/// the serial loop. The first exception thrown by any trial is rethrown.
template <typename Body>
void run_trials(int n, bool parallel, const Body& body) {
  std::exception_ptr first_error = nullptr;
  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
      try {
        body(i);
      } catch (...) {
#pragma omp critical(mcval_trial_error)
        if (first_error == nullptr) first_error = std::current_exception();
      }
    }
  } else {
    for (int i = 0; i < n; ++i) body(i);
  }
  if (first_error != nullptr) std::rethrow_exception(first_error);
}

/// Ordered aggregation shared by both batch runners.
TrialBatch aggregate(std::uint64_t seed, std::vector<double> estimates,
                     const std::vector<double>& sq_err, const std::vector<double>& bound) {
  TrialBatch b;
  b.n_trials = static_cast<int>(sq_err.size());
  b.seed = seed;
  b.estimates = std::move(estimates);
  double err_sum = 0.0, bound_sum = 0.0;
  for (int i = 0; i < b.n_trials; ++i) {
    err_sum += sq_err[i];
    bound_sum += bound[i];
  }
  b.mse = err_sum / b.n_trials;
  b.crb = bound_sum / b.n_trials;
  b.ratio = b.mse / b.crb;
  return b;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

CMat sample_signal(const CMat& r_s, int t, std::uint64_t seed) {
  if (r_s.rows() != r_s.cols()) {
    throw std::invalid_argument("sample_signal: covariance must be square");
  }
  if (t < 1) throw std::invalid_argument("sample_signal: need at least one column");
  const int n = static_cast<int>(r_s.rows());
  const PsdEigen eig = psd_eigen(r_s, "sample_signal");
  const CMat factor = eig.vectors * eig.lambda.cwiseSqrt().asDiagonal();
  Philox rng(seed, kSignalStream);
  CMat z(n, t);
  for (int col = 0; col < t; ++col) {
    for (int row = 0; row < n; ++row) z(row, col) = rng.cnormal();
  }
  return factor * z;
}

CMat simulate_echo(const CMat& g, const CMat& s, double sigma_s2, std::uint64_t seed) {
  if (g.cols() != s.rows()) {
    throw std::invalid_argument("simulate_echo: response columns must match signal rows");
  }
  if (sigma_s2 < 0) throw std::invalid_argument("simulate_echo: negative noise power");
  CMat y = g * s;
  if (sigma_s2 > 0) {
    Philox rng(seed, kNoiseStream);
    const double amp = std::sqrt(sigma_s2);
    for (int col = 0; col < y.cols(); ++col) {
      for (int row = 0; row < y.rows(); ++row) y(row, col) += amp * rng.cnormal();
    }
  }
  return y;
}

CMat ls_estimate_trm(const CMat& y, const CMat& s) {
  if (y.cols() != s.cols()) {
    throw std::invalid_argument("ls_estimate_trm: Y and S must share the column count");
  }
  const CMat gram = s * s.adjoint();
  Eigen::SelfAdjointEigenSolver<CMat> es(gram);
  const RVec lam = es.eigenvalues();
  const double lmax = lam.maxCoeff();
  if (!(lmax > 0) || lam.minCoeff() <= 1e-12 * lmax) {
    throw RankDeficientSignalError("ls_estimate_trm: S S^H is numerically singular");
  }
  const CMat inv =
      es.eigenvectors() * lam.cwiseInverse().asDiagonal() * es.eigenvectors().adjoint();
  return y * s.adjoint() * inv;
}

double ls_trm_mse(const CMat& s, double sigma_s2, int m_rx) {
  if (m_rx < 1) throw std::invalid_argument("ls_trm_mse: need at least one receive antenna");
  if (sigma_s2 < 0) throw std::invalid_argument("ls_trm_mse: negative noise power");
  return sigma_s2 * static_cast<double>(m_rx) * trace_inv_gram(s);
}

namespace {

/// Concentrated-likelihood statistic pieces shared by grid search, refinement
/// and the closed-form alpha: num / den with num = |b^H C a|^2 and
/// den = ||b||^2 a^H (S S^H) a, where C = Y S^H.
struct Concentrated {
  const CMat& c;
  const CMat& gram;
  int m_tx;
  int m_rx;
  double delta;

  double operator()(double theta) const {
    const CVec a = steering_vector(theta, m_tx, delta);
    const CVec b = steering_vector(theta, m_rx, delta);
    const cdouble num = b.dot(c * a);  // b^H C a
    const double den = static_cast<double>(m_rx) * std::real(a.dot(gram * a));
    if (!(den > 0)) return 0.0;
    return std::norm(num) / den;
  }

  cdouble alpha_at(double theta) const {
    const CVec a = steering_vector(theta, m_tx, delta);
    const CVec b = steering_vector(theta, m_rx, delta);
    const double den = static_cast<double>(m_rx) * std::real(a.dot(gram * a));
    if (!(den > 0)) return {0.0, 0.0};
    return b.dot(c * a) / den;
  }
};

}  // namespace

PointEstimate mle_point(const CMat& y, const CMat& s, const SystemConfig& cfg,
                        const std::vector<double>& theta_grid, double refine_tol) {
  if (theta_grid.empty()) throw std::invalid_argument("mle_point: empty angle grid");
  if (y.cols() != s.cols()) {
    throw std::invalid_argument("mle_point: Y and S must share the column count");
  }
  if (y.rows() != cfg.m_rx || s.rows() != cfg.m_tx) {
    throw std::invalid_argument("mle_point: Y/S rows must match the configured arrays");
  }
  const CMat c = y * s.adjoint();
  const CMat gram = s * s.adjoint();
  const Concentrated stat{c, gram, cfg.m_tx, cfg.m_rx, cfg.element_spacing};

  size_t best = 0;
  double best_val = -1.0;
  for (size_t i = 0; i < theta_grid.size(); ++i) {
    const double v = stat(theta_grid[i]);
    if (v > best_val) {
      best_val = v;
      best = i;
    }
  }
  // Refine inside the bracket formed by the neighbouring grid cells.
  const double lo = theta_grid[best > 0 ? best - 1 : best];
  const double hi = theta_grid[best + 1 < theta_grid.size() ? best + 1 : best];
  PointEstimate out;
  if (hi > lo) {
    out.theta_rad = algorithms::detail::golden_section(
        [&](double th) { return -stat(th); }, lo, hi, refine_tol, nullptr);
  } else {
    out.theta_rad = theta_grid[best];
  }
  if (stat(theta_grid[best]) > stat(out.theta_rad)) out.theta_rad = theta_grid[best];
  out.alpha = stat.alpha_at(out.theta_rad);
  return out;
}

std::vector<double> make_theta_grid(double lo, double hi, double step_rad) {
  if (!(hi > lo)) throw std::invalid_argument("make_theta_grid: need hi > lo");
  if (!(step_rad > 0)) throw std::invalid_argument("make_theta_grid: need a positive step");
  const int cells = std::max(1, static_cast<int>(std::ceil((hi - lo) / step_rad)));
  std::vector<double> grid(cells + 1);
  for (int i = 0; i <= cells; ++i) {
    grid[i] = lo + (hi - lo) * static_cast<double>(i) / cells;
  }
  return grid;
}

namespace {

TrialBatch ls_batch_impl(const CMat& g, const CMat& r_s, int t_symbols, double sigma_s2,
                         int n_trials, std::uint64_t seed, bool parallel) {
  if (n_trials < 1) throw std::invalid_argument("ls_crb_batch: need at least one trial");
  if (g.cols() != r_s.rows()) {
    throw std::invalid_argument("ls_crb_batch: response columns must match covariance size");
  }
  if (t_symbols < static_cast<int>(r_s.rows())) {
    throw RankDeficientSignalError("ls_crb_batch: fewer symbols than transmit antennas");
  }
  // A singular design covariance makes every draw rank-deficient.
  trace_inv_gram(sample_signal(r_s, t_symbols, derive_seed(seed, 0)));

  const int m_rx = static_cast<int>(g.rows());
  std::vector<double> sq_err(n_trials), bound(n_trials);
  run_trials(n_trials, parallel, [&](int i) {
    const CMat s = sample_signal(r_s, t_symbols, derive_seed(seed, 2 * static_cast<std::uint64_t>(i)));
    const CMat y = simulate_echo(g, s, sigma_s2, derive_seed(seed, 2 * static_cast<std::uint64_t>(i) + 1));
    const CMat ghat = ls_estimate_trm(y, s);
    sq_err[i] = (ghat - g).squaredNorm();
    bound[i] = ls_trm_mse(s, sigma_s2, m_rx);
  });
  return aggregate(seed, sq_err, sq_err, bound);
}

}  // namespace

TrialBatch ls_crb_batch(const CMat& g, const CMat& r_s, int t_symbols, double sigma_s2,
                        int n_trials, std::uint64_t seed, bool parallel) {
  return ls_batch_impl(g, r_s, t_symbols, sigma_s2, n_trials, seed, parallel);
}

TrialBatch ls_crb_batch_serial(const CMat& g, const CMat& r_s, int t_symbols, double sigma_s2,
                               int n_trials, std::uint64_t seed) {
  return ls_batch_impl(g, r_s, t_symbols, sigma_s2, n_trials, seed, false);
}

namespace {

TrialBatch mle_batch_impl(const SystemConfig& cfg, cdouble alpha, const CMat& r_s,
                          const std::vector<double>& theta_grid, double refine_tol,
                          int n_trials, std::uint64_t seed, bool parallel) {
  if (n_trials < 1) throw std::invalid_argument("mle_crb_batch: need at least one trial");
  if (theta_grid.empty()) throw std::invalid_argument("mle_crb_batch: empty angle grid");
  if (r_s.rows() != cfg.m_tx) {
    throw std::invalid_argument("mle_crb_batch: covariance size must match the transmit array");
  }
  const SteeringBundle bundle = SteeringBundle::at(cfg);
  const CMat g = target_response_point(bundle, alpha);
  const double theta_true = cfg.target_angle_rad;
  const int t = cfg.n_symbols;

  std::vector<double> theta_hat(n_trials), sq_err(n_trials), bound(n_trials);
  run_trials(n_trials, parallel, [&](int i) {
    const CMat s = sample_signal(r_s, t, derive_seed(seed, 2 * static_cast<std::uint64_t>(i)));
    const CMat y = simulate_echo(g, s, cfg.noise_sense_w, derive_seed(seed, 2 * static_cast<std::uint64_t>(i) + 1));
    const PointEstimate est = mle_point(y, s, cfg, theta_grid, refine_tol);
    theta_hat[i] = est.theta_rad;
    const double err = est.theta_rad - theta_true;
    sq_err[i] = err * err;
    bound[i] = crb_point(s * s.adjoint() / static_cast<double>(t), bundle, alpha, t,
                         cfg.noise_sense_w);
  });
  return aggregate(seed, std::move(theta_hat), sq_err, bound);
}

}  // namespace

TrialBatch mle_crb_batch(const SystemConfig& cfg, cdouble alpha, const CMat& r_s,
                         const std::vector<double>& theta_grid, double refine_tol,
                         int n_trials, std::uint64_t seed, bool parallel) {
  return mle_batch_impl(cfg, alpha, r_s, theta_grid, refine_tol, n_trials, seed, parallel);
}

TrialBatch mle_crb_batch_serial(const SystemConfig& cfg, cdouble alpha, const CMat& r_s,
                                const std::vector<double>& theta_grid, double refine_tol,
                                int n_trials, std::uint64_t seed) {
  return mle_batch_impl(cfg, alpha, r_s, theta_grid, refine_tol, n_trials, seed, false);
}

}  // namespace iscc::mcval
