#ifndef ISCC_SCENARIO_HPP
#define ISCC_SCENARIO_HPP

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace iscc {

using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;
using cdouble = std::complex<double>;

struct Geometry {
  Eigen::Vector3d bs_pos{0.0, 0.0, 20.0};
  Eigen::Vector3d server_pos{20.0, 20.0, 5.0};
  Eigen::Vector3d user_center{30.0, 30.0, 0.0};
  double user_radius = 10.0;
  double target_distance_m = 50.0;
};

/**
 * @brief Full physical description of one ISCC scenario.
 *
 * All members are SI linear quantities (W, Hz, rad, m). Logarithmic inputs
 * (dBm / dB) are converted once at config ingestion and never appear
 * internally.
 */
struct SystemConfig {
  int m_tx = 8;                  ///< transmit antennas
  int m_rx = 8;                  ///< receive antennas
  int n_users = 3;               ///< downlink users K (server is receiver K+1)
  double power_budget_w = 1.0;   ///< P_0
  double noise_comm_w = 1e-14;   ///< sigma_c^2 at every communication receiver
  double noise_sense_w = 1e-14;  ///< sigma_s^2 at the sensing receiver
  double bandwidth_hz = 1e6;     ///< offloading bandwidth B
  double cycles_per_bit = 1000.0;  ///< rho
  double cpu_eff = 1e-28;          ///< kappa, power = kappa * f^3
  double f_max_hz = 2e9;           ///< CPU frequency bound
  std::vector<double> sinr_thresholds{100.0, 100.0, 100.0};  ///< linear gamma_k
  double rate_min_bps = 1e6;       ///< R_p,min
  int n_symbols = 128;             ///< sensing frame length T
  double element_spacing = 0.5;    ///< Delta, in wavelengths
  double target_angle_rad = 0.0;   ///< theta, azimuth from array broadside
  double target_rcs_m2 = 3.0;
  Geometry geometry;
  double pathloss_ref = 1e-3;  ///< rho_0, gain at 1 m (linear)
  double pathloss_exp = 3.0;
  double rician_k = 3.1622776601683795;  ///< 5 dB
  bool los_only = false;                 ///< drop the scattered channel component

  /// CI-sized scenario (8x8 array, K = 3).
  static SystemConfig desk_default();
  /// Full-size scenario (16 tx / 20 rx) used behind --paper-scale.
  static SystemConfig paper_default();
  /// Parse a key = value scenario file; unknown keys are an error.
  static SystemConfig from_file(const std::string& path);
  /// Apply a single key = value assignment (the file parser's workhorse).
  void set_field(const std::string& key, const std::string& value);
  void validate() const;
  /// Canonical text form; also the basis of the scenario hash.
  std::string serialize() const;
  std::uint64_t hash() const;
};

/// ULA steering vector, entry m (0-based): exp(j 2 pi m Delta sin(theta)).
CVec steering_vector(double theta, int n, double delta);
/// d/dtheta of steering_vector; entry m: j 2 pi m Delta cos(theta) exp(...). Entry 0 is 0.
CVec steering_derivative(double theta, int n, double delta);

/// Steering data of the target direction for both arrays, plus A and dA/dtheta.
struct SteeringBundle {
  CVec a, b;          ///< transmit / receive steering at theta
  CVec a_dot, b_dot;  ///< their theta-derivatives
  CMat A;             ///< b a^H
  CMat A_dot;         ///< b_dot a^H + b a_dot^H
  static SteeringBundle at(double theta, int m_tx, int m_rx, double delta);
  static SteeringBundle at(const SystemConfig& cfg);
};

/// Downlink channels: h[0..K-1] users, h[K] edge server; q[k] = h_k h_k^H.
struct ChannelSet {
  std::vector<CVec> h;
  std::vector<CMat> q;
  std::vector<Eigen::Vector3d> positions;  ///< user positions then server position
  cdouble alpha = 0.0;                     ///< target reflection coefficient
};

/**
 * Rician channels from the configured geometry. User positions are drawn
 * uniformly in the configured disk from stream (seed, 0); the scattered
 * component of receiver k comes from stream (seed, k+1). The array lies along
 * the x axis; azimuth is measured from broadside (+y), so the target sits at
 * azimuth target_angle_rad by construction.
 */
ChannelSet generate_channels(const SystemConfig& cfg, std::uint64_t seed);

/// Reflection coefficient: |alpha|^2 = rho_0^2 * RCS / d^4, phase zero.
cdouble target_alpha(const SystemConfig& cfg);

/// Point-target response matrix G = alpha b(theta) a(theta)^H.
CMat target_response_point(const SteeringBundle& s, cdouble alpha);

struct Scatterer {
  cdouble alpha;
  double theta;
};

/// Extended-target response: sum of per-scatterer rank-one responses.
CMat target_response_extended(const std::vector<Scatterer>& scatterers, int m_tx, int m_rx,
                              double delta);

}  // namespace iscc

#endif  // ISCC_SCENARIO_HPP
