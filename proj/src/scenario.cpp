#include "iscc/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "iscc/errors.hpp"
#include "iscc/rng.hpp"

namespace iscc {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559005768;

double dbm_to_w(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<double> parse_list(const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument("malformed number '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty value list");
  return out;
}

double parse_scalar(const std::string& value) {
  const auto list = parse_list(value);
  if (list.size() != 1) throw std::invalid_argument("expected a single value, got a list");
  return list[0];
}

Eigen::Vector3d parse_vec3(const std::string& value) {
  const auto list = parse_list(value);
  if (list.size() != 3) throw std::invalid_argument("expected 3 coordinates");
  return {list[0], list[1], list[2]};
}

bool parse_bool(const std::string& value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  throw std::invalid_argument("expected boolean, got '" + value + "'");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

SystemConfig SystemConfig::desk_default() { return SystemConfig{}; }

SystemConfig SystemConfig::paper_default() {
  SystemConfig cfg;
  cfg.m_tx = 16;
  cfg.m_rx = 20;
  cfg.n_users = 4;
  cfg.sinr_thresholds.assign(4, 100.0);
  return cfg;
}

void SystemConfig::set_field(const std::string& key, const std::string& value) {
  if (key == "m_tx") m_tx = static_cast<int>(parse_scalar(value));
  else if (key == "m_rx") m_rx = static_cast<int>(parse_scalar(value));
  else if (key == "n_users") n_users = static_cast<int>(parse_scalar(value));
  else if (key == "power_budget_w") power_budget_w = parse_scalar(value);
  else if (key == "power_budget_dbm") power_budget_w = dbm_to_w(parse_scalar(value));
  else if (key == "noise_comm_w") noise_comm_w = parse_scalar(value);
  else if (key == "noise_comm_dbm") noise_comm_w = dbm_to_w(parse_scalar(value));
  else if (key == "noise_sense_w") noise_sense_w = parse_scalar(value);
  else if (key == "noise_sense_dbm") noise_sense_w = dbm_to_w(parse_scalar(value));
  else if (key == "bandwidth_hz") bandwidth_hz = parse_scalar(value);
  else if (key == "cycles_per_bit") cycles_per_bit = parse_scalar(value);
  else if (key == "cpu_eff") cpu_eff = parse_scalar(value);
  else if (key == "f_max_hz") f_max_hz = parse_scalar(value);
  else if (key == "sinr_thresholds") sinr_thresholds = parse_list(value);
  else if (key == "sinr_thresholds_db") {
    sinr_thresholds = parse_list(value);
    for (auto& g : sinr_thresholds) g = db_to_lin(g);
  } else if (key == "rate_min_bps") rate_min_bps = parse_scalar(value);
  else if (key == "n_symbols") n_symbols = static_cast<int>(parse_scalar(value));
  else if (key == "element_spacing") element_spacing = parse_scalar(value);
  else if (key == "target_angle_rad") target_angle_rad = parse_scalar(value);
  else if (key == "target_rcs_m2") target_rcs_m2 = parse_scalar(value);
  else if (key == "bs_pos") geometry.bs_pos = parse_vec3(value);
  else if (key == "server_pos") geometry.server_pos = parse_vec3(value);
  else if (key == "user_center") geometry.user_center = parse_vec3(value);
  else if (key == "user_radius") geometry.user_radius = parse_scalar(value);
  else if (key == "target_distance_m") geometry.target_distance_m = parse_scalar(value);
  else if (key == "pathloss_ref") pathloss_ref = parse_scalar(value);
  else if (key == "pathloss_ref_db") pathloss_ref = db_to_lin(parse_scalar(value));
  else if (key == "pathloss_exp") pathloss_exp = parse_scalar(value);
  else if (key == "rician_k") rician_k = parse_scalar(value);
  else if (key == "rician_k_db") rician_k = db_to_lin(parse_scalar(value));
  else if (key == "los_only") los_only = parse_bool(value);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

SystemConfig SystemConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
  SystemConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.erase(hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      cfg.set_field(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  // A single SINR threshold is broadcast over all users.
  if (cfg.sinr_thresholds.size() == 1 && cfg.n_users > 1)
    cfg.sinr_thresholds.assign(cfg.n_users, cfg.sinr_thresholds[0]);
  cfg.validate();
  return cfg;
}

void SystemConfig::validate() const {
  if (m_tx < 1 || m_rx < 1) throw std::invalid_argument("antenna counts must be >= 1");
  if (n_users < 0) throw std::invalid_argument("n_users must be >= 0");
  if (power_budget_w <= 0) throw std::invalid_argument("power_budget_w must be > 0");
  if (noise_comm_w <= 0 || noise_sense_w <= 0)
    throw std::invalid_argument("noise powers must be > 0");
  if (bandwidth_hz <= 0) throw std::invalid_argument("bandwidth_hz must be > 0");
  if (cycles_per_bit <= 0) throw std::invalid_argument("cycles_per_bit must be > 0");
  if (cpu_eff < 0) throw std::invalid_argument("cpu_eff must be >= 0");
  if (f_max_hz < 0) throw std::invalid_argument("f_max_hz must be >= 0");
  if (static_cast<int>(sinr_thresholds.size()) != n_users)
    throw std::invalid_argument("sinr_thresholds must have exactly n_users entries");
  for (double g : sinr_thresholds)
    if (g < 0) throw std::invalid_argument("SINR thresholds must be >= 0");
  if (rate_min_bps < 0) throw std::invalid_argument("rate_min_bps must be >= 0");
  if (n_symbols < 1) throw std::invalid_argument("n_symbols must be >= 1");
  if (element_spacing <= 0) throw std::invalid_argument("element_spacing must be > 0");
  if (target_rcs_m2 <= 0) throw std::invalid_argument("target_rcs_m2 must be > 0");
  if (geometry.user_radius < 0) throw std::invalid_argument("user_radius must be >= 0");
  if (geometry.target_distance_m <= 0)
    throw std::invalid_argument("target_distance_m must be > 0");
  if (pathloss_ref <= 0) throw std::invalid_argument("pathloss_ref must be > 0");
  if (rician_k < 0) throw std::invalid_argument("rician_k must be >= 0");
}

std::string SystemConfig::serialize() const {
  std::ostringstream out;
  out << "m_tx = " << m_tx << "\nm_rx = " << m_rx << "\nn_users = " << n_users
      << "\npower_budget_w = " << fmt(power_budget_w) << "\nnoise_comm_w = " << fmt(noise_comm_w)
      << "\nnoise_sense_w = " << fmt(noise_sense_w) << "\nbandwidth_hz = " << fmt(bandwidth_hz)
      << "\ncycles_per_bit = " << fmt(cycles_per_bit) << "\ncpu_eff = " << fmt(cpu_eff)
      << "\nf_max_hz = " << fmt(f_max_hz) << "\nsinr_thresholds = ";
  for (std::size_t i = 0; i < sinr_thresholds.size(); ++i)
    out << (i ? ", " : "") << fmt(sinr_thresholds[i]);
  out << "\nrate_min_bps = " << fmt(rate_min_bps) << "\nn_symbols = " << n_symbols
      << "\nelement_spacing = " << fmt(element_spacing)
      << "\ntarget_angle_rad = " << fmt(target_angle_rad)
      << "\ntarget_rcs_m2 = " << fmt(target_rcs_m2) << "\nbs_pos = " << fmt(geometry.bs_pos.x())
      << ", " << fmt(geometry.bs_pos.y()) << ", " << fmt(geometry.bs_pos.z())
      << "\nserver_pos = " << fmt(geometry.server_pos.x()) << ", "
      << fmt(geometry.server_pos.y()) << ", " << fmt(geometry.server_pos.z())
      << "\nuser_center = " << fmt(geometry.user_center.x()) << ", "
      << fmt(geometry.user_center.y()) << ", " << fmt(geometry.user_center.z())
      << "\nuser_radius = " << fmt(geometry.user_radius)
      << "\ntarget_distance_m = " << fmt(geometry.target_distance_m)
      << "\npathloss_ref = " << fmt(pathloss_ref) << "\npathloss_exp = " << fmt(pathloss_exp)
      << "\nrician_k = " << fmt(rician_k) << "\nlos_only = " << (los_only ? 1 : 0) << "\n";
  return out.str();
}

std::uint64_t SystemConfig::hash() const {
  // FNV-1a over the canonical serialization.
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : serialize()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

CVec steering_vector(double theta, int n, double delta) {
  if (n < 1) throw std::invalid_argument("steering_vector: n must be >= 1");
  CVec a(n);
  const double s = std::sin(theta);
  for (int m = 0; m < n; ++m) {
    const double phase = kTwoPi * m * delta * s;
    a[m] = cdouble(std::cos(phase), std::sin(phase));
  }
  return a;
}

CVec steering_derivative(double theta, int n, double delta) {
  if (n < 1) throw std::invalid_argument("steering_derivative: n must be >= 1");
  CVec d(n);
  const double s = std::sin(theta);
  const double c = std::cos(theta);
  for (int m = 0; m < n; ++m) {
    const double phase = kTwoPi * m * delta * s;
    const cdouble e(std::cos(phase), std::sin(phase));
    d[m] = cdouble(0.0, kTwoPi * m * delta * c) * e;
  }
  return d;
}

SteeringBundle SteeringBundle::at(double theta, int m_tx, int m_rx, double delta) {
  SteeringBundle s;
  s.a = steering_vector(theta, m_tx, delta);
  s.b = steering_vector(theta, m_rx, delta);
  s.a_dot = steering_derivative(theta, m_tx, delta);
  s.b_dot = steering_derivative(theta, m_rx, delta);
  s.A = s.b * s.a.adjoint();
  s.A_dot = s.b_dot * s.a.adjoint() + s.b * s.a_dot.adjoint();
  return s;
}

SteeringBundle SteeringBundle::at(const SystemConfig& cfg) {
  return at(cfg.target_angle_rad, cfg.m_tx, cfg.m_rx, cfg.element_spacing);
}

ChannelSet generate_channels(const SystemConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ChannelSet ch;
  const int k_total = cfg.n_users + 1;
  ch.h.reserve(k_total);
  ch.q.reserve(k_total);

  Philox pos_rng(seed, 0);
  for (int k = 0; k < cfg.n_users; ++k) {
    const double u1 = pos_rng.uniform();
    const double u2 = pos_rng.uniform();
    const double r = cfg.geometry.user_radius * std::sqrt(u1);
    const double ang = kTwoPi * u2;
    Eigen::Vector3d p = cfg.geometry.user_center;
    p.x() += r * std::cos(ang);
    p.y() += r * std::sin(ang);
    ch.positions.push_back(p);
  }
  ch.positions.push_back(cfg.geometry.server_pos);

  for (int k = 0; k < k_total; ++k) {
    const Eigen::Vector3d d = ch.positions[k] - cfg.geometry.bs_pos;
    const double dist = d.norm();
    if (dist < 1e-9)
      throw InvalidGeometryError("receiver " + std::to_string(k) + " coincides with the BS");
    // Azimuth from array broadside (+y); the ULA lies along x, elevation only
    // enters through the distance.
    const double azimuth = std::atan2(d.x(), d.y());
    const double pl = cfg.pathloss_ref * std::pow(dist, -cfg.pathloss_exp);
    const CVec a = steering_vector(azimuth, cfg.m_tx, cfg.element_spacing);
    CVec h;
    if (cfg.los_only) {
      h = std::sqrt(pl) * a;
    } else {
      Philox rng(seed, static_cast<std::uint64_t>(k) + 1);
      CVec g(cfg.m_tx);
      for (int m = 0; m < cfg.m_tx; ++m) g[m] = rng.cnormal();
      const double w_los = std::sqrt(cfg.rician_k / (1.0 + cfg.rician_k));
      const double w_nlos = std::sqrt(1.0 / (1.0 + cfg.rician_k));
      h = std::sqrt(pl) * (w_los * a + w_nlos * g);
    }
    ch.h.push_back(h);
    ch.q.push_back(h * h.adjoint());
  }
  ch.alpha = target_alpha(cfg);
  return ch;
}

cdouble target_alpha(const SystemConfig& cfg) {
  const double d = cfg.geometry.target_distance_m;
  return cfg.pathloss_ref * std::sqrt(cfg.target_rcs_m2) / (d * d);
}

CMat target_response_point(const SteeringBundle& s, cdouble alpha) {
  return alpha * s.A;
}

CMat target_response_extended(const std::vector<Scatterer>& scatterers, int m_tx, int m_rx,
                              double delta) {
  CMat g = CMat::Zero(m_rx, m_tx);
  for (const auto& sc : scatterers) {
    const CVec a = steering_vector(sc.theta, m_tx, delta);
    const CVec b = steering_vector(sc.theta, m_rx, delta);
    g += sc.alpha * b * a.adjoint();
  }
  return g;
}

}  // namespace iscc
