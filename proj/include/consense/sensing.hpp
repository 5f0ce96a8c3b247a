#pragma once

// Energy-detector output model. The decision statistic Y is sampled
// directly: central chi-square under H0, and either non-central chi-square
// (AWGN) or chi-square plus exponential (Rayleigh fading) under H1.

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "consense/error.hpp"
#include "consense/random.hpp"

namespace consense {

inline double snr_db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double linear) { return 10.0 * std::log10(linear); }

/// Time-bandwidth product m = TW.
class DetectorConfig {
public:
  static constexpr unsigned kDefaultTimeBandwidth = 5;

  explicit DetectorConfig(unsigned m = kDefaultTimeBandwidth) : m_(m) {
    if (m_ < 1) throw InvalidArgument("time-bandwidth product m must be >= 1");
  }
  unsigned m() const noexcept { return m_; }
  unsigned degrees_of_freedom() const noexcept { return 2 * m_; }

private:
  unsigned m_;
};

/// Average SNR, held in dB with its linear view.
class SnrSpec {
public:
  static SnrSpec from_db(double db) { return SnrSpec(db); }

  double db() const noexcept { return db_; }
  double linear() const noexcept { return linear_; }

private:
  explicit SnrSpec(double db) : db_(db), linear_(snr_db_to_linear(db)) {
    if (!std::isfinite(db) || !(linear_ > 0.0)) throw InvalidArgument("SNR must be finite with positive linear value");
  }

  double db_;
  double linear_;
};

enum class GroundTruth { H0, H1 };

inline const char* to_string(GroundTruth h) { return h == GroundTruth::H0 ? "H0" : "H1"; }

/// Per-user detector outputs in linear scale.
using EnergyVector = std::vector<double>;

namespace detail {

inline double sample_chi_square(double dof, RandomStream& rng) {
  std::gamma_distribution<double> gamma(dof / 2.0, 2.0);
  return gamma(rng);
}

}  // namespace detail

inline double sample_energy_h0(const DetectorConfig& cfg, RandomStream& rng) {
  return detail::sample_chi_square(static_cast<double>(cfg.degrees_of_freedom()), rng);
}

/// Non-central chi-square with 2m degrees of freedom and non-centrality 2*snr:
/// 2m-1 central squared normals plus one squared normal with mean sqrt(2*snr).
inline double sample_energy_h1_awgn(const DetectorConfig& cfg, double snr_linear, RandomStream& rng) {
  if (!(snr_linear > 0.0)) throw InvalidArgument("AWGN SNR must be positive");
  std::normal_distribution<double> shifted(std::sqrt(2.0 * snr_linear), 1.0);
  const double z = shifted(rng);
  return detail::sample_chi_square(static_cast<double>(cfg.degrees_of_freedom() - 1), rng) + z * z;
}

/// Chi-square with 2m-2 degrees of freedom plus an independent exponential
/// with mean 2(snr + 1).
inline double sample_energy_h1_rayleigh(const DetectorConfig& cfg, const SnrSpec& snr, RandomStream& rng) {
  if (cfg.m() < 2) throw InvalidArgument("Rayleigh model requires m >= 2");
  const double chi = detail::sample_chi_square(static_cast<double>(cfg.degrees_of_freedom() - 2), rng);
  std::exponential_distribution<double> fade(1.0 / (2.0 * (snr.linear() + 1.0)));
  return chi + fade(rng);
}

/// One sensing round for the whole network. Under H0 the SNRs are ignored
/// and no randomness is consumed on their behalf.
inline EnergyVector measure_network(std::size_t n, GroundTruth truth, std::span<const SnrSpec> snrs,
                                    const DetectorConfig& cfg, RandomStream& rng) {
  if (n < 1) throw InvalidArgument("measure_network: n must be >= 1");
  if (snrs.size() != n) {
    throw InvalidArgument("measure_network: " + std::to_string(snrs.size()) + " SNR values for " +
                          std::to_string(n) + " users");
  }
  EnergyVector y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = truth == GroundTruth::H0 ? sample_energy_h0(cfg, rng) : sample_energy_h1_rayleigh(cfg, snrs[i], rng);
  }
  return y;
}

}  // namespace consense
