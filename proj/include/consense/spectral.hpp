#pragma once

// Convergence-rate analytics: Laplacian spectrum, the per-step contraction
// factor alpha(eps), the spectral gap, and the mean-square contraction
// factor rho for independently failing links.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "consense/consensus.hpp"
#include "consense/error.hpp"
#include "consense/format.hpp"
#include "consense/graph.hpp"
#include "consense/random.hpp"

namespace consense {

struct SymmetricEigen {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns
};

inline void require_symmetric(const Eigen::MatrixXd& m, const char* what) {
  if (m.rows() != m.cols()) throw InvalidArgument(std::string(what) + ": matrix is not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InvalidArgument(std::string(what) + ": matrix is not symmetric");
  }
}

inline SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& m) {
  require_symmetric(m, "symmetric_eigen");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) throw Error("symmetric eigensolver did not converge");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

/// Eigenvalues of a symmetric matrix, ascending.
inline std::vector<double> laplacian_spectrum(const Eigen::MatrixXd& L) {
  require_symmetric(L, "laplacian_spectrum");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(L, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw Error("symmetric eigensolver did not converge");
  const Eigen::VectorXd& v = solver.eigenvalues();
  return {v.data(), v.data() + v.size()};
}

/// Second largest eigenvalue modulus of I - eps*L: max(|1 - eps*l2|, |1 - eps*ln|).
inline double alpha(double epsilon, double lambda2, double lambda_n) {
  if (!(lambda2 > 0.0)) throw InvalidArgument("alpha: algebraic connectivity must be positive");
  if (!(lambda_n >= lambda2)) throw InvalidArgument("alpha: largest eigenvalue below the second smallest");
  return std::max(std::abs(1.0 - epsilon * lambda2), std::abs(1.0 - epsilon * lambda_n));
}

inline double spectral_gap(double epsilon, double lambda2, double lambda_n) {
  return 1.0 - alpha(epsilon, lambda2, lambda_n);
}

/// Supremum of admissible exponential rates, -ln alpha. A bound, not a rate estimate.
inline double convergence_exponent_bound(double epsilon, double lambda2, double lambda_n) {
  return -std::log(alpha(epsilon, lambda2, lambda_n));
}

/// E[(I - eps L(k))^2] - 11^T/n for i.i.d. link failures with probability p.
///
/// With L(k) = sum_e b_e L_e, b_e ~ Bernoulli(1-p), and L_e^2 = 2 L_e:
///   E[L(k)]   = (1-p) L
///   E[L(k)^2] = (1-p)^2 L^2 + 2p(1-p) L
inline Eigen::MatrixXd expected_squared_iteration(const Topology& t, double epsilon, double p) {
  const LinkFailureModel model(p);
  validate_epsilon(t, epsilon);
  const auto n = static_cast<Eigen::Index>(t.node_count());
  const Eigen::MatrixXd L = laplacian(t);
  const double q = 1.0 - model.failure_probability();
  const Eigen::MatrixXd expected_l2 = q * q * (L * L) + 2.0 * p * q * L;
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd m = identity - 2.0 * epsilon * q * L + epsilon * epsilon * expected_l2;
  m.array() -= 1.0 / static_cast<double>(n);
  return 0.5 * (m + m.transpose());
}

/// Largest eigenvalue of expected_squared_iteration; the mean-square
/// disagreement contracts by at least this factor per step.
inline double rho_closed_form(const Topology& t, double epsilon, double p) {
  if (!is_connected(t)) throw InvalidArgument("rho: topology is disconnected (rho = 1 trivially)");
  const auto values = laplacian_spectrum(expected_squared_iteration(t, epsilon, p));
  return values.back();
}

struct SpectralReport {
  std::vector<double> eigenvalues;
  double epsilon = 0.0;
  double alpha = 0.0;
  double gap = 0.0;
  double exponent_bound = 0.0;  // -ln alpha
  std::optional<double> failure_probability;
  std::optional<double> rho;
};

inline SpectralReport spectral_report(const Topology& t, double epsilon, std::optional<double> failure_probability = {}) {
  if (t.node_count() < 2) throw InvalidArgument("spectral report needs at least two nodes");
  if (!is_connected(t)) throw InvalidArgument("spectral report needs a connected topology");
  validate_epsilon(t, epsilon);
  SpectralReport r;
  r.eigenvalues = laplacian_spectrum(laplacian(t));
  r.epsilon = epsilon;
  const double l2 = r.eigenvalues[1];
  const double ln = r.eigenvalues.back();
  r.alpha = alpha(epsilon, l2, ln);
  r.gap = 1.0 - r.alpha;
  r.exponent_bound = -std::log(r.alpha);
  if (failure_probability) {
    r.failure_probability = failure_probability;
    r.rho = rho_closed_form(t, epsilon, *failure_probability);
  }
  return r;
}

/// key,value rows; eigenvalues as lambda_1..lambda_n.
inline void write_spectral_report(std::ostream& out, const SpectralReport& r) {
  out << "quantity,value\n";
  for (std::size_t i = 0; i < r.eigenvalues.size(); ++i) {
    out << "lambda_" << (i + 1) << ',' << format_real(r.eigenvalues[i]) << '\n';
  }
  out << "epsilon," << format_real(r.epsilon) << '\n';
  out << "alpha," << format_real(r.alpha) << '\n';
  out << "gap," << format_real(r.gap) << '\n';
  out << "exponent_bound," << format_real(r.exponent_bound) << '\n';
  if (r.rho) {
    out << "failure_probability," << format_real(*r.failure_probability) << '\n';
    out << "rho," << format_real(*r.rho) << '\n';
  }
}

struct MeanSquareRow {
  std::size_t k = 0;
  double empirical_mse = 0.0;
  double bound = 0.0;  // rho^k * MSE(0)
};

/// Monte Carlo mean of |x(k) - avg 1|^2 from a fixed x0, next to rho^k |x0 - avg 1|^2.
inline std::vector<MeanSquareRow> verify_ms_bound(const Topology& t, double epsilon, double p,
                                                  std::span<const double> x0, std::size_t k_max, std::size_t trials,
                                                  RandomStream& rng) {
  if (trials < 1000) throw InvalidArgument("verify_ms_bound: at least 1000 trials required");
  if (x0.size() != t.node_count()) throw InvalidArgument("verify_ms_bound: x0 length does not match node count");
  const double rho = rho_closed_form(t, epsilon, p);
  const LinkFailureModel model(p);
  const double avg = std::accumulate(x0.begin(), x0.end(), 0.0) / static_cast<double>(x0.size());
  auto disagreement = [avg](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += (v - avg) * (v - avg);
    return s;
  };

  std::vector<double> sums(k_max + 1, 0.0);
  const auto weights = std::vector<double>(t.edge_count(), epsilon);
  std::vector<double> x(x0.size()), next(x0.size());
  std::vector<char> active(t.edge_count());
  for (std::size_t trial = 0; trial < trials; ++trial) {
    std::copy(x0.begin(), x0.end(), x.begin());
    for (std::size_t k = 1; k <= k_max; ++k) {
      const GraphSnapshot snap = sample_snapshot(t, model, rng);
      for (std::size_t e = 0; e < active.size(); ++e) active[e] = snap.is_active(e) ? 1 : 0;
      detail::apply_step(t.edges(), weights, active, x, next);
      x.swap(next);
      sums[k] += disagreement(x);
    }
  }

  std::vector<MeanSquareRow> rows(k_max + 1);
  const double mse0 = disagreement(x0);
  rows[0] = {0, mse0, mse0};
  for (std::size_t k = 1; k <= k_max; ++k) {
    rows[k] = {k, sums[k] / static_cast<double>(trials), std::pow(rho, static_cast<double>(k)) * mse0};
  }
  return rows;
}

}  // namespace consense
