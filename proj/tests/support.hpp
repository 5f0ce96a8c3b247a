#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "consense/consense.hpp"

namespace consense::testing {

inline std::string data_path(const std::string& name) { return std::string(CONSENSE_SOURCE_DIR) + "/data/" + name; }
inline std::string config_path(const std::string& name) {
  return std::string(CONSENSE_SOURCE_DIR) + "/configs/" + name;
}

inline const Topology& fixture10() {
  static const Topology t = load_topology(data_path("topology10.txt"));
  return t;
}

inline const Topology& fixture50() {
  static const Topology t = load_topology(data_path("topology50.txt"));
  return t;
}

/// Erdos-Renyi graph with a random spanning tree added, so it is connected.
inline Topology random_connected(std::size_t n, double extra_p, RandomStream& rng) {
  std::vector<std::pair<NodeId, NodeId>> pairs;
  std::vector<NodeId> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 1; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    pairs.emplace_back(order[i], order[pick(rng)]);
  }
  std::bernoulli_distribution coin(extra_p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (coin(rng)) pairs.emplace_back(i, j);
    }
  }
  return Topology(n, pairs);
}

/// Erdos-Renyi graph, possibly disconnected.
inline Topology random_graph(std::size_t n, double p, RandomStream& rng) {
  std::vector<std::pair<NodeId, NodeId>> pairs;
  std::bernoulli_distribution coin(p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (coin(rng)) pairs.emplace_back(i, j);
    }
  }
  return Topology(n, pairs);
}

inline std::vector<double> positive_vector(std::size_t n, RandomStream& rng, double lo = 0.5, double hi = 40.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> x(n);
  for (double& v : x) v = u(rng);
  return x;
}

inline double sum(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s;
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations, ascending.
inline std::vector<double> jacobi_eigenvalues(Eigen::MatrixXd a) {
  const auto n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    }
    if (off < 1e-26) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = a(i, i);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace consense::testing
