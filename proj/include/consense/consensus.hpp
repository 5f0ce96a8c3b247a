#pragma once

// Iterative average consensus over fixed and randomly failing graphs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "consense/error.hpp"
#include "consense/format.hpp"
#include "consense/graph.hpp"
#include "consense/random.hpp"

namespace consense {

/// P = I - eps * L.
struct LaplacianEpsilon {
  double epsilon = 0.0;
};

/// p_ij = 1 / (1 + max(d_i, d_j)) on edges, diagonal fills the row to one.
struct Metropolis {};

using WeightScheme = std::variant<LaplacianEpsilon, Metropolis>;

inline std::string describe(const WeightScheme& scheme) {
  if (const auto* lap = std::get_if<LaplacianEpsilon>(&scheme)) return "laplacian(" + format_real(lap->epsilon) + ")";
  return "metropolis";
}

struct ConsensusState {
  std::vector<double> x;
  std::size_t k = 0;
};

enum class StoppingMode { SpreadDb, ExactAverage };

/// Which node pairs the dB spread is taken over.
enum class SpreadScope {
  Neighbors,  ///< every edge of the base topology
  Global,     ///< max over all nodes against min over all nodes
};

struct StoppingRule {
  StoppingMode mode = StoppingMode::ExactAverage;
  double spread_tolerance_db = 1.0;
  double exact_tolerance = 1e-9;
  std::size_t max_iterations = 10000;
  SpreadScope scope = SpreadScope::Neighbors;

  void validate() const {
    if (!(spread_tolerance_db > 0.0)) throw InvalidArgument("spread tolerance must be positive");
    if (!(exact_tolerance > 0.0)) throw InvalidArgument("exact tolerance must be positive");
    if (max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");
  }
};

/// Exclusive upper bound 1/Delta on the Laplacian step size.
inline double epsilon_upper_bound(const Topology& t) {
  const std::size_t delta = max_degree(t);
  if (delta == 0) throw InvalidArgument("epsilon bound: topology has no neighbors (edgeless graph)");
  return 1.0 / static_cast<double>(delta);
}

inline void validate_epsilon(const Topology& t, double epsilon) {
  const double bound = epsilon_upper_bound(t);
  if (!(epsilon > 0.0 && epsilon < bound)) {
    throw InvalidArgument("step size " + format_real(epsilon) + " outside (0, " + format_real(bound) +
                          ") = (0, 1/max_degree)");
  }
}

inline void validate_scheme(const Topology& t, const WeightScheme& scheme) {
  if (const auto* lap = std::get_if<LaplacianEpsilon>(&scheme)) validate_epsilon(t, lap->epsilon);
}

namespace detail {

/// Per-edge weight w_e of the scheme, parallel to t.edges().
inline std::vector<double> edge_weights(const Topology& t, const WeightScheme& scheme) {
  std::vector<double> w(t.edge_count());
  if (const auto* lap = std::get_if<LaplacianEpsilon>(&scheme)) {
    std::fill(w.begin(), w.end(), lap->epsilon);
  } else {
    const auto& edges = t.edges();
    for (std::size_t k = 0; k < edges.size(); ++k) {
      w[k] = 1.0 / (1.0 + static_cast<double>(std::max(t.degree(edges[k].u), t.degree(edges[k].v))));
    }
  }
  return w;
}

/// x <- W x, expressed edge by edge so that each exchange is antisymmetric
/// and the state sum is preserved. `active` may be empty (all edges on).
inline void apply_step(std::span<const Edge> edges, std::span<const double> weights, std::span<const char> active,
                       std::span<const double> x, std::span<double> out) {
  std::copy(x.begin(), x.end(), out.begin());
  for (std::size_t k = 0; k < edges.size(); ++k) {
    if (!active.empty() && !active[k]) continue;
    const Edge& e = edges[k];
    const double flow = weights[k] * (x[e.v] - x[e.u]);
    out[e.u] += flow;
    out[e.v] -= flow;
  }
}

inline void check_dimension(std::size_t state, std::size_t nodes) {
  if (state != nodes) {
    throw InvalidArgument("state length " + std::to_string(state) + " does not match node count " +
                          std::to_string(nodes));
  }
}

}  // namespace detail

/// Doubly stochastic symmetric weight matrix of the scheme.
inline Eigen::MatrixXd weight_matrix(const Topology& t, const WeightScheme& scheme) {
  validate_scheme(t, scheme);
  const auto n = static_cast<Eigen::Index>(t.node_count());
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, n);
  const auto weights = detail::edge_weights(t, scheme);
  const auto& edges = t.edges();
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto u = static_cast<Eigen::Index>(edges[k].u);
    const auto v = static_cast<Eigen::Index>(edges[k].v);
    W(u, v) = weights[k];
    W(v, u) = weights[k];
  }
  for (Eigen::Index i = 0; i < n; ++i) W(i, i) = 1.0 - W.row(i).sum();
  return W;
}

inline ConsensusState step_fixed(const ConsensusState& s, const Topology& t, const WeightScheme& scheme) {
  detail::check_dimension(s.x.size(), t.node_count());
  validate_scheme(t, scheme);
  const auto weights = detail::edge_weights(t, scheme);
  ConsensusState next{std::vector<double>(s.x.size()), s.k + 1};
  detail::apply_step(t.edges(), weights, {}, s.x, next.x);
  return next;
}

/// One step on the active links only; isolated nodes keep their state.
inline ConsensusState step_random(const ConsensusState& s, const GraphSnapshot& snap, double epsilon) {
  const Topology& base = snap.base();
  detail::check_dimension(s.x.size(), base.node_count());
  validate_epsilon(base, epsilon);
  const std::vector<double> weights(base.edge_count(), epsilon);
  std::vector<char> active(base.edge_count());
  for (std::size_t k = 0; k < active.size(); ++k) active[k] = snap.is_active(k) ? 1 : 0;
  ConsensusState next{std::vector<double>(s.x.size()), s.k + 1};
  detail::apply_step(base.edges(), weights, active, s.x, next.x);
  return next;
}

/// Largest dB ratio between paired states, or +inf if any state is <= 0.
inline double spread_db(std::span<const double> x, const Topology& t, SpreadScope scope) {
  double ratio = 1.0;
  if (scope == SpreadScope::Global) {
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    if (!(*lo > 0.0)) return std::numeric_limits<double>::infinity();
    ratio = *hi / *lo;
  } else {
    if (std::any_of(x.begin(), x.end(), [](double v) { return !(v > 0.0); })) {
      return std::numeric_limits<double>::infinity();
    }
    for (const Edge& e : t.edges()) {
      const double a = x[e.u], b = x[e.v];
      ratio = std::max(ratio, a > b ? a / b : b / a);
    }
  }
  return 10.0 * std::log10(ratio);
}

struct RunOptions {
  bool record_history = false;
  std::size_t history_cap = 10000;  ///< rows kept, including k = 0
};

struct RunResult {
  ConsensusState final_state;
  std::size_t iterations = 0;
  bool converged = false;
  bool topology_connected = true;
  double initial_mean = 0.0;
  std::vector<std::vector<double>> history;
  std::vector<double> history_spread_db;
};

namespace detail {

class StopCheck {
public:
  StopCheck(const StoppingRule& rule, const Topology& t, std::span<const double> x0) : rule_(rule), t_(t) {
    mean0_ = std::accumulate(x0.begin(), x0.end(), 0.0) / static_cast<double>(x0.size());
    double abs_mean = 0.0;
    for (double v : x0) abs_mean += std::abs(v);
    abs_mean /= static_cast<double>(x0.size());
    scale_ = std::abs(mean0_) > 0.0 ? std::abs(mean0_) : (abs_mean > 0.0 ? abs_mean : 1.0);
    ratio_limit_ = std::pow(10.0, rule.spread_tolerance_db / 10.0);
    // Fallback for non-positive states: linearized dB tolerance against mean|x(0)|.
    absolute_limit_ = (ratio_limit_ - 1.0) * (abs_mean > 0.0 ? abs_mean : 1.0);
  }

  double mean0() const noexcept { return mean0_; }

  bool satisfied(std::span<const double> x) const {
    if (rule_.mode == StoppingMode::ExactAverage) {
      double worst = 0.0;
      for (double v : x) worst = std::max(worst, std::abs(v - mean0_));
      return worst / scale_ < rule_.exact_tolerance;
    }
    const bool positive = std::all_of(x.begin(), x.end(), [](double v) { return v > 0.0; });
    if (rule_.scope == SpreadScope::Global) {
      const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
      return positive ? *hi < ratio_limit_ * *lo : (*hi - *lo) < absolute_limit_;
    }
    for (const Edge& e : t_.edges()) {
      const double a = std::max(x[e.u], x[e.v]);
      const double b = std::min(x[e.u], x[e.v]);
      if (positive ? !(a < ratio_limit_ * b) : !((a - b) < absolute_limit_)) return false;
    }
    return true;
  }

private:
  const StoppingRule& rule_;
  const Topology& t_;
  double mean0_ = 0.0;
  double scale_ = 1.0;
  double ratio_limit_ = 1.0;
  double absolute_limit_ = 0.0;
};

}  // namespace detail

/// Prepared iteration kernel for one (topology, scheme) pair; reusable across runs.
class ConsensusRunner {
public:
  ConsensusRunner(const Topology& t, WeightScheme scheme, std::optional<LinkFailureModel> failure, StoppingRule stop)
      : t_(t), scheme_(scheme), failure_(failure), stop_(stop), connected_(is_connected(t)) {
    validate_scheme(t, scheme_);
    stop_.validate();
    weights_ = detail::edge_weights(t, scheme_);
  }

  const Topology& topology() const noexcept { return t_; }
  const StoppingRule& stopping() const noexcept { return stop_; }

  RunResult run(std::span<const double> y, RandomStream& rng, const RunOptions& options = {}) const {
    detail::check_dimension(y.size(), t_.node_count());
    RunResult result;
    result.topology_connected = connected_;
    const detail::StopCheck check(stop_, t_, y);
    result.initial_mean = check.mean0();

    std::vector<double> x(y.begin(), y.end());
    std::vector<double> next(x.size());
    std::vector<char> active;
    const double p = failure_ ? failure_->failure_probability() : 0.0;
    if (failure_) active.assign(t_.edge_count(), 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    auto record = [&](std::span<const double> v) {
      if (!options.record_history || result.history.size() >= options.history_cap) return;
      result.history.emplace_back(v.begin(), v.end());
      result.history_spread_db.push_back(spread_db(v, t_, stop_.scope));
    };

    record(x);
    std::size_t k = 0;
    bool done = check.satisfied(x);
    while (!done && k < stop_.max_iterations) {
      if (failure_) {
        // Same draw order as sample_snapshot.
        if (p >= 1.0) {
          std::fill(active.begin(), active.end(), 0);
        } else if (p > 0.0) {
          for (auto& a : active) a = unit(rng) >= p ? 1 : 0;
        }
      }
      detail::apply_step(t_.edges(), weights_, active, x, next);
      x.swap(next);
      ++k;
      record(x);
      done = check.satisfied(x);
    }
    result.final_state = ConsensusState{std::move(x), k};
    result.iterations = k;
    result.converged = done;
    return result;
  }

private:
  const Topology& t_;
  WeightScheme scheme_;
  std::optional<LinkFailureModel> failure_;
  StoppingRule stop_;
  bool connected_;
  std::vector<double> weights_;
};

/// Iterates until the stopping rule holds or max_iterations is reached.
/// With a failure model, links are resampled independently at every step and
/// the scheme's weights apply to the surviving links only. A disconnected
/// topology is allowed (result.topology_connected = false); each component
/// then settles to its own average.
inline RunResult run_to_consensus(std::span<const double> y, const Topology& t, const WeightScheme& scheme,
                                  const std::optional<LinkFailureModel>& failure, const StoppingRule& stop,
                                  RandomStream& rng, const RunOptions& options = {}) {
  return ConsensusRunner(t, scheme, failure, stop).run(y, rng, options);
}

/// Trace rows: k, x_0..x_{n-1}, spread_db.
inline void write_trace(std::ostream& out, const RunResult& run) {
  const std::size_t n = run.history.empty() ? 0 : run.history.front().size();
  out << "k";
  for (std::size_t i = 0; i < n; ++i) out << ",x_" << i;
  out << ",spread_db\n";
  for (std::size_t k = 0; k < run.history.size(); ++k) {
    out << k;
    for (double v : run.history[k]) out << ',' << format_real(v);
    out << ',' << format_real(run.history_spread_db[k]) << '\n';
  }
}

}  // namespace consense
