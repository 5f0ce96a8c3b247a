#pragma once

// Undirected network topology of secondary users, its Laplacian, and
// random link-failure snapshots.

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <queue>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "consense/error.hpp"
#include "consense/random.hpp"

namespace consense {

using NodeId = std::size_t;

/// Undirected edge stored canonically with u < v.
struct Edge {
  NodeId u = 0;
  NodeId v = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Immutable undirected simple graph over nodes 0..n-1.
class Topology {
public:
  /// Builds a topology from an arbitrary list of pairs. Pairs are
  /// canonicalized to (min, max) and deduplicated.
  Topology(std::size_t node_count, std::span<const std::pair<NodeId, NodeId>> pairs)
      : node_count_(node_count) {
    if (node_count == 0) throw InvalidArgument("topology: node count must be at least 1");
    edges_.reserve(pairs.size());
    for (const auto& [a, b] : pairs) {
      if (a == b) {
        throw InvalidArgument("topology: self-loop at node " + std::to_string(a));
      }
      if (a >= node_count || b >= node_count) {
        throw InvalidArgument("topology: edge (" + std::to_string(a) + ", " + std::to_string(b) +
                              ") has a node id out of range for n = " + std::to_string(node_count));
      }
      edges_.push_back(Edge{std::min(a, b), std::max(a, b)});
    }
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());

    neighbors_.resize(node_count);
    for (const Edge& e : edges_) {
      neighbors_[e.u].push_back(e.v);
      neighbors_[e.v].push_back(e.u);
    }
    for (auto& list : neighbors_) std::sort(list.begin(), list.end());
  }

  Topology(std::size_t node_count, std::initializer_list<std::pair<NodeId, NodeId>> pairs)
      : Topology(node_count, std::span<const std::pair<NodeId, NodeId>>(pairs.begin(), pairs.size())) {}

  std::size_t node_count() const noexcept { return node_count_; }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<NodeId>& neighbors(NodeId i) const { return neighbors_.at(i); }
  std::size_t degree(NodeId i) const { return neighbors_.at(i).size(); }

  bool has_edge(NodeId a, NodeId b) const {
    const Edge key{std::min(a, b), std::max(a, b)};
    return std::binary_search(edges_.begin(), edges_.end(), key);
  }

  friend bool operator==(const Topology& a, const Topology& b) {
    return a.node_count_ == b.node_count_ && a.edges_ == b.edges_;
  }

private:
  std::size_t node_count_;
  std::vector<Edge> edges_;
  std::vector<std::vector<NodeId>> neighbors_;
};

inline Topology build_topology(std::size_t n, std::span<const std::pair<NodeId, NodeId>> pairs) {
  return Topology(n, pairs);
}

inline bool is_connected(const Topology& t) {
  const std::size_t n = t.node_count();
  std::vector<char> seen(n, 0);
  std::queue<NodeId> frontier;
  frontier.push(0);
  seen[0] = 1;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    const NodeId i = frontier.front();
    frontier.pop();
    for (NodeId j : t.neighbors(i)) {
      if (!seen[j]) {
        seen[j] = 1;
        ++reached;
        frontier.push(j);
      }
    }
  }
  return reached == n;
}

inline std::size_t max_degree(const Topology& t) {
  std::size_t best = 0;
  for (NodeId i = 0; i < t.node_count(); ++i) best = std::max(best, t.degree(i));
  return best;
}

/// L = D - A.
inline Eigen::MatrixXd laplacian(const Topology& t) {
  const auto n = static_cast<Eigen::Index>(t.node_count());
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (const Edge& e : t.edges()) {
    const auto u = static_cast<Eigen::Index>(e.u);
    const auto v = static_cast<Eigen::Index>(e.v);
    L(u, v) -= 1.0;
    L(v, u) -= 1.0;
    L(u, u) += 1.0;
    L(v, v) += 1.0;
  }
  return L;
}

/// Independent per-edge failure with a common probability.
class LinkFailureModel {
public:
  explicit LinkFailureModel(double failure_probability) : p_(failure_probability) {
    if (!(p_ >= 0.0 && p_ <= 1.0)) {
      throw InvalidArgument("link failure probability must lie in [0, 1], got " + std::to_string(p_));
    }
  }
  double failure_probability() const noexcept { return p_; }

private:
  double p_;
};

/// Subgraph of a base topology holding the links that work at one time step.
/// The base must outlive the snapshot.
class GraphSnapshot {
public:
  /// All edges active.
  explicit GraphSnapshot(const Topology& base)
      : base_(&base), active_(base.edge_count(), 1), active_count_(base.edge_count()) {}

  GraphSnapshot(const Topology& base, std::vector<char> active_mask) : base_(&base), active_(std::move(active_mask)) {
    if (active_.size() != base.edge_count()) {
      throw InvalidArgument("snapshot: mask length does not match the base edge count");
    }
    active_count_ = static_cast<std::size_t>(std::count_if(active_.begin(), active_.end(), [](char c) { return c != 0; }));
  }

  const Topology& base() const noexcept { return *base_; }
  std::size_t node_count() const noexcept { return base_->node_count(); }
  bool is_active(std::size_t edge_index) const { return active_.at(edge_index) != 0; }
  std::size_t active_count() const noexcept { return active_count_; }

  std::vector<Edge> active_edges() const {
    std::vector<Edge> out;
    out.reserve(active_count_);
    for (std::size_t k = 0; k < active_.size(); ++k) {
      if (active_[k]) out.push_back(base_->edges()[k]);
    }
    return out;
  }

  /// Laplacian of the active subgraph.
  Eigen::MatrixXd laplacian() const {
    const auto n = static_cast<Eigen::Index>(node_count());
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
    const auto& edges = base_->edges();
    for (std::size_t k = 0; k < edges.size(); ++k) {
      if (!active_[k]) continue;
      const auto u = static_cast<Eigen::Index>(edges[k].u);
      const auto v = static_cast<Eigen::Index>(edges[k].v);
      L(u, v) -= 1.0;
      L(v, u) -= 1.0;
      L(u, u) += 1.0;
      L(v, v) += 1.0;
    }
    return L;
  }

private:
  const Topology* base_;
  std::vector<char> active_;
  std::size_t active_count_ = 0;
};

/// Each edge survives independently with probability 1 - p; both directions
/// of a link fail together.
inline GraphSnapshot sample_snapshot(const Topology& t, const LinkFailureModel& model, RandomStream& rng) {
  const double p = model.failure_probability();
  std::vector<char> mask(t.edge_count(), 1);
  if (p >= 1.0) {
    std::fill(mask.begin(), mask.end(), 0);
  } else if (p > 0.0) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (auto& m : mask) m = unit(rng) >= p ? 1 : 0;
  }
  return GraphSnapshot(t, std::move(mask));
}

// ---------------------------------------------------------------------------
// Topology text format:
//   n <count>
//   e <i> <j>
// '#' starts a comment that runs to end of line.

inline Topology read_topology(std::istream& in, const std::string& source = "<topology>") {
  std::string raw;
  std::size_t line_no = 0;
  std::size_t n = 0;
  bool have_n = false;
  std::vector<std::pair<NodeId, NodeId>> pairs;
  while (std::getline(in, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream ls(raw);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "n") {
      if (have_n) throw ConfigError(source, line_no, "duplicate 'n' line");
      long long count = 0;
      if (!(ls >> count) || count < 1) throw ConfigError(source, line_no, "expected 'n <count>' with count >= 1");
      n = static_cast<std::size_t>(count);
      have_n = true;
    } else if (tag == "e") {
      if (!have_n) throw ConfigError(source, line_no, "'e' line before 'n' line");
      long long i = -1, j = -1;
      if (!(ls >> i >> j) || i < 0 || j < 0) throw ConfigError(source, line_no, "expected 'e <i> <j>' with ids >= 0");
      pairs.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
    } else {
      throw ConfigError(source, line_no, "unknown record '" + tag + "'");
    }
    std::string extra;
    if (ls >> extra) throw ConfigError(source, line_no, "trailing token '" + extra + "'");
    if (tag == "e") {
      const auto [a, b] = pairs.back();
      if (a == b) throw ConfigError(source, line_no, "self-loop at node " + std::to_string(a));
      if (a >= n || b >= n) throw ConfigError(source, line_no, "node id out of range for n = " + std::to_string(n));
    }
  }
  if (!have_n) throw ConfigError(source, 0, "missing 'n <count>' line");
  return Topology(n, pairs);
}

inline Topology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "cannot open topology file");
  return read_topology(in, path);
}

inline void write_topology(std::ostream& out, const Topology& t) {
  out << "n " << t.node_count() << '\n';
  for (const Edge& e : t.edges()) out << "e " << e.u << ' ' << e.v << '\n';
}

inline std::string to_string(const Topology& t) {
  std::ostringstream os;
  write_topology(os, t);
  return os.str();
}

}  // namespace consense
