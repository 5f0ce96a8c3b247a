#include <gtest/gtest.h>

#include <queue>
#include <sstream>

#include "support.hpp"

using namespace consense;
using consense::testing::fixture10;
using consense::testing::fixture50;

namespace {

Topology path3() { return Topology(3, {{0, 1}, {1, 2}}); }

bool bfs_connected(const Topology& t) {
  std::vector<char> seen(t.node_count(), 0);
  std::queue<NodeId> q;
  q.push(0);
  seen[0] = 1;
  std::size_t count = 1;
  while (!q.empty()) {
    const NodeId u = q.front();
    q.pop();
    for (std::size_t v = 0; v < t.node_count(); ++v) {
      if (!seen[v] && t.has_edge(u, v)) {
        seen[v] = 1;
        ++count;
        q.push(v);
      }
    }
  }
  return count == t.node_count();
}

}  // namespace

TEST(Topology, SmallestConnectedGraph) {
  const Topology k2(2, {{0, 1}});
  EXPECT_EQ(k2.node_count(), 2u);
  ASSERT_EQ(k2.edge_count(), 1u);
  EXPECT_EQ(k2.edges()[0], (Edge{0, 1}));
  EXPECT_TRUE(k2.has_edge(1, 0));
}

TEST(Topology, PathDegrees) {
  const Topology p = path3();
  EXPECT_EQ(p.degree(0), 1u);
  EXPECT_EQ(p.degree(1), 2u);
  EXPECT_EQ(p.degree(2), 1u);
}

TEST(Topology, CanonicalizesAndDeduplicates) {
  const Topology t(3, {{2, 1}, {1, 2}, {0, 1}, {1, 0}});
  ASSERT_EQ(t.edge_count(), 2u);
  EXPECT_EQ(t.edges()[0], (Edge{0, 1}));
  EXPECT_EQ(t.edges()[1], (Edge{1, 2}));
  EXPECT_EQ(t, path3());
}

TEST(Topology, RejectsSelfLoop) {
  try {
    Topology(2, {{0, 0}});
    FAIL() << "expected an exception";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("self-loop"), std::string::npos);
  }
}

TEST(Topology, RejectsOutOfRangeAndEmpty) {
  EXPECT_THROW(Topology(2, {{0, 2}}), InvalidArgument);
  EXPECT_THROW(Topology(0, {}), InvalidArgument);
}

TEST(Topology, Connectivity) {
  EXPECT_TRUE(is_connected(path3()));
  EXPECT_FALSE(is_connected(Topology(4, {{0, 1}, {2, 3}})));
  EXPECT_TRUE(is_connected(Topology(1, {})));
  EXPECT_TRUE(is_connected(fixture10()));
  EXPECT_TRUE(is_connected(fixture50()));
}

TEST(Topology, MaxDegree) {
  EXPECT_EQ(max_degree(Topology(2, {{0, 1}})), 1u);
  EXPECT_EQ(max_degree(Topology(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}})), 4u);
  EXPECT_EQ(max_degree(fixture10()), 5u);
  EXPECT_EQ(max_degree(Topology(3, {})), 0u);
}

TEST(Laplacian, HandChecked) {
  Eigen::MatrixXd k2(2, 2);
  k2 << 1, -1, -1, 1;
  EXPECT_EQ(laplacian(Topology(2, {{0, 1}})), k2);
  Eigen::MatrixXd p3(3, 3);
  p3 << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  EXPECT_EQ(laplacian(path3()), p3);
}

TEST(Laplacian, SymmetricPsdZeroRowSums) {
  RandomStream rng = derive_stream(11u, 1u);
  for (int i = 0; i < 50; ++i) {
    const Topology t = consense::testing::random_graph(3 + i % 12, 0.3, rng);
    const Eigen::MatrixXd L = laplacian(t);
    EXPECT_EQ(L, L.transpose());
    for (Eigen::Index r = 0; r < L.rows(); ++r) {
      EXPECT_EQ(L.row(r).sum(), 0.0);
      EXPECT_EQ(L.col(r).sum(), 0.0);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-9);
  }
}

TEST(Laplacian, ConnectivityMatchesBfsAndFiedlerValue) {
  RandomStream rng = derive_stream(12u, 1u);
  std::size_t connected = 0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 2 + static_cast<std::size_t>(i % 11);
    const Topology t = consense::testing::random_graph(n, 0.25, rng);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(laplacian(t));
    const bool by_eigen = es.eigenvalues()(1) > 1e-9;
    const bool by_bfs = bfs_connected(t);
    EXPECT_EQ(is_connected(t), by_bfs) << to_string(t);
    EXPECT_EQ(by_eigen, by_bfs) << to_string(t);
    connected += by_bfs ? 1 : 0;
  }
  // Both outcomes must actually be exercised.
  EXPECT_GT(connected, 20u);
  EXPECT_LT(connected, 180u);
}

TEST(LinkFailureModel, ValidatesProbability) {
  EXPECT_THROW(LinkFailureModel(-0.1), InvalidArgument);
  EXPECT_THROW(LinkFailureModel(1.5), InvalidArgument);
  EXPECT_NO_THROW(LinkFailureModel(0.0));
  EXPECT_NO_THROW(LinkFailureModel(1.0));
}

TEST(Snapshot, ExtremeProbabilities) {
  RandomStream rng = derive_stream(13u);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(sample_snapshot(fixture10(), LinkFailureModel(0.0), rng).active_count(), fixture10().edge_count());
    const GraphSnapshot none = sample_snapshot(fixture10(), LinkFailureModel(1.0), rng);
    EXPECT_EQ(none.active_count(), 0u);
    EXPECT_TRUE(none.laplacian().isZero());
  }
}

TEST(Snapshot, MeanActiveCountIsBinomial) {
  std::vector<std::pair<NodeId, NodeId>> ring;
  for (NodeId i = 0; i < 10; ++i) ring.emplace_back(i, (i + 1) % 10);
  const Topology t(10, ring);
  const LinkFailureModel model(0.4);
  RandomStream rng = derive_stream(14u);
  const std::size_t draws = 100000;
  double total = 0.0;
  std::vector<std::size_t> kept(t.edge_count(), 0);
  for (std::size_t i = 0; i < draws; ++i) {
    const GraphSnapshot s = sample_snapshot(t, model, rng);
    total += static_cast<double>(s.active_count());
    for (std::size_t e = 0; e < t.edge_count(); ++e) kept[e] += s.is_active(e) ? 1 : 0;
    for (const Edge& e : s.active_edges()) ASSERT_TRUE(t.has_edge(e.u, e.v));
  }
  const double se_count = std::sqrt(10 * 0.4 * 0.6 / static_cast<double>(draws));
  EXPECT_NEAR(total / draws, 6.0, 3 * se_count);
  const double se_edge = std::sqrt(0.4 * 0.6 / static_cast<double>(draws));
  for (std::size_t k : kept) EXPECT_NEAR(static_cast<double>(k) / draws, 0.6, 3 * se_edge);
}

TEST(Snapshot, LaplacianKeepsOnlyActiveEdges) {
  const Topology p = path3();
  const GraphSnapshot s(p, std::vector<char>{1, 0});
  Eigen::MatrixXd expected(3, 3);
  expected << 1, -1, 0, -1, 1, 0, 0, 0, 0;
  EXPECT_EQ(s.laplacian(), expected);
  EXPECT_EQ(GraphSnapshot(p).laplacian(), laplacian(p));
  EXPECT_THROW(GraphSnapshot(p, std::vector<char>{1}), InvalidArgument);
}

TEST(TopologyFile, RoundTrips) {
  for (const Topology* t : {&fixture10(), &fixture50()}) {
    std::istringstream in(to_string(*t));
    const Topology back = read_topology(in);
    EXPECT_EQ(back, *t);
    EXPECT_EQ(to_string(back), to_string(*t));
  }
}

TEST(TopologyFile, CommentsAndBlankLines) {
  std::istringstream in("# header\n\nn 3  # three nodes\ne 0 1\n  e 2 1\n");
  EXPECT_EQ(read_topology(in), path3());
}

TEST(TopologyFile, ErrorsNameTheLine) {
  const std::vector<std::pair<std::string, std::size_t>> cases = {
      {"n 3\ne 0 5\n", 2}, {"n 3\ne 1 1\n", 2}, {"e 0 1\n", 1},     {"n 3\nn 3\n", 2},
      {"n 3\nx 0 1\n", 2}, {"n 3\ne 0\n", 2},   {"n 3\ne 0 1 2\n", 2}, {"n 0\n", 1},
  };
  for (const auto& [text, line] : cases) {
    std::istringstream in(text);
    try {
      read_topology(in, "t.txt");
      ADD_FAILURE() << "accepted: " << text;
    } catch (const ConfigError& e) {
      EXPECT_EQ(e.line(), line) << text;
      EXPECT_EQ(e.file(), "t.txt");
      EXPECT_EQ(std::string(e.what()).rfind("t.txt:" + std::to_string(line) + ":", 0), 0u) << e.what();
    }
  }
  std::istringstream empty("# nothing\n");
  EXPECT_THROW(read_topology(empty), ConfigError);
  EXPECT_THROW(load_topology("/nonexistent/topology.txt"), ConfigError);
}
