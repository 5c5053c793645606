#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "smoothgcn/eigen.hpp"
#include "smoothgcn/generators.hpp"
#include "smoothgcn/graph.hpp"
#include "support.hpp"

using namespace smoothgcn;
using testsupport::edge_graph;
using testsupport::path_graph;

TEST(Graph, NormalizesDuplicateAndReversedEdges) {
  Graph g(3, {{1, 0}, {0, 1}, {2, 1}});
  ASSERT_EQ(g.num_edges(), 2u);
  EXPECT_EQ(g.edges()[0], Edge(0, 1));
  EXPECT_EQ(g.edges()[1], Edge(1, 2));
}

TEST(Graph, RejectsSelfLoopsAndOutOfRange) {
  EXPECT_THROW(Graph(2, {{0, 0}}), InputError);
  EXPECT_THROW(Graph(2, {{0, 2}}), InputError);
}

TEST(Propagation, SingleNode) {
  auto op = build_propagation_operator(Graph(1, {}));
  EXPECT_EQ(op.g, Matrix{{1.0}});
}

TEST(Propagation, SingleEdge) {
  auto op = build_propagation_operator(edge_graph());
  EXPECT_EQ(op.g, (Matrix{{0.5, 0.5}, {0.5, 0.5}}));
  EXPECT_EQ(op.degrees, (std::vector<double>{2.0, 2.0}));
}

TEST(Propagation, Triangle) {
  auto op = build_propagation_operator(Graph(3, {{0, 1}, {1, 2}, {0, 2}}));
  for (double v : op.g.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Propagation, MatchesDenseOracleAndInvariants) {
  Rng rng(21);
  for (int t = 0; t < 100; ++t) {
    Graph g = testsupport::random_graph(rng);
    auto op = build_propagation_operator(g);
    EXPECT_LT((op.g - testsupport::dense_propagation(g)).max_abs(), 1e-14);
    EXPECT_LT((op.g - op.g.transpose()).max_abs(), 1e-12);
    EXPECT_EQ(op.laplacian, Matrix::identity(g.num_nodes()) - op.g);
  }
}

TEST(Components, Examples) {
  auto c = connected_components(Graph(3, {}));
  EXPECT_EQ(c.count, 3u);
  EXPECT_EQ(c.labels, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(connected_components(path_graph(3)).count, 1u);
  auto two = connected_components(Graph(4, {{0, 1}, {2, 3}}));
  EXPECT_EQ(two.count, 2u);
  EXPECT_EQ(two.labels[0], two.labels[1]);
  EXPECT_EQ(two.labels[2], two.labels[3]);
  EXPECT_NE(two.labels[0], two.labels[2]);
}

TEST(Components, AgreeWithBreadthFirstSearch) {
  Rng rng(22);
  for (int t = 0; t < 100; ++t) {
    Graph g = testsupport::random_graph(rng, 40);
    auto c = connected_components(g);
    auto bfs = testsupport::bfs_labels(g);
    // BFS numbers components by first node too, so the labelings coincide
    for (std::size_t i = 0; i < g.num_nodes(); ++i)
      EXPECT_EQ(c.labels[i], static_cast<std::size_t>(bfs[i]));
    EXPECT_EQ(c.count, static_cast<std::size_t>(*std::max_element(bfs.begin(), bfs.end()) + 1));
  }
}

TEST(Eigenbasis, SingleEdge) {
  GraphContext ctx(edge_graph());
  EXPECT_EQ(ctx.basis.m, 1u);
  EXPECT_NEAR(ctx.basis.q(0, 0), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(ctx.basis.q(1, 0), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Eigenbasis, TwoIsolatedNodes) {
  GraphContext ctx(Graph(2, {}));
  EXPECT_EQ(ctx.basis.m, 2u);
  EXPECT_EQ(ctx.basis.q, Matrix::identity(2));
}

TEST(Eigenbasis, PathOfThree) {
  GraphContext ctx(path_graph(3));
  const double norm = std::sqrt(7.0);
  EXPECT_NEAR(ctx.basis.q(0, 0), std::sqrt(2.0) / norm, 1e-15);
  EXPECT_NEAR(ctx.basis.q(1, 0), std::sqrt(3.0) / norm, 1e-15);
  EXPECT_NEAR(ctx.basis.q(2, 0), std::sqrt(2.0) / norm, 1e-15);
  auto ed = symmetric_eigendecomposition(testsupport::dense_propagation(path_graph(3)));
  double brute = 0.0;
  for (double l : ed.values)
    if (std::abs(l - 1.0) >= 1e-8) brute = std::max(brute, std::abs(l));
  EXPECT_NEAR(ctx.basis.lambda2, brute, 1e-12);
}

TEST(Eigenbasis, ClosedFormMatchesSpectrumOnRandomGraphs) {
  Rng rng(23);
  for (int t = 0; t < 100; ++t) {
    Graph g = testsupport::random_graph(rng);
    GraphContext ctx(g);
    const auto& b = ctx.basis;
    const std::size_t n = g.num_nodes();
    auto ed = symmetric_eigendecomposition(testsupport::dense_propagation(g));
    std::size_t unit = 0;
    for (double l : ed.values) {
      if (std::abs(l - 1.0) < 1e-8) ++unit;
      EXPECT_GT(l, -1.0 + 1e-9);
      EXPECT_LE(l, 1.0 + 1e-9);
    }
    EXPECT_EQ(b.m, unit);
    EXPECT_LT((matmul(ctx.op.g, b.q) - b.q).max_abs(), 1e-10);
    EXPECT_LT((matmul_tn(b.q, b.q) - Matrix::identity(b.m)).max_abs(), 1e-10);
    EXPECT_GE(b.lambda2, 0.0);
    EXPECT_LT(b.lambda2, 1.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < b.m; ++c) {
        EXPECT_GE(b.q(i, c), 0.0);
        EXPECT_EQ(b.q(i, c) > 0.0, b.component_labels[i] == c);
      }
  }
}

TEST(GraphIo, RoundTripsAndSkipsComments) {
  std::istringstream in("# two triangles\n6 6\n0 1\n1 2\n2 0 # closing edge\n\n3 4\n4 5\n5 3\n");
  Graph g = read_graph(in);
  EXPECT_EQ(g.num_nodes(), 6u);
  EXPECT_EQ(g.num_edges(), 6u);
  std::ostringstream out;
  write_graph(out, g);
  std::istringstream back(out.str());
  Graph h = read_graph(back);
  EXPECT_EQ(h.edges(), g.edges());
}

TEST(GraphIo, RejectsMalformedInput) {
  std::istringstream empty("");
  EXPECT_THROW(read_graph(empty), InputError);
  std::istringstream count("3 2\n0 1\n");
  EXPECT_THROW(read_graph(count), InputError);
  std::istringstream junk("3 1\n0 x\n");
  EXPECT_THROW(read_graph(junk), InputError);
  std::istringstream range("3 1\n0 7\n");
  EXPECT_THROW(read_graph(range), InputError);
}

TEST(Generators, DegreeGraphIsConnectedAndDeterministic) {
  Rng a(5), b(5);
  Graph g1 = random_degree_graph(100, 2, 10, a);
  Graph g2 = random_degree_graph(100, 2, 10, b);
  EXPECT_EQ(g1.edges(), g2.edges());
  EXPECT_EQ(connected_components(g1).count, 1u);
}

TEST(Generators, BlockModelHonorsBlockSizes) {
  Rng rng(6);
  std::vector<std::size_t> sizes{4, 6};
  auto bg = stochastic_block_model(sizes, 1.0, 0.0, rng);
  EXPECT_EQ(bg.graph.num_edges(), 6u + 15u);
  EXPECT_EQ(std::count(bg.block.begin(), bg.block.end(), 1), 6);
}
