#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "smoothgcn/eigen.hpp"
#include "smoothgcn/errors.hpp"
#include "smoothgcn/matrix.hpp"

namespace smoothgcn {

using Edge = std::pair<std::size_t, std::size_t>;

/**
 * Undirected simple graph on nodes 0..n-1.
 *
 * The constructor normalizes the edge list: each edge is stored as (u, v)
 * with u < v, sorted, without duplicates. Self-loops are rejected; the
 * augmentation A + I is applied by the propagation operator.
 */
class Graph {
 public:
  Graph() = default;
  Graph(std::size_t n, std::vector<Edge> edges) : n_(n) {
    for (auto& [u, v] : edges) {
      if (u >= n || v >= n)
        throw InputError("Graph: edge (" + std::to_string(u) + "," + std::to_string(v) +
                         ") out of range for n=" + std::to_string(n));
      if (u == v) throw InputError("Graph: self-loop at node " + std::to_string(u));
      if (u > v) std::swap(u, v);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    edges_ = std::move(edges);
  }

  std::size_t num_nodes() const noexcept { return n_; }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  std::vector<std::size_t> degrees() const {
    std::vector<std::size_t> d(n_, 0);
    for (auto [u, v] : edges_) ++d[u], ++d[v];
    return d;
  }

  Matrix adjacency() const {
    Matrix a(n_, n_);
    for (auto [u, v] : edges_) a(u, v) = a(v, u) = 1.0;
    return a;
  }

 private:
  std::size_t n_ = 0;
  std::vector<Edge> edges_;
};

/// Union-find with path halving and union by size.
class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

struct Components {
  std::vector<std::size_t> labels;  // dense in [0, count), ordered by first node
  std::size_t count = 0;
};

inline Components connected_components(const Graph& g) {
  DisjointSet dsu(g.num_nodes());
  for (auto [u, v] : g.edges()) dsu.unite(u, v);
  Components out{std::vector<std::size_t>(g.num_nodes()), 0};
  std::vector<std::size_t> root_label(g.num_nodes(), g.num_nodes());
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    const std::size_t r = dsu.find(i);
    if (root_label[r] == g.num_nodes()) root_label[r] = out.count++;
    out.labels[i] = root_label[r];
  }
  return out;
}

/// G = D̃^{-1/2}(A + I)D̃^{-1/2} together with Δ̃ = I - G.
struct PropagationOperator {
  Matrix g;
  Matrix laplacian;
  std::vector<double> degrees;  // augmented, d_i = deg(i) + 1

  std::size_t num_nodes() const noexcept { return degrees.size(); }
};

inline PropagationOperator build_propagation_operator(const Graph& graph) {
  const std::size_t n = graph.num_nodes();
  PropagationOperator op;
  op.degrees.resize(n);
  const auto deg = graph.degrees();
  for (std::size_t i = 0; i < n; ++i) op.degrees[i] = static_cast<double>(deg[i]) + 1.0;

  op.g = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) op.g(i, i) = 1.0 / op.degrees[i];
  for (auto [u, v] : graph.edges())
    op.g(u, v) = op.g(v, u) = 1.0 / std::sqrt(op.degrees[u] * op.degrees[v]);
  op.laplacian = Matrix::identity(n) - op.g;
  return op;
}

/// Eigenvalues within this distance of 1 count toward the eigenvalue-1 space.
inline constexpr double kUnitEigenvalueTol = 1e-8;

/**
 * Orthonormal basis of the eigenvalue-1 eigenspace M of G.
 *
 * Column i of `q` is D̃^{1/2}u_i / ||D̃^{1/2}u_i|| for the indicator u_i of
 * component i. `lambda2` is the largest |λ| over the eigenvalues below 1.
 */
struct SpectralBasis {
  std::size_t m = 0;
  Matrix q;  // n x m
  std::vector<std::size_t> component_labels;
  double lambda2 = 0.0;
  std::vector<double> eigenvalues;  // full spectrum of G, descending

  std::size_t num_nodes() const noexcept { return q.rows(); }
  /// λ_{m+1}: the largest eigenvalue strictly inside the unit bound (0 if none).
  double first_nonunit_eigenvalue() const {
    for (double l : eigenvalues)
      if (std::abs(l - 1.0) >= kUnitEigenvalueTol) return l;
    return 0.0;
  }
};

inline SpectralBasis eigenbasis(const Graph& graph, const PropagationOperator& op,
                                double unit_tol = kUnitEigenvalueTol) {
  const std::size_t n = graph.num_nodes();
  if (op.num_nodes() != n)
    throw ShapeError("eigenbasis: operator has " + std::to_string(op.num_nodes()) +
                     " nodes, graph has " + std::to_string(n));
  const Components comps = connected_components(graph);
  SpectralBasis basis;
  basis.m = comps.count;
  basis.component_labels = comps.labels;
  basis.q = Matrix(n, comps.count);
  std::vector<double> mass(comps.count, 0.0);
  for (std::size_t i = 0; i < n; ++i) mass[comps.labels[i]] += op.degrees[i];
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = comps.labels[i];
    basis.q(i, c) = std::sqrt(op.degrees[i] / mass[c]);
  }

  basis.eigenvalues = symmetric_eigendecomposition(op.g).values;
  basis.lambda2 = 0.0;
  for (double l : basis.eigenvalues)
    if (std::abs(l - 1.0) >= unit_tol) basis.lambda2 = std::max(basis.lambda2, std::abs(l));
  return basis;
}

/// Everything derived from a graph that the smoothness code needs.
struct GraphContext {
  Graph graph;
  PropagationOperator op;
  SpectralBasis basis;

  explicit GraphContext(Graph g)
      : graph(std::move(g)),
        op(build_propagation_operator(graph)),
        basis(eigenbasis(graph, op)) {}
};

/**
 * Reads the plain-text graph format: first data line "n e", then e lines
 * "u v" with 0-based indices. Text after '#' is ignored; blank lines skipped.
 */
inline Graph read_graph(std::istream& in) {
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    lines.push_back(line);
  }
  if (lines.empty()) throw InputError("read_graph: missing header line 'n e'");
  std::istringstream header(lines[0]);
  long long n = -1, e = -1;
  if (!(header >> n >> e) || n < 0 || e < 0)
    throw InputError("read_graph: malformed header '" + lines[0] + "'");
  if (lines.size() - 1 != static_cast<std::size_t>(e))
    throw InputError("read_graph: header declares " + std::to_string(e) + " edges, found " +
                     std::to_string(lines.size() - 1));
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(e));
  for (std::size_t k = 1; k < lines.size(); ++k) {
    std::istringstream ls(lines[k]);
    long long u = -1, v = -1;
    std::string extra;
    if (!(ls >> u >> v) || (ls >> extra) || u < 0 || v < 0)
      throw InputError("read_graph: malformed edge line '" + lines[k] + "'");
    edges.emplace_back(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
  }
  return Graph(static_cast<std::size_t>(n), std::move(edges));
}

inline void write_graph(std::ostream& out, const Graph& g) {
  out << g.num_nodes() << ' ' << g.num_edges() << '\n';
  for (auto [u, v] : g.edges()) out << u << ' ' << v << '\n';
}

}  // namespace smoothgcn
