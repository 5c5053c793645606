#pragma once

#include <algorithm>
#include <cstddef>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "smoothgcn/errors.hpp"
#include "smoothgcn/graph.hpp"
#include "smoothgcn/random.hpp"

namespace smoothgcn {

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
    std::swap(v[i - 1], v[j]);
  }
}

/// G(n, p): every unordered pair is an edge independently with probability p.
inline Graph erdos_renyi(std::size_t n, double p, Rng& rng) {
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (rng.bernoulli(p)) edges.emplace_back(u, v);
  return Graph(n, std::move(edges));
}

/**
 * Adds one edge per extra component, joining a random node of each component
 * to a random node of an already-connected one, until the graph is connected.
 */
inline Graph connect_components(const Graph& g, Rng& rng) {
  const Components comps = connected_components(g);
  if (comps.count <= 1) return g;
  std::vector<std::vector<std::size_t>> members(comps.count);
  for (std::size_t i = 0; i < g.num_nodes(); ++i) members[comps.labels[i]].push_back(i);
  std::vector<Edge> edges = g.edges();
  std::vector<std::size_t> joined = members[0];
  for (std::size_t c = 1; c < comps.count; ++c) {
    const auto& comp = members[c];
    const std::size_t u = comp[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(comp.size() - 1)))];
    const std::size_t v = joined[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(joined.size() - 1)))];
    edges.emplace_back(u, v);
    joined.insert(joined.end(), comp.begin(), comp.end());
  }
  return Graph(g.num_nodes(), std::move(edges));
}

/**
 * Connected graph whose nodes draw a target degree uniformly from
 * [min_degree, max_degree]. Stubs are paired at random (configuration model);
 * self-loops and repeated pairs are dropped, then components are bridged.
 */
inline Graph random_degree_graph(std::size_t n, std::size_t min_degree, std::size_t max_degree,
                                 Rng& rng) {
  if (min_degree > max_degree) throw ConfigError("random_degree_graph: min_degree > max_degree");
  std::vector<std::size_t> stubs;
  for (std::size_t i = 0; i < n; ++i) {
    const auto deg = static_cast<std::size_t>(rng.uniform_int(
        static_cast<std::int64_t>(min_degree), static_cast<std::int64_t>(max_degree)));
    stubs.insert(stubs.end(), deg, i);
  }
  shuffle(stubs, rng);
  std::set<Edge> seen;
  for (std::size_t k = 0; k + 1 < stubs.size(); k += 2) {
    auto u = stubs[k], v = stubs[k + 1];
    if (u == v) continue;
    if (u > v) std::swap(u, v);
    seen.emplace(u, v);
  }
  return connect_components(Graph(n, {seen.begin(), seen.end()}), rng);
}

/// Connected G(n, p), bridged with connect_components when needed.
inline Graph random_connected_graph(std::size_t n, double p, Rng& rng) {
  return connect_components(erdos_renyi(n, p, rng), rng);
}

/// Planted-partition SBM: nodes are assigned to blocks in contiguous runs.
struct BlockGraph {
  Graph graph;
  std::vector<int> block;
};

inline BlockGraph stochastic_block_model(std::span<const std::size_t> block_sizes, double p_in,
                                         double p_out, Rng& rng) {
  BlockGraph out;
  for (std::size_t b = 0; b < block_sizes.size(); ++b)
    out.block.insert(out.block.end(), block_sizes[b], static_cast<int>(b));
  const std::size_t n = out.block.size();
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (rng.bernoulli(out.block[u] == out.block[v] ? p_in : p_out)) edges.emplace_back(u, v);
  out.graph = Graph(n, std::move(edges));
  return out;
}

}  // namespace smoothgcn
