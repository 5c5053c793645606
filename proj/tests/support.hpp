#pragma once

// Shared fixtures and independent oracles for the test suite.

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <vector>

#include "smoothgcn/autodiff.hpp"
#include "smoothgcn/generators.hpp"
#include "smoothgcn/graph.hpp"
#include "smoothgcn/matrix.hpp"
#include "smoothgcn/random.hpp"

namespace testsupport {

using smoothgcn::Graph;
using smoothgcn::Matrix;
using smoothgcn::Rng;

inline Graph path_graph(std::size_t n) {
  std::vector<smoothgcn::Edge> e;
  for (std::size_t i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return Graph(n, e);
}

inline Graph edge_graph() { return Graph(2, {{0, 1}}); }

/// Random graph on 2..max_n nodes with a random edge density; may be disconnected.
inline Graph random_graph(Rng& rng, std::size_t max_n = 30) {
  const auto n = static_cast<std::size_t>(rng.uniform_int(2, static_cast<std::int64_t>(max_n)));
  return smoothgcn::erdos_renyi(n, rng.uniform(0.0, 0.5), rng);
}

inline Graph random_connected(Rng& rng, std::size_t max_n = 30) {
  const auto n = static_cast<std::size_t>(rng.uniform_int(2, static_cast<std::int64_t>(max_n)));
  return smoothgcn::random_connected_graph(n, rng.uniform(0.05, 0.5), rng);
}

/// Component labels by breadth-first search over an adjacency list.
inline std::vector<int> bfs_labels(const Graph& g) {
  std::vector<std::vector<std::size_t>> adj(g.num_nodes());
  for (auto [u, v] : g.edges()) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  std::vector<int> label(g.num_nodes(), -1);
  int next = 0;
  for (std::size_t s = 0; s < g.num_nodes(); ++s) {
    if (label[s] != -1) continue;
    std::queue<std::size_t> q;
    q.push(s);
    label[s] = next;
    while (!q.empty()) {
      const auto u = q.front();
      q.pop();
      for (auto v : adj[u])
        if (label[v] == -1) {
          label[v] = next;
          q.push(v);
        }
    }
    ++next;
  }
  return label;
}

/// Triple-loop product, independent of the library kernels.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

/// Dense G built entry by entry from the edge list.
inline Matrix dense_propagation(const Graph& g) {
  const std::size_t n = g.num_nodes();
  Matrix a = Matrix::identity(n);
  for (auto [u, v] : g.edges()) a(u, v) = a(v, u) = 1.0;
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += a(i, j);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) /= std::sqrt(deg[i] * deg[j]);
  return a;
}

/**
 * Central finite differences of `f` with respect to every entry of every
 * matrix in `params`; returns the norm-wise relative error against `grads`.
 */
inline double fd_relative_error(std::vector<Matrix>& params, const std::vector<Matrix>& grads,
                                const std::function<double()>& f, double h = 1e-5) {
  double diff2 = 0.0, ref2 = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t k = 0; k < params[p].size(); ++k) {
      const double keep = params[p][k];
      params[p][k] = keep + h;
      const double up = f();
      params[p][k] = keep - h;
      const double down = f();
      params[p][k] = keep;
      const double fd = (up - down) / (2.0 * h);
      diff2 += (fd - grads[p][k]) * (fd - grads[p][k]);
      ref2 += std::max(fd * fd, grads[p][k] * grads[p][k]);
    }
  }
  return ref2 == 0.0 ? std::sqrt(diff2) : std::sqrt(diff2 / ref2);
}

/**
 * Gradient check for a loss built on a fresh tape from `params`: records the
 * tape gradients, then compares against finite differences.
 */
inline double gradient_check(std::vector<Matrix> params,
                             const std::function<smoothgcn::Var(smoothgcn::Tape&,
                                                                const std::vector<smoothgcn::Var>&)>&
                                 build) {
  std::vector<Matrix> grads;
  {
    smoothgcn::Tape tape;
    std::vector<smoothgcn::Var> vars;
    for (const auto& p : params) vars.push_back(tape.parameter(p));
    auto loss = build(tape, vars);
    tape.backward(loss);
    for (const auto& v : vars) grads.push_back(v.grad());
  }
  auto eval = [&] {
    smoothgcn::Tape tape;
    std::vector<smoothgcn::Var> vars;
    for (const auto& p : params) vars.push_back(tape.parameter(p));
    return build(tape, vars).value()[0];
  };
  return fd_relative_error(params, grads, eval);
}

}  // namespace testsupport
