#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "smoothgcn/activations.hpp"
#include "smoothgcn/errors.hpp"
#include "smoothgcn/generators.hpp"
#include "smoothgcn/graph.hpp"
#include "smoothgcn/smoothness.hpp"

namespace smoothgcn {

/// Slack used when comparing successive smoothness values along a sweep.
inline constexpr double kMonotoneSlack = 1e-10;
/// z is treated as lying in M when ||z_M⊥|| <= this * ||z||.
inline constexpr double kInEigenspaceTol = 1e-10;

/// z(α) = z - α e. Only the eigenspace component of z changes.
inline std::vector<double> shifted_input(std::span<const double> z, double alpha,
                                         std::span<const double> e) {
  if (z.size() != e.size())
    throw ShapeError("shifted_input: z has " + std::to_string(z.size()) + " entries, e has " +
                     std::to_string(e.size()));
  if (std::abs(norm(e) - 1.0) > 1e-10) throw PreconditionError("shifted_input: e must be unit");
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - alpha * e[i];
  return out;
}

/// `count` evenly spaced points on [lo, hi] (count >= 1).
inline std::vector<double> linspace(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  for (std::size_t k = 0; k < count; ++k)
    out[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count - 1);
  return out;
}

/// The default α grid: 601 points on [-1.5, 1.5].
inline std::vector<double> default_alpha_grid() { return linspace(-1.5, 1.5, 601); }

struct SweepCurve {
  std::vector<double> alphas;
  std::vector<double> s_values;     // s(σ(z(α)))
  std::vector<double> dist_values;  // ||σ(z(α))||_{M⊥}
  double input_s = 0.0;
  double input_dist = 0.0;
};

namespace detail {

inline std::vector<double> unit_eigenvector(const SpectralBasis& basis, const char* op) {
  if (basis.m != 1)
    throw PreconditionError(std::string(op) + ": requires a connected graph (m = 1), got m = " +
                            std::to_string(basis.m));
  return basis.q.col_vector(0);
}

inline double vector_dist(std::span<const double> v, std::span<const double> e) {
  const double p = dot(v, e);
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += (v[i] - p * e[i]) * (v[i] - p * e[i]);
  return std::sqrt(s);
}

inline std::vector<double> activate_vector(const ActivationKind& kind, std::span<const double> v) {
  return apply(kind, Matrix::row(v)).row_vector(0);
}

/// s(h) for a shifted output, with round-off-sized outputs treated as the zero
/// vector (s = 1): z - αe carries rounding error of order ε(||z|| + |α|).
inline double shifted_smoothness(std::span<const double> h, double z_norm, double alpha,
                                 const SpectralBasis& basis) {
  const double noise = 64.0 * std::numeric_limits<double>::epsilon() * (z_norm + std::abs(alpha));
  if (norm(h) <= noise) return 1.0;
  return normalized_smoothness(h, basis);
}

inline void require_off_eigenspace(std::span<const double> z, std::span<const double> e,
                                   const char* op) {
  if (!(vector_dist(z, e) > kInEigenspaceTol * norm(z)))
    throw PreconditionError(std::string(op) + ": z has no component orthogonal to M");
}

}  // namespace detail

/// Evaluates s and ||·||_{M⊥} of σ(z - αe) for every α in the grid.
inline SweepCurve sweep(std::span<const double> z, const SpectralBasis& basis,
                        const ActivationKind& kind, std::span<const double> alphas) {
  if (alphas.empty()) throw InputError("sweep: empty α grid");
  if (kind.kind == Activation::softmax) throw ConfigError("sweep: softmax is not pointwise");
  const auto e = detail::unit_eigenvector(basis, "sweep");
  if (z.size() != e.size()) throw ShapeError("sweep: z length does not match graph");
  SweepCurve curve;
  curve.alphas.assign(alphas.begin(), alphas.end());
  curve.input_s = normalized_smoothness(z, basis);
  curve.input_dist = detail::vector_dist(z, e);
  curve.s_values.reserve(alphas.size());
  curve.dist_values.reserve(alphas.size());
  const double z_norm = norm(z);
  for (double alpha : alphas) {
    const auto h = detail::activate_vector(kind, shifted_input(z, alpha, e));
    curve.s_values.push_back(detail::shifted_smoothness(h, z_norm, alpha, basis));
    curve.dist_values.push_back(detail::vector_dist(h, e));
  }
  return curve;
}

/// x = D̃^{-1/2} z and the unit eigenvector e = D̃^{1/2}u / ||D̃^{1/2}u|| of a connected graph.
struct ScaledInput {
  std::vector<double> x;
  std::vector<double> e;
  double degree_sum = 0.0;
  double max_x = 0.0;
};

inline ScaledInput scaled_input(std::span<const double> z, const PropagationOperator& op) {
  if (z.size() != op.num_nodes())
    throw ShapeError("scaled_input: z length does not match graph");
  ScaledInput out;
  out.degree_sum = std::accumulate(op.degrees.begin(), op.degrees.end(), 0.0);
  out.x.resize(z.size());
  out.e.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out.x[i] = z[i] / std::sqrt(op.degrees[i]);
    out.e[i] = std::sqrt(op.degrees[i] / out.degree_sum);
  }
  out.max_x = *std::max_element(out.x.begin(), out.x.end());
  return out;
}

/**
 * α from which z(α) has no positive entry: sqrt(Σ d_i) · max x, rounded up by
 * as many ulps as it takes for the evaluated shift to be exactly nonpositive.
 */
inline double relu_zero_threshold(std::span<const double> z, const PropagationOperator& op) {
  const auto si = scaled_input(z, op);
  double t = std::sqrt(si.degree_sum) * si.max_x;
  const auto has_positive = [&](double alpha) {
    for (std::size_t i = 0; i < z.size(); ++i)
      if (z[i] - alpha * si.e[i] > 0.0) return true;
    return false;
  };
  for (int k = 0; k < 64 && has_positive(t); ++k) t = std::nextafter(t, INFINITY);
  return t;
}

/**
 * Closed-form min over α of s(relu(z - αe)) on a connected graph:
 * sqrt(Σ_{i : x_i = max x} d_i / Σ_j d_j) with x = D̃^{-1/2} z. The argmax
 * set uses a 1e-12 relative tolerance on x.
 */
inline double relu_min_smoothness_closed_form(std::span<const double> z,
                                              const PropagationOperator& op) {
  const auto si = scaled_input(z, op);
  detail::require_off_eigenspace(z, si.e, "relu_min_smoothness_closed_form");
  double scale = 0.0;
  for (double v : si.x) scale = std::max(scale, std::abs(v));
  const double cut = si.max_x - 1e-12 * scale;
  double top = 0.0;
  for (std::size_t i = 0; i < si.x.size(); ++i)
    if (si.x[i] >= cut) top += op.degrees[i];
  return std::sqrt(top / si.degree_sum);
}

/// True iff values never increase by more than `slack` from one entry to the next.
inline bool is_non_increasing(std::span<const double> values, double slack = kMonotoneSlack) {
  for (std::size_t k = 1; k < values.size(); ++k)
    if (values[k] > values[k - 1] + slack) return false;
  return true;
}

/**
 * Checks that s(relu(z(α))) is non-increasing in α over `alphas`, all of
 * which must lie strictly below relu_zero_threshold().
 */
inline bool verify_monotone_region(std::span<const double> z, const PropagationOperator& op,
                                   std::span<const double> alphas) {
  const auto si = scaled_input(z, op);
  const double threshold = relu_zero_threshold(z, op);
  std::vector<double> grid(alphas.begin(), alphas.end());
  std::sort(grid.begin(), grid.end());
  if (!grid.empty() && grid.back() >= threshold)
    throw PreconditionError("verify_monotone_region: grid reaches the threshold " +
                            std::to_string(threshold));
  std::vector<double> s;
  s.reserve(grid.size());
  for (double alpha : grid) {
    auto h = detail::activate_vector(ActivationKind::relu(), shifted_input(z, alpha, si.e));
    const double nh = norm(h);
    s.push_back(nh == 0.0 ? 1.0 : std::min(1.0, std::abs(dot(h, si.e)) / nh));
  }
  return is_non_increasing(s);
}

struct RangeProbe {
  double min_s = 1.0;
  double max_s = 0.0;
  double root_alpha = 0.0;  // α* with ⟨σ(z(α*)), e⟩ = 0
};

/**
 * Sweeps s(σ(z(α))) over α ∈ [⟨z,e⟩ - R, ⟨z,e⟩ + R], R = 100||z||, at
 * `points` evenly spaced values, plus the root α* of ⟨σ(z(α)), e⟩ located by
 * bisection. σ must be strictly increasing (leaky ReLU, ELU, SELU, identity).
 */
inline RangeProbe range_probe(std::span<const double> z, const SpectralBasis& basis,
                              const ActivationKind& kind, std::size_t points = 10000) {
  const auto e = detail::unit_eigenvector(basis, "range_probe");
  if (z.size() != e.size()) throw ShapeError("range_probe: z length does not match graph");
  detail::require_off_eigenspace(z, e, "range_probe");
  const double center = dot(z, e);
  const double radius = 100.0 * norm(z);

  const auto projection = [&](double alpha) {
    return dot(detail::activate_vector(kind, shifted_input(z, alpha, e)), e);
  };
  // ⟨σ(z(α)), e⟩ decreases in α for increasing σ and e > 0
  double lo = center - radius, hi = center + radius;
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (projection(mid) > 0.0 ? lo : hi) = mid;
  }
  RangeProbe probe;
  probe.root_alpha = std::abs(projection(lo)) <= std::abs(projection(hi)) ? lo : hi;

  auto alphas = linspace(center - radius, center + radius, points);
  alphas.push_back(probe.root_alpha);
  for (double alpha : alphas) {
    const auto h = detail::activate_vector(kind, shifted_input(z, alpha, e));
    const double s = detail::shifted_smoothness(h, norm(z), alpha, basis);
    probe.min_s = std::min(probe.min_s, s);
    probe.max_s = std::max(probe.max_s, s);
  }
  return probe;
}

inline RangeProbe leaky_range_probe(std::span<const double> z, const SpectralBasis& basis,
                                    double slope, std::size_t points = 10000) {
  return range_probe(z, basis, ActivationKind::leaky_relu(slope), points);
}

/// The scalar-feature setup used by the sweep command: a connected 100-node
/// graph with target degrees in [2, 10] and z uniform on [-1.5, 1.5].
struct SweepInstance {
  GraphContext ctx;
  std::vector<double> z;
};

inline SweepInstance synthetic_sweep_instance(std::uint64_t seed, std::size_t n = 100) {
  Rng root(seed);
  Rng graph_rng = root.split(1), feature_rng = root.split(2);
  GraphContext ctx(random_degree_graph(n, 2, 10, graph_rng));
  std::vector<double> z(n);
  for (double& v : z) v = feature_rng.uniform(-1.5, 1.5);
  return {std::move(ctx), std::move(z)};
}

}  // namespace smoothgcn
