#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smoothgcn/errors.hpp"
#include "smoothgcn/graph.hpp"
#include "smoothgcn/matrix.hpp"

namespace smoothgcn {

/// Quadratic forms below this are treated as round-off and clamped to zero.
inline constexpr double kClampTol = 1e-12;
/// Quadratic forms below this indicate a broken operator.
inline constexpr double kNegativeFail = -1e-9;

namespace detail {
inline void require_nodes(const Matrix& h, std::size_t n, const char* op) {
  if (h.cols() != n)
    throw ShapeError(std::string(op) + ": features " + h.shape() + " on a graph with " +
                     std::to_string(n) + " nodes");
}

/// sqrt(x) with x in [kNegativeFail, 0) clamped to 0; anything lower throws.
/// Values within round-off of zero relative to `scale` (the magnitude of the
/// terms that were subtracted) are also snapped to 0.
inline double clamped_sqrt(double x, const char* what, double scale = 0.0) {
  if (x < kNegativeFail)
    throw NumericalError(std::string(what) + ": negative quadratic form " + std::to_string(x));
  if (x <= 0.0 || x <= 1e-14 * scale) return 0.0;
  return std::sqrt(x);
}
}  // namespace detail

struct Decomposition {
  Matrix in_eigenspace;  // H_M = H Q Qᵀ
  Matrix orthogonal;     // H_M⊥ = H - H_M
};

/// H_M = H·Q·Qᵀ projection onto R^d ⊗ M.
inline Matrix project_to_eigenspace(const Matrix& h, const SpectralBasis& basis) {
  detail::require_nodes(h, basis.num_nodes(), "project_to_eigenspace");
  return matmul_nt(matmul(h, basis.q), basis.q);
}

inline Decomposition decompose(const Matrix& h, const SpectralBasis& basis) {
  Matrix hm = project_to_eigenspace(h, basis);
  Matrix perp = h - hm;
  return {std::move(hm), std::move(perp)};
}

/// ||H||_{M⊥}: Frobenius distance from H to R^d ⊗ M.
inline double distance_to_eigenspace(const Matrix& h, const SpectralBasis& basis) {
  return decompose(h, basis).orthogonal.norm();
}

/// ||H||_E = sqrt(Trace(H Δ̃ Hᵀ)).
inline double dirichlet_energy(const Matrix& h, const PropagationOperator& op) {
  detail::require_nodes(h, op.num_nodes(), "dirichlet_energy");
  const double tr = frobenius_dot(matmul(h, op.laplacian), h);
  if (tr < kNegativeFail)
    throw NumericalError("dirichlet_energy: Trace(H Δ Hᵀ) = " + std::to_string(tr));
  return tr <= 0.0 ? 0.0 : std::sqrt(tr);
}

/// ||H||_E^2 / ||H||_F^2, with the zero matrix mapped to 0.
inline double normalized_dirichlet(const Matrix& h, const PropagationOperator& op) {
  const double f2 = h.squared_norm();
  if (f2 == 0.0) return 0.0;
  const double e = dirichlet_energy(h, op);
  return e * e / f2;
}

/// s(z) = ||Qᵀz|| / ||z||, and 1 for z = 0.
inline double normalized_smoothness(std::span<const double> z, const SpectralBasis& basis) {
  if (z.size() != basis.num_nodes())
    throw ShapeError("normalized_smoothness: vector of length " + std::to_string(z.size()) +
                     " on a graph with " + std::to_string(basis.num_nodes()) + " nodes");
  const double nz = norm(z);
  if (nz == 0.0) return 1.0;
  double proj2 = 0.0;
  for (std::size_t c = 0; c < basis.m; ++c) {
    double p = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) p += basis.q(i, c) * z[i];
    proj2 += p * p;
  }
  return std::min(1.0, std::sqrt(proj2) / nz);
}

/// Per-row normalized smoothness of a d x n feature matrix.
inline std::vector<double> row_smoothness(const Matrix& h, const SpectralBasis& basis) {
  detail::require_nodes(h, basis.num_nodes(), "row_smoothness");
  std::vector<double> s(h.rows());
  for (std::size_t r = 0; r < h.rows(); ++r) s[r] = normalized_smoothness(h.row_span(r), basis);
  return s;
}

struct SmoothnessReport {
  std::vector<double> s;
  double dist_to_m = 0.0;
  double dirichlet = 0.0;
  double normalized_dirichlet = 0.0;
};

inline SmoothnessReport smoothness_report(const Matrix& h, const PropagationOperator& op,
                                          const SpectralBasis& basis) {
  SmoothnessReport r;
  r.s = row_smoothness(h, basis);
  r.dist_to_m = distance_to_eigenspace(h, basis);
  r.dirichlet = dirichlet_energy(h, op);
  r.normalized_dirichlet = normalized_dirichlet(h, op);
  return r;
}

inline void to_json(nlohmann::json& j, const SmoothnessReport& r) {
  j = nlohmann::json{{"s", r.s},
                     {"dist_to_M", r.dist_to_m},
                     {"dirichlet", r.dirichlet},
                     {"normalized_dirichlet", r.normalized_dirichlet}};
}

inline void from_json(const nlohmann::json& j, SmoothnessReport& r) {
  j.at("s").get_to(r.s);
  j.at("dist_to_M").get_to(r.dist_to_m);
  j.at("dirichlet").get_to(r.dirichlet);
  j.at("normalized_dirichlet").get_to(r.normalized_dirichlet);
}

}  // namespace smoothgcn
