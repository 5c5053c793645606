#pragma once

#include <cmath>
#include <string>

#include "smoothgcn/autodiff.hpp"
#include "smoothgcn/errors.hpp"
#include "smoothgcn/matrix.hpp"
#include "smoothgcn/smoothness.hpp"

namespace smoothgcn {

enum class Activation { identity, relu, leaky_relu, srelu, elu, selu, softmax };
enum class SoftmaxAxis { columns, rows };

/**
 * A pointwise nonlinearity and its parameters.
 *
 *   relu        max(x, 0)
 *   leaky_relu  max(x, a x), a in (0, 1)
 *   srelu       max(x, t), fixed threshold t
 *   elu         max(x, 0) + min(0, a (e^x - 1)), a > 0
 *   selu        c (max(x, 0) + min(0, a (e^x - 1))), a, c > 0
 *   softmax     normalizes along `axis`; columns = over each column's rows
 */
struct ActivationKind {
  Activation kind = Activation::relu;
  double a = 0.0;
  double c = 1.0;
  double t = -1.0;
  SoftmaxAxis axis = SoftmaxAxis::columns;

  static ActivationKind identity() { return {Activation::identity}; }
  static ActivationKind relu() { return {Activation::relu}; }
  static ActivationKind leaky_relu(double slope) {
    return ActivationKind{Activation::leaky_relu, slope}.validated();
  }
  static ActivationKind srelu(double threshold = -1.0) {
    ActivationKind k{Activation::srelu};
    k.t = threshold;
    return k;
  }
  static ActivationKind elu(double alpha = 1.0) {
    return ActivationKind{Activation::elu, alpha}.validated();
  }
  static ActivationKind selu(double alpha = 1.6732632423543772,
                             double scale = 1.0507009873554805) {
    return ActivationKind{Activation::selu, alpha, scale}.validated();
  }
  static ActivationKind softmax(SoftmaxAxis axis) {
    ActivationKind k{Activation::softmax};
    k.axis = axis;
    return k;
  }

  ActivationKind validated() const {
    switch (kind) {
      case Activation::leaky_relu:
        if (!(a > 0.0 && a < 1.0))
          throw ConfigError("leaky_relu: slope must lie in (0,1), got " + std::to_string(a));
        break;
      case Activation::elu:
        if (!(a > 0.0)) throw ConfigError("elu: alpha must be positive");
        break;
      case Activation::selu:
        if (!(a > 0.0 && c > 0.0)) throw ConfigError("selu: alpha and scale must be positive");
        break;
      case Activation::srelu:
        if (!std::isfinite(t)) throw ConfigError("srelu: threshold must be finite");
        break;
      default:
        break;
    }
    return *this;
  }

  std::string name() const {
    switch (kind) {
      case Activation::identity: return "identity";
      case Activation::relu: return "relu";
      case Activation::leaky_relu: return "leaky_relu";
      case Activation::srelu: return "srelu";
      case Activation::elu: return "elu";
      case Activation::selu: return "selu";
      case Activation::softmax: return "softmax";
    }
    return "?";
  }

  /// Parses "relu", "leaky_relu", "srelu", "elu", "selu", "identity".
  static ActivationKind parse(const std::string& name, double param = NAN) {
    if (name == "identity" || name == "linear") return identity();
    if (name == "relu") return relu();
    if (name == "leaky_relu" || name == "leaky-relu")
      return leaky_relu(std::isnan(param) ? 0.2 : param);
    if (name == "srelu") return srelu(std::isnan(param) ? -1.0 : param);
    if (name == "elu") return elu(std::isnan(param) ? 1.0 : param);
    if (name == "selu") return selu();
    throw ConfigError("unknown activation '" + name + "'");
  }
};

namespace detail {

inline double activate(const ActivationKind& k, double x) {
  switch (k.kind) {
    case Activation::identity: return x;
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::leaky_relu: return x > 0.0 ? x : k.a * x;
    case Activation::srelu: return x > k.t ? x : k.t;
    case Activation::elu: return x > 0.0 ? x : k.a * std::expm1(x);
    case Activation::selu: return k.c * (x > 0.0 ? x : k.a * std::expm1(x));
    case Activation::softmax: break;
  }
  throw ConfigError("activate: softmax is not pointwise");
}

inline double activate_derivative(const ActivationKind& k, double x) {
  switch (k.kind) {
    case Activation::identity: return 1.0;
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::leaky_relu: return x > 0.0 ? 1.0 : k.a;
    case Activation::srelu: return x > k.t ? 1.0 : 0.0;
    case Activation::elu: return x > 0.0 ? 1.0 : k.a * std::exp(x);
    case Activation::selu: return k.c * (x > 0.0 ? 1.0 : k.a * std::exp(x));
    case Activation::softmax: break;
  }
  throw ConfigError("activate_derivative: softmax is not pointwise");
}

inline Matrix softmax_columns(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double mx = -INFINITY;
    for (std::size_t r = 0; r < x.rows(); ++r) mx = std::max(mx, x(r, c));
    double z = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) z += (y(r, c) = std::exp(x(r, c) - mx));
    for (std::size_t r = 0; r < x.rows(); ++r) y(r, c) /= z;
  }
  return y;
}

}  // namespace detail

inline Matrix apply(const ActivationKind& kind, const Matrix& z) {
  const ActivationKind k = kind.validated();
  if (k.kind == Activation::softmax) {
    return k.axis == SoftmaxAxis::columns ? detail::softmax_columns(z)
                                          : detail::softmax_columns(z.transpose()).transpose();
  }
  return z.map([&k](double x) { return detail::activate(k, x); });
}

/// Same as apply() but recorded on the tape.
inline Var apply(const ActivationKind& kind, Var z) {
  const ActivationKind k = kind.validated();
  if (k.kind == Activation::identity) return z;
  if (k.kind == Activation::softmax)
    return k.axis == SoftmaxAxis::columns ? ad::softmax_columns(z) : ad::softmax_rows(z);
  return ad::elementwise(
      z, [k](double x) { return detail::activate(k, x); },
      [k](double x, double) { return detail::activate_derivative(k, x); }, k.name());
}

struct PosNegSplit {
  Matrix positive;  // max(Z, 0)
  Matrix negative;  // max(-Z, 0)
};

inline PosNegSplit pos_neg_split(const Matrix& z) {
  return {z.map([](double x) { return x > 0.0 ? x : 0.0; }),
          z.map([](double x) { return x < 0.0 ? -x : 0.0; })};
}

/// |lhs - radius| for a point that should lie on a sphere.
struct SphereResidual {
  double lhs = 0.0;
  double radius = 0.0;
  double residual = 0.0;
};

/**
 * For H = relu(Z): distance of H_M⊥ from the center Z_M⊥/2, against the
 * radius sqrt(||Z_M⊥/2||² - ⟨H_M, H_M - Z_M⟩).
 */
inline SphereResidual relu_sphere_residual(const Matrix& z, const SpectralBasis& basis) {
  const Matrix h = apply(ActivationKind::relu(), z);
  const auto zd = decompose(z, basis);
  const auto hd = decompose(h, basis);
  const Matrix center = zd.orthogonal * 0.5;
  SphereResidual r;
  r.lhs = (hd.orthogonal - center).norm();
  const double r2 =
      center.squared_norm() - frobenius_dot(hd.in_eigenspace, hd.in_eigenspace - zd.in_eigenspace);
  r.radius = detail::clamped_sqrt(r2, "relu_sphere_residual", z.squared_norm());
  r.residual = std::abs(r.lhs - r.radius);
  return r;
}

/**
 * For H = leaky_relu_a(Z): center (1+a)Z_M⊥/2, radius
 * sqrt(||(1-a)Z_M⊥/2||² - ⟨H_M - Z_M, H_M - a Z_M⟩). a = 0 is accepted and
 * reproduces the ReLU relation.
 */
inline SphereResidual leaky_sphere_residual(const Matrix& z, double a,
                                            const SpectralBasis& basis) {
  if (!(a >= 0.0 && a < 1.0))
    throw ConfigError("leaky_sphere_residual: slope must lie in [0,1)");
  const Matrix h = z.map([a](double x) { return x > 0.0 ? x : a * x; });
  const auto zd = decompose(z, basis);
  const auto hd = decompose(h, basis);
  SphereResidual r;
  r.lhs = (hd.orthogonal - zd.orthogonal * (0.5 * (1.0 + a))).norm();
  const double r2 = (zd.orthogonal * (0.5 * (1.0 - a))).squared_norm() -
                    frobenius_dot(hd.in_eigenspace - zd.in_eigenspace,
                                  hd.in_eigenspace - zd.in_eigenspace * a);
  r.radius = detail::clamped_sqrt(r2, "leaky_sphere_residual", z.squared_norm());
  r.residual = std::abs(r.lhs - r.radius);
  return r;
}

/// | ||relu(Z) - Z/2||² - ||Z/2||² |, zero up to round-off.
inline double relu_half_sphere_residual(const Matrix& z) {
  const Matrix h = apply(ActivationKind::relu(), z);
  const Matrix half = z * 0.5;
  return std::abs((h - half).squared_norm() - half.squared_norm());
}

/// | ||Z_M⊥/2||² - ||H_M⊥ - Z_M⊥/2||² - ⟨Z⁺_M, Z⁻_M⟩ | for H = relu(Z).
inline double relu_cross_term_residual(const Matrix& z, const SpectralBasis& basis) {
  const auto split = pos_neg_split(z);
  const Matrix h = split.positive;
  const Matrix zperp = decompose(z, basis).orthogonal;
  const Matrix hperp = decompose(h, basis).orthogonal;
  const double lhs = (zperp * 0.5).squared_norm() - (hperp - zperp * 0.5).squared_norm();
  const double rhs = frobenius_dot(project_to_eigenspace(split.positive, basis),
                                   project_to_eigenspace(split.negative, basis));
  return std::abs(lhs - rhs);
}

}  // namespace smoothgcn
