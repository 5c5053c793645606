#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "smoothgcn/errors.hpp"
#include "smoothgcn/matrix.hpp"

namespace smoothgcn {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  std::size_t id() const noexcept { return id_; }
  Tape& tape() const noexcept { return *tape_; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/**
 * Reverse-mode tape over dense matrices.
 *
 * Nodes are appended in evaluation order, so the node index is already a
 * topological order and backward() walks it in reverse. A tape is meant to
 * be built for one forward pass and thrown away.
 */
class Tape {
 public:
  using BackwardRule = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> parents;
    BackwardRule backward;
    std::string op;
    bool parameter = false;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value) { return push(std::move(value), {}, nullptr, "const"); }
  Var parameter(Matrix value) {
    Var v = push(std::move(value), {}, nullptr, "param");
    nodes_[v.id()].parameter = true;
    return v;
  }

  Var push(Matrix value, std::vector<std::size_t> parents, BackwardRule rule,
           std::string op) {
    if (!value.all_finite())
      throw NumericalError("tape: non-finite value produced by '" + op + "'");
    nodes_.push_back(Node{std::move(value), Matrix{}, std::move(parents),
                          std::move(rule), std::move(op), false});
    return {this, nodes_.size() - 1};
  }

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Adds `g` into the gradient of node `id`.
  void accumulate(std::size_t id, const Matrix& g) { nodes_[id].grad += g; }

  /**
   * Seeds d(loss)/d(loss) = 1 and propagates to every node recorded before
   * `loss`. Gradients are reset first, so calling twice is idempotent.
   */
  void backward(Var loss) {
    if (loss.value().rows() != 1 || loss.value().cols() != 1)
      throw ShapeError("backward: loss must be 1x1, got " + loss.value().shape());
    for (auto& n : nodes_) n.grad = Matrix(n.value.rows(), n.value.cols());
    nodes_[loss.id()].grad(0, 0) = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      if (nodes_[i].backward) nodes_[i].backward(*this, i);
    }
  }

  std::vector<Var> parameters() {
    std::vector<Var> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].parameter) out.emplace_back(this, i);
    return out;
  }

 private:
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline const Matrix& Var::grad() const { return tape_->grad(id_); }

namespace ad {

namespace detail {
inline void same_tape(const Var& a, const Var& b, const char* op) {
  if (&a.tape() != &b.tape())
    throw std::invalid_argument(std::string(op) + ": operands on different tapes");
}
}  // namespace detail

inline Var matmul(Var a, Var b) {
  detail::same_tape(a, b, "matmul");
  return a.tape().push(
      smoothgcn::matmul(a.value(), b.value()), {a.id(), b.id()},
      [a = a.id(), b = b.id()](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        t.accumulate(a, matmul_nt(g, t.value(b)));
        t.accumulate(b, matmul_tn(t.value(a), g));
      },
      "matmul");
}

inline Var add(Var a, Var b) {
  detail::same_tape(a, b, "add");
  a.value().require_same(b.value(), "add");
  return a.tape().push(
      a.value() + b.value(), {a.id(), b.id()},
      [a = a.id(), b = b.id()](Tape& t, std::size_t self) {
        t.accumulate(a, t.grad(self));
        t.accumulate(b, t.grad(self));
      },
      "add");
}

inline Var sub(Var a, Var b) {
  detail::same_tape(a, b, "sub");
  a.value().require_same(b.value(), "sub");
  return a.tape().push(
      a.value() - b.value(), {a.id(), b.id()},
      [a = a.id(), b = b.id()](Tape& t, std::size_t self) {
        t.accumulate(a, t.grad(self));
        t.accumulate(b, -t.grad(self));
      },
      "sub");
}

inline Var hadamard(Var a, Var b) {
  detail::same_tape(a, b, "hadamard");
  return a.tape().push(
      smoothgcn::hadamard(a.value(), b.value()), {a.id(), b.id()},
      [a = a.id(), b = b.id()](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        t.accumulate(a, smoothgcn::hadamard(g, t.value(b)));
        t.accumulate(b, smoothgcn::hadamard(g, t.value(a)));
      },
      "hadamard");
}

/// c * a for a fixed real c.
inline Var scale(Var a, double c) {
  return a.tape().push(
      a.value() * c, {a.id()},
      [a = a.id(), c](Tape& t, std::size_t self) { t.accumulate(a, t.grad(self) * c); },
      "scale");
}

/// s * a where s is a 1x1 node (learnable scalar).
inline Var scale(Var s, Var a) {
  detail::same_tape(s, a, "scale");
  if (s.value().size() != 1)
    throw ShapeError("scale: scalar operand has shape " + s.value().shape());
  return a.tape().push(
      a.value() * s.value()[0], {s.id(), a.id()},
      [s = s.id(), a = a.id()](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        Matrix gs(1, 1, frobenius_dot(g, t.value(a)));
        t.accumulate(s, gs);
        t.accumulate(a, g * t.value(s)[0]);
      },
      "scale_var");
}

/// c - s for a 1x1 node s.
inline Var rsub(double c, Var s) {
  return s.tape().push(
      s.value().map([c](double x) { return c - x; }), {s.id()},
      [s = s.id()](Tape& t, std::size_t self) { t.accumulate(s, -t.grad(self)); },
      "rsub");
}

/// a (d x n) + b (d x 1) broadcast over columns.
inline Var add_column(Var a, Var b) {
  detail::same_tape(a, b, "add_column");
  if (b.value().cols() != 1 || b.value().rows() != a.value().rows())
    throw ShapeError("add_column: " + a.value().shape() + " + " + b.value().shape());
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += b.value()(r, 0);
  return a.tape().push(
      std::move(out), {a.id(), b.id()},
      [a = a.id(), b = b.id()](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        t.accumulate(a, g);
        Matrix gb(g.rows(), 1);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) gb(r, 0) += g(r, c);
        t.accumulate(b, gb);
      },
      "add_column");
}

inline Var transpose(Var a) {
  return a.tape().push(
      a.value().transpose(), {a.id()},
      [a = a.id()](Tape& t, std::size_t self) { t.accumulate(a, t.grad(self).transpose()); },
      "transpose");
}

/**
 * Elementwise y = f(x) with derivative df(x, y). Used by the activation
 * module for every pointwise nonlinearity.
 */
template <class F, class DF>
Var elementwise(Var x, F f, DF df, std::string op) {
  return x.tape().push(
      x.value().map(f), {x.id()},
      [x = x.id(), df](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        const Matrix& xv = t.value(x);
        const Matrix& yv = t.value(self);
        Matrix gx(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * df(xv[i], yv[i]);
        t.accumulate(x, gx);
      },
      std::move(op));
}

/// Softmax normalizing every column over its rows (axis = feature dimension).
inline Var softmax_columns(Var x) {
  const Matrix& xv = x.value();
  Matrix y(xv.rows(), xv.cols());
  for (std::size_t c = 0; c < xv.cols(); ++c) {
    double mx = -INFINITY;
    for (std::size_t r = 0; r < xv.rows(); ++r) mx = std::max(mx, xv(r, c));
    double z = 0.0;
    for (std::size_t r = 0; r < xv.rows(); ++r) z += (y(r, c) = std::exp(xv(r, c) - mx));
    for (std::size_t r = 0; r < xv.rows(); ++r) y(r, c) /= z;
  }
  return x.tape().push(
      std::move(y), {x.id()},
      [x = x.id()](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        const Matrix& y = t.value(self);
        Matrix gx(g.rows(), g.cols());
        for (std::size_t c = 0; c < g.cols(); ++c) {
          double s = 0.0;
          for (std::size_t r = 0; r < g.rows(); ++r) s += g(r, c) * y(r, c);
          for (std::size_t r = 0; r < g.rows(); ++r) gx(r, c) = y(r, c) * (g(r, c) - s);
        }
        t.accumulate(x, gx);
      },
      "softmax_columns");
}

/// Softmax normalizing every row over its columns.
inline Var softmax_rows(Var x) { return transpose(softmax_columns(transpose(x))); }

inline Var sum(Var a) {
  return a.tape().push(
      Matrix(1, 1, a.value().sum()), {a.id()},
      [a = a.id()](Tape& t, std::size_t self) {
        const Matrix& av = t.value(a);
        t.accumulate(a, Matrix(av.rows(), av.cols(), t.grad(self)[0]));
      },
      "sum");
}

/// ||a||_F^2
inline Var squared_norm(Var a) {
  return a.tape().push(
      Matrix(1, 1, a.value().squared_norm()), {a.id()},
      [a = a.id()](Tape& t, std::size_t self) {
        t.accumulate(a, t.value(a) * (2.0 * t.grad(self)[0]));
      },
      "squared_norm");
}

/**
 * Mean negative log-likelihood of log-softmax over each column of `logits`
 * (classes x n), restricted to the nodes listed in `mask`.
 */
inline Var nll_loss(Var logits, std::span<const int> labels,
                    std::span<const std::size_t> mask) {
  const Matrix& z = logits.value();
  if (mask.empty()) throw InputError("nll_loss: empty mask");
  if (labels.size() != z.cols())
    throw ShapeError("nll_loss: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(z.cols()) + " nodes");
  Matrix probs(z.rows(), z.cols());
  double loss = 0.0;
  for (std::size_t node : mask) {
    if (node >= z.cols()) throw InputError("nll_loss: mask index out of range");
    const int label = labels[node];
    if (label < 0 || static_cast<std::size_t>(label) >= z.rows())
      throw InputError("nll_loss: label out of range");
    double mx = -INFINITY;
    for (std::size_t r = 0; r < z.rows(); ++r) mx = std::max(mx, z(r, node));
    double s = 0.0;
    for (std::size_t r = 0; r < z.rows(); ++r) s += std::exp(z(r, node) - mx);
    const double log_z = mx + std::log(s);
    for (std::size_t r = 0; r < z.rows(); ++r) probs(r, node) = std::exp(z(r, node) - log_z);
    loss -= z(static_cast<std::size_t>(label), node) - log_z;
  }
  const double inv = 1.0 / static_cast<double>(mask.size());
  std::vector<std::size_t> m(mask.begin(), mask.end());
  std::vector<int> lab(labels.begin(), labels.end());
  return logits.tape().push(
      Matrix(1, 1, loss * inv), {logits.id()},
      [x = logits.id(), probs = std::move(probs), m = std::move(m), lab = std::move(lab),
       inv](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0] * inv;
        Matrix gx(probs.rows(), probs.cols());
        for (std::size_t node : m) {
          for (std::size_t r = 0; r < probs.rows(); ++r) gx(r, node) += g * probs(r, node);
          gx(static_cast<std::size_t>(lab[node]), node) -= g;
        }
        t.accumulate(x, gx);
      },
      "nll_loss");
}

}  // namespace ad

/// Adam hyperparameters; defaults follow the usual (0.9, 0.999, 1e-8).
struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::size_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;

  explicit AdamState(AdamOptions opts = {}) : options(opts) {
    if (!(opts.learning_rate > 0.0) || !(opts.beta1 > 0.0 && opts.beta1 < 1.0) ||
        !(opts.beta2 > 0.0 && opts.beta2 < 1.0) || !(opts.epsilon > 0.0))
      throw ConfigError("AdamState: invalid hyperparameters");
  }
};

/// One bias-corrected Adam update of every `params[i]` using `grads[i]`.
inline void adam_step(AdamState& state, std::span<Matrix* const> params,
                      std::span<const Matrix> grads) {
  if (params.size() != grads.size())
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " params vs " +
                     std::to_string(grads.size()) + " grads");
  if (state.first_moment.empty()) {
    for (const Matrix* p : params) {
      state.first_moment.emplace_back(p->rows(), p->cols());
      state.second_moment.emplace_back(p->rows(), p->cols());
    }
  }
  if (state.first_moment.size() != params.size())
    throw ShapeError("adam_step: parameter count changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->require_same(grads[i], "adam_step");
    params[i]->require_same(state.first_moment[i], "adam_step (moments)");
  }

  ++state.step;
  const auto& o = state.options;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    const Matrix& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g[k];
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] -= o.learning_rate * mhat / (std::sqrt(vhat) + o.epsilon);
    }
  }
}

}  // namespace smoothgcn
