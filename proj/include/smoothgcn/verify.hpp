#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "smoothgcn/activations.hpp"
#include "smoothgcn/control.hpp"
#include "smoothgcn/eigen.hpp"
#include "smoothgcn/generators.hpp"
#include "smoothgcn/models.hpp"
#include "smoothgcn/smoothness.hpp"

namespace smoothgcn {

/// Outcome of one property over its instance set. `worst` is the largest
/// residual or violation seen; the property holds iff worst <= tolerance.
struct PropertyResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;
  double tolerance = 0.0;
  std::size_t instances = 0;
};

inline void to_json(nlohmann::json& j, const PropertyResult& r) {
  j = {{"name", r.name},
       {"passed", r.passed},
       {"worst", r.worst},
       {"tolerance", r.tolerance},
       {"instances", r.instances}};
}

namespace verify {

inline PropertyResult finish(std::string name, double worst, double tol, std::size_t instances) {
  return {std::move(name), worst <= tol, worst, tol, instances};
}

inline std::size_t draw(Rng& rng, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
}

/// Random G(n, p) with n in [1, max_n] and p in [0, 0.5]; may be disconnected.
inline Graph random_graph(Rng& rng, std::size_t max_n = 30) {
  const std::size_t n = draw(rng, 1, max_n);
  return erdos_renyi(n, rng.uniform(0.0, 0.5), rng);
}

inline Graph random_connected(Rng& rng, std::size_t max_n = 20) {
  const std::size_t n = draw(rng, 2, max_n);
  return random_connected_graph(n, rng.uniform(0.05, 0.5), rng);
}

inline std::vector<double> random_signal(std::size_t n, Rng& rng) {
  std::vector<double> z(n);
  for (double& v : z) v = rng.uniform(-1.5, 1.5);
  return z;
}

inline Matrix random_features(std::size_t n, Rng& rng, std::size_t max_d = 8) {
  return rng.normal_matrix(draw(rng, 1, max_d), n);
}

// ---------------------------------------------------------------------------
// Graph and eigenspace

inline PropertyResult propagation_operator(Rng rng, std::size_t count = 100) {
  double worst = 0.0;
  for (std::size_t t = 0; t < count; ++t) {
    const Graph g = random_graph(rng);
    const auto op = build_propagation_operator(g);
    const std::size_t n = g.num_nodes();
    worst = std::max(worst, (op.g - op.g.transpose()).max_abs());
    worst = std::max(worst, (op.laplacian - (Matrix::identity(n) - op.g)).max_abs());
    for (auto [u, v] : g.edges())
      worst = std::max(worst, std::abs(op.g(u, v) - 1.0 / std::sqrt(op.degrees[u] * op.degrees[v])));
  }
  return finish("propagation_operator", worst, 1e-12, count);
}

/// Q spans eigenvalue-1 vectors of G, is orthonormal, and its width matches
/// the unit multiplicity of an independent eigensolve (checked by residual).
inline PropertyResult eigenspace_basis(Rng rng, std::size_t count = 100) {
  double worst = 0.0;
  for (std::size_t t = 0; t < count; ++t) {
    const GraphContext ctx(random_graph(rng));
    const auto& q = ctx.basis.q;
    worst = std::max(worst, (matmul(ctx.op.g, q) - q).max_abs());
    worst = std::max(worst, (matmul_tn(q, q) - Matrix::identity(ctx.basis.m)).max_abs());
    const auto ed = symmetric_eigendecomposition(ctx.op.g);
    Matrix scaled = ed.vectors;
    for (std::size_t r = 0; r < scaled.rows(); ++r)
      for (std::size_t c = 0; c < scaled.cols(); ++c) scaled(r, c) *= ed.values[c];
    worst = std::max(worst, (matmul(ctx.op.g, ed.vectors) - scaled).max_abs());
    const auto unit = std::count_if(ed.values.begin(), ed.values.end(),
                                    [](double l) { return std::abs(l - 1.0) < 1e-8; });
    if (static_cast<std::size_t>(unit) != ctx.basis.m) worst = std::numeric_limits<double>::infinity();
  }
  return finish("eigenbasis", worst, 1e-10, count);
}

inline PropertyResult orthogonal_decomposition(Rng rng, std::size_t count = 100) {
  double worst = 0.0;
  for (std::size_t t = 0; t < count; ++t) {
    const GraphContext ctx(random_graph(rng));
    const Matrix h = random_features(ctx.graph.num_nodes(), rng);
    const auto parts = decompose(h, ctx.basis);
    const double scale = std::max(1.0, h.squared_norm());
    worst = std::max(worst, std::abs(parts.in_eigenspace.squared_norm() +
                                     parts.orthogonal.squared_norm() - h.squared_norm()) / scale);
    worst = std::max(worst, std::abs(frobenius_dot(parts.in_eigenspace, parts.orthogonal)) / scale);
  }
  return finish("orthogonal_decomposition", worst, 1e-10, count);
}

// ---------------------------------------------------------------------------
// Activation geometry. One pass fills every metric of the geometry suite.

struct GeometryMetrics {
  double relu_sphere = 0.0;
  double leaky_sphere = 0.0;
  double half_sphere = 0.0;  // residual / ||Z||²
  double cross_term = 0.0;  // residual / ||Z||²
  double contraction = 0.0;
  double seminorm = 0.0;  // violation of a||H||_{M⊥} <= ||H||_E <= √2||H||_{M⊥}, a = sqrt(1 - λ_{m+1})
  std::size_t instances = 0;
};

inline GeometryMetrics geometry_metrics(Rng rng, std::size_t count = 100) {
  GeometryMetrics m;
  m.instances = count;
  for (std::size_t t = 0; t < count; ++t) {
    const GraphContext ctx(random_graph(rng));
    const Matrix z = random_features(ctx.graph.num_nodes(), rng);
    const double a = rng.uniform(0.01, 0.99);
    const double z2 = z.squared_norm();
    m.relu_sphere = std::max(m.relu_sphere, relu_sphere_residual(z, ctx.basis).residual);
    m.leaky_sphere = std::max(m.leaky_sphere, leaky_sphere_residual(z, a, ctx.basis).residual);
    if (z2 > 0.0) {
      m.half_sphere = std::max(m.half_sphere, relu_half_sphere_residual(z) / z2);
      m.cross_term =
          std::max(m.cross_term, relu_cross_term_residual(z, ctx.basis) / std::max(1.0, z2));
    }
    const double dz = distance_to_eigenspace(z, ctx.basis);
    const double dh = distance_to_eigenspace(apply(ActivationKind::relu(), z), ctx.basis);
    const double dha = distance_to_eigenspace(apply(ActivationKind::leaky_relu(a), z), ctx.basis);
    m.contraction = std::max({m.contraction, dh - dz, dha - dz, a * dz - dha});
    const double lo = std::sqrt(1.0 - ctx.basis.first_nonunit_eigenvalue());
    const double energy = dirichlet_energy(z, ctx.op);
    m.seminorm = std::max({m.seminorm, lo * dz - energy, energy - std::sqrt(2.0) * dz});
  }
  return m;
}

// ---------------------------------------------------------------------------
// Smoothness control

/// min over a fine α grid of s(relu(z(α))), the brute-force side of the closed form.
inline double brute_force_relu_min(std::span<const double> z, const GraphContext& ctx) {
  const double reach = 2.0 * norm(z) + 1.0;
  const auto curve = sweep(z, ctx.basis, ActivationKind::relu(), linspace(-reach, reach, 40001));
  return *std::min_element(curve.s_values.begin(), curve.s_values.end());
}

struct ReluControlMetrics {
  double closed_form_gap = 0.0;        // max |closed form - brute force|
  std::size_t monotone_failures = 0;
  double threshold_gap = 0.0;          // max |1 - s| at and past the zero threshold
  std::size_t instances = 0;
};

inline ReluControlMetrics relu_control_metrics(Rng rng, std::size_t count = 50) {
  ReluControlMetrics m;
  m.instances = count;
  for (std::size_t t = 0; t < count; ++t) {
    const GraphContext ctx(random_connected(rng));
    const auto z = random_signal(ctx.graph.num_nodes(), rng);
    m.closed_form_gap = std::max(m.closed_form_gap, std::abs(brute_force_relu_min(z, ctx) -
                                                             relu_min_smoothness_closed_form(z, ctx.op)));
    const double threshold = relu_zero_threshold(z, ctx.op);
    const auto below = linspace(threshold - 4.0 * norm(z) - 1.0, threshold - 1e-9, 2000);
    if (!verify_monotone_region(z, ctx.op, below)) ++m.monotone_failures;
    const std::vector<double> past{threshold, threshold * 1.5 + 1.0, threshold + 100.0};
    for (double s : sweep(z, ctx.basis, ActivationKind::relu(), past).s_values)
      m.threshold_gap = std::max(m.threshold_gap, std::abs(1.0 - s));
  }
  return m;
}

struct LeakyRangeMetrics {
  double largest_min = 0.0;   // max over instances of min_α s
  double smallest_max = 1.0;  // min over instances of max_α s
  std::size_t hit_one = 0;    // instances where some s == 1 exactly
  std::size_t instances = 0;
};

inline LeakyRangeMetrics leaky_range_metrics(Rng rng, std::size_t count = 50) {
  LeakyRangeMetrics m;
  m.instances = count;
  for (std::size_t t = 0; t < count; ++t) {
    const GraphContext ctx(random_connected(rng));
    const auto z = random_signal(ctx.graph.num_nodes(), rng);
    const auto probe = leaky_range_probe(z, ctx.basis, rng.uniform(0.05, 0.95));
    m.largest_min = std::max(m.largest_min, probe.min_s);
    m.smallest_max = std::min(m.smallest_max, probe.max_s);
    if (probe.max_s == 1.0) ++m.hit_one;
  }
  return m;
}

/// z in M: every shift keeps s = 1.
inline PropertyResult smooth_input(Rng rng, std::size_t count = 20) {
  double worst = 0.0;
  for (std::size_t t = 0; t < count; ++t) {
    const GraphContext ctx(random_connected(rng));
    auto z = ctx.basis.q.col_vector(0);
    const double c = rng.uniform(-3.0, 3.0);
    for (double& v : z) v *= c;
    for (const auto& k : {ActivationKind::relu(), ActivationKind::leaky_relu(0.2)})
      for (double s : sweep(z, ctx.basis, k, default_alpha_grid()).s_values)
        worst = std::max(worst, std::abs(1.0 - s));
  }
  return finish("smooth_input_stays_smooth", worst, 1e-12, count);
}

struct ShiftMetrics {
  double distance_excess = 0.0;      // max of ||σ(z(α))||_{M⊥} - ||z||_{M⊥}
  std::size_t side_failures = 0;     // instances contradicting the both-sides rule
  std::size_t instances = 0;
};

/**
 * Over a wide α grid: every instance has shifts that raise s above s(z); the
 * leaky curve always also goes below s(z), and the ReLU curve goes below
 * exactly when s(z) exceeds the closed-form ReLU minimum. Distances never grow.
 */
inline ShiftMetrics shift_metrics(Rng rng, std::size_t count = 50) {
  ShiftMetrics m;
  m.instances = count;
  for (std::size_t t = 0; t < count; ++t) {
    const GraphContext ctx(random_connected(rng));
    const auto z = random_signal(ctx.graph.num_nodes(), rng);
    const double reach = 2.0 * norm(z) + 1.0;
    auto grid = linspace(-reach, reach, 2001);
    grid.push_back(dot(z, ctx.basis.q.col_vector(0)));
    const auto relu = sweep(z, ctx.basis, ActivationKind::relu(), grid);
    const auto leaky = sweep(z, ctx.basis, ActivationKind::leaky_relu(0.2), grid);
    const double s_z = relu.input_s;
    const auto [rlo, rhi] = std::minmax_element(relu.s_values.begin(), relu.s_values.end());
    const auto [llo, lhi] = std::minmax_element(leaky.s_values.begin(), leaky.s_values.end());
    const double floor = relu_min_smoothness_closed_form(z, ctx.op);
    bool ok = *rhi > s_z && *lhi > s_z && *llo < s_z;
    if (s_z > floor + 1e-3) ok = ok && *rlo < s_z;
    if (s_z < floor - 1e-3) ok = ok && *rlo > s_z;
    if (!ok) ++m.side_failures;
    for (const auto* c : {&relu, &leaky})
      for (double d : c->dist_values) m.distance_excess = std::max(m.distance_excess, d - c->input_dist);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Smoothness control term and layers

inline SctParams random_sct(SctArch arch, std::size_t d, std::size_t m, Rng& rng) {
  SctParams p;
  p.arch = arch;
  p.theta = rng.uniform(0.1, 2.0);
  if (arch == SctArch::pool) p.w = rng.normal_matrix(d, m);
  if (arch == SctArch::residual) {
    p.w0 = rng.normal_matrix(d, d);
    p.w1 = rng.normal_matrix(d, d);
  }
  return p;
}

/// max ||B||_{M⊥} over random parameterizations of both architectures.
inline double sct_range_metric(Rng rng, std::size_t count = 100) {
  double worst = 0.0;
  for (std::size_t t = 0; t < count; ++t) {
    const GraphContext ctx(random_graph(rng, 20));
    const std::size_t n = ctx.graph.num_nodes(), d = draw(rng, 1, 6);
    const Matrix h = rng.normal_matrix(d, n), h0 = rng.normal_matrix(d, n);
    const std::size_t layer = draw(rng, 1, 64);
    for (SctArch arch : {SctArch::pool, SctArch::residual}) {
      const Matrix b = sct_term(h, h0, ctx.basis, random_sct(arch, d, ctx.basis.m, rng), layer);
      worst = std::max(worst, distance_to_eigenspace(b, ctx.basis));
    }
  }
  return worst;
}

/// ||σ(WHG + B)||_{M⊥} <= s_W λ ||H||_{M⊥} for SCT layers with s_W λ < 1.
inline PropertyResult sct_contraction(Rng rng, std::size_t count = 50) {
  double worst = 0.0;
  for (std::size_t t = 0; t < count; ++t) {
    const GraphContext ctx(random_connected(rng, 15));
    const std::size_t n = ctx.graph.num_nodes(), d = 4;
    const double lambda = ctx.basis.lambda2;
    Matrix w = rng.normal_matrix(d, d);
    const double target = std::min(rng.uniform(0.1, 0.99) / std::max(lambda, 1e-3), 10.0);
    w = w * (target / spectral_norm(w));
    const double sw = spectral_norm(w);
    const Matrix h = rng.normal_matrix(d, n);
    for (SctArch arch : {SctArch::pool, SctArch::residual}) {
      const Matrix b = sct_term(h, rng.normal_matrix(d, n), ctx.basis,
                                random_sct(arch, d, ctx.basis.m, rng), 1);
      for (const auto& act : {ActivationKind::relu(), ActivationKind::leaky_relu(0.3)}) {
        Tape tape;
        const Matrix out = gcn_layer(tape.constant(h), tape.constant(ctx.op.g), tape.constant(w),
                                     act, tape.constant(b))
                               .value();
        worst = std::max(worst, distance_to_eigenspace(out, ctx.basis) -
                                    sw * lambda * distance_to_eigenspace(h, ctx.basis));
      }
    }
  }
  return finish("sct_contraction", worst, 1e-10, count);
}

/**
 * Norm-wise relative error between tape gradients and central differences
 * of the full model loss (NLL plus any penalty) over every parameter.
 */
inline double model_gradient_error(Model& model, const Matrix& x, const GraphContext& ctx,
                                   std::span<const int> labels, std::span<const std::size_t> mask,
                                   double h = 1e-5) {
  auto loss_on = [&](Tape& tape) {
    ForwardPass fp = forward(tape, model, x, ctx);
    Var loss = ad::nll_loss(fp.logits, labels, mask);
    if (fp.penalty) loss = ad::add(loss, *fp.penalty);
    return std::pair{loss, fp};
  };
  std::vector<Matrix> grads;
  {
    Tape tape;
    auto [loss, fp] = loss_on(tape);
    tape.backward(loss);
    for (const Var& p : fp.params) grads.push_back(p.grad());
  }
  auto refs = model.parameters();
  auto eval = [&] {
    Tape tape;
    return loss_on(tape).first.value()[0];
  };
  double diff2 = 0.0, ref2 = 0.0;
  for (std::size_t p = 0; p < refs.size(); ++p) {
    Matrix& value = *refs[p].value;
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double keep = value[k];
      value[k] = keep + h;
      const double up = eval();
      value[k] = keep - h;
      const double down = eval();
      value[k] = keep;
      const double fd = (up - down) / (2.0 * h);
      diff2 += (fd - grads[p][k]) * (fd - grads[p][k]);
      ref2 += std::max(fd * fd, grads[p][k] * grads[p][k]);
    }
  }
  return ref2 == 0.0 ? std::sqrt(diff2) : std::sqrt(diff2 / ref2);
}

/// Worst gradient-check error over random small models cycling through every
/// layer kind (GCNII in both scheduled and learnable modes). Smooth
/// activations keep central differences valid.
inline double gradient_check_metric(Rng rng, std::size_t count = 50) {
  const LayerKind kinds[] = {LayerKind::gcn,       LayerKind::gcn_sct, LayerKind::gcnii,
                             LayerKind::gcnii_sct, LayerKind::egnn,    LayerKind::egnn_sct};
  const ActivationKind acts[] = {ActivationKind::elu(), ActivationKind::selu(),
                                 ActivationKind::identity()};
  double worst = 0.0;
  for (std::size_t t = 0; t < count; ++t) {
    const GraphContext ctx(random_graph(rng, 7));
    const std::size_t n = ctx.graph.num_nodes();
    ModelConfig c;
    c.kind = kinds[t % 6];
    c.layers = draw(rng, 1, 3);
    c.hidden_dim = draw(rng, 1, 4);
    c.input_dim = 2;
    c.num_classes = 3;
    c.activation = acts[draw(rng, 0, 2)];
    c.learnable_gcnii_coefficients = (t / 6) % 2 == 1;
    c.lambda_orth = 0.05;
    c.seed = t;
    Model model(c, ctx.basis.m);
    for (auto& ref : model.parameters())
      *ref.value = rng.normal_matrix(ref.value->rows(), ref.value->cols(), 0.5);
    if (model.is_egnn())
      for (auto& p : model.layers()) p.c1 = Matrix(1, 1, rng.uniform(0.0, c.c_min));
    const Matrix x = rng.normal_matrix(2, n);
    std::vector<int> labels(n);
    std::vector<std::size_t> mask(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(draw(rng, 0, 2));
      mask[i] = i;
    }
    worst = std::max(worst, model_gradient_error(model, x, ctx, labels, mask));
  }
  return worst;
}

}  // namespace verify

struct VerifyOptions {
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string inject_fault;  // property name whose residual gets corrupted
};

/// Names of every registered property, in report order.
inline std::vector<std::string> verify_property_names() {
  return {"propagation_operator", "eigenbasis",           "orthogonal_decomposition",
          "seminorm_equivalence", "relu_sphere",          "leaky_sphere",
          "relu_half_sphere",     "relu_cross_term",      "activation_contraction",
          "relu_min_closed_form", "relu_monotone_region", "relu_zero_threshold",
          "leaky_range",          "smooth_input_stays_smooth",
          "shift_distance_bound", "shift_reaches_both_sides",
          "sct_range",            "sct_contraction",      "gradient_check"};
}

/**
 * Runs every property suite. Each group draws from its own child stream of
 * the seed, so the report does not depend on `jobs`.
 */
inline std::vector<PropertyResult> run_verify(const VerifyOptions& opt) {
  using namespace verify;
  const Rng root(opt.seed);
  // groups of properties that share one pass over their instances
  std::vector<std::function<std::vector<PropertyResult>()>> groups{
      [&] { return std::vector{propagation_operator(root.split(1))}; },
      [&] { return std::vector{eigenspace_basis(root.split(2))}; },
      [&] { return std::vector{orthogonal_decomposition(root.split(3))}; },
      [&] {
        const auto g = geometry_metrics(root.split(5));
        return std::vector{finish("seminorm_equivalence", g.seminorm, 1e-10, g.instances),
                           finish("relu_sphere", g.relu_sphere, 1e-9, g.instances),
                           finish("leaky_sphere", g.leaky_sphere, 1e-9, g.instances),
                           finish("relu_half_sphere", g.half_sphere, 1e-10, g.instances),
                           finish("relu_cross_term", g.cross_term, 1e-10, g.instances),
                           finish("activation_contraction", g.contraction, 1e-10, g.instances)};
      },
      [&] {
        const auto r = relu_control_metrics(root.split(6));
        return std::vector{
            finish("relu_min_closed_form", r.closed_form_gap, 1e-4, r.instances),
            finish("relu_monotone_region", static_cast<double>(r.monotone_failures), 0.0, r.instances),
            finish("relu_zero_threshold", r.threshold_gap, 0.0, r.instances)};
      },
      [&] {
        const auto l = leaky_range_metrics(root.split(7));
        const double worst =
            l.hit_one > 0 ? 1.0 : std::max(l.largest_min, 1.0 - l.smallest_max);
        return std::vector{finish("leaky_range", worst, 1e-3, l.instances)};
      },
      [&] { return std::vector{smooth_input(root.split(8))}; },
      [&] {
        const auto s = shift_metrics(root.split(9));
        return std::vector{
            finish("shift_distance_bound", s.distance_excess, 1e-10, s.instances),
            finish("shift_reaches_both_sides", static_cast<double>(s.side_failures), 0.0, s.instances)};
      },
      [&] { return std::vector{finish("sct_range", sct_range_metric(root.split(10)), 1e-10, 100)}; },
      [&] { return std::vector{sct_contraction(root.split(11))}; },
      [&] { return std::vector{finish("gradient_check", gradient_check_metric(root.split(12)), 1e-5, 50)}; },
  };

  std::vector<std::vector<PropertyResult>> out(groups.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < groups.size(); i = next++) out[i] = groups[i]();
  };
  const std::size_t jobs = std::clamp<std::size_t>(opt.jobs, 1, groups.size());
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<PropertyResult> results;
  for (auto& g : out) results.insert(results.end(), g.begin(), g.end());
  if (!opt.inject_fault.empty()) {
    auto it = std::find_if(results.begin(), results.end(),
                           [&](const PropertyResult& r) { return r.name == opt.inject_fault; });
    if (it == results.end()) throw InputError("unknown property '" + opt.inject_fault + "'");
    it->worst = 10.0 * it->tolerance + 1.0;
    it->passed = false;
  }
  return results;
}

inline nlohmann::json verify_report(const std::vector<PropertyResult>& results, std::uint64_t seed) {
  const bool all = std::all_of(results.begin(), results.end(),
                               [](const PropertyResult& r) { return r.passed; });
  return {{"seed", seed}, {"passed", all}, {"properties", results}};
}

}  // namespace smoothgcn
