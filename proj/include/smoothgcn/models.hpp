#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "smoothgcn/activations.hpp"
#include "smoothgcn/autodiff.hpp"
#include "smoothgcn/errors.hpp"
#include "smoothgcn/graph.hpp"
#include "smoothgcn/matrix.hpp"
#include "smoothgcn/random.hpp"

namespace smoothgcn {

enum class LayerKind { gcn, gcn_sct, gcnii, gcnii_sct, egnn, egnn_sct };

/// How the SCT coefficient matrix A (d x m) is produced.
enum class SctArch {
  none,
  pool,      // A = W ⊙ (H Q)
  residual,  // A = softmax(H Q) ⊙ (β W0 H⁰ Q + (1-β) W1 H Q)
};

inline bool has_sct(LayerKind k) {
  return k == LayerKind::gcn_sct || k == LayerKind::gcnii_sct || k == LayerKind::egnn_sct;
}

inline std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::gcn: return "gcn";
    case LayerKind::gcn_sct: return "gcn-sct";
    case LayerKind::gcnii: return "gcnii";
    case LayerKind::gcnii_sct: return "gcnii-sct";
    case LayerKind::egnn: return "egnn";
    case LayerKind::egnn_sct: return "egnn-sct";
  }
  return "?";
}

inline LayerKind parse_layer_kind(std::string s) {
  std::replace(s.begin(), s.end(), '_', '-');
  for (auto k : {LayerKind::gcn, LayerKind::gcn_sct, LayerKind::gcnii, LayerKind::gcnii_sct,
                 LayerKind::egnn, LayerKind::egnn_sct})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown model kind '" + s + "'");
}

inline std::string to_string(SctArch a) {
  switch (a) {
    case SctArch::none: return "none";
    case SctArch::pool: return "pool";
    case SctArch::residual: return "residual";
  }
  return "?";
}

inline SctArch parse_sct_arch(const std::string& s) {
  if (s == "none") return SctArch::none;
  if (s == "pool") return SctArch::pool;
  if (s == "residual") return SctArch::residual;
  throw ConfigError("unknown sct_arch '" + s + "'");
}

/// Residual weight β_l = log(θ/l + 1) for layer l >= 1.
inline double residual_beta(double theta, std::size_t layer) {
  if (layer == 0) throw std::out_of_range("residual_beta: layer index must be >= 1");
  return std::log(theta / static_cast<double>(layer) + 1.0);
}

// ---------------------------------------------------------------------------
// Smoothness control term

/// Learnable SCT parameters of one layer, as tape nodes.
struct SctVars {
  SctArch arch = SctArch::none;
  Var w;   // pool: d x m
  Var w0;  // residual: d x d
  Var w1;  // residual: d x d
  double theta = 1.0;
};

/**
 * B = A·Qᵀ for layer `layer` (1-based). Every row of B is a combination of
 * the columns of Q, so B lies in R^d ⊗ M by construction.
 *
 * `h_in` is the layer input H^{l-1}; `h0` is the encoded input (used by the
 * residual architecture only).
 */
inline Var sct_term(Var h_in, Var h0, Var q, const SctVars& p, std::size_t layer) {
  if (layer == 0) throw std::out_of_range("sct_term: layer index must be >= 1");
  if (h_in.cols() != q.rows())
    throw ShapeError("sct_term: features " + h_in.value().shape() + " vs basis " +
                     q.value().shape());
  const Var pooled = ad::matmul(h_in, q);  // d x m
  Var a;
  switch (p.arch) {
    case SctArch::pool:
      a = ad::hadamard(p.w, pooled);
      break;
    case SctArch::residual: {
      const double beta = residual_beta(p.theta, layer);
      const Var anchor = ad::scale(ad::matmul(p.w0, ad::matmul(h0, q)), beta);
      const Var current = ad::scale(ad::matmul(p.w1, pooled), 1.0 - beta);
      a = ad::hadamard(ad::softmax_columns(pooled), ad::add(anchor, current));
      break;
    }
    case SctArch::none:
      throw ConfigError("sct_term: no architecture selected");
  }
  return ad::matmul(a, ad::transpose(q));
}

/// Plain SCT parameters (not on a tape).
struct SctParams {
  SctArch arch = SctArch::none;
  Matrix w;
  Matrix w0;
  Matrix w1;
  double theta = 1.0;
};

/// Evaluates sct_term on a scratch tape.
inline Matrix sct_term(const Matrix& h_in, const Matrix& h0, const SpectralBasis& basis,
                       const SctParams& params, std::size_t layer) {
  Tape tape;
  SctVars v{params.arch, {}, {}, {}, params.theta};
  if (params.arch == SctArch::pool) v.w = tape.constant(params.w);
  if (params.arch == SctArch::residual) {
    v.w0 = tape.constant(params.w0);
    v.w1 = tape.constant(params.w1);
  }
  const Var h0v = tape.constant(h0.empty() ? h_in : h0);
  return sct_term(tape.constant(h_in), h0v, tape.constant(basis.q), v, layer).value();
}

// ---------------------------------------------------------------------------
// Layers. Feature matrices are d x n; `g` is the n x n propagation operator.

namespace detail {
inline Var maybe_add(Var pre, const std::optional<Var>& b) {
  return b ? ad::add(pre, *b) : pre;
}
}  // namespace detail

/// σ(W H G [+ B])
inline Var gcn_layer(Var h_prev, Var g, Var weight, const ActivationKind& act,
                     const std::optional<Var>& sct = std::nullopt) {
  return apply(act, detail::maybe_add(ad::matmul(ad::matmul(weight, h_prev), g), sct));
}

/**
 * σ(((1-β)I + βW)((1-α)H G + α H⁰) [+ B]).
 *
 * The identity mapping multiplies from the left because features are d x n
 * here; `alpha` and `beta` are 1x1 nodes so they can be scheduled constants
 * or learnable.
 */
inline Var gcnii_layer(Var h_prev, Var h0, Var g, Var weight, Var alpha, Var beta,
                       const ActivationKind& act, const std::optional<Var>& sct = std::nullopt) {
  const Var mixed = ad::add(ad::scale(ad::rsub(1.0, alpha), ad::matmul(h_prev, g)),
                            ad::scale(alpha, h0));
  const Var mapped = ad::add(ad::scale(ad::rsub(1.0, beta), mixed),
                             ad::scale(beta, ad::matmul(weight, mixed)));
  return apply(act, detail::maybe_add(mapped, sct));
}

/// σ(W (c1 H⁰ + c2 H + (1 - c_min) H G) [+ B]) with c2 = c_min - c1.
inline Var egnn_layer(Var h_prev, Var h0, Var g, Var weight, double c_min, Var c1,
                      const ActivationKind& act, const std::optional<Var>& sct = std::nullopt) {
  if (!(c_min >= 0.0 && c_min <= 1.0)) throw ConfigError("egnn_layer: c_min must lie in [0,1]");
  const Var c2 = ad::rsub(c_min, c1);
  Var inner = ad::add(ad::scale(c1, h0), ad::scale(c2, h_prev));
  if (c_min < 1.0) inner = ad::add(inner, ad::scale(ad::matmul(h_prev, g), 1.0 - c_min));
  return apply(act, detail::maybe_add(ad::matmul(weight, inner), sct));
}

/// ||WᵀW - s²I||²_F
inline Var orthogonality_penalty(Var weight, double singular_value) {
  const std::size_t d = weight.cols();
  const Var gram = ad::matmul(ad::transpose(weight), weight);
  const Var target = weight.tape().constant(Matrix::identity(d) * (singular_value * singular_value));
  return ad::squared_norm(ad::sub(gram, target));
}

// ---------------------------------------------------------------------------
// Whole model

struct ModelConfig {
  LayerKind kind = LayerKind::gcn;
  std::size_t layers = 2;
  std::size_t hidden_dim = 16;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  ActivationKind activation = ActivationKind::relu();
  SctArch sct_arch = SctArch::none;  // none => chosen from kind
  double theta = 0.5;
  double alpha = 0.1;                // GCNII initial-residual weight
  bool learnable_gcnii_coefficients = false;
  double c_min = 0.2;
  double c_max = 1.0;
  double lambda_orth = 1e-3;
  double dropout = 0.0;
  std::uint64_t seed = 0;

  /// The SCT architecture that is actually used (none for kinds without SCT).
  SctArch effective_sct_arch() const {
    if (!has_sct(kind)) return SctArch::none;
    if (sct_arch != SctArch::none) return sct_arch;
    return kind == LayerKind::gcn_sct ? SctArch::pool : SctArch::residual;
  }

  void validate() const {
    if (layers < 1) throw ConfigError("ModelConfig: layers must be >= 1");
    if (hidden_dim < 1) throw ConfigError("ModelConfig: hidden_dim must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("ModelConfig: alpha must lie in (0,1)");
    if (!(theta > 0.0)) throw ConfigError("ModelConfig: theta must be positive");
    if (!(c_min >= 0.0 && c_min <= 1.0)) throw ConfigError("ModelConfig: c_min must lie in [0,1]");
    if (!(c_max > 0.0)) throw ConfigError("ModelConfig: c_max must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("ModelConfig: dropout must lie in [0,1)");
    if (!(lambda_orth >= 0.0)) throw ConfigError("ModelConfig: lambda_orth must be >= 0");
    activation.validated();
  }
};

/// Reads the keys kind, layers, hidden_dim, activation, sct_arch, theta,
/// alpha, c_min, c_max, lambda_orth, dropout, seed. Missing keys keep defaults.
inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {}) {
  ModelConfig c = std::move(base);
  if (j.contains("kind")) c.kind = parse_layer_kind(j.at("kind").get<std::string>());
  if (j.contains("layers")) c.layers = j.at("layers").get<std::size_t>();
  if (j.contains("hidden_dim")) c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  if (j.contains("activation")) {
    const double param = j.value("activation_param", NAN);
    c.activation = ActivationKind::parse(j.at("activation").get<std::string>(), param);
  }
  if (j.contains("sct_arch")) c.sct_arch = parse_sct_arch(j.at("sct_arch").get<std::string>());
  if (j.contains("theta")) c.theta = j.at("theta").get<double>();
  if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
  if (j.contains("learnable_gcnii")) c.learnable_gcnii_coefficients = j.at("learnable_gcnii").get<bool>();
  if (j.contains("c_min")) c.c_min = j.at("c_min").get<double>();
  if (j.contains("c_max")) c.c_max = j.at("c_max").get<double>();
  if (j.contains("lambda_orth")) c.lambda_orth = j.at("lambda_orth").get<double>();
  if (j.contains("dropout")) c.dropout = j.at("dropout").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("input_dim")) c.input_dim = j.at("input_dim").get<std::size_t>();
  if (j.contains("num_classes")) c.num_classes = j.at("num_classes").get<std::size_t>();
  c.validate();
  return c;
}

inline nlohmann::json to_json(const ModelConfig& c) {
  nlohmann::json j{{"kind", to_string(c.kind)},
                   {"layers", c.layers},
                   {"hidden_dim", c.hidden_dim},
                   {"input_dim", c.input_dim},
                   {"num_classes", c.num_classes},
                   {"activation", c.activation.name()},
                   {"sct_arch", to_string(c.effective_sct_arch())},
                   {"theta", c.theta},
                   {"alpha", c.alpha},
                   {"learnable_gcnii", c.learnable_gcnii_coefficients},
                   {"c_min", c.c_min},
                   {"c_max", c.c_max},
                   {"lambda_orth", c.lambda_orth},
                   {"dropout", c.dropout},
                   {"seed", c.seed}};
  if (c.activation.kind == Activation::leaky_relu || c.activation.kind == Activation::elu)
    j["activation_param"] = c.activation.a;
  if (c.activation.kind == Activation::srelu) j["activation_param"] = c.activation.t;
  return j;
}

enum class ParamGroup { fc, conv };

struct LayerParams {
  Matrix weight;        // d x d
  Matrix sct_w;         // pool: d x m
  Matrix sct_w0;        // residual: d x d
  Matrix sct_w1;        // residual: d x d
  Matrix c1;            // egnn: 1 x 1
  Matrix alpha_logit;   // gcnii learnable mode: 1 x 1
  Matrix beta_logit;    // gcnii learnable mode: 1 x 1
};

struct ParamRef {
  Matrix* value;
  ParamGroup group;
  std::string name;
};

/**
 * Input encoder, L graph layers of one kind, output decoder.
 *
 * H⁰ = W_in X + b_in, H^l = layer_l(H^{l-1}, H⁰), logits = W_out H^L + b_out.
 */
class Model {
 public:
  Model() = default;
  /// `m` is the eigenspace dimension (number of graph components).
  Model(const ModelConfig& config, std::size_t m) : config_(config), m_(m) {
    config_.validate();
    if (config_.input_dim == 0 || config_.num_classes == 0)
      throw ConfigError("Model: input_dim and num_classes must be set");
    Rng rng(config_.seed);
    Rng init = rng.split(1);
    const std::size_t d = config_.hidden_dim;
    enc_w_ = glorot_uniform(d, config_.input_dim, init);
    enc_b_ = Matrix(d, 1);
    dec_w_ = glorot_uniform(config_.num_classes, d, init);
    dec_b_ = Matrix(config_.num_classes, 1);
    const SctArch arch = config_.effective_sct_arch();
    layers_.resize(config_.layers);
    for (std::size_t l = 0; l < config_.layers; ++l) {
      LayerParams& p = layers_[l];
      if (is_egnn()) {
        p.weight = Matrix::identity(d) * singular_value(l + 1);
        p.c1 = Matrix(1, 1, 0.5 * config_.c_min);
      } else {
        p.weight = glorot_uniform(d, d, init);
      }
      if (is_gcnii() && config_.learnable_gcnii_coefficients) {
        p.alpha_logit = Matrix(1, 1, logit(config_.alpha));
        p.beta_logit = Matrix(1, 1, logit(gcnii_beta(l + 1)));
      }
      // SCT weights start at zero, so B = 0 and every layer begins as its plain variant
      if (arch == SctArch::pool) p.sct_w = Matrix(d, m_);
      if (arch == SctArch::residual) {
        p.sct_w0 = Matrix(d, d);
        p.sct_w1 = Matrix(d, d);
      }
    }
  }

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t eigenspace_dim() const noexcept { return m_; }
  std::vector<LayerParams>& layers() noexcept { return layers_; }
  const std::vector<LayerParams>& layers() const noexcept { return layers_; }
  Matrix& encoder_weight() noexcept { return enc_w_; }
  Matrix& encoder_bias() noexcept { return enc_b_; }
  Matrix& decoder_weight() noexcept { return dec_w_; }
  Matrix& decoder_bias() noexcept { return dec_b_; }

  /// Every learnable matrix, in a fixed order.
  std::vector<ParamRef> parameters() {
    std::vector<ParamRef> out{{&enc_w_, ParamGroup::fc, "encoder.weight"},
                              {&enc_b_, ParamGroup::fc, "encoder.bias"}};
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const std::string pre = "layer" + std::to_string(l + 1) + ".";
      LayerParams& p = layers_[l];
      out.push_back({&p.weight, ParamGroup::conv, pre + "weight"});
      for (auto [m, name] : {std::pair{&p.sct_w, "sct_w"}, {&p.sct_w0, "sct_w0"},
                             {&p.sct_w1, "sct_w1"}, {&p.c1, "c1"},
                             {&p.alpha_logit, "alpha_logit"}, {&p.beta_logit, "beta_logit"}})
        if (!m->empty()) out.push_back({m, ParamGroup::conv, pre + name});
    }
    out.push_back({&dec_w_, ParamGroup::fc, "decoder.weight"});
    out.push_back({&dec_b_, ParamGroup::fc, "decoder.bias"});
    return out;
  }

  std::vector<Matrix> snapshot() {
    std::vector<Matrix> out;
    for (auto& r : parameters()) out.push_back(*r.value);
    return out;
  }
  void restore(const std::vector<Matrix>& snap) {
    auto refs = parameters();
    if (refs.size() != snap.size()) throw ShapeError("Model::restore: parameter count mismatch");
    for (std::size_t i = 0; i < refs.size(); ++i) {
      refs[i].value->require_same(snap[i], "Model::restore");
      *refs[i].value = snap[i];
    }
  }

  /// Singular value EGNN initializes layer l with: sqrt(c_max) for l = 1, 1 after.
  double singular_value(std::size_t layer) const {
    return layer == 1 ? std::sqrt(config_.c_max) : 1.0;
  }

  /// Scheduled GCNII identity-mapping weight log(θ/l + 1), clamped into (0,1).
  double gcnii_beta(std::size_t layer) const {
    return std::clamp(residual_beta(config_.theta, layer), 1e-6, 1.0 - 1e-6);
  }

  bool is_egnn() const {
    return config_.kind == LayerKind::egnn || config_.kind == LayerKind::egnn_sct;
  }
  bool is_gcnii() const {
    return config_.kind == LayerKind::gcnii || config_.kind == LayerKind::gcnii_sct;
  }

 private:
  static double logit(double p) { return std::log(p / (1.0 - p)); }

  ModelConfig config_;
  std::size_t m_ = 1;
  Matrix enc_w_, enc_b_, dec_w_, dec_b_;
  std::vector<LayerParams> layers_;
};

struct ForwardPass {
  Var logits;
  std::vector<Var> features;  // H⁰ .. H^L
  std::vector<Var> params;    // parallel to Model::parameters()
  std::optional<Var> penalty; // λ_orth Σ ||WᵀW - s²I||², EGNN only
};

struct ForwardOptions {
  bool training = false;
  Rng* dropout_rng = nullptr;
};

namespace detail {
inline Var sigmoid(Var x) {
  return ad::elementwise(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

inline Var dropout(Var h, double rate, Rng& rng) {
  Matrix mask(h.rows(), h.cols());
  const double keep = 1.0 - rate;
  for (double& v : mask.values()) v = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  return ad::hadamard(h, h.tape().constant(std::move(mask)));
}
}  // namespace detail

/// Records the full model on `tape`. `x` is d_in x n.
inline ForwardPass forward(Tape& tape, Model& model, const Matrix& x, const GraphContext& ctx,
                           ForwardOptions opts = {}) {
  const ModelConfig& cfg = model.config();
  if (x.cols() != ctx.graph.num_nodes())
    throw ShapeError("forward: features " + x.shape() + " for " +
                     std::to_string(ctx.graph.num_nodes()) + " nodes");
  if (x.rows() != cfg.input_dim)
    throw ShapeError("forward: expected " + std::to_string(cfg.input_dim) + " input features, got " +
                     std::to_string(x.rows()));
  ForwardPass fp;
  std::unordered_map<const Matrix*, Var> var_of;
  for (auto& ref : model.parameters()) {
    fp.params.push_back(tape.parameter(*ref.value));
    var_of.emplace(ref.value, fp.params.back());
  }
  const bool drop = opts.training && cfg.dropout > 0.0 && opts.dropout_rng != nullptr;

  const Var g = tape.constant(ctx.op.g);
  const Var q = tape.constant(ctx.basis.q);
  Var xin = tape.constant(x);
  if (drop) xin = detail::dropout(xin, cfg.dropout, *opts.dropout_rng);
  const Var h0 = ad::add_column(ad::matmul(var_of.at(&model.encoder_weight()), xin),
                                var_of.at(&model.encoder_bias()));
  fp.features.push_back(h0);

  const SctArch arch = cfg.effective_sct_arch();
  Var h = h0;
  for (std::size_t l = 1; l <= cfg.layers; ++l) {
    LayerParams& p = model.layers()[l - 1];
    Var input = drop ? detail::dropout(h, cfg.dropout, *opts.dropout_rng) : h;
    std::optional<Var> b;
    if (arch != SctArch::none) {
      SctVars sv{arch, {}, {}, {}, cfg.theta};
      if (arch == SctArch::pool) sv.w = var_of.at(&p.sct_w);
      if (arch == SctArch::residual) {
        sv.w0 = var_of.at(&p.sct_w0);
        sv.w1 = var_of.at(&p.sct_w1);
      }
      b = sct_term(h, h0, q, sv, l);
    }
    const Var w = var_of.at(&p.weight);
    switch (cfg.kind) {
      case LayerKind::gcn:
      case LayerKind::gcn_sct:
        h = gcn_layer(input, g, w, cfg.activation, b);
        break;
      case LayerKind::gcnii:
      case LayerKind::gcnii_sct: {
        Var alpha, beta;
        if (cfg.learnable_gcnii_coefficients) {
          alpha = detail::sigmoid(var_of.at(&p.alpha_logit));
          beta = detail::sigmoid(var_of.at(&p.beta_logit));
        } else {
          alpha = tape.constant(Matrix(1, 1, cfg.alpha));
          beta = tape.constant(Matrix(1, 1, model.gcnii_beta(l)));
        }
        h = gcnii_layer(input, h0, g, w, alpha, beta, cfg.activation, b);
        break;
      }
      case LayerKind::egnn:
      case LayerKind::egnn_sct:
        h = egnn_layer(input, h0, g, w, cfg.c_min, var_of.at(&p.c1), cfg.activation, b);
        if (cfg.lambda_orth > 0.0) {
          const Var pen = ad::scale(orthogonality_penalty(w, model.singular_value(l)), cfg.lambda_orth);
          fp.penalty = fp.penalty ? ad::add(*fp.penalty, pen) : pen;
        }
        break;
    }
    fp.features.push_back(h);
  }
  fp.logits = ad::add_column(ad::matmul(var_of.at(&model.decoder_weight()), h),
                             var_of.at(&model.decoder_bias()));
  return fp;
}

struct ForwardResult {
  Matrix logits;
  std::vector<Matrix> features;
};

/// Inference-mode forward pass on a scratch tape.
inline ForwardResult forward(Model& model, const Matrix& x, const GraphContext& ctx) {
  Tape tape;
  ForwardPass fp = forward(tape, model, x, ctx);
  ForwardResult out{fp.logits.value(), {}};
  for (const Var& f : fp.features) out.features.push_back(f.value());
  return out;
}

}  // namespace smoothgcn
