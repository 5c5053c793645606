#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smoothgcn/autodiff.hpp"
#include "smoothgcn/errors.hpp"
#include "smoothgcn/generators.hpp"
#include "smoothgcn/graph.hpp"
#include "smoothgcn/matrix.hpp"
#include "smoothgcn/models.hpp"
#include "smoothgcn/random.hpp"
#include "smoothgcn/smoothness.hpp"

namespace smoothgcn {

/// Node-classification data on one graph. Features are d x n.
struct Dataset {
  GraphContext ctx;
  Matrix features;
  std::vector<int> labels;
  std::vector<std::size_t> train, val, test;

  Dataset(Graph g, Matrix x, std::vector<int> y, std::vector<std::size_t> train_idx,
          std::vector<std::size_t> val_idx, std::vector<std::size_t> test_idx)
      : ctx(std::move(g)),
        features(std::move(x)),
        labels(std::move(y)),
        train(std::move(train_idx)),
        val(std::move(val_idx)),
        test(std::move(test_idx)) {
    validate();
  }

  std::size_t num_nodes() const { return ctx.graph.num_nodes(); }
  std::size_t num_classes() const {
    int mx = -1;
    for (int y : labels) mx = std::max(mx, y);
    return static_cast<std::size_t>(mx + 1);
  }

  void validate() const {
    const std::size_t n = num_nodes();
    if (features.cols() != n)
      throw ShapeError("Dataset: features " + features.shape() + " for " + std::to_string(n) +
                       " nodes");
    if (labels.size() != n)
      throw InputError("Dataset: " + std::to_string(labels.size()) + " labels for " +
                       std::to_string(n) + " nodes");
    for (int y : labels)
      if (y < 0) throw InputError("Dataset: negative label");
    std::vector<int> owner(n, -1);
    int which = 0;
    for (const auto* mask : {&train, &val, &test}) {
      for (std::size_t i : *mask) {
        if (i >= n) throw InputError("Dataset: split index " + std::to_string(i) + " out of range");
        if (owner[i] != -1) throw InputError("Dataset: node " + std::to_string(i) + " in two splits");
        owner[i] = which;
      }
      ++which;
    }
  }
};

struct SbmOptions {
  std::vector<std::size_t> block_sizes{30, 30};
  double p_in = 0.2;
  double p_out = 0.02;
  std::size_t feature_dim = 8;
  double class_separation = 1.0;  // scale of the per-class mean vectors
  double noise = 1.0;             // per-entry Gaussian noise std
  std::size_t train_per_class = 10;
  std::size_t val_per_class = 5;  // remaining nodes go to test
};

/**
 * Two-or-more block SBM with Gaussian class features: node i of block c gets
 * μ_c + noise·N(0, I), where μ_c ~ class_separation·N(0, I). Splits are
 * stratified per block after a seeded shuffle.
 */
inline Dataset synthetic_sbm_dataset(const SbmOptions& opt, std::uint64_t seed) {
  Rng root(seed);
  Rng graph_rng = root.split(1), feat_rng = root.split(2), split_rng = root.split(3);
  BlockGraph bg = stochastic_block_model(opt.block_sizes, opt.p_in, opt.p_out, graph_rng);
  const std::size_t n = bg.block.size();
  const std::size_t k = opt.block_sizes.size();
  Matrix means = feat_rng.normal_matrix(opt.feature_dim, k) * opt.class_separation;
  Matrix x(opt.feature_dim, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < opt.feature_dim; ++r)
      x(r, i) = means(r, static_cast<std::size_t>(bg.block[i])) + opt.noise * feat_rng.normal();
  std::vector<std::size_t> train, val, test;
  std::size_t start = 0;
  for (std::size_t b = 0; b < k; ++b) {
    std::vector<std::size_t> members(opt.block_sizes[b]);
    std::iota(members.begin(), members.end(), start);
    start += opt.block_sizes[b];
    shuffle(members, split_rng);
    if (opt.train_per_class + opt.val_per_class > members.size())
      throw ConfigError("synthetic_sbm_dataset: block too small for the requested splits");
    for (std::size_t j = 0; j < members.size(); ++j) {
      auto& dst = j < opt.train_per_class ? train
                  : j < opt.train_per_class + opt.val_per_class ? val
                                                                : test;
      dst.push_back(members[j]);
    }
  }
  for (auto* v : {&train, &val, &test}) std::sort(v->begin(), v->end());
  return Dataset(std::move(bg.graph), std::move(x), std::move(bg.block), std::move(train),
                 std::move(val), std::move(test));
}

struct TrainConfig {
  std::size_t max_epochs = 1500;
  std::size_t patience = 100;
  double learning_rate = 0.01;
  double weight_decay_fc = 5e-4;
  double weight_decay_conv = 5e-4;
  std::uint64_t seed = 0;
  bool record_gradient_norms = true;

  void validate() const {
    if (max_epochs == 0) throw ConfigError("TrainConfig: max_epochs must be positive");
    if (patience > max_epochs) throw ConfigError("TrainConfig: patience exceeds max_epochs");
    if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning rate must be positive");
    if (!(weight_decay_fc >= 0.0 && weight_decay_conv >= 0.0))
      throw ConfigError("TrainConfig: weight decay must be >= 0");
  }
};

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  if (j.contains("max_epochs")) c.max_epochs = j.at("max_epochs").get<std::size_t>();
  if (j.contains("patience")) c.patience = j.at("patience").get<std::size_t>();
  if (j.contains("lr")) c.learning_rate = j.at("lr").get<double>();
  if (j.contains("weight_decay_fc")) c.weight_decay_fc = j.at("weight_decay_fc").get<double>();
  if (j.contains("weight_decay_conv")) c.weight_decay_conv = j.at("weight_decay_conv").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

struct RunResult {
  std::size_t best_epoch = 0;  // 1-based
  std::size_t epochs_run = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double test_accuracy = 0.0;
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<std::vector<double>> grad_norms;  // epochs x (L+1)
  std::vector<SmoothnessReport> smoothness;     // H⁰ .. H^L at the best checkpoint
};

inline nlohmann::json to_json(const RunResult& r) {
  nlohmann::json reports = nlohmann::json::array();
  for (const auto& s : r.smoothness) reports.push_back(s);
  return {{"best_epoch", r.best_epoch},     {"epochs_run", r.epochs_run},
          {"best_val_loss", r.best_val_loss}, {"accuracy", r.test_accuracy},
          {"train_loss", r.train_loss},     {"val_loss", r.val_loss},
          {"grad_norms", r.grad_norms},     {"smoothness", reports}};
}

/// Fraction of `mask` whose column argmax of `logits` equals the label.
inline double accuracy(const Matrix& logits, std::span<const int> labels,
                       std::span<const std::size_t> mask) {
  if (mask.empty()) throw InputError("accuracy: empty mask");
  std::size_t hit = 0;
  for (std::size_t node : mask) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < logits.rows(); ++r)
      if (logits(r, node) > logits(best, node)) best = r;
    if (static_cast<int>(best) == labels[node]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(mask.size());
}

/// Mean of -log softmax(logits)[label] over the masked nodes.
inline Var nll_loss(Var logits, std::span<const int> labels, std::span<const std::size_t> mask) {
  return ad::nll_loss(logits, labels, mask);
}

namespace detail {

/// ||∂L/∂H^l||_F / ||∂L/∂logits||_F for every recorded layer (0 when the
/// output gradient vanishes).
inline std::vector<double> gradient_ratio(const ForwardPass& fp) {
  const double out = fp.logits.grad().norm();
  std::vector<double> row;
  row.reserve(fp.features.size());
  for (const Var& h : fp.features) row.push_back(out > 0.0 ? h.grad().norm() / out : 0.0);
  return row;
}

inline Matrix model_logits(Model& model, const Dataset& data) {
  return forward(model, data.features, data.ctx).logits;
}

inline double eval_loss(Model& model, const Dataset& data, std::span<const std::size_t> mask) {
  Tape tape;
  ForwardPass fp = forward(tape, model, data.features, data.ctx);
  return ad::nll_loss(fp.logits, data.labels, mask).value()[0];
}

}  // namespace detail

/**
 * Per-layer gradient norms for one backward pass of the training loss at the
 * current parameters: row l is ||∂L/∂H^l|| relative to ||∂L/∂H_out||.
 */
inline std::vector<double> layer_gradient_norms(Model& model, const Dataset& data) {
  Tape tape;
  ForwardPass fp = forward(tape, model, data.features, data.ctx);
  tape.backward(ad::nll_loss(fp.logits, data.labels, data.train));
  return detail::gradient_ratio(fp);
}

/**
 * Full-batch training with Adam, decoupled weight decay per parameter group,
 * early stopping on validation loss, and restoration of the best checkpoint.
 */
inline RunResult train(Model& model, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.train.empty() || data.val.empty() || data.test.empty())
    throw InputError("train: every split must be nonempty");
  if (data.features.rows() != model.config().input_dim)
    throw ShapeError("train: feature dimension does not match the model");
  if (data.num_classes() > model.config().num_classes)
    throw ShapeError("train: labels exceed the model's class count");

  RunResult result;
  AdamState adam(AdamOptions{cfg.learning_rate});
  Rng dropout_rng = Rng(cfg.seed).split(7);
  std::vector<Matrix> best = model.snapshot();
  auto refs = model.parameters();
  std::vector<Matrix*> params;
  for (auto& r : refs) params.push_back(r.value);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    try {
      Tape tape;
      ForwardPass fp = forward(tape, model, data.features, data.ctx,
                               ForwardOptions{true, &dropout_rng});
      Var loss = ad::nll_loss(fp.logits, data.labels, data.train);
      const double data_loss = loss.value()[0];
      if (fp.penalty) loss = ad::add(loss, *fp.penalty);
      if (!std::isfinite(loss.value()[0])) throw NumericalError("non-finite loss");
      tape.backward(loss);
      if (cfg.record_gradient_norms) result.grad_norms.push_back(detail::gradient_ratio(fp));

      std::vector<Matrix> grads;
      for (const Var& p : fp.params) grads.push_back(p.grad());
      for (std::size_t i = 0; i < refs.size(); ++i) {
        const double wd = refs[i].group == ParamGroup::fc ? cfg.weight_decay_fc
                                                          : cfg.weight_decay_conv;
        if (wd > 0.0) *params[i] = *params[i] * (1.0 - cfg.learning_rate * wd);
      }
      adam_step(adam, params, grads);
      for (Matrix* p : params)
        if (!p->all_finite()) throw NumericalError("non-finite parameter");

      const double vl = detail::eval_loss(model, data, data.val);
      if (!std::isfinite(vl)) throw NumericalError("non-finite validation loss");
      result.train_loss.push_back(data_loss);
      result.val_loss.push_back(vl);
      result.epochs_run = epoch;
      if (vl < result.best_val_loss) {
        result.best_val_loss = vl;
        result.best_epoch = epoch;
        best = model.snapshot();
      } else if (epoch - result.best_epoch >= cfg.patience) {
        break;
      }
    } catch (const NumericalError& e) {
      throw TrainingError(std::string("training diverged: ") + e.what(), epoch);
    }
  }

  model.restore(best);
  ForwardResult fr = forward(model, data.features, data.ctx);
  result.test_accuracy = accuracy(fr.logits, data.labels, data.test);
  for (const Matrix& h : fr.features)
    result.smoothness.push_back(smoothness_report(h, data.ctx.op, data.ctx.basis));
  return result;
}

/// (μ1 - μ2) / sqrt(σ1²/n + σ2²/n).
inline double t_score(double mean1, double std1, double mean2, double std2, std::size_t n) {
  if (n < 2) throw InputError("t_score: need n >= 2");
  if (std1 < 0.0 || std2 < 0.0) throw InputError("t_score: negative standard deviation");
  if (std1 == 0.0 && std2 == 0.0) throw InputError("t_score: undefined when both stds are zero");
  const double nn = static_cast<double>(n);
  return (mean1 - mean2) / std::sqrt(std1 * std1 / nn + std2 * std2 / nn);
}

struct SampleStats {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)
};

inline SampleStats sample_stats(std::span<const double> xs) {
  SampleStats s;
  s.n = xs.size();
  if (s.n == 0) throw InputError("sample_stats: empty sample");
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

// ---------------------------------------------------------------------------
// File formats

/// One row per node, comma-separated reals; returned transposed (d x n).
inline Matrix read_features_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw InputError("features line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
      if (cell.find_first_not_of(" \t\r", used) != std::string::npos)
        throw InputError("features line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw InputError("features line " + std::to_string(lineno) + ": ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError("features: no rows");
  Matrix x(rows.front().size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t r = 0; r < rows[i].size(); ++r) x(r, i) = rows[i][r];
  return x;
}

/// One integer label per line.
inline std::vector<int> read_labels(std::istream& in) {
  std::vector<int> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    int y = 0;
    std::string extra;
    if (!(ls >> y) || (ls >> extra)) throw InputError("labels: bad line '" + line + "'");
    out.push_back(y);
  }
  return out;
}

struct Splits {
  std::vector<std::size_t> train, val, test;
};

/// {"train": [...], "val": [...], "test": [...]}
inline Splits read_splits(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
    return {j.at("train").get<std::vector<std::size_t>>(),
            j.at("val").get<std::vector<std::size_t>>(),
            j.at("test").get<std::vector<std::size_t>>()};
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("splits: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Model persistence

inline nlohmann::json model_to_json(Model& model) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& ref : model.parameters()) {
    const Matrix& m = *ref.value;
    params[ref.name] = {{"rows", m.rows()}, {"cols", m.cols()},
                        {"values", std::vector<double>(m.values().begin(), m.values().end())}};
  }
  return {{"config", to_json(model.config())},
          {"eigenspace_dim", model.eigenspace_dim()},
          {"parameters", params}};
}

inline Model model_from_json(const nlohmann::json& j) {
  try {
    const ModelConfig cfg = model_config_from_json(j.at("config"));
    Model model(cfg, j.at("eigenspace_dim").get<std::size_t>());
    const auto& params = j.at("parameters");
    for (auto& ref : model.parameters()) {
      const auto& p = params.at(ref.name);
      Matrix m(p.at("rows").get<std::size_t>(), p.at("cols").get<std::size_t>(),
               p.at("values").get<std::vector<double>>());
      ref.value->require_same(m, "model_from_json");
      *ref.value = std::move(m);
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model file: ") + e.what());
  }
}

}  // namespace smoothgcn
