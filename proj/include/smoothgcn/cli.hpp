#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smoothgcn/control.hpp"
#include "smoothgcn/eigen.hpp"
#include "smoothgcn/svg.hpp"
#include "smoothgcn/train.hpp"
#include "smoothgcn/verify.hpp"

namespace smoothgcn::cli {

enum ExitCode : int { kSuccess = 0, kFailure = 1, kInputError = 2 };

/// Everything a command may read. Commands ignore the fields they do not use.
struct CommandOptions {
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = ".";
  std::string graph, features, labels, splits, config, model;
  std::optional<double> alpha;
  std::size_t jobs = 1;
  bool synthetic = false;
  bool degree_scaled = false;  // sweep: scale the α grid by sqrt(Σ d_i)
  std::string inject_fault;
  std::string list_a, list_b;  // ttest inputs
};

// ---------------------------------------------------------------------------
// Output helpers

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path.string());
  f << text;
  if (!f) throw InputError("write failed for " + path.string());
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_file(path, j.dump(2) + "\n");
}

inline std::ifstream open_input(const std::string& path, const char* what) {
  if (path.empty()) throw InputError(std::string("missing --") + what);
  std::ifstream f(path);
  if (!f) throw InputError(std::string("cannot open ") + what + " file '" + path + "'");
  return f;
}

inline std::uint64_t require_seed(const CommandOptions& o, const char* cmd) {
  if (!o.seed) throw InputError(std::string(cmd) + ": --seed is required");
  return *o.seed;
}

inline void prepare_out(const CommandOptions& o) {
  std::error_code ec;
  std::filesystem::create_directories(o.out, ec);
  if (ec || !std::filesystem::is_directory(o.out))
    throw InputError("output directory '" + o.out.string() + "' is not writable");
}

// ---------------------------------------------------------------------------
// Experiments, separated from file output so tests can call them directly

struct SweepResult {
  double input_s = 0.0;
  double input_dist = 0.0;
  SweepCurve relu;
  SweepCurve leaky;
};

inline constexpr double kSweepLeakySlope = 0.2;

inline SweepResult sweep_experiment(std::uint64_t seed, bool degree_scaled = false) {
  const auto inst = synthetic_sweep_instance(seed);
  auto grid = default_alpha_grid();
  if (degree_scaled) {
    double total = 0.0;
    for (double d : inst.ctx.op.degrees) total += d;
    for (double& a : grid) a *= std::sqrt(total);
  }
  SweepResult r;
  r.relu = sweep(inst.z, inst.ctx.basis, ActivationKind::relu(), grid);
  r.leaky = sweep(inst.z, inst.ctx.basis, ActivationKind::leaky_relu(kSweepLeakySlope), grid);
  r.input_s = r.relu.input_s;
  r.input_dist = r.relu.input_dist;
  return r;
}

struct Trajectory {
  std::vector<std::array<double, 2>> points;  // h⁰ .. h^T
  std::vector<double> dist;                   // distance to M per point
};

struct TrajectoryResult {
  std::array<double, 2> e{};  // unit eigenvalue-1 eigenvector of G
  double lambda = 0.0;        // the other eigenvalue of G
  std::vector<Trajectory> trajectories;
};

inline constexpr double kTrajectoryWeight = 1.2;
inline const Matrix& trajectory_operator() {
  static const Matrix g{{0.592, 0.194}, {0.194, 0.908}};
  return g;
}

/**
 * The two-node system h ← relu(w h G + α e) from 20 starting points on a
 * 5 x 4 grid over [-1, 1]², 50 steps each.
 */
inline TrajectoryResult trajectory_experiment(double alpha, std::size_t steps = 50) {
  const auto ed = symmetric_eigendecomposition(trajectory_operator());
  TrajectoryResult r;
  r.e = {ed.vectors(0, 0), ed.vectors(1, 0)};
  if (r.e[0] < 0.0) r.e = {-r.e[0], -r.e[1]};
  r.lambda = ed.values[1];
  const Matrix& g = trajectory_operator();
  const auto dist = [&](const std::array<double, 2>& h) {
    const double c = h[0] * r.e[0] + h[1] * r.e[1];
    return std::hypot(h[0] - c * r.e[0], h[1] - c * r.e[1]);
  };
  const auto xs = linspace(-1.0, 1.0, 5), ys = linspace(-1.0, 1.0, 4);
  for (double y : ys)
    for (double x : xs) {
      Trajectory t;
      std::array<double, 2> h{x, y};
      t.points.push_back(h);
      t.dist.push_back(dist(h));
      for (std::size_t k = 0; k < steps; ++k) {
        const std::array<double, 2> pre{
            kTrajectoryWeight * (h[0] * g(0, 0) + h[1] * g(1, 0)) + alpha * r.e[0],
            kTrajectoryWeight * (h[0] * g(0, 1) + h[1] * g(1, 1)) + alpha * r.e[1]};
        h = {std::max(pre[0], 0.0), std::max(pre[1], 0.0)};
        t.points.push_back(h);
        t.dist.push_back(dist(h));
      }
      r.trajectories.push_back(std::move(t));
    }
  return r;
}

/// Distances below this fraction of ||h|| are round-off, not geometry.
inline constexpr double kTrajectoryRoundoff = 1e-9;

inline double roundoff_floor(const std::array<double, 2>& h) {
  return kTrajectoryRoundoff * std::max(1.0, std::hypot(h[0], h[1]));
}

/// Largest dist[k+1] / dist[k] over steps k >= 1 whose dist[k] is above round-off.
inline double max_contraction_ratio(const TrajectoryResult& r) {
  double worst = 0.0;
  for (const auto& t : r.trajectories)
    for (std::size_t k = 1; k + 1 < t.dist.size(); ++k)
      if (t.dist[k] > roundoff_floor(t.points[k])) worst = std::max(worst, t.dist[k + 1] / t.dist[k]);
  return worst;
}

/// True iff some trajectory moves away from M by more than round-off on one
/// of its first `early` steps.
inline bool distance_increases_early(const TrajectoryResult& r, std::size_t early = 5) {
  for (const auto& t : r.trajectories)
    for (std::size_t k = 0; k < early && k + 1 < t.dist.size(); ++k)
      if (t.dist[k + 1] - t.dist[k] > roundoff_floor(t.points[k + 1])) return true;
  return false;
}

/// (L+1) x d matrix of per-dimension normalized smoothness of H⁰ .. H^L.
inline Matrix smoothness_heatmap(Model& model, const Dataset& data) {
  const auto fr = forward(model, data.features, data.ctx);
  Matrix out(fr.features.size(), model.config().hidden_dim);
  for (std::size_t l = 0; l < fr.features.size(); ++l) {
    const auto s = row_smoothness(fr.features[l], data.ctx.basis);
    for (std::size_t k = 0; k < s.size(); ++k) out(l, k) = s[k];
  }
  return out;
}

/// Dataset from --graph/--features/--labels/--splits, or the seeded SBM under --synthetic.
inline Dataset load_dataset(const CommandOptions& o) {
  if (o.synthetic) return synthetic_sbm_dataset(SbmOptions{}, require_seed(o, "synthetic dataset"));
  auto gf = open_input(o.graph, "graph");
  auto ff = open_input(o.features, "features");
  auto lf = open_input(o.labels, "labels");
  auto sf = open_input(o.splits, "splits");
  Graph g = read_graph(gf);
  Matrix x = read_features_csv(ff);
  auto y = read_labels(lf);
  auto s = read_splits(sf);
  return Dataset(std::move(g), std::move(x), std::move(y), std::move(s.train), std::move(s.val),
                 std::move(s.test));
}

/// --config: {"model": {...}, "train": {...}}; both sections optional.
inline std::pair<ModelConfig, TrainConfig> load_configs(const CommandOptions& o) {
  nlohmann::json j = nlohmann::json::object();
  if (!o.config.empty()) {
    auto f = open_input(o.config, "config");
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("config: ") + e.what());
    }
  }
  try {
    ModelConfig mc = model_config_from_json(j.value("model", nlohmann::json::object()));
    TrainConfig tc = train_config_from_json(j.value("train", nlohmann::json::object()));
    return {mc, tc};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline std::vector<double> read_accuracy_list(const std::string& path, const char* flag) {
  auto f = open_input(path, flag);
  std::vector<double> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    double v = 0.0;
    std::string extra;
    if (!(ls >> v) || (ls >> extra))
      throw InputError(std::string(flag) + ": bad line '" + line + "'");
    out.push_back(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands. Each writes into o.out and returns an exit code; input problems
// surface as exceptions that run_command maps to kInputError.

inline int cmd_verify(const CommandOptions& o, std::ostream& log) {
  const std::uint64_t seed = o.seed.value_or(0);
  const auto results = run_verify({seed, o.jobs, o.inject_fault});
  const auto report = verify_report(results, seed);
  write_json(o.out / "verify.json", report);
  bool ok = true;
  for (const auto& r : results) {
    log << (r.passed ? "ok   " : "FAIL ") << r.name << " worst=" << fmt(r.worst)
        << " tol=" << fmt(r.tolerance) << '\n';
    ok = ok && r.passed;
  }
  return ok ? kSuccess : kFailure;
}

inline int cmd_sweep(const CommandOptions& o, std::ostream& log) {
  const auto r = sweep_experiment(require_seed(o, "sweep"), o.degree_scaled);
  bool bounded = true;
  for (const auto* c : {&r.relu, &r.leaky}) {
    std::string csv = "alpha,s,dist\n";
    for (std::size_t i = 0; i < c->alphas.size(); ++i) {
      csv += fmt(c->alphas[i]) + ',' + fmt(c->s_values[i]) + ',' + fmt(c->dist_values[i]) + '\n';
      bounded = bounded && c->dist_values[i] <= r.input_dist + kMonotoneSlack;
    }
    write_file(o.out / (c == &r.relu ? "sweep_relu.csv" : "sweep_leaky.csv"), csv);
  }
  const auto extent = [](const std::vector<double>& v) {
    return std::pair{*std::min_element(v.begin(), v.end()), *std::max_element(v.begin(), v.end())};
  };
  const auto [rlo, rhi] = extent(r.relu.s_values);
  const auto [llo, lhi] = extent(r.leaky.s_values);
  const bool below = std::min(rlo, llo) < r.input_s, above = std::max(rhi, lhi) > r.input_s;
  write_json(o.out / "sweep.json", {{"seed", *o.seed},
                                    {"degree_scaled", o.degree_scaled},
                                    {"input_s", r.input_s},
                                    {"input_dist", r.input_dist},
                                    {"relu_s_range", {rlo, rhi}},
                                    {"leaky_s_range", {llo, lhi}},
                                    {"dist_bounded", bounded},
                                    {"s_below_input", below},
                                    {"s_above_input", above}});

  const auto flat = [&](double v) { return std::vector<double>(r.relu.alphas.size(), v); };
  svg::Panel a{"distance to M", "alpha", "||h||_M-perp", {}};
  a.series = {{"ReLU", r.relu.alphas, r.relu.dist_values, "#1f77b4"},
              {"leaky ReLU", r.leaky.alphas, r.leaky.dist_values, "#d62728"},
              {"input", r.relu.alphas, flat(r.input_dist), "#7f7f7f"}};
  svg::Panel b{"normalized smoothness", "alpha", "s", {}};
  b.series = {{"ReLU", r.relu.alphas, r.relu.s_values, "#1f77b4"},
              {"leaky ReLU", r.leaky.alphas, r.leaky.s_values, "#d62728"},
              {"input", r.relu.alphas, flat(r.input_s), "#7f7f7f"}};
  write_file(o.out / "sweep.svg", svg::line_panels({a, b}));

  log << "s(z)=" << fmt(r.input_s) << " ReLU s in [" << fmt(rlo) << ", " << fmt(rhi)
      << "], leaky s in [" << fmt(llo) << ", " << fmt(lhi) << "]\n";
  if (!bounded) {
    log << "FAIL distance to M exceeds the input distance\n";
    return kFailure;
  }
  return kSuccess;
}

inline int cmd_trajectory(const CommandOptions& o, std::ostream& log) {
  if (!o.alpha) throw InputError("trajectory: --alpha is required");
  const auto r = trajectory_experiment(*o.alpha);
  std::string csv = "trajectory,step,h1,h2,dist\n";
  for (std::size_t t = 0; t < r.trajectories.size(); ++t) {
    const auto& tr = r.trajectories[t];
    for (std::size_t k = 0; k < tr.points.size(); ++k)
      csv += std::to_string(t) + ',' + std::to_string(k) + ',' + fmt(tr.points[k][0]) + ',' +
             fmt(tr.points[k][1]) + ',' + fmt(tr.dist[k]) + '\n';
  }
  write_file(o.out / "trajectory.csv", csv);
  const double ratio = max_contraction_ratio(r);
  const bool rises = distance_increases_early(r);
  write_json(o.out / "trajectory.json", {{"alpha", *o.alpha},
                                         {"eigenvector", r.e},
                                         {"second_eigenvalue", r.lambda},
                                         {"max_contraction_ratio", ratio},
                                         {"distance_increases_early", rises}});

  // color encodes the starting magnitude, light to dark
  double reach = 0.0;
  for (const auto& t : r.trajectories)
    for (const auto& p : t.points) reach = std::max({reach, std::abs(p[0]), std::abs(p[1])});
  svg::Panel plane{"node feature trajectories", "h1", "h2", {}};
  svg::Panel dist{"distance to M", "step", "dist", {}};
  plane.series.push_back({"M", {0.0, reach * r.e[0]}, {0.0, reach * r.e[1]}, "#000000"});
  for (std::size_t t = 0; t < r.trajectories.size(); ++t) {
    const auto& tr = r.trajectories[t];
    const double mag = std::hypot(tr.points[0][0], tr.points[0][1]) / std::sqrt(2.0);
    char color[8];
    std::snprintf(color, sizeof color, "#%02x%02x%02x", static_cast<int>(std::lround(230 - 200 * mag)),
                  static_cast<int>(std::lround(160 - 120 * mag)), 40);
    svg::Series s{"", {}, {}, color, true};
    std::vector<double> steps;
    for (std::size_t k = 0; k < tr.points.size(); ++k) {
      s.x.push_back(tr.points[k][0]);
      s.y.push_back(tr.points[k][1]);
      steps.push_back(static_cast<double>(k));
    }
    plane.series.push_back(s);
    dist.series.push_back({"", steps, tr.dist, color});
  }
  write_file(o.out / "trajectory.svg", svg::line_panels({plane, dist}));
  log << "alpha=" << fmt(*o.alpha) << " max contraction ratio " << fmt(ratio)
      << (rises ? ", distance rises early\n" : ", no early rise\n");
  return kSuccess;
}

inline int cmd_heatmap(const CommandOptions& o, std::ostream& log) {
  auto mf = open_input(o.model, "model");
  nlohmann::json mj;
  try {
    mf >> mj;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model file: ") + e.what());
  }
  Model model = model_from_json(mj);
  const Dataset data = load_dataset(o);
  if (model.eigenspace_dim() != data.ctx.basis.m)
    throw InputError("heatmap: model was built for a graph with " +
                     std::to_string(model.eigenspace_dim()) + " components, dataset has " +
                     std::to_string(data.ctx.basis.m));
  const Matrix s = smoothness_heatmap(model, data);
  std::string csv = "layer";
  for (std::size_t k = 0; k < s.cols(); ++k) csv += ",s" + std::to_string(k);
  csv += '\n';
  for (std::size_t l = 0; l < s.rows(); ++l) {
    csv += std::to_string(l);
    for (std::size_t k = 0; k < s.cols(); ++k) csv += ',' + fmt(s(l, k));
    csv += '\n';
  }
  write_file(o.out / "heatmap.csv", csv);
  write_file(o.out / "heatmap.svg",
             svg::heatmap(s, "normalized smoothness per dimension", "dimension", "layer"));
  log << "heatmap " << s.rows() << " x " << s.cols() << '\n';
  return kSuccess;
}

inline int cmd_train(const CommandOptions& o, std::ostream& log) {
  const Dataset data = load_dataset(o);
  auto [mc, tc] = load_configs(o);
  if (o.seed) mc.seed = tc.seed = *o.seed;
  mc.input_dim = data.features.rows();
  mc.num_classes = data.num_classes();
  Model model(mc, data.ctx.basis.m);
  const RunResult r = train(model, data, tc);
  nlohmann::json out = to_json(r);
  out["model_config"] = to_json(mc);
  out["train_config"] = {{"max_epochs", tc.max_epochs},       {"patience", tc.patience},
                         {"lr", tc.learning_rate},           {"weight_decay_fc", tc.weight_decay_fc},
                         {"weight_decay_conv", tc.weight_decay_conv}, {"seed", tc.seed}};
  write_json(o.out / "run.json", out);
  write_json(o.out / "model.json", model_to_json(model));
  log << to_string(mc.kind) << " L=" << mc.layers << " accuracy " << fmt(r.test_accuracy)
      << " best epoch " << r.best_epoch << '\n';
  return kSuccess;
}

inline int cmd_ttest(const CommandOptions& o, std::ostream& log) {
  const auto a = read_accuracy_list(o.list_a, "a");
  const auto b = read_accuracy_list(o.list_b, "b");
  if (a.size() != b.size())
    throw InputError("ttest: lists have " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()) + " entries");
  const auto sa = sample_stats(a), sb = sample_stats(b);
  const double t = t_score(sa.mean, sa.std, sb.mean, sb.std, sa.n);
  write_json(o.out / "ttest.json", {{"n", sa.n},
                                    {"means", {sa.mean, sb.mean}},
                                    {"stds", {sa.std, sb.std}},
                                    {"t", t}});
  log << "t=" << fmt(t) << '\n';
  return kSuccess;
}

/// Dispatches by name, mapping input and configuration errors to kInputError.
inline int run_command(const std::string& name, const CommandOptions& o, std::ostream& log,
                       std::ostream& err) {
  try {
    prepare_out(o);
    if (name == "verify") return cmd_verify(o, log);
    if (name == "sweep") return cmd_sweep(o, log);
    if (name == "trajectory") return cmd_trajectory(o, log);
    if (name == "heatmap") return cmd_heatmap(o, log);
    if (name == "train") return cmd_train(o, log);
    if (name == "ttest") return cmd_ttest(o, log);
    throw InputError("unknown command '" + name + "'");
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  } catch (const std::invalid_argument& e) {  // ShapeError, InputError, ConfigError
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const PreconditionError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace smoothgcn::cli
