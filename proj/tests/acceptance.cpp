// Acceptance run: one PASS/FAIL line per criterion, tolerances pinned below.
//
// Exit status is 0 when every criterion either passes or is listed in
// kKnownFailures, so ctest stays green while the known failures are still
// printed as FAIL. Any other failing criterion, or a known failure that
// starts passing, exits 1. `--strict` exits 1 on any FAIL.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "smoothgcn/cli.hpp"
#include "smoothgcn/verify.hpp"

using namespace smoothgcn;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 0;

// criterion 1 and 2
constexpr double kSphereTol = 1e-9;
constexpr double kIdentityTol = 1e-10;  // relative to ||Z||²
constexpr double kContractionSlack = 1e-10;
constexpr double kSeminormSlack = 1e-10;
constexpr double kGeometrySeconds = 10.0;
// criterion 3 and 4
constexpr double kClosedFormTol = 1e-4;
constexpr double kLeakyLow = 1e-3;
constexpr double kLeakyHigh = 0.999;
// criterion 5
constexpr double kSweepSlack = 1e-10;
constexpr double kSweepSeconds = 5.0;
// criterion 6
constexpr double kContractionFactor = 0.6;
// criterion 7 and 9
constexpr double kGradientTol = 1e-5;
constexpr double kSctRangeTol = 1e-10;
// criterion 8
constexpr double kShallowAccuracy = 0.9;
constexpr double kSmoothThreshold = 0.999;
constexpr double kTrainSeconds = 300.0;

// Criteria that fail for documented reasons (see README, "Known results").
const std::set<int> kKnownFailures{5, 6, 8};

struct Outcome {
  bool pass;
  std::string detail;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome geometry() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto g = verify::geometry_metrics(Rng(kSeed).split(5), 100);
  const double secs = seconds_since(t0);
  const bool pass = g.relu_sphere < kSphereTol && g.leaky_sphere < kSphereTol &&
                    g.half_sphere < kIdentityTol && g.cross_term < kIdentityTol &&
                    g.contraction <= kContractionSlack && secs < kGeometrySeconds;
  return {pass, "relu sphere " + num(g.relu_sphere) + ", leaky sphere " + num(g.leaky_sphere) +
                    ", half-sphere " + num(g.half_sphere) + ", cross term " + num(g.cross_term) +
                    ", contraction excess " + num(g.contraction) + ", " + num(secs) + " s"};
}

Outcome seminorm() {
  const auto g = verify::geometry_metrics(Rng(kSeed).split(5), 100);
  return {g.seminorm <= kSeminormSlack, "worst violation " + num(g.seminorm)};
}

Outcome relu_control() {
  const auto r = verify::relu_control_metrics(Rng(kSeed).split(6), 50);
  const bool pass = r.closed_form_gap < kClosedFormTol && r.monotone_failures == 0 &&
                    r.threshold_gap == 0.0;
  return {pass, "closed-form gap " + num(r.closed_form_gap) + ", monotone failures " +
                    std::to_string(r.monotone_failures) + ", |1 - s| past threshold " +
                    num(r.threshold_gap)};
}

Outcome leaky_range() {
  const auto l = verify::leaky_range_metrics(Rng(kSeed).split(7), 50);
  const bool pass = l.largest_min <= kLeakyLow && l.smallest_max >= kLeakyHigh && l.hit_one == 0;
  return {pass, "largest min " + num(l.largest_min) + ", smallest max " + num(l.smallest_max) +
                    ", instances reaching 1: " + std::to_string(l.hit_one)};
}

Outcome sweep_figure() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = cli::sweep_experiment(kSeed);
  const double secs = seconds_since(t0);
  double excess = -r.input_dist, lo = 1.0, hi = 0.0;
  for (const auto* c : {&r.relu, &r.leaky}) {
    for (double d : c->dist_values) excess = std::max(excess, d - r.input_dist);
    for (double s : c->s_values) lo = std::min(lo, s), hi = std::max(hi, s);
  }
  const bool pass = excess <= kSweepSlack && lo < r.input_s && hi > r.input_s && secs < kSweepSeconds;
  return {pass, "max dist - input dist " + num(excess) + ", s(z) " + num(r.input_s) + ", s range [" +
                    num(lo) + ", " + num(hi) + "], " + num(secs) + " s"};
}

Outcome trajectory_figure() {
  const auto still = cli::trajectory_experiment(0.0);
  const auto shifted = cli::trajectory_experiment(1.0);
  const double ratio = cli::max_contraction_ratio(still);
  const bool rises = cli::distance_increases_early(shifted);
  return {ratio <= kContractionFactor && rises,
          "alpha 0: max ratio " + num(ratio) + "; alpha 1: " +
              (rises ? "distance rises early" : "no early rise")};
}

Outcome gradients() {
  const double err = verify::gradient_check_metric(Rng(kSeed).split(12), 50);
  return {err < kGradientTol, "max relative error " + num(err) + " over 50 configurations"};
}

Outcome oversmoothing() {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset data = synthetic_sbm_dataset(SbmOptions{}, kSeed);
  struct Run {
    double accuracy;
    double min_s;
    double max_s;
  };
  const auto run = [&](LayerKind kind, std::size_t layers) {
    ModelConfig mc;
    mc.kind = kind;
    mc.layers = layers;
    mc.hidden_dim = 16;
    mc.input_dim = data.features.rows();
    mc.num_classes = data.num_classes();
    mc.dropout = 0.5;
    mc.seed = kSeed;
    TrainConfig tc;
    tc.learning_rate = 0.005;
    tc.weight_decay_conv = 5e-4;
    tc.seed = kSeed;
    Model model(mc, data.ctx.basis.m);
    const RunResult r = train(model, data, tc);
    const auto& s = r.smoothness.back().s;
    return Run{r.test_accuracy, *std::min_element(s.begin(), s.end()),
               *std::max_element(s.begin(), s.end())};
  };
  const Run shallow = run(LayerKind::gcn, 2);
  const Run deep = run(LayerKind::gcn, 32);
  const Run sct = run(LayerKind::gcn_sct, 32);
  const double secs = seconds_since(t0);
  const bool pass = shallow.accuracy >= kShallowAccuracy && deep.accuracy < shallow.accuracy &&
                    sct.min_s < kSmoothThreshold && deep.min_s >= kSmoothThreshold &&
                    secs < kTrainSeconds;
  return {pass, "GCN-2 acc " + num(shallow.accuracy) + ", GCN-32 acc " + num(deep.accuracy) +
                    " min s " + num(deep.min_s) + ", GCN-SCT-32 acc " + num(sct.accuracy) +
                    " min s " + num(sct.min_s) + ", " + num(secs) + " s"};
}

Outcome sct_range() {
  const double worst = verify::sct_range_metric(Rng(kSeed).split(10), 100);
  return {worst < kSctRangeTol, "max ||B||_M-perp " + num(worst)};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "smoothgcn_acceptance";
  fs::remove_all(root);
  for (const char* run : {"a", "b"}) {
    const std::string out = (root / run).string();
    for (const std::string args : {"verify --seed 0 --jobs 4", "sweep --seed 0"}) {
      const std::string cmd = std::string(SMOOTHGCN_CLI) + ' ' + args + " --out " + out + " > /dev/null";
      const int status = std::system(cmd.c_str());
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return {false, "'" + args + "' failed"};
    }
  }
  std::size_t same = 0, total = 0;
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    ++total;
    const auto other = root / "b" / entry.path().filename();
    if (fs::exists(other) && slurp(entry.path()) == slurp(other)) ++same;
  }
  fs::remove_all(root);
  return {total > 0 && same == total, std::to_string(same) + "/" + std::to_string(total) +
                                          " output files byte-identical"};
}

}  // namespace

int main(int argc, char** argv) {
  const bool strict = argc > 1 && std::string(argv[1]) == "--strict";
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"geometry suite", geometry},
      {"seminorm equivalence", seminorm},
      {"ReLU smoothness control", relu_control},
      {"leaky ReLU smoothness range", leaky_range},
      {"shift sweep figure", sweep_figure},
      {"trajectory figure", trajectory_figure},
      {"finite-difference gradients", gradients},
      {"over-smoothing contrast", oversmoothing},
      {"SCT subspace", sct_range},
      {"determinism", determinism},
  };
  int passed = 0, unexpected = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    Outcome o{false, ""};
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const bool known = kKnownFailures.count(id) > 0;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << criteria[i].first
              << " (" << o.detail << ")" << (!o.pass && known ? " [known failure]" : "") << '\n'
              << std::flush;
    passed += o.pass;
    if (o.pass == known) ++unexpected;
  }
  std::cout << passed << "/" << criteria.size() << " criteria pass\n";
  if (strict) return passed == static_cast<int>(criteria.size()) ? 0 : 1;
  if (unexpected > 0) std::cout << unexpected << " criteria differ from the known-failure list\n";
  return unexpected == 0 ? 0 : 1;
}
