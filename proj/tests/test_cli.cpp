#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "smoothgcn/cli.hpp"

using namespace smoothgcn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(::testing::TempDir()) / ("smoothgcn_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(SMOOTHGCN_CLI) + ' ' + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

// Well-formedness for the subset of XML the writers emit: balanced tags,
// self-closing leaves, one root, and only the five predefined entities.
bool well_formed_xml(const std::string& s) {
  std::vector<std::string> stack;
  std::size_t i = 0, roots = 0;
  while ((i = s.find('<', i)) != std::string::npos) {
    const auto close = s.find('>', i);
    if (close == std::string::npos) return false;
    const std::string tag = s.substr(i + 1, close - i - 1);
    i = close + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?') continue;
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
      continue;
    }
    if (stack.empty()) ++roots;
    if (tag.back() == '/') continue;
    stack.push_back(tag.substr(0, tag.find_first_of(" \n")));
  }
  for (std::size_t a = s.find('&'); a != std::string::npos; a = s.find('&', a + 1)) {
    const std::string ent = s.substr(a, 6);
    if (ent.rfind("&amp;", 0) && ent.rfind("&lt;", 0) && ent.rfind("&gt;", 0) &&
        ent.rfind("&quot;", 0) && ent.rfind("&apos;", 0))
      return false;
  }
  return stack.empty() && roots == 1;
}

// 6-cycle with constant features: every layer stays in the eigenspace
void write_cycle_dataset(const fs::path& dir) {
  std::ofstream(dir / "g.txt") << "6 6\n0 1\n1 2\n2 3\n3 4\n4 5\n5 0\n";
  std::ofstream f(dir / "x.csv");
  for (int i = 0; i < 6; ++i) f << "0.5,-1.25,2\n";
  std::ofstream(dir / "y.txt") << "0\n1\n0\n1\n0\n1\n";
  std::ofstream(dir / "s.json") << R"({"train": [0, 1], "val": [2, 3], "test": [4, 5]})";
}

std::string cycle_args(const fs::path& dir) {
  return "--graph " + (dir / "g.txt").string() + " --features " + (dir / "x.csv").string() +
         " --labels " + (dir / "y.txt").string() + " --splits " + (dir / "s.json").string();
}

}  // namespace

TEST(CliXml, CheckerRejectsBrokenDocuments) {
  EXPECT_TRUE(well_formed_xml("<?xml?>\n<svg a=\"1\"><g><rect/></g></svg>"));
  EXPECT_FALSE(well_formed_xml("<svg><g></svg>"));
  EXPECT_FALSE(well_formed_xml("<svg></svg><svg></svg>"));
  EXPECT_FALSE(well_formed_xml("<svg>a & b</svg>"));
}

TEST(CliVerify, DefaultRunPassesWithOneEntryPerProperty) {
  const auto dir = scratch("verify");
  ASSERT_EQ(run("verify --seed 0 --jobs 4 --out " + dir.string()), 0);
  const auto report = read_json(dir / "verify.json");
  EXPECT_TRUE(report["passed"].get<bool>());
  ASSERT_EQ(report["properties"].size(), verify_property_names().size());
  for (std::size_t i = 0; i < report["properties"].size(); ++i)
    EXPECT_EQ(report["properties"][i]["name"], verify_property_names()[i]);
}

TEST(CliVerify, InjectedFaultExitsOne) {
  const auto dir = scratch("verify_fault");
  EXPECT_EQ(run("verify --seed 0 --jobs 4 --inject-fault relu_sphere --out " + dir.string()), 1);
  const auto report = read_json(dir / "verify.json");
  EXPECT_FALSE(report["passed"].get<bool>());
  for (const auto& p : report["properties"])
    EXPECT_EQ(p["passed"].get<bool>(), p["name"] != "relu_sphere");
  EXPECT_EQ(run("verify --inject-fault nonexistent --out " + dir.string()), 2);
}

TEST(CliSweep, WritesCurvesAndPlot) {
  const auto dir = scratch("sweep");
  ASSERT_EQ(run("sweep --seed 0 --out " + dir.string()), 0);
  const auto summary = read_json(dir / "sweep.json");
  const double input_dist = summary["input_dist"];
  for (const char* name : {"sweep_relu.csv", "sweep_leaky.csv"}) {
    const auto rows = lines(slurp(dir / name));
    ASSERT_EQ(rows.size(), 602u) << name;
    EXPECT_EQ(rows[0], "alpha,s,dist");
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const double dist = std::stod(rows[i].substr(rows[i].rfind(',') + 1));
      EXPECT_LE(dist, input_dist + 1e-10);
    }
  }
  EXPECT_TRUE(summary["dist_bounded"].get<bool>());
  const std::string svg = slurp(dir / "sweep.svg");
  EXPECT_TRUE(well_formed_xml(svg));
  EXPECT_EQ(count(svg, "<polyline"), 6u);  // ReLU, leaky, input level in each panel
}

TEST(CliSweep, RequiresSeed) { EXPECT_EQ(run("sweep --out " + scratch("sweep_noseed").string()), 2); }

TEST(CliSweep, DegreeScaledGridReachesTheZeroedOutput) {
  const auto dir = scratch("sweep_scaled");
  ASSERT_EQ(run("sweep --seed 0 --degree-scaled --out " + dir.string()), 0);
  const auto summary = read_json(dir / "sweep.json");
  EXPECT_EQ(summary["relu_s_range"][1].get<double>(), 1.0);
  EXPECT_TRUE(summary["s_above_input"].get<bool>());
}

TEST(CliTrajectory, ContractsWithoutShift) {
  const auto dir = scratch("traj");
  ASSERT_EQ(run("trajectory --alpha 0 --out " + dir.string()), 0);
  const auto summary = read_json(dir / "trajectory.json");
  EXPECT_LE(summary["max_contraction_ratio"].get<double>(), 0.6);
  EXPECT_NEAR(summary["second_eigenvalue"].get<double>(), 0.5, 1e-3);
  const auto rows = lines(slurp(dir / "trajectory.csv"));
  EXPECT_EQ(rows.size(), 1u + 20u * 51u);
  // the last point of every trajectory sits on M up to round-off
  for (std::size_t t = 0; t < 20; ++t) {
    const std::string& last = rows[(t + 1) * 51];
    EXPECT_LT(std::stod(last.substr(last.rfind(',') + 1)), 1e-8);
  }
  const std::string svg = slurp(dir / "trajectory.svg");
  EXPECT_TRUE(well_formed_xml(svg));
  EXPECT_EQ(count(svg, "<polyline"), 41u);  // eigenspace line + 20 paths + 20 distance curves
}

TEST(CliTrajectory, RequiresAlpha) {
  EXPECT_EQ(run("trajectory --out " + scratch("traj_noalpha").string()), 2);
}

TEST(CliTrajectory, ConstantShiftKeepsContraction) {
  // the shift lies in M, so it cannot move points away from M
  for (double alpha : {0.5, 1.0, -1.0}) {
    const auto r = cli::trajectory_experiment(alpha);
    EXPECT_LE(cli::max_contraction_ratio(r), 0.6) << alpha;
  }
}

TEST(CliTrainHeatmap, SyntheticRunThenHeatmap) {
  const auto dir = scratch("train");
  std::ofstream(dir / "c.json") << R"({"model": {"kind": "gcn", "layers": 4, "hidden_dim": 6},
                                      "train": {"max_epochs": 60, "patience": 20}})";
  ASSERT_EQ(run("train --synthetic --seed 1 --config " + (dir / "c.json").string() + " --out " +
                dir.string()),
            0);
  const auto result = read_json(dir / "run.json");
  EXPECT_GE(result["accuracy"].get<double>(), 0.0);
  EXPECT_LE(result["accuracy"].get<double>(), 1.0);
  EXPECT_EQ(result["smoothness"].size(), 5u);

  const auto hm = scratch("heatmap");
  ASSERT_EQ(run("heatmap --synthetic --seed 1 --model " + (dir / "model.json").string() +
                " --out " + hm.string()),
            0);
  const auto rows = lines(slurp(hm / "heatmap.csv"));
  ASSERT_EQ(rows.size(), 1u + 5u);  // header + (L+1) layers
  EXPECT_EQ(rows[0], "layer,s0,s1,s2,s3,s4,s5");
  const std::string svg = slurp(hm / "heatmap.svg");
  EXPECT_TRUE(well_formed_xml(svg));
}

TEST(CliTrainHeatmap, ConstantFeaturesOnARegularGraphGiveAllOnes) {
  const auto dir = scratch("cycle");
  write_cycle_dataset(dir);
  std::ofstream(dir / "c.json") << R"({"model": {"layers": 3, "hidden_dim": 4},
                                      "train": {"max_epochs": 5, "patience": 5}})";
  ASSERT_EQ(run("train --seed 2 " + cycle_args(dir) + " --config " + (dir / "c.json").string() +
                " --out " + dir.string()),
            0);
  ASSERT_EQ(run("heatmap " + cycle_args(dir) + " --model " + (dir / "model.json").string() +
                " --out " + dir.string()),
            0);
  const auto rows = lines(slurp(dir / "heatmap.csv"));
  ASSERT_EQ(rows.size(), 5u);
  for (std::size_t l = 1; l < rows.size(); ++l) {
    std::istringstream row(rows[l]);
    std::string cell;
    std::getline(row, cell, ',');
    while (std::getline(row, cell, ',')) EXPECT_NEAR(std::stod(cell), 1.0, 1e-12) << rows[l];
  }
}

TEST(CliTrainHeatmap, InputErrorsExitTwo) {
  const auto dir = scratch("inputs");
  write_cycle_dataset(dir);
  EXPECT_EQ(run("heatmap " + cycle_args(dir) + " --out " + dir.string()), 2);
  EXPECT_EQ(run("heatmap " + cycle_args(dir) + " --model " + (dir / "none.json").string() +
                " --out " + dir.string()),
            2);
  EXPECT_EQ(run("train --out " + dir.string()), 2);
  std::ofstream(dir / "bad.txt") << "6 2\n0 1\n";
  EXPECT_EQ(run("train --graph " + (dir / "bad.txt").string() + " --features " +
                (dir / "x.csv").string() + " --labels " + (dir / "y.txt").string() +
                " --splits " + (dir / "s.json").string() + " --out " + dir.string()),
            2);
  std::ofstream(dir / "bad.json") << R"({"train": {"max_epochs": 5, "patience": 50}})";
  EXPECT_EQ(run("train --seed 0 " + cycle_args(dir) + " --config " + (dir / "bad.json").string() +
                " --out " + dir.string()),
            2);
  EXPECT_EQ(run("frobnicate"), 2);
}

TEST(CliTtest, IdenticalListsGiveZeroAndReportStats) {
  const auto dir = scratch("ttest");
  std::ofstream(dir / "a.txt") << "0.81\n0.79\n0.84\n0.80\n";
  std::ofstream(dir / "b.txt") << "0.70\n0.72\n0.69\n0.75\n";
  ASSERT_EQ(run("ttest --a " + (dir / "a.txt").string() + " --b " + (dir / "a.txt").string() +
                " --out " + dir.string()),
            0);
  auto j = read_json(dir / "ttest.json");
  EXPECT_EQ(j["t"].get<double>(), 0.0);
  EXPECT_EQ(j["n"].get<int>(), 4);
  ASSERT_EQ(j["means"].size(), 2u);
  ASSERT_EQ(j["stds"].size(), 2u);
  ASSERT_EQ(run("ttest --a " + (dir / "a.txt").string() + " --b " + (dir / "b.txt").string() +
                " --out " + dir.string()),
            0);
  j = read_json(dir / "ttest.json");
  const auto sa = sample_stats(std::vector{0.81, 0.79, 0.84, 0.80});
  const auto sb = sample_stats(std::vector{0.70, 0.72, 0.69, 0.75});
  EXPECT_DOUBLE_EQ(j["t"].get<double>(), t_score(sa.mean, sa.std, sb.mean, sb.std, 4));
  std::ofstream(dir / "short.txt") << "0.5\n";
  EXPECT_EQ(run("ttest --a " + (dir / "a.txt").string() + " --b " + (dir / "short.txt").string() +
                " --out " + dir.string()),
            2);
}

TEST(CliDeterminism, RepeatedRunsAreByteIdentical) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  for (const auto& dir : {a, b}) {
    ASSERT_EQ(run("sweep --seed 7 --out " + dir.string()), 0);
    ASSERT_EQ(run("trajectory --alpha 0.5 --out " + dir.string()), 0);
    ASSERT_EQ(run("train --synthetic --seed 7 --out " + dir.string()), 0);
  }
  for (const char* f : {"sweep_relu.csv", "sweep_leaky.csv", "sweep.json", "sweep.svg",
                        "trajectory.csv", "trajectory.svg", "run.json", "model.json"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}
