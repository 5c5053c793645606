#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "smoothgcn/cli.hpp"

int main(int argc, char** argv) {
  using namespace smoothgcn::cli;
  CLI::App app{"smoothness analysis and control for graph convolutional networks"};
  app.require_subcommand(1, 1);

  CommandOptions opt;
  std::string out = ".";
  std::uint64_t seed = 0;
  double alpha = 0.0;

  const auto common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "64-bit seed");
    cmd->add_option("--out", out, "output directory")->capture_default_str();
  };
  const auto dataset = [&](CLI::App* cmd) {
    cmd->add_option("--graph", opt.graph, "edge list: 'n e' then one 'u v' per line");
    cmd->add_option("--features", opt.features, "CSV, one row per node");
    cmd->add_option("--labels", opt.labels, "one integer label per line");
    cmd->add_option("--splits", opt.splits, "JSON with train/val/test index lists");
    cmd->add_flag("--synthetic", opt.synthetic, "use the seeded stochastic block model instead");
  };

  auto* verify = app.add_subcommand("verify", "run every property suite");
  common(verify);
  verify->add_option("--jobs", opt.jobs, "worker threads")->check(CLI::PositiveNumber);
  verify->add_option("--inject-fault", opt.inject_fault, "corrupt the named property (test hook)");

  auto* sweep = app.add_subcommand("sweep", "shift sweep on the synthetic 100-node graph");
  common(sweep);
  sweep->add_option("--jobs", opt.jobs, "accepted for uniformity; the sweep is serial");
  sweep->add_flag("--degree-scaled", opt.degree_scaled,
                  "multiply the alpha grid by sqrt(sum of augmented degrees)");

  auto* trajectory = app.add_subcommand("trajectory", "two-node feature trajectories");
  common(trajectory);
  trajectory->add_option("--alpha", alpha, "shift along the eigenvector")->required();

  auto* heatmap = app.add_subcommand("heatmap", "per-layer, per-dimension smoothness of a trained model");
  common(heatmap);
  dataset(heatmap);
  heatmap->add_option("--model", opt.model, "model JSON written by train");

  auto* train = app.add_subcommand("train", "train one model and report");
  common(train);
  dataset(train);
  train->add_option("--config", opt.config, "JSON with optional 'model' and 'train' sections");

  auto* ttest = app.add_subcommand("ttest", "t-score between two accuracy lists");
  common(ttest);
  ttest->add_option("--a", opt.list_a, "first accuracy list")->required();
  ttest->add_option("--b", opt.list_b, "second accuracy list")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInputError;
  }

  CLI::App* cmd = app.get_subcommands().front();
  opt.out = out;
  const auto given = [&](const char* name) {
    const CLI::Option* o = cmd->get_option_no_throw(name);
    return o != nullptr && o->count() > 0;
  };
  if (given("--seed")) opt.seed = seed;
  if (given("--alpha")) opt.alpha = alpha;
  return run_command(cmd->get_name(), opt, std::cout, std::cerr);
}
