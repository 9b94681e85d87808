// Command-line front end: train, eval, verify, compare, sweep.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vfield/errors.hpp"
#include "vfield/harness.hpp"

namespace {

using vfield::harness::Overrides;

// Extra arguments of the form --a.b=value become config overrides.
bool collect_overrides(const CLI::App& cmd, Overrides& out) {
  try {
    out = vfield::config::parse_override_args(cmd.remaining());
    return true;
  } catch (const vfield::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return false;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vector-field reward shaping workbench"};
  app.require_subcommand(1);

  std::string config_path;
  std::string run_dir, checkpoint, run_a, run_b, out_dir, axis;
  std::vector<std::string> values;
  int episodes = 32;
  std::uint64_t seed = 0;

  auto* train = app.add_subcommand("train", "train every seed of a config");
  train->add_option("config", config_path, "config file")->required();
  train->allow_extras();

  auto* eval = app.add_subcommand("eval", "evaluate a frozen checkpoint");
  eval->add_option("run_dir", run_dir, "run directory written by train")->required();
  eval->add_option("--checkpoint", checkpoint, "checkpoint file (default: first seed's)");
  eval->add_option("--episodes", episodes, "number of evaluation episodes")->capture_default_str();
  eval->add_option("--seed", seed, "evaluation seed")->capture_default_str();

  auto* verify = app.add_subcommand("verify", "run the theorem-check suite");
  verify->add_option("config", config_path, "config file")->required();
  verify->allow_extras();

  auto* compare = app.add_subcommand("compare", "compare two finished runs");
  compare->add_option("run_a", run_a, "first run directory")->required();
  compare->add_option("run_b", run_b, "second run directory")->required();
  compare->add_option("--out", out_dir, "output directory (default: <run_a>/compare)");

  auto* sweep = app.add_subcommand("sweep", "train once per value of one config field");
  sweep->add_option("config", config_path, "config file")->required();
  sweep->add_option("--axis", axis, "dotted config path, e.g. shaping.c_rot")->required();
  sweep->add_option("--values", values, "comma-separated values")->delimiter(',');
  sweep->allow_extras();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : vfield::harness::kBadInput;
  }

  Overrides overrides;
  if (*train) {
    if (!collect_overrides(*train, overrides)) return vfield::harness::kBadInput;
    return vfield::harness::cli_train(config_path, overrides, std::cout, std::cerr);
  }
  if (*eval) {
    return vfield::harness::cli_eval(run_dir, checkpoint, episodes, seed, std::cout, std::cerr);
  }
  if (*verify) {
    if (!collect_overrides(*verify, overrides)) return vfield::harness::kBadInput;
    return vfield::harness::cli_verify(config_path, overrides, std::cout, std::cerr);
  }
  if (*compare) {
    return vfield::harness::cli_compare(run_a, run_b, out_dir, std::cout, std::cerr);
  }
  if (!collect_overrides(*sweep, overrides)) return vfield::harness::kBadInput;
  return vfield::harness::cli_sweep(config_path, axis, values, overrides, std::cout, std::cerr);
}
