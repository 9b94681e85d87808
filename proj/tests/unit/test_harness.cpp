#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "vfield/harness.hpp"

using namespace vfield;
using namespace vfield::harness;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("vfield_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A training run small enough for a unit test.
fs::path tiny_config(const fs::path& dir) {
  const json doc = {{"train",
                     {{"total_env_steps", 240},
                      {"warmup_steps", 60},
                      {"metrics_interval", 120},
                      {"batch_size", 16},
                      {"hidden_width", 8},
                      {"eval_episodes", 2}}},
                    {"diagnostics", {{"interval_eval_episodes", 1}, {"trajectory_episodes", 1}}},
                    {"seeds", {0}},
                    {"output_dir", (dir / "run").string()}};
  const fs::path path = dir / "tiny.json";
  std::ofstream(path) << doc.dump(2);
  return path;
}

}  // namespace

TEST_CASE("missing or malformed configs exit with status 2") {
  std::ostringstream out, err;
  CHECK(cli_train("/nonexistent/config.json", {}, out, err) == kBadInput);
  CHECK(cli_verify("/nonexistent/config.json", {}, out, err) == kBadInput);
  const fs::path dir = scratch("bad");
  CHECK(cli_train(tiny_config(dir), {{"train.gamma", "5"}}, out, err) == kBadInput);
  CHECK(err.str().find("train.gamma") != std::string::npos);
}

TEST_CASE("verify passes on defaults and catches a non-skew W") {
  const fs::path dir = scratch("verify");
  const fs::path cfg = tiny_config(dir);
  std::ostringstream out, err;
  CHECK(cli_verify(cfg, {}, out, err) == kOk);
  CHECK(out.str().find("FAIL") == std::string::npos);
  std::ostringstream out2;
  CHECK(cli_verify(cfg, {{"shaping.w.matrix", "[[0,1],[1,0]]"}}, out2, err) == kCheckFailed);
  CHECK(out2.str().find("FAIL skew_orthogonality") != std::string::npos);
  std::ostringstream out3;
  CHECK(cli_verify(cfg, {{"field.bumps", "[]"}}, out3, err) == kOk);
  CHECK(out3.str().find("[vacuous]") != std::string::npos);
}

TEST_CASE("train writes the run record and is reproducible") {
  const fs::path dir = scratch("train");
  const fs::path cfg = tiny_config(dir);
  std::ostringstream out, err;
  REQUIRE(cli_train(cfg, {}, out, err) == kOk);
  REQUIRE(cli_train(cfg, {{"output_dir", (dir / "again").string()}}, out, err) == kOk);
  const fs::path run = dir / "run";
  for (const char* f : {"config.json", "config.hash", "manifest.json", "summary.json", "grid.txt",
                        "seed_0/metrics.jsonl", "seed_0/checkpoint.vfck", "seed_0/trajectories.csv",
                        "seed_0/diagnostics.json", "seed_0/grid.txt"}) {
    CAPTURE(f);
    CHECK(fs::exists(run / f));
  }
  const std::string metrics = slurp(run / "seed_0/metrics.jsonl");
  CHECK(metrics == slurp(dir / "again/seed_0/metrics.jsonl"));
  const std::string hash = slurp(run / "config.hash");
  CHECK(metrics.find(hash.substr(0, 16)) != std::string::npos);
  std::istringstream lines(metrics);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) ++n;
  CHECK(n == 3);  // header plus one record per interval
  const json summary = json::parse(slurp(run / "summary.json"));
  CHECK(summary["seeds"] == json::array({0}));

  SUBCASE("eval with zero episodes") {
    std::ostringstream o, e;
    CHECK(cli_eval(run, {}, 0, 7, o, e) == kOk);
    CHECK(fs::exists(run / "eval/seed_0_n0_seed7/diagnostics.json"));
    CHECK(cli_eval(run, run / "missing.vfck", 1, 7, o, e) == kBadInput);
    CHECK(cli_eval(run, {}, -1, 7, o, e) == kBadInput);
  }
  SUBCASE("compare a run with itself") {
    std::ostringstream o, e;
    CHECK(cli_compare(run, run, dir / "cmp", o, e) == kOk);
    CHECK(fs::exists(dir / "cmp/comparison.json"));
    CHECK(e.str().find("warning") == std::string::npos);
    CHECK(cli_compare(run, dir / "nothing", dir / "cmp2", o, e) == kBadInput);
  }
  SUBCASE("sweeps") {
    std::ostringstream o, e;
    CHECK(cli_sweep(cfg, "shaping.u_mid", {}, {}, o, e) == kOk);
    CHECK(!fs::exists(run / "sweep"));
    CHECK(cli_sweep(cfg, "field.bumps", {"[]"}, {}, o, e) == kBadInput);
    CHECK(cli_sweep(cfg, "shaping.nope", {"1"}, {}, o, e) == kBadInput);
    REQUIRE(cli_sweep(cfg, "shaping.u_mid", {"0.5"}, {}, o, e) == kOk);
    const json s = json::parse(slurp(run / "sweep/sweep_summary.json"));
    CHECK(s["runs"][0]["config_hash"].get<std::string>() == hash.substr(0, 16));
  }
}
