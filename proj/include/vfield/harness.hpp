#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vfield/config.hpp"
#include "vfield/diagnostics.hpp"

namespace vfield::harness {

namespace fs = std::filesystem;
using Overrides = std::vector<std::pair<std::string, std::string>>;

inline constexpr const char* kArtifactVersion = "0.1.0";
inline constexpr const char* kOutputRootEnv = "VFIELD_OUTPUT_ROOT";

/// Exit statuses shared by every subcommand.
enum ExitCode : int { kOk = 0, kCheckFailed = 1, kBadInput = 2, kDiverged = 3 };

/// output_dir, placed under $VFIELD_OUTPUT_ROOT when that is set and the
/// path is relative.
fs::path resolve_output_dir(const std::string& output_dir);

/// Final evaluation of one seed.
struct SeedOutcome {
  std::uint64_t seed = 0;
  diag::DiagnosticsReport report;
  diag::ConcentrationReport concentration;
};

/// Rolls out n episodes of policy and returns them.
std::vector<env::Episode> rollout(const config::RunConfig& cfg, const env::PolicyFn& policy,
                                  int n_episodes, Rng& rng);

/// Trains one seed into dir: metrics.jsonl, checkpoint.vfck,
/// trajectories.csv, diagnostics.json, grid.txt. Throws TrainingDivergence
/// with the last interval's checkpoint left in place.
SeedOutcome run_seed(const config::RunConfig& cfg, std::uint64_t seed, const fs::path& dir,
                     const std::string& config_hash);

/// Evaluates a frozen learner: episodes, report and concentration check.
SeedOutcome evaluate_bundle(const config::RunConfig& cfg, agent::AgentBundle& bundle,
                            std::uint64_t seed, int n_episodes, std::vector<env::Episode>* episodes);

/// Writes trajectories.csv, diagnostics.json and grid.txt for an evaluation.
void write_evaluation(const fs::path& dir, const config::RunConfig& cfg,
                      const std::string& config_hash, const SeedOutcome& outcome,
                      const std::vector<env::Episode>& episodes);

/// Medians over seeds plus per-seed values, as stored in summary.json.
nlohmann::json summarize(const config::RunConfig& cfg, const std::string& config_hash,
                         const std::vector<SeedOutcome>& outcomes);

/// Trains every seed of cfg and writes the run record. Returns an exit code.
int run_experiment(const config::RunConfig& cfg, std::ostream& out, std::ostream& err);

struct CheckResult {
  std::string name;
  bool passed = false;
  bool vacuous = false;
  std::string detail;
};

/// The theorem-check suite behind `verify`.
std::vector<CheckResult> verification_checks(const config::RunConfig& cfg);

int cli_train(const fs::path& config_path, const Overrides& overrides, std::ostream& out,
              std::ostream& err);
/// Empty checkpoint means seed_<first seed>/checkpoint.vfck inside run_dir.
int cli_eval(const fs::path& run_dir, const fs::path& checkpoint, int n_episodes,
             std::uint64_t seed, std::ostream& out, std::ostream& err);
int cli_verify(const fs::path& config_path, const Overrides& overrides, std::ostream& out,
               std::ostream& err);
/// Empty out_dir means <run_a>/compare.
int cli_compare(const fs::path& run_a, const fs::path& run_b, const fs::path& out_dir,
                std::ostream& out, std::ostream& err);
int cli_sweep(const fs::path& config_path, const std::string& axis,
              const std::vector<std::string>& values, const Overrides& overrides,
              std::ostream& out, std::ostream& err);

}  // namespace vfield::harness
