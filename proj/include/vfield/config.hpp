#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vfield/boxworld.hpp"
#include "vfield/diagnostics.hpp"
#include "vfield/sac.hpp"

namespace vfield::config {

using nlohmann::json;

struct FieldSpec {
  int dimension = 2;
  std::vector<oracle::GaussianBump> bumps;
};

/// Shaping parameters as written in a config file. W is given by an
/// orientation sign (2-d), a strictly-upper-triangular list, or a raw matrix.
/// The raw matrix is taken verbatim, skew or not.
struct ShapingSpec {
  double u_mid = 0.5;
  int w_orientation = 1;
  std::vector<double> w_upper;
  std::optional<oracle::Mat> w_matrix;
  double c_grad = 1.0;
  double c_rot = 1.0;
  double lambda_unsafe = 20.0;
  double eps_unsafe = 0.1;
};

struct DiagnosticsSpec {
  /// Band half-width; unset means 0.1 times the smallest bump amplitude.
  std::optional<double> delta_band;
  int grid_resolution = 20;
  int coverage_bins = 16;
  /// Episodes kept in trajectory files.
  int trajectory_episodes = 10;
  /// Short stochastic evaluation logged with every metrics record.
  int interval_eval_episodes = 4;
};

struct RunConfig {
  env::EnvConfig env;
  FieldSpec field;
  ShapingSpec shaping;
  agent::TrainConfig train;
  env::RewardMode reward_mode = env::RewardMode::vf;
  DiagnosticsSpec diagnostics;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "runs/default";

  oracle::UncertaintyField build_field() const;
  shaping::ShapingConfig build_shaping() const;
  diag::BandSpec band() const;
  double delta_band() const;

  /// Cross-field checks on top of the per-section ones. Throws ConfigError.
  void validate() const;
};

/// Full default document; every accepted key appears here.
json default_document();

/// Strict conversion: unknown keys, wrong types and invalid values raise
/// ConfigError with the dotted path of the field.
RunConfig from_json(const json& doc);
json to_json(const RunConfig& cfg);

/// Recursively overlays `patch` onto `base`. Keys absent from base are
/// rejected, except below a key whose default is null.
void merge_into(json& base, const json& patch, const std::string& prefix = "");

/// Sets a dotted path, e.g. ("shaping.u_mid", "0.4"). The value is parsed
/// as JSON, falling back to a plain string.
void apply_override(json& doc, std::string_view path, std::string_view value);

/// Splits "--a.b=v" style arguments into (path, value) pairs.
std::vector<std::pair<std::string, std::string>> parse_override_args(
    const std::vector<std::string>& args);

/// Defaults overlaid with a config file and overrides, before typing.
json load_document(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, std::string>>& overrides = {});

/// Reads a config file, overlays it on the defaults, applies overrides and
/// validates the result.
RunConfig load(const std::filesystem::path& path,
               const std::vector<std::pair<std::string, std::string>>& overrides = {});
RunConfig parse_text(std::string_view text,
                     const std::vector<std::pair<std::string, std::string>>& overrides = {});

/// Sorted-key, fully populated form. Parsing it back gives the same bytes.
std::string canonical(const RunConfig& cfg);

/// Fingerprint of the canonical form without output_dir, so the same
/// experiment written to different places shares a hash.
std::string config_hash(const RunConfig& cfg);

}  // namespace vfield::config
