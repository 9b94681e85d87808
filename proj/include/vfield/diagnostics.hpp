#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vfield/boxworld.hpp"

namespace vfield::diag {

using env::Episode;
using env::Transition;
using oracle::UncertaintyField;
using oracle::Vec;

/// Band around the target level used as the practical stand-in for the
/// (measure-zero) level set.
struct BandSpec {
  double u_mid = 0.5;
  double delta_band = 0.1;
  double eps_unsafe = 0.1;

  void validate() const;
  bool contains(double u) const { return std::abs(u - u_mid) < delta_band; }
};

/// A statistic together with how it was obtained. `flagged` marks a
/// degenerate input (nothing to average over, excluded samples).
struct Measurement {
  double value = 0.0;
  std::size_t used = 0;
  std::size_t excluded = 0;
  bool flagged = false;
  std::string note;
};

/// Mean projection of in-band steps onto the unit tangent W grad U / |W grad U|.
Measurement tangential_speed(const UncertaintyField& field, const shaping::SkewGenerator& w,
                             const BandSpec& band, std::span<const Transition> transitions);

/// Fraction of transitions with U(s') > u_mid + eps_unsafe.
Measurement unsafe_rate(const UncertaintyField& field, const BandSpec& band,
                        std::span<const Transition> transitions);

/// Fraction of n_bins equal angular sectors about the single bump's center
/// that contain at least one in-band state. Multi-bump fields must use
/// angular_coverage_for_bump.
Measurement angular_coverage(const UncertaintyField& field, const BandSpec& band,
                             std::span<const Vec> states, int n_bins = 16);

/// Coverage about one bump, counting in-band states whose nearest bump it is.
Measurement angular_coverage_for_bump(const UncertaintyField& field, const BandSpec& band,
                                      std::size_t bump, std::span<const Vec> states,
                                      int n_bins = 16);

/// Fraction of states with |U(s) - u_mid| >= eps.
Measurement off_manifold_mass(const UncertaintyField& field, double u_mid,
                              std::span<const Vec> states, double eps);

/// Mean over transitions of beta(U(s)) <W grad U(s), ds>.
Measurement no_sticking_value(const UncertaintyField& field, const shaping::ShapingConfig& cfg,
                              std::span<const Transition> transitions);

enum class BoundStatus { pass, fail, inconclusive };
std::string to_string(BoundStatus status);

/// Both sides of the near-manifold concentration bound evaluated with
/// empirical surrogates.
struct ConcentrationReport {
  double eps = 0.0;
  double measured_mass = 0.0;
  double bound = 0.0;
  double base_reward_gap = 0.0;   // mean task reward (run) - mean task reward (reference)
  double v0_hat = 0.0;            // in-band mean beta <W grad U, ds> of the reference
  double vmax_hat = 0.0;          // max |<W grad U, ds>| seen in either run
  double taylor_error_run = 0.0;  // (L/2) mean |ds|^2
  double taylor_error_reference = 0.0;
  double b_eps = 0.0;
  double curvature = 0.0;
  bool vacuous = false;  // bound >= 1 or infinite
  BoundStatus status = BoundStatus::inconclusive;
};

ConcentrationReport concentration_bound_report(const UncertaintyField& field,
                                               const shaping::ShapingConfig& cfg,
                                               std::span<const Transition> run,
                                               std::span<const Transition> reference, double eps,
                                               double curvature);

/// Visit counts over [0,1]^2, row-major with row = y cell, column = x cell.
struct VisitationGrid {
  int resolution = 0;
  std::vector<std::int64_t> counts;

  std::int64_t at(int row, int col) const { return counts[static_cast<std::size_t>(row * resolution + col)]; }
  std::int64_t total() const;
  void merge(const VisitationGrid& other);
  /// "resolution N" header, optional comment lines, then N rows of counts.
  std::string to_text(const std::string& config_hash = "") const;
};

VisitationGrid visitation_grid(std::span<const Vec> states, int resolution);

/// Every position an episode occupies: s_0 and each s_next.
std::vector<Vec> visited_states(std::span<const Episode> episodes);
std::vector<Transition> flatten(std::span<const Episode> episodes);

/// Tangent-following controller: moves along W grad U while correcting U
/// toward u_mid with a Newton step along grad U. Serves as the on-manifold
/// reference policy. The field must outlive the returned function.
struct ReferenceGains {
  double tangential_speed = 0.06;
  double correction_gain = 1.0;
};

env::PolicyFn reference_controller(const UncertaintyField& field, const shaping::ShapingConfig& cfg,
                                   const env::EnvConfig& env_cfg, ReferenceGains gains = {});

/// Closed polyline on the u_mid level set around one bump, found by
/// bisection along n rays from its center. Counter-clockwise when
/// counter_clockwise is set; the last point repeats the first. Empty if the
/// bump's center does not rise above u_mid.
std::vector<Vec> level_set_loop(const UncertaintyField& field, double u_mid, std::size_t bump,
                                int n, bool counter_clockwise = true);

struct EpisodeStats {
  bool goal_reached = false;
  int length = 0;
  /// In-band steps before the goal (or the whole episode if never reached).
  int in_band_steps = 0;
  std::vector<int> in_band_steps_per_bump;
};

EpisodeStats episode_stats(const UncertaintyField& field, const BandSpec& band,
                           const Episode& episode);

struct DiagnosticsReport {
  Measurement tangential_speed;
  Measurement unsafe_rate;
  Measurement angular_coverage;  // single bump: about it; several: mean of per-bump values
  std::vector<double> angular_coverage_per_bump;
  Measurement off_manifold_mass;
  Measurement no_sticking_value;
  double goal_success_rate = 0.0;
  double mean_episode_length = 0.0;
  /// Fraction of episodes with at least kInBandSteps in-band steps before the goal.
  double in_band_episode_fraction = 0.0;
  std::vector<double> in_band_episode_fraction_per_bump;
  std::size_t episodes = 0;
  std::size_t transitions = 0;
  VisitationGrid visitation_grid;
};

inline constexpr int kInBandSteps = 10;

DiagnosticsReport evaluate(const UncertaintyField& field, const shaping::ShapingConfig& cfg,
                           const BandSpec& band, std::span<const Episode> episodes,
                           int grid_resolution = 20);

nlohmann::json to_json(const Measurement& m);
nlohmann::json to_json(const DiagnosticsReport& report);
nlohmann::json to_json(const ConcentrationReport& report);

}  // namespace vfield::diag
