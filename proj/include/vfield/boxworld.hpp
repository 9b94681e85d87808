#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "vfield/oracle.hpp"
#include "vfield/rng.hpp"
#include "vfield/shaping.hpp"

namespace vfield::env {

using oracle::Vec;

enum class TimeEmbedding { none, normalized_remaining };

/// How the per-step training reward is assembled from the task reward and
/// the exploration term.
enum class RewardMode { vf, baseline, task_only, vf_plus_task, baseline_plus_task };

std::string to_string(TimeEmbedding mode);
std::string to_string(RewardMode mode);
TimeEmbedding parse_time_embedding(std::string_view text);
RewardMode parse_reward_mode(std::string_view text);

bool includes_task_reward(RewardMode mode);

/// Continuous 2-d box world on [0,1]^2 with a circular goal region.
struct EnvConfig {
  Vec goal_center = Vec::Constant(2, 0.9);
  double goal_radius = 0.05;
  double noise_scale = 0.01;  // per-component standard deviation
  int horizon = 60;
  oracle::Box start_box{Vec::Constant(2, 0.05), Vec::Constant(2, 0.2)};
  double step_penalty = 0.01;
  double distance_reward_scale = 10.0;
  double goal_bonus = 20.0;
  double action_limit = 0.1;
  TimeEmbedding time_embedding = TimeEmbedding::none;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  int state_dim() const { return 2; }
  int action_dim() const { return 2; }
  int observation_dim() const;
};

struct EnvState {
  Vec pos;
  int t = 0;
  bool done = false;
};

struct StepResult {
  EnvState next;
  double base_reward = 0.0;
  bool done = false;
  bool goal_reached = false;
};

/// One recorded step, with every reward component kept for diagnostics.
struct Transition {
  int t = 0;
  Vec s;
  Vec obs;
  Vec a;
  Vec s_next;
  Vec next_obs;
  double base_reward = 0.0;    // raw environment reward
  double task_reward = 0.0;    // base_reward if the mode includes it, else 0
  double shaped_reward = 0.0;  // the reward the learner sees
  double grad_term = 0.0;
  double rot_term = 0.0;
  double baseline_term = 0.0;
  double u_s = 0.0;
  double u_s_next = 0.0;
  bool done = false;
  bool goal_reached = false;
  /// Episode ended at the horizon rather than at the goal.
  bool truncated() const { return done && !goal_reached; }
};

using Episode = std::vector<Transition>;
using PolicyFn = std::function<Vec(const Vec& obs, Rng& rng)>;

EnvState reset(const EnvConfig& cfg, Rng& rng);

StepResult step(const EnvConfig& cfg, const EnvState& state, const Vec& action, Rng& rng);

Vec observe(const EnvConfig& cfg, const EnvState& state);

/// Assembles the training reward for one step under a reward mode and fills
/// the reward fields of a transition.
void assign_rewards(RewardMode mode, const shaping::ShapingConfig& shaping_cfg,
                    const oracle::UncertaintyField& field, Transition& tr);

/// Rolls out one episode until done.
Episode run_episode(const EnvConfig& cfg, const oracle::UncertaintyField& field,
                    const shaping::ShapingConfig& shaping_cfg, const PolicyFn& policy,
                    RewardMode reward_mode, Rng& rng);

/// Builds a transition record for s -> result without touching the rng.
Transition make_transition(const EnvConfig& cfg, const oracle::UncertaintyField& field,
                           const shaping::ShapingConfig& shaping_cfg, RewardMode mode,
                           const EnvState& state, const Vec& action, const StepResult& result);

/// Trajectory CSV columns, in order.
inline constexpr std::string_view kTrajectoryCsvHeader =
    "t,x,y,ax,ay,x_next,y_next,base_r,grad_term,rot_term,u_s,done";

std::string trajectory_csv_row(const Transition& tr);

}  // namespace vfield::env
