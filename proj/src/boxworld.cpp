#include "vfield/boxworld.hpp"

#include <algorithm>
#include <cstdio>

#include "vfield/errors.hpp"

namespace vfield::env {

std::string to_string(TimeEmbedding mode) {
  return mode == TimeEmbedding::none ? "none" : "normalized_remaining";
}

std::string to_string(RewardMode mode) {
  switch (mode) {
    case RewardMode::vf: return "vf";
    case RewardMode::baseline: return "baseline";
    case RewardMode::task_only: return "task_only";
    case RewardMode::vf_plus_task: return "vf_plus_task";
    case RewardMode::baseline_plus_task: return "baseline_plus_task";
  }
  return "vf";
}

TimeEmbedding parse_time_embedding(std::string_view text) {
  if (text == "none") return TimeEmbedding::none;
  if (text == "normalized_remaining") return TimeEmbedding::normalized_remaining;
  throw InvalidInput("unknown time embedding '" + std::string(text) + "'");
}

RewardMode parse_reward_mode(std::string_view text) {
  for (auto mode : {RewardMode::vf, RewardMode::baseline, RewardMode::task_only,
                    RewardMode::vf_plus_task, RewardMode::baseline_plus_task}) {
    if (text == to_string(mode)) return mode;
  }
  throw InvalidInput("unknown reward mode '" + std::string(text) + "'");
}

bool includes_task_reward(RewardMode mode) {
  return mode == RewardMode::task_only || mode == RewardMode::vf_plus_task ||
         mode == RewardMode::baseline_plus_task;
}

void EnvConfig::validate() const {
  if (goal_center.size() != 2) throw ConfigError("env.goal_center", "must have 2 entries");
  if (!(goal_radius > 0.0)) throw ConfigError("env.goal_radius", "must be > 0");
  if (!(noise_scale >= 0.0)) throw ConfigError("env.noise_scale", "must be >= 0");
  if (horizon < 1) throw ConfigError("env.horizon", "must be >= 1");
  if (!(action_limit > 0.0)) throw ConfigError("env.action_limit", "must be > 0");
  if (start_box.lo.size() != 2 || start_box.hi.size() != 2) {
    throw ConfigError("env.start_box", "must be 2-dimensional");
  }
  if ((start_box.lo.array() < 0.0).any() || (start_box.hi.array() > 1.0).any() ||
      (start_box.hi.array() < start_box.lo.array()).any()) {
    throw ConfigError("env.start_box", "must be a nonempty subset of [0,1]^2");
  }
}

int EnvConfig::observation_dim() const {
  return state_dim() + (time_embedding == TimeEmbedding::normalized_remaining ? 1 : 0);
}

EnvState reset(const EnvConfig& cfg, Rng& rng) {
  return EnvState{cfg.start_box.sample(rng), 0, false};
}

StepResult step(const EnvConfig& cfg, const EnvState& state, const Vec& action, Rng& rng) {
  if (state.done || state.t >= cfg.horizon) throw InvalidState("episode already finished");
  if (action.size() != cfg.action_dim()) throw InvalidInput("action dimension mismatch");

  const Vec clipped = action.cwiseMax(-cfg.action_limit).cwiseMin(cfg.action_limit);
  Vec next = state.pos + clipped;
  if (cfg.noise_scale > 0.0) {
    for (Eigen::Index i = 0; i < next.size(); ++i) next[i] += rng.normal(0.0, cfg.noise_scale);
  }
  next = next.cwiseMax(0.0).cwiseMin(1.0);

  const double before = (state.pos - cfg.goal_center).norm();
  const double after = (next - cfg.goal_center).norm();

  StepResult out;
  out.base_reward = cfg.distance_reward_scale * (before - after) - cfg.step_penalty;
  out.goal_reached = after <= cfg.goal_radius;
  if (out.goal_reached) out.base_reward += cfg.goal_bonus;
  out.next.pos = std::move(next);
  out.next.t = state.t + 1;
  out.done = out.goal_reached || out.next.t == cfg.horizon;
  out.next.done = out.done;
  return out;
}

Vec observe(const EnvConfig& cfg, const EnvState& state) {
  if (cfg.time_embedding == TimeEmbedding::none) return state.pos;
  Vec obs(3);
  obs << state.pos, static_cast<double>(cfg.horizon - state.t) / cfg.horizon;
  return obs;
}

void assign_rewards(RewardMode mode, const shaping::ShapingConfig& shaping_cfg,
                    const oracle::UncertaintyField& field, Transition& tr) {
  const auto terms = shaping::shaping_reward(shaping_cfg, field, tr.s, tr.s_next);
  tr.grad_term = terms.grad_term;
  tr.rot_term = terms.rot_term;
  tr.baseline_term = shaping::baseline_reward(shaping_cfg, field, tr.s_next);
  tr.task_reward = includes_task_reward(mode) ? tr.base_reward : 0.0;
  switch (mode) {
    case RewardMode::vf:
    case RewardMode::vf_plus_task:
      tr.shaped_reward = tr.task_reward + terms.total;
      break;
    case RewardMode::baseline:
    case RewardMode::baseline_plus_task:
      tr.shaped_reward = tr.task_reward + tr.baseline_term;
      break;
    case RewardMode::task_only:
      tr.shaped_reward = tr.task_reward;
      break;
  }
}

Transition make_transition(const EnvConfig& cfg, const oracle::UncertaintyField& field,
                           const shaping::ShapingConfig& shaping_cfg, RewardMode mode,
                           const EnvState& state, const Vec& action, const StepResult& result) {
  Transition tr;
  tr.t = state.t;
  tr.s = state.pos;
  tr.obs = observe(cfg, state);
  tr.a = action.cwiseMax(-cfg.action_limit).cwiseMin(cfg.action_limit);
  tr.s_next = result.next.pos;
  tr.next_obs = observe(cfg, result.next);
  tr.base_reward = result.base_reward;
  tr.u_s = field.value(tr.s);
  tr.u_s_next = field.value(tr.s_next);
  tr.done = result.done;
  tr.goal_reached = result.goal_reached;
  assign_rewards(mode, shaping_cfg, field, tr);
  return tr;
}

Episode run_episode(const EnvConfig& cfg, const oracle::UncertaintyField& field,
                    const shaping::ShapingConfig& shaping_cfg, const PolicyFn& policy,
                    RewardMode reward_mode, Rng& rng) {
  Episode episode;
  episode.reserve(cfg.horizon);
  EnvState state = reset(cfg, rng);
  while (!state.done) {
    const Vec action = policy(observe(cfg, state), rng);
    StepResult result = step(cfg, state, action, rng);
    episode.push_back(make_transition(cfg, field, shaping_cfg, reward_mode, state, action, result));
    state = std::move(result.next);
  }
  return episode;
}

std::string trajectory_csv_row(const Transition& tr) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d",
                tr.t, tr.s[0], tr.s[1], tr.a[0], tr.a[1], tr.s_next[0], tr.s_next[1],
                tr.base_reward, tr.grad_term, tr.rot_term, tr.u_s, tr.done ? 1 : 0);
  return buf;
}

}  // namespace vfield::env
