#include "vfield/sac.hpp"

#include <cmath>
#include <sstream>

#include "vfield/errors.hpp"

namespace vfield::agent {

namespace {

enum StreamTag : std::uint64_t { kInit = 1, kEnv = 2, kAction = 3, kUpdate = 4 };

std::vector<int> critic_sizes(const BundleShape& shape, const TrainConfig& cfg) {
  std::vector<int> sizes{shape.obs_dim + shape.action_dim};
  for (int i = 0; i < cfg.hidden_layers; ++i) sizes.push_back(cfg.hidden_width);
  sizes.push_back(1);
  return sizes;
}

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

void require_finite(double value, const char* what) {
  if (!std::isfinite(value)) {
    throw TrainingDivergence(std::string("non-finite ") + what + " (" + std::to_string(value) + ")");
  }
}

void require_finite(std::span<nn::Parameter* const> params, const char* what) {
  if (!nn::all_finite(params)) throw TrainingDivergence(std::string("non-finite ") + what + " gradient");
}

}  // namespace

void TrainConfig::validate() const {
  auto positive = [](double v, const char* field) {
    if (!(v > 0.0)) throw ConfigError(field, "must be > 0");
  };
  positive(actor_lr, "train.actor_lr");
  positive(critic_lr, "train.critic_lr");
  positive(alpha_lr, "train.alpha_lr");
  positive(max_grad_norm, "train.max_grad_norm");
  positive(initial_alpha, "train.initial_alpha");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("train.gamma", "must be in (0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("train.tau", "must be in (0, 1]");
  if (batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
  if (buffer_capacity < batch_size) throw ConfigError("train.buffer_capacity", "must be >= batch_size");
  if (total_env_steps < 0) throw ConfigError("train.total_env_steps", "must be >= 0");
  if (updates_per_step < 0) throw ConfigError("train.updates_per_step", "must be >= 0");
  if (warmup_steps < 0) throw ConfigError("train.warmup_steps", "must be >= 0");
  if (metrics_interval < 1) throw ConfigError("train.metrics_interval", "must be >= 1");
  if (eval_episodes < 0) throw ConfigError("train.eval_episodes", "must be >= 0");
  if (hidden_width < 1) throw ConfigError("train.hidden_width", "must be >= 1");
  if (hidden_layers < 0) throw ConfigError("train.hidden_layers", "must be >= 0");
  if (flow_blocks < 1) throw ConfigError("train.flow_blocks", "must be >= 1");
}

// ---------------------------------------------------------------------------
// ReplayBuffer

ReplayBuffer::ReplayBuffer(std::size_t capacity, int obs_dim, int action_dim)
    : capacity_(capacity), obs_dim_(obs_dim), action_dim_(action_dim) {
  if (capacity_ == 0) throw InvalidInput("replay capacity must be positive");
}

void ReplayBuffer::add(const Vec& obs, const Vec& action, double reward, const Vec& next_obs,
                       bool terminal) {
  if (obs.size() != obs_dim_ || next_obs.size() != obs_dim_ || action.size() != action_dim_) {
    throw InvalidInput("replay record shape mismatch");
  }
  auto put = [this](std::vector<double>& store, const double* src, int width) {
    if (size_ < capacity_) {
      store.insert(store.end(), src, src + width);
    } else {
      std::copy(src, src + width, store.begin() + static_cast<std::ptrdiff_t>(next_ * width));
    }
  };
  put(obs_, obs.data(), obs_dim_);
  put(actions_, action.data(), action_dim_);
  put(rewards_, &reward, 1);
  put(next_obs_, next_obs.data(), obs_dim_);
  const double term = terminal ? 1.0 : 0.0;
  put(terminal_, &term, 1);
  next_ = (next_ + 1) % capacity_;
  if (size_ < capacity_) ++size_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (n > size_) throw InvalidInput("cannot sample more distinct entries than stored");
  // Floyd's algorithm: n distinct draws in O(n^2) without touching the whole buffer
  std::vector<std::size_t> picked;
  picked.reserve(n);
  for (std::size_t j = size_ - n; j < size_; ++j) {
    const std::size_t t = rng.index(j + 1);
    if (std::find(picked.begin(), picked.end(), t) == picked.end()) {
      picked.push_back(t);
    } else {
      picked.push_back(j);
    }
  }
  return picked;
}

ReplayBuffer::Batch ReplayBuffer::gather(const std::vector<std::size_t>& indices) const {
  const auto n = static_cast<Eigen::Index>(indices.size());
  Batch b;
  b.obs.resize(n, obs_dim_);
  b.actions.resize(n, action_dim_);
  b.rewards.resize(n, 1);
  b.next_obs.resize(n, obs_dim_);
  b.terminal.resize(n, 1);
  for (Eigen::Index r = 0; r < n; ++r) {
    const std::size_t i = indices[r];
    if (i >= size_) throw InvalidInput("replay index out of range");
    for (int j = 0; j < obs_dim_; ++j) {
      b.obs(r, j) = obs_[i * obs_dim_ + j];
      b.next_obs(r, j) = next_obs_[i * obs_dim_ + j];
    }
    for (int j = 0; j < action_dim_; ++j) b.actions(r, j) = actions_[i * action_dim_ + j];
    b.rewards(r, 0) = rewards_[i];
    b.terminal(r, 0) = terminal_[i];
  }
  return b;
}

// ---------------------------------------------------------------------------
// AgentBundle

AgentBundle::AgentBundle(const BundleShape& shape_in, const TrainConfig& cfg, Rng& rng)
    : shape(shape_in),
      config(cfg),
      policy(make_policy(PolicySpec{cfg.policy, shape_in.obs_dim, shape_in.action_dim,
                                    shape_in.action_limit, cfg.hidden_width, cfg.hidden_layers,
                                    cfg.flow_blocks},
                         rng)),
      q1("q1", critic_sizes(shape_in, cfg), rng),
      q2("q2", critic_sizes(shape_in, cfg), rng),
      q1_target("q1_target", critic_sizes(shape_in, cfg), rng),
      q2_target("q2_target", critic_sizes(shape_in, cfg), rng),
      actor_opt(cfg.actor_lr),
      critic_opt(cfg.critic_lr),
      alpha_opt(cfg.alpha_lr),
      buffer(static_cast<std::size_t>(cfg.buffer_capacity), shape_in.obs_dim, shape_in.action_dim) {
  nn::soft_update(q1_target.parameters(), q1.parameters(), 1.0);
  nn::soft_update(q2_target.parameters(), q2.parameters(), 1.0);
  log_alpha.name = "log_alpha";
  log_alpha.value = Matrix::Constant(1, 1, std::log(cfg.initial_alpha));
  log_alpha.zero_grad();
  actor_opt.init(policy->parameters());
  critic_opt.init(critic_parameters());
  nn::Parameter* alpha_param = &log_alpha;
  alpha_opt.init(std::span<nn::Parameter* const>(&alpha_param, 1));
}

nn::ParameterList AgentBundle::critic_parameters() {
  nn::ParameterList out = q1.parameters();
  for (auto* p : q2.parameters()) out.push_back(p);
  return out;
}

nn::ParameterList AgentBundle::target_parameters() {
  nn::ParameterList out = q1_target.parameters();
  for (auto* p : q2_target.parameters()) out.push_back(p);
  return out;
}

std::vector<std::pair<std::string, Matrix*>> AgentBundle::named_tensors() {
  std::vector<std::pair<std::string, Matrix*>> out;
  const auto actor = policy->parameters();
  const auto critics = critic_parameters();
  for (auto* p : actor) out.emplace_back("policy/" + p->name, &p->value);
  for (auto* p : critics) out.emplace_back("critic/" + p->name, &p->value);
  for (auto* p : target_parameters()) out.emplace_back("target/" + p->name, &p->value);
  out.emplace_back("temperature/log_alpha", &log_alpha.value);
  auto moments = [&out](const std::string& prefix, nn::Adam& opt, const nn::ParameterList& params) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      out.emplace_back(prefix + "/m/" + params[i]->name, &opt.first_moments()[i]);
      out.emplace_back(prefix + "/v/" + params[i]->name, &opt.second_moments()[i]);
    }
  };
  moments("adam.actor", actor_opt, actor);
  moments("adam.critic", critic_opt, critics);
  moments("adam.alpha", alpha_opt, nn::ParameterList{&log_alpha});
  return out;
}

std::vector<std::pair<std::string, std::int64_t*>> AgentBundle::named_counters() {
  return {{"env_steps", &env_steps},
          {"updates", &updates},
          {"adam.actor.t", actor_opt.step_counter()},
          {"adam.critic.t", critic_opt.step_counter()},
          {"adam.alpha.t", alpha_opt.step_counter()}};
}

// ---------------------------------------------------------------------------
// Losses

Var critic_value(Tape& tape, nn::Mlp& critic, const Var& obs, const Var& action, bool trainable) {
  return critic.forward(tape, nn::concat_cols(obs, action), trainable);
}

Matrix critic_target(AgentBundle& bundle, const ReplayBuffer::Batch& batch, const Matrix& next_noise) {
  Tape tape;
  const Var next_obs = tape.constant(batch.next_obs);
  const auto next = bundle.policy->sample(tape, next_obs, next_noise);
  const Var q1 = critic_value(tape, bundle.q1_target, next_obs, next.action, false);
  const Var q2 = critic_value(tape, bundle.q2_target, next_obs, next.action, false);
  const Matrix soft_q = q1.value().cwiseMin(q2.value()) - bundle.alpha() * next.log_prob.value();
  const Matrix not_done = (1.0 - batch.terminal.array()).matrix();
  return batch.rewards + bundle.config.gamma * not_done.cwiseProduct(soft_q);
}

LossReport update(AgentBundle& bundle, const ReplayBuffer::Batch& batch, Rng& rng) {
  const TrainConfig& cfg = bundle.config;
  const Eigen::Index n = batch.obs.rows();
  const Eigen::Index d = bundle.shape.action_dim;
  LossReport report;
  report.alpha = bundle.alpha();

  // critics
  const Matrix y = critic_target(bundle, batch, standard_normal(n, d, rng));
  auto critic_params = bundle.critic_parameters();
  nn::zero_grad(critic_params);
  {
    Tape tape;
    const Var obs = tape.constant(batch.obs);
    const Var act = tape.constant(batch.actions);
    const Var target = tape.constant(y);
    const Var q1 = critic_value(tape, bundle.q1, obs, act, true);
    const Var q2 = critic_value(tape, bundle.q2, obs, act, true);
    const Var loss = nn::mean(nn::square(q1 - target)) + nn::mean(nn::square(q2 - target));
    report.critic_loss = loss.scalar();
    require_finite(report.critic_loss, "critic loss");
    tape.backward(loss);
  }
  require_finite(critic_params, "critic");
  report.critic_grad_norm = nn::clip_grad_norm(critic_params, cfg.max_grad_norm);
  bundle.critic_opt.step(critic_params);

  // actor
  auto actor_params = bundle.policy->parameters();
  nn::zero_grad(actor_params);
  double mean_log_prob = 0.0;
  {
    Tape tape;
    const Var obs = tape.constant(batch.obs);
    const auto s = bundle.policy->sample(tape, obs, standard_normal(n, d, rng));
    const Var q1 = critic_value(tape, bundle.q1, obs, s.action, false);
    const Var q2 = critic_value(tape, bundle.q2, obs, s.action, false);
    const Var loss = nn::mean(report.alpha * s.log_prob - nn::minimum(q1, q2));
    report.actor_loss = loss.scalar();
    require_finite(report.actor_loss, "actor loss");
    mean_log_prob = s.log_prob.value().mean();
    tape.backward(loss);
  }
  require_finite(actor_params, "actor");
  report.actor_grad_norm = nn::clip_grad_norm(actor_params, cfg.max_grad_norm);
  bundle.actor_opt.step(actor_params);
  report.entropy = -mean_log_prob;

  // temperature: loss = -log_alpha * (log pi + target_entropy), log pi detached
  nn::Parameter* alpha_param = &bundle.log_alpha;
  const std::span<nn::Parameter* const> alpha_params(&alpha_param, 1);
  report.alpha_loss = -bundle.log_alpha.value(0, 0) * (mean_log_prob + cfg.target_entropy);
  require_finite(report.alpha_loss, "temperature loss");
  bundle.log_alpha.grad = Matrix::Constant(1, 1, -(mean_log_prob + cfg.target_entropy));
  report.alpha_grad_norm = nn::clip_grad_norm(alpha_params, cfg.max_grad_norm);
  bundle.alpha_opt.step(alpha_params);

  nn::soft_update(bundle.q1_target.parameters(), bundle.q1.parameters(), cfg.tau);
  nn::soft_update(bundle.q2_target.parameters(), bundle.q2.parameters(), cfg.tau);
  ++bundle.updates;
  return report;
}

// ---------------------------------------------------------------------------
// Training loop

env::PolicyFn as_policy_fn(Policy& policy, bool deterministic) {
  return [&policy, deterministic](const Vec& obs, Rng& rng) {
    return act(policy, obs, rng, deterministic).action;
  };
}

std::vector<MetricRecord> train(AgentBundle& bundle, const env::EnvConfig& env_cfg,
                                const oracle::UncertaintyField& field,
                                const shaping::ShapingConfig& shaping_cfg,
                                env::RewardMode reward_mode, const TrainHooks& hooks) {
  const TrainConfig& cfg = bundle.config;
  env_cfg.validate();
  if (bundle.shape.obs_dim != env_cfg.observation_dim()) {
    throw InvalidInput("bundle observation width does not match the environment");
  }
  const std::uint64_t resume = static_cast<std::uint64_t>(bundle.env_steps) << 8;
  Rng env_rng = Rng::stream(cfg.seed, kEnv + resume);
  Rng action_rng = Rng::stream(cfg.seed, kAction + resume);
  Rng update_rng = Rng::stream(cfg.seed, kUpdate + resume);

  std::vector<MetricRecord> metrics;
  const std::int64_t end = bundle.env_steps + cfg.total_env_steps;
  env::EnvState state = env::reset(env_cfg, env_rng);
  double episode_return = 0.0;
  std::int64_t episodes = 0;

  MetricRecord acc;
  std::int64_t acc_updates = 0;
  double acc_returns = 0.0;

  while (bundle.env_steps < end) {
    const Vec obs = env::observe(env_cfg, state);
    Vec action(env_cfg.action_dim());
    if (bundle.env_steps < cfg.warmup_steps) {
      for (Eigen::Index j = 0; j < action.size(); ++j) {
        action[j] = action_rng.uniform(-env_cfg.action_limit, env_cfg.action_limit);
      }
    } else {
      action = act(*bundle.policy, obs, action_rng, false).action;
    }
    env::StepResult result = env::step(env_cfg, state, action, env_rng);
    const env::Transition tr =
        env::make_transition(env_cfg, field, shaping_cfg, reward_mode, state, action, result);
    const bool terminal =
        tr.goal_reached || (tr.done && env_cfg.time_embedding != env::TimeEmbedding::none);
    bundle.buffer.add(obs, action, tr.shaped_reward, tr.next_obs, terminal);
    episode_return += tr.shaped_reward;
    ++bundle.env_steps;

    if (result.done) {
      ++episodes;
      ++acc.interval_episodes;
      acc_returns += episode_return;
      episode_return = 0.0;
      state = env::reset(env_cfg, env_rng);
    } else {
      state = std::move(result.next);
    }

    if (bundle.env_steps >= cfg.warmup_steps &&
        bundle.buffer.size() >= static_cast<std::size_t>(cfg.batch_size)) {
      for (int k = 0; k < cfg.updates_per_step; ++k) {
        const auto batch = bundle.buffer.sample(static_cast<std::size_t>(cfg.batch_size), update_rng);
        const LossReport r = update(bundle, batch, update_rng);
        acc.critic_loss += r.critic_loss;
        acc.actor_loss += r.actor_loss;
        acc.alpha_loss += r.alpha_loss;
        acc.entropy += r.entropy;
        ++acc_updates;
      }
    }

    if (bundle.env_steps % cfg.metrics_interval == 0) {
      MetricRecord rec = acc;
      if (acc_updates > 0) {
        const double k = static_cast<double>(acc_updates);
        rec.critic_loss /= k;
        rec.actor_loss /= k;
        rec.alpha_loss /= k;
        rec.entropy /= k;
      }
      rec.episode_return =
          rec.interval_episodes > 0 ? acc_returns / static_cast<double>(rec.interval_episodes) : 0.0;
      rec.env_steps = bundle.env_steps;
      rec.updates = bundle.updates;
      rec.episodes = episodes;
      rec.alpha = bundle.alpha();
      metrics.push_back(rec);
      if (hooks.on_metrics) hooks.on_metrics(rec, bundle);
      acc = MetricRecord{};
      acc_updates = 0;
      acc_returns = 0.0;
    }
  }
  return metrics;
}

TrainResult train(const env::EnvConfig& env_cfg, const oracle::UncertaintyField& field,
                  const shaping::ShapingConfig& shaping_cfg, const TrainConfig& train_cfg,
                  env::RewardMode reward_mode, const TrainHooks& hooks) {
  train_cfg.validate();
  env_cfg.validate();
  Rng init_rng = Rng::stream(train_cfg.seed, kInit);
  TrainResult out;
  out.bundle = std::make_unique<AgentBundle>(
      BundleShape{env_cfg.observation_dim(), env_cfg.action_dim(), env_cfg.action_limit}, train_cfg,
      init_rng);
  out.metrics = train(*out.bundle, env_cfg, field, shaping_cfg, reward_mode, hooks);
  return out;
}

}  // namespace vfield::agent
