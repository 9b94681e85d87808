#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "vfield/boxworld.hpp"
#include "vfield/policy.hpp"

namespace vfield::agent {

/// Soft actor-critic hyperparameters. Defaults follow the reference table;
/// the experiment configs shipped in configs/ override several of them.
struct TrainConfig {
  double actor_lr = 1e-6;
  double critic_lr = 5e-4;
  double alpha_lr = 2e-3;
  double gamma = 0.99;
  double tau = 1e-4;
  double max_grad_norm = 30.0;
  int batch_size = 256;
  std::int64_t buffer_capacity = 1'000'000;
  double initial_alpha = 0.1;
  double target_entropy = -8.0;
  std::int64_t total_env_steps = 100'000;
  int updates_per_step = 1;
  std::int64_t warmup_steps = 1000;
  std::int64_t metrics_interval = 1000;
  int eval_episodes = 32;
  std::uint64_t seed = 0;
  PolicyKind policy = PolicyKind::gaussian;
  int hidden_width = 256;
  int hidden_layers = 2;
  int flow_blocks = 32;

  void validate() const;
};

/// Fixed-capacity ring of (obs, action, reward, next_obs, terminal).
class ReplayBuffer {
 public:
  struct Batch {
    Matrix obs;
    Matrix actions;
    Matrix rewards;   // B x 1
    Matrix next_obs;
    Matrix terminal;  // B x 1, 1.0 where bootstrapping stops
  };

  ReplayBuffer(std::size_t capacity, int obs_dim, int action_dim);

  void add(const Vec& obs, const Vec& action, double reward, const Vec& next_obs, bool terminal);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }

  /// n distinct slot indices, uniform over filled slots.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;
  Batch gather(const std::vector<std::size_t>& indices) const;
  Batch sample(std::size_t n, Rng& rng) const { return gather(sample_indices(n, rng)); }

 private:
  std::size_t capacity_;
  int obs_dim_, action_dim_;
  std::size_t size_ = 0;
  std::size_t next_ = 0;
  std::vector<double> obs_, actions_, rewards_, next_obs_, terminal_;
};

struct BundleShape {
  int obs_dim = 2;
  int action_dim = 2;
  double action_limit = 0.1;
};

/// Everything a SAC learner owns.
struct AgentBundle {
  AgentBundle(const BundleShape& shape, const TrainConfig& cfg, Rng& rng);

  BundleShape shape;
  TrainConfig config;
  std::unique_ptr<Policy> policy;
  nn::Mlp q1, q2, q1_target, q2_target;
  nn::Parameter log_alpha;
  nn::Adam actor_opt, critic_opt, alpha_opt;
  ReplayBuffer buffer;
  std::int64_t env_steps = 0;
  std::int64_t updates = 0;

  double alpha() const { return std::exp(log_alpha.value(0, 0)); }
  nn::ParameterList critic_parameters();
  nn::ParameterList target_parameters();
  /// Every tensor that makes up the learner, with stable unique names.
  std::vector<std::pair<std::string, Matrix*>> named_tensors();
  /// Scalar state (optimizer step counts, counters) by name.
  std::vector<std::pair<std::string, std::int64_t*>> named_counters();
};

/// Q(obs, action) for a critic network.
Var critic_value(Tape& tape, nn::Mlp& critic, const Var& obs, const Var& action, bool trainable);

struct LossReport {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha_loss = 0.0;
  double alpha = 0.0;
  double entropy = 0.0;  // -mean log pi on the batch
  double critic_grad_norm = 0.0;
  double actor_grad_norm = 0.0;
  double alpha_grad_norm = 0.0;
};

/// Regression target r + gamma (1 - terminal)(min Q_target - alpha log pi').
Matrix critic_target(AgentBundle& bundle, const ReplayBuffer::Batch& batch, const Matrix& next_noise);

/// One gradient step each on critics, actor and temperature, then a soft
/// target update. Gradients are clipped to max_grad_norm; reported norms are
/// post-clip. Throws TrainingDivergence on non-finite losses or gradients,
/// before any parameter of the failing stage is modified.
LossReport update(AgentBundle& bundle, const ReplayBuffer::Batch& batch, Rng& rng);

/// Periodic training summary.
struct MetricRecord {
  std::int64_t env_steps = 0;
  std::int64_t updates = 0;
  std::int64_t episodes = 0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha_loss = 0.0;
  double alpha = 0.0;
  double entropy = 0.0;
  double episode_return = 0.0;  // mean training return of episodes finished in the interval
  std::int64_t interval_episodes = 0;
};

struct TrainHooks {
  /// Called at every metrics interval with the current learner.
  std::function<void(const MetricRecord&, AgentBundle&)> on_metrics;
};

struct TrainResult {
  std::unique_ptr<AgentBundle> bundle;
  std::vector<MetricRecord> metrics;
};

/// Interleaves environment rollout and updates. Deterministic given the
/// seed in train_cfg. Horizon truncation bootstraps unless the observation
/// carries the remaining time, in which case it is terminal.
TrainResult train(const env::EnvConfig& env_cfg, const oracle::UncertaintyField& field,
                  const shaping::ShapingConfig& shaping_cfg, const TrainConfig& train_cfg,
                  env::RewardMode reward_mode, const TrainHooks& hooks = {});

/// Same, continuing from an existing bundle.
std::vector<MetricRecord> train(AgentBundle& bundle, const env::EnvConfig& env_cfg,
                                const oracle::UncertaintyField& field,
                                const shaping::ShapingConfig& shaping_cfg,
                                env::RewardMode reward_mode, const TrainHooks& hooks = {});

/// Wraps a policy as an env::PolicyFn.
env::PolicyFn as_policy_fn(Policy& policy, bool deterministic);

}  // namespace vfield::agent
