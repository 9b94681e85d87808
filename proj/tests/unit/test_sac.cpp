#include <cmath>
#include <numeric>

#include "doctest.h"
#include "vfield/errors.hpp"
#include "vfield/sac.hpp"

using namespace vfield;
using namespace vfield::agent;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.actor_lr = 3e-4;
  cfg.batch_size = 16;
  cfg.buffer_capacity = 1000;
  cfg.hidden_width = 16;
  cfg.total_env_steps = 200;
  cfg.warmup_steps = 50;
  cfg.metrics_interval = 50;
  return cfg;
}

oracle::UncertaintyField unit_field() {
  return oracle::UncertaintyField(2, {{1.0, Eigen::Vector2d(0.5, 0.5), 0.15}});
}

void fill_buffer(ReplayBuffer& buf, int n, Rng& rng) {
  for (int i = 0; i < n; ++i) {
    const Vec o = Vec::Random(2), a = 0.1 * Vec::Random(2), o2 = Vec::Random(2);
    buf.add(o, a, rng.normal(), o2, i % 7 == 0);
  }
}

}  // namespace

TEST_CASE("replay sampling is uniform over filled slots") {
  ReplayBuffer buf(50, 1, 1);
  for (int i = 0; i < 40; ++i) buf.add(Vec::Constant(1, i), Vec::Zero(1), i, Vec::Zero(1), false);
  Rng rng(11);
  std::vector<double> counts(40, 0.0);
  const int draws = 4000, per = 10;
  for (int k = 0; k < draws; ++k) {
    const auto idx = buf.sample_indices(per, rng);
    std::vector<std::size_t> sorted = idx;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    for (std::size_t i : idx) counts[i] += 1.0;
  }
  const double expected = draws * per / 40.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 39 degrees of freedom; 99.9th percentile is about 72.
  CHECK(chi2 < 72.0);
}

TEST_CASE("replay ring overwrites the oldest entry") {
  ReplayBuffer buf(3, 1, 1);
  for (int i = 0; i < 5; ++i) buf.add(Vec::Constant(1, i), Vec::Zero(1), i, Vec::Zero(1), false);
  CHECK(buf.size() == 3);
  const auto b = buf.gather({0, 1, 2});
  CHECK(b.rewards(0, 0) == 3.0);
  CHECK(b.rewards(1, 0) == 4.0);
  CHECK(b.rewards(2, 0) == 2.0);
  Rng rng(1);
  CHECK_THROWS_AS(buf.sample_indices(4, rng), InvalidInput);
  CHECK_THROWS_AS(buf.add(Vec::Zero(2), Vec::Zero(1), 0, Vec::Zero(1), false), InvalidInput);
}

TEST_CASE("critic target reduces to the reward without discounting") {
  Rng rng(12);
  AgentBundle bundle({2, 2, 0.1}, tiny_config(), rng);
  fill_buffer(bundle.buffer, 64, rng);
  const auto batch = bundle.buffer.sample(16, rng);
  bundle.config.gamma = 0.0;
  const Matrix noise = Matrix::Random(16, 2);
  CHECK((critic_target(bundle, batch, noise) - batch.rewards).cwiseAbs().maxCoeff() == 0.0);

  // Terminal rows never bootstrap.
  bundle.config.gamma = 0.99;
  const Matrix y = critic_target(bundle, batch, noise);
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    if (batch.terminal(i, 0) == 1.0) CHECK(y(i, 0) == batch.rewards(i, 0));
  }
}

TEST_CASE("critics fit a fixed batch") {
  Rng rng(13);
  TrainConfig cfg = tiny_config();
  cfg.critic_lr = 3e-3;
  AgentBundle bundle({2, 2, 0.1}, cfg, rng);
  fill_buffer(bundle.buffer, 16, rng);
  const auto batch = bundle.buffer.gather([] {
    std::vector<std::size_t> v(16);
    std::iota(v.begin(), v.end(), 0);
    return v;
  }());
  bundle.config.gamma = 0.0;
  const double first = update(bundle, batch, rng).critic_loss;
  double last = first;
  for (int i = 0; i < 300; ++i) last = update(bundle, batch, rng).critic_loss;
  CHECK(last < 0.1 * first);
}

TEST_CASE("reported gradient norms respect the clip") {
  Rng rng(14);
  TrainConfig cfg = tiny_config();
  cfg.max_grad_norm = 1e-3;
  AgentBundle bundle({2, 2, 0.1}, cfg, rng);
  fill_buffer(bundle.buffer, 64, rng);
  const auto r = update(bundle, bundle.buffer.sample(16, rng), rng);
  CHECK(r.critic_grad_norm <= 1e-3 * (1 + 1e-12));
  CHECK(r.actor_grad_norm <= 1e-3 * (1 + 1e-12));
  CHECK(r.alpha_grad_norm <= 1e-3 * (1 + 1e-12));
}

TEST_CASE("tau of one copies the online critics") {
  Rng rng(15);
  TrainConfig cfg = tiny_config();
  cfg.tau = 1.0;
  AgentBundle bundle({2, 2, 0.1}, cfg, rng);
  fill_buffer(bundle.buffer, 64, rng);
  update(bundle, bundle.buffer.sample(16, rng), rng);
  auto online = bundle.q1.parameters();
  auto target = bundle.q1_target.parameters();
  for (std::size_t i = 0; i < online.size(); ++i) CHECK(online[i]->value == target[i]->value);
}

TEST_CASE("config validation names the field") {
  TrainConfig cfg = tiny_config();
  cfg.gamma = 1.0;
  try {
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("train.gamma") != std::string::npos);
  }
  cfg = tiny_config();
  cfg.buffer_capacity = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("zero training steps leave the initialisation untouched") {
  env::EnvConfig env_cfg;
  TrainConfig cfg = tiny_config();
  cfg.total_env_steps = 0;
  auto result = train(env_cfg, unit_field(), shaping::ShapingConfig{}, cfg, env::RewardMode::vf);
  CHECK(result.metrics.empty());
  CHECK(result.bundle->env_steps == 0);
  CHECK(result.bundle->updates == 0);
}

TEST_CASE("training is deterministic for a seed") {
  env::EnvConfig env_cfg;
  TrainConfig cfg = tiny_config();
  cfg.seed = 3;
  auto a = train(env_cfg, unit_field(), shaping::ShapingConfig{}, cfg, env::RewardMode::vf);
  auto b = train(env_cfg, unit_field(), shaping::ShapingConfig{}, cfg, env::RewardMode::vf);
  REQUIRE(a.metrics.size() == 4);
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(a.metrics[i].critic_loss == b.metrics[i].critic_loss);
    CHECK(a.metrics[i].episode_return == b.metrics[i].episode_return);
  }
  auto ta = a.bundle->named_tensors();
  auto tb = b.bundle->named_tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(*ta[i].second == *tb[i].second);

  cfg.seed = 4;
  auto c = train(env_cfg, unit_field(), shaping::ShapingConfig{}, cfg, env::RewardMode::vf);
  CHECK(c.metrics.back().critic_loss != a.metrics.back().critic_loss);
}

TEST_CASE("task-only SAC learns an easy goal") {
  env::EnvConfig env_cfg;
  env_cfg.start_box = {Vec::Constant(2, 0.55), Vec::Constant(2, 0.6)};
  env_cfg.goal_radius = 0.1;
  TrainConfig cfg;
  cfg.actor_lr = 1e-3;
  cfg.tau = 5e-3;
  cfg.batch_size = 64;
  cfg.buffer_capacity = 20000;
  cfg.hidden_width = 32;
  cfg.total_env_steps = 4000;
  cfg.warmup_steps = 500;
  cfg.metrics_interval = 1000;
  cfg.seed = 1;
  const auto field = unit_field();
  auto result = train(env_cfg, field, shaping::ShapingConfig{}, cfg, env::RewardMode::task_only);
  Rng rng(99);
  int reached = 0;
  const int episodes = 40;
  for (int i = 0; i < episodes; ++i) {
    const auto ep = env::run_episode(env_cfg, field, shaping::ShapingConfig{},
                                     as_policy_fn(*result.bundle->policy, false),
                                     env::RewardMode::task_only, rng);
    reached += ep.back().goal_reached ? 1 : 0;
  }
  CHECK(reached >= 38);
}
