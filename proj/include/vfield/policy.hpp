#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "vfield/nn.hpp"

namespace vfield::agent {

using nn::Matrix;
using nn::Tape;
using nn::Var;
using Vec = Eigen::VectorXd;

enum class PolicyKind { gaussian, flow };

std::string to_string(PolicyKind kind);
PolicyKind parse_policy_kind(std::string_view text);

struct PolicySpec {
  PolicyKind kind = PolicyKind::gaussian;
  int obs_dim = 2;
  int action_dim = 2;
  double action_limit = 0.1;
  int hidden_width = 256;
  int hidden_layers = 2;
  int flow_blocks = 32;
};

/// Stochastic actor whose actions are squashed by tanh into
/// (-action_limit, action_limit)^d. Log-densities are with respect to the
/// action itself, so they include the tanh and scaling Jacobians.
class Policy {
 public:
  struct Sample {
    Var action;    // B x d
    Var log_prob;  // B x 1
  };

  explicit Policy(PolicySpec spec) : spec_(spec) {}
  virtual ~Policy() = default;

  /// Reparameterised sample driven by standard-normal noise (B x d).
  virtual Sample sample(Tape& tape, const Var& obs, const Matrix& noise) = 0;

  /// Deterministic action: the squashed image of zero noise.
  virtual Matrix mean_action(const Matrix& obs) = 0;

  /// Exact log-density of the given actions. Actions on or outside the
  /// boundary have density zero (-inf).
  virtual Vec log_prob(const Matrix& obs, const Matrix& actions) = 0;

  virtual nn::ParameterList parameters() = 0;

  /// Zeroes the output layers so the squashed mean starts at the origin.
  virtual void zero_output_layers() = 0;

  const PolicySpec& spec() const { return spec_; }

 protected:
  PolicySpec spec_;
};

/// Diagonal Gaussian MLP head, squashed through tanh.
class GaussianPolicy final : public Policy {
 public:
  static constexpr double kLogStdMin = -5.0;
  static constexpr double kLogStdMax = 2.0;

  GaussianPolicy(const PolicySpec& spec, Rng& rng);

  Sample sample(Tape& tape, const Var& obs, const Matrix& noise) override;
  Matrix mean_action(const Matrix& obs) override;
  Vec log_prob(const Matrix& obs, const Matrix& actions) override;
  nn::ParameterList parameters() override { return net_.parameters(); }
  void zero_output_layers() override { net_.zero_output_layer(); }

  /// Mean and log-std of the pre-squash Gaussian.
  std::pair<Matrix, Matrix> distribution(const Matrix& obs);

 private:
  std::pair<Var, Var> heads(Tape& tape, const Var& obs, bool trainable);

  nn::Mlp net_;
};

/// Conditional normalising flow: standard-normal base noise pushed through
/// affine coupling blocks conditioned on the observation, then squashed.
class FlowPolicy final : public Policy {
 public:
  static constexpr double kScaleCap = 2.0;

  FlowPolicy(const PolicySpec& spec, Rng& rng);

  Sample sample(Tape& tape, const Var& obs, const Matrix& noise) override;
  Matrix mean_action(const Matrix& obs) override;
  Vec log_prob(const Matrix& obs, const Matrix& actions) override;
  nn::ParameterList parameters() override;
  void zero_output_layers() override;

 private:
  struct Split {
    Eigen::Index cond_start, cond_count, move_start, move_count;
  };
  Split split_for(std::size_t block) const;
  /// Runs the blocks forward; returns the pre-squash output and accumulated
  /// log|det| (B x 1).
  std::pair<Var, Var> forward_blocks(Tape& tape, const Var& obs, const Var& base, bool trainable);

  std::vector<nn::Mlp> conditioners_;
};

std::unique_ptr<Policy> make_policy(const PolicySpec& spec, Rng& rng);

struct ActResult {
  Vec action;
  double log_prob = 0.0;  // NaN in deterministic mode
};

/// Samples (or, deterministically, takes the squashed mean of) one action.
/// Throws TrainingDivergence if the network produces non-finite output.
ActResult act(Policy& policy, const Vec& obs, Rng& rng, bool deterministic);

}  // namespace vfield::agent
