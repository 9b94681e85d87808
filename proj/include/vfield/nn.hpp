#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vfield/autodiff.hpp"
#include "vfield/rng.hpp"

namespace vfield::nn {

using ParameterList = std::vector<Parameter*>;

/// Fully connected layer, y = x W + b.
class Linear {
 public:
  Linear(std::string name, int in, int out, Rng& rng);

  /// With trainable = false the weights enter the tape as constants, so no
  /// gradient reaches them.
  Var forward(Tape& tape, const Var& x, bool trainable = true);
  int in_features() const { return static_cast<int>(weight_.value.rows()); }
  int out_features() const { return static_cast<int>(weight_.value.cols()); }
  void zero_init();
  void append_parameters(ParameterList& out);

 private:
  Parameter weight_;
  Parameter bias_;
};

/// ReLU multilayer perceptron with a linear output layer.
class Mlp {
 public:
  /// sizes = {in, hidden..., out}; needs at least {in, out}.
  Mlp(std::string name, std::vector<int> sizes, Rng& rng);

  Var forward(Tape& tape, const Var& x, bool trainable = true);
  /// Convenience forward pass on a throwaway tape.
  Matrix evaluate(const Matrix& x);

  int in_features() const { return layers_.front().in_features(); }
  int out_features() const { return layers_.back().out_features(); }
  void zero_output_layer() { layers_.back().zero_init(); }
  ParameterList parameters();

 private:
  std::vector<Linear> layers_;
};

void zero_grad(std::span<Parameter* const> params);

double global_grad_norm(std::span<Parameter* const> params);

/// Rescales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm after clipping.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

bool all_finite(std::span<Parameter* const> params);

/// target <- tau * online + (1 - tau) * target, elementwise.
void soft_update(std::span<Parameter* const> target, std::span<Parameter* const> online,
                 double tau);

/// Adaptive moment estimation with bias correction.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Allocates zeroed moment estimates matching params.
  void init(std::span<Parameter* const> params);
  void step(std::span<Parameter* const> params);

  double lr() const { return lr_; }
  std::int64_t steps() const { return t_; }

  // State access for checkpointing.
  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }
  std::int64_t* step_counter() { return &t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace vfield::nn
