#include "vfield/nn.hpp"

#include <cmath>

#include "vfield/errors.hpp"

namespace vfield::nn {

Linear::Linear(std::string name, int in, int out, Rng& rng) {
  if (in < 1 || out < 1) throw InvalidInput("Linear layer sizes must be positive");
  weight_.name = name + ".weight";
  bias_.name = name + ".bias";
  // uniform(-1/sqrt(in), 1/sqrt(in)), the usual fan-in initialisation
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_.value.resize(in, out);
  for (Eigen::Index j = 0; j < out; ++j) {
    for (Eigen::Index i = 0; i < in; ++i) weight_.value(i, j) = rng.uniform(-bound, bound);
  }
  bias_.value.resize(1, out);
  for (Eigen::Index j = 0; j < out; ++j) bias_.value(0, j) = rng.uniform(-bound, bound);
  weight_.zero_grad();
  bias_.zero_grad();
}

Var Linear::forward(Tape& tape, const Var& x, bool trainable) {
  if (x.cols() != in_features()) {
    throw InvalidInput(weight_.name + ": expected " + std::to_string(in_features()) +
                       " input features, got " + std::to_string(x.cols()));
  }
  if (!trainable) {
    return add_row(matmul(x, tape.constant(weight_.value)), tape.constant(bias_.value));
  }
  return add_row(matmul(x, tape.parameter(weight_)), tape.parameter(bias_));
}

void Linear::zero_init() {
  weight_.value.setZero();
  bias_.value.setZero();
}

void Linear::append_parameters(ParameterList& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

Mlp::Mlp(std::string name, std::vector<int> sizes, Rng& rng) {
  if (sizes.size() < 2) throw InvalidInput("Mlp needs at least input and output sizes");
  layers_.reserve(sizes.size() - 1);
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    layers_.emplace_back(name + ".l" + std::to_string(i), sizes[i], sizes[i + 1], rng);
  }
}

Var Mlp::forward(Tape& tape, const Var& x, bool trainable) {
  Var h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(tape, h, trainable);
    if (i + 1 < layers_.size()) h = relu(h);
  }
  return h;
}

Matrix Mlp::evaluate(const Matrix& x) {
  Tape tape;
  return forward(tape, tape.constant(x), false).value();
}

ParameterList Mlp::parameters() {
  ParameterList out;
  for (auto& layer : layers_) layer.append_parameters(out);
  return out;
}

void zero_grad(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

double global_grad_norm(std::span<Parameter* const> params) {
  double sq = 0.0;
  for (const Parameter* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm <= max_norm || norm == 0.0) return norm;
  const double scale = max_norm / norm;
  for (Parameter* p : params) p->grad *= scale;
  return global_grad_norm(params);
}

bool all_finite(std::span<Parameter* const> params) {
  for (const Parameter* p : params) {
    if (!p->grad.allFinite() || !p->value.allFinite()) return false;
  }
  return true;
}

void soft_update(std::span<Parameter* const> target, std::span<Parameter* const> online,
                 double tau) {
  if (target.size() != online.size()) throw InvalidInput("soft_update: parameter count differs");
  for (std::size_t i = 0; i < target.size(); ++i) {
    Matrix& t = target[i]->value;
    const Matrix& o = online[i]->value;
    if (t.rows() != o.rows() || t.cols() != o.cols()) {
      throw InvalidInput("soft_update: shape differs for " + target[i]->name);
    }
    if (tau == 1.0) {
      t = o;
    } else {
      t = tau * o + (1.0 - tau) * t;
    }
  }
}

void Adam::init(std::span<Parameter* const> params) {
  m_.clear();
  v_.clear();
  for (const Parameter* p : params) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
  t_ = 0;
}

void Adam::step(std::span<Parameter* const> params) {
  if (m_.empty()) init(params);
  if (m_.size() != params.size()) throw InvalidInput("Adam: parameter list changed");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseAbs2();
    p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

}  // namespace vfield::nn
