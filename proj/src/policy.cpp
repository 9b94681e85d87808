#include "vfield/policy.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "vfield/errors.hpp"

namespace vfield::agent {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double log1m_tanh_sq(double u) {
  const double z = -2.0 * u;
  const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  return 2.0 * (std::numbers::ln2 - u - softplus);
}

std::vector<int> mlp_sizes(int in, int out, int width, int layers) {
  std::vector<int> sizes{in};
  for (int i = 0; i < layers; ++i) sizes.push_back(width);
  sizes.push_back(out);
  return sizes;
}

/// Per-row constant part of the log-density: base normal terms and the
/// action-scaling Jacobian.
Matrix base_log_density(const Matrix& noise, double action_limit) {
  const double d = static_cast<double>(noise.cols());
  Matrix out = -0.5 * noise.array().square().rowwise().sum();
  out.array() -= d * (kHalfLog2Pi + std::log(action_limit));
  return out;
}

/// Pre-squash values for actions; +-inf on or beyond the boundary.
Matrix unsquash(const Matrix& actions, double action_limit) {
  return (actions / action_limit).unaryExpr([](double y) {
    if (y >= 1.0) return std::numeric_limits<double>::infinity();
    if (y <= -1.0) return -std::numeric_limits<double>::infinity();
    return std::atanh(y);
  });
}

Vec squash_correction(const Matrix& u) {
  return u.unaryExpr([](double x) { return log1m_tanh_sq(x); }).rowwise().sum();
}

void check_batch(const Matrix& obs, const Matrix& actions, const PolicySpec& spec) {
  if (obs.cols() != spec.obs_dim) throw InvalidInput("observation width mismatch");
  if (actions.cols() != spec.action_dim || actions.rows() != obs.rows()) {
    throw InvalidInput("action batch shape mismatch");
  }
}

}  // namespace

std::string to_string(PolicyKind kind) { return kind == PolicyKind::gaussian ? "gaussian" : "flow"; }

PolicyKind parse_policy_kind(std::string_view text) {
  if (text == "gaussian") return PolicyKind::gaussian;
  if (text == "flow") return PolicyKind::flow;
  throw InvalidInput("unknown policy kind '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// GaussianPolicy

GaussianPolicy::GaussianPolicy(const PolicySpec& spec, Rng& rng)
    : Policy(spec),
      net_("actor", mlp_sizes(spec.obs_dim, 2 * spec.action_dim, spec.hidden_width, spec.hidden_layers),
           rng) {}

std::pair<Var, Var> GaussianPolicy::heads(Tape& tape, const Var& obs, bool trainable) {
  const Eigen::Index d = spec_.action_dim;
  const Var out = net_.forward(tape, obs, trainable);
  const Var mu = nn::slice_cols(out, 0, d);
  // squash the raw head into [kLogStdMin, kLogStdMax]
  const double half_range = 0.5 * (kLogStdMax - kLogStdMin);
  const Var log_std = half_range * nn::tanh(nn::slice_cols(out, d, d)) + (kLogStdMin + half_range);
  return {mu, log_std};
}

Policy::Sample GaussianPolicy::sample(Tape& tape, const Var& obs, const Matrix& noise) {
  if (noise.cols() != spec_.action_dim || noise.rows() != obs.rows()) {
    throw InvalidInput("noise shape mismatch");
  }
  auto [mu, log_std] = heads(tape, obs, true);
  const Var u = mu + nn::exp(log_std) * tape.constant(noise);
  const Var action = spec_.action_limit * nn::tanh(u);
  const Var log_prob = tape.constant(base_log_density(noise, spec_.action_limit)) -
                       nn::sum_cols(log_std + nn::log1m_tanh_sq(u));
  return {action, log_prob};
}

std::pair<Matrix, Matrix> GaussianPolicy::distribution(const Matrix& obs) {
  Tape tape;
  auto [mu, log_std] = heads(tape, tape.constant(obs), false);
  return {mu.value(), log_std.value()};
}

Matrix GaussianPolicy::mean_action(const Matrix& obs) {
  return spec_.action_limit * distribution(obs).first.array().tanh();
}

Vec GaussianPolicy::log_prob(const Matrix& obs, const Matrix& actions) {
  check_batch(obs, actions, spec_);
  const auto [mu, log_std] = distribution(obs);
  const Matrix u = unsquash(actions, spec_.action_limit);
  const Matrix z = (u - mu).cwiseQuotient(log_std.array().exp().matrix());
  Vec lp = base_log_density(z, spec_.action_limit);
  lp -= log_std.rowwise().sum();
  lp -= squash_correction(u);
  for (Eigen::Index i = 0; i < lp.size(); ++i) {
    if (!u.row(i).allFinite()) lp[i] = -std::numeric_limits<double>::infinity();
  }
  return lp;
}

// ---------------------------------------------------------------------------
// FlowPolicy

FlowPolicy::FlowPolicy(const PolicySpec& spec, Rng& rng) : Policy(spec) {
  if (spec.flow_blocks < 1) throw InvalidInput("flow policy needs at least one block");
  for (int k = 0; k < spec.flow_blocks; ++k) {
    const Split sp = split_for(static_cast<std::size_t>(k));
    conditioners_.emplace_back(
        "flow" + std::to_string(k),
        mlp_sizes(static_cast<int>(sp.cond_count) + spec.obs_dim, 2 * static_cast<int>(sp.move_count),
                  spec.hidden_width, spec.hidden_layers),
        rng);
    // each block starts as the identity map
    conditioners_.back().zero_output_layer();
  }
}

FlowPolicy::Split FlowPolicy::split_for(std::size_t block) const {
  const Eigen::Index d = spec_.action_dim;
  if (d == 1) return {0, 0, 0, 1};
  const Eigen::Index half = d / 2;
  if (block % 2 == 0) return {0, half, half, d - half};
  return {half, d - half, 0, half};
}

std::pair<Var, Var> FlowPolicy::forward_blocks(Tape& tape, const Var& obs, const Var& base,
                                               bool trainable) {
  Var x = base;
  Var log_det = tape.constant(Matrix::Zero(base.rows(), 1));
  for (std::size_t k = 0; k < conditioners_.size(); ++k) {
    const Split sp = split_for(k);
    const Var moving = nn::slice_cols(x, sp.move_start, sp.move_count);
    Var input = obs;
    Var cond;
    if (sp.cond_count > 0) {
      cond = nn::slice_cols(x, sp.cond_start, sp.cond_count);
      input = nn::concat_cols(cond, obs);
    }
    const Var h = conditioners_[k].forward(tape, input, trainable);
    const Var shift = nn::slice_cols(h, 0, sp.move_count);
    const Var log_scale = kScaleCap * nn::tanh(nn::slice_cols(h, sp.move_count, sp.move_count));
    const Var moved = moving * nn::exp(log_scale) + shift;
    log_det = log_det + nn::sum_cols(log_scale);
    if (sp.cond_count == 0) {
      x = moved;
    } else if (sp.cond_start == 0) {
      x = nn::concat_cols(cond, moved);
    } else {
      x = nn::concat_cols(moved, cond);
    }
  }
  return {x, log_det};
}

Policy::Sample FlowPolicy::sample(Tape& tape, const Var& obs, const Matrix& noise) {
  if (noise.cols() != spec_.action_dim || noise.rows() != obs.rows()) {
    throw InvalidInput("noise shape mismatch");
  }
  auto [u, log_det] = forward_blocks(tape, obs, tape.constant(noise), true);
  const Var action = spec_.action_limit * nn::tanh(u);
  const Var log_prob = tape.constant(base_log_density(noise, spec_.action_limit)) - log_det -
                       nn::sum_cols(nn::log1m_tanh_sq(u));
  return {action, log_prob};
}

Matrix FlowPolicy::mean_action(const Matrix& obs) {
  Tape tape;
  const Matrix zeros = Matrix::Zero(obs.rows(), spec_.action_dim);
  auto [u, log_det] = forward_blocks(tape, tape.constant(obs), tape.constant(zeros), false);
  return spec_.action_limit * u.value().array().tanh();
}

Vec FlowPolicy::log_prob(const Matrix& obs, const Matrix& actions) {
  check_batch(obs, actions, spec_);
  const Matrix u = unsquash(actions, spec_.action_limit);
  Vec lp = Vec::Constant(obs.rows(), -std::numeric_limits<double>::infinity());
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    if (u.row(i).allFinite()) rows.push_back(i);
  }
  if (rows.empty()) return lp;
  Matrix x(rows.size(), spec_.action_dim), o(rows.size(), spec_.obs_dim), uu(rows.size(), spec_.action_dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    uu.row(r) = u.row(rows[r]);
    o.row(r) = obs.row(rows[r]);
  }
  x = uu;
  Vec log_det = Vec::Zero(x.rows());
  for (std::size_t k = conditioners_.size(); k-- > 0;) {
    const Split sp = split_for(k);
    Matrix input;
    if (sp.cond_count > 0) {
      input.resize(x.rows(), sp.cond_count + spec_.obs_dim);
      input << x.middleCols(sp.cond_start, sp.cond_count), o;
    } else {
      input = o;
    }
    const Matrix h = conditioners_[k].evaluate(input);
    const Matrix shift = h.leftCols(sp.move_count);
    const Matrix log_scale = kScaleCap * h.middleCols(sp.move_count, sp.move_count).array().tanh();
    x.middleCols(sp.move_start, sp.move_count) =
        (x.middleCols(sp.move_start, sp.move_count) - shift).cwiseProduct(
            (-log_scale).array().exp().matrix());
    log_det += log_scale.rowwise().sum();
  }
  const Vec dense = base_log_density(x, spec_.action_limit) - log_det - squash_correction(uu);
  for (std::size_t r = 0; r < rows.size(); ++r) lp[rows[r]] = dense[r];
  return lp;
}

nn::ParameterList FlowPolicy::parameters() {
  nn::ParameterList out;
  for (auto& c : conditioners_) {
    auto p = c.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

void FlowPolicy::zero_output_layers() {
  for (auto& c : conditioners_) c.zero_output_layer();
}

// ---------------------------------------------------------------------------

std::unique_ptr<Policy> make_policy(const PolicySpec& spec, Rng& rng) {
  if (spec.obs_dim < 1 || spec.action_dim < 1) throw InvalidInput("policy dimensions must be positive");
  if (!(spec.action_limit > 0.0)) throw InvalidInput("action limit must be positive");
  if (spec.kind == PolicyKind::flow) return std::make_unique<FlowPolicy>(spec, rng);
  return std::make_unique<GaussianPolicy>(spec, rng);
}

ActResult act(Policy& policy, const Vec& obs, Rng& rng, bool deterministic) {
  const auto& spec = policy.spec();
  if (obs.size() != spec.obs_dim) {
    throw InvalidInput("observation has " + std::to_string(obs.size()) + " entries, policy expects " +
                       std::to_string(spec.obs_dim));
  }
  const Matrix obs_row = obs.transpose();
  ActResult out;
  if (deterministic) {
    out.action = policy.mean_action(obs_row).row(0).transpose();
    out.log_prob = std::numeric_limits<double>::quiet_NaN();
  } else {
    Matrix noise(1, spec.action_dim);
    for (Eigen::Index j = 0; j < noise.cols(); ++j) noise(0, j) = rng.normal();
    Tape tape;
    const auto s = policy.sample(tape, tape.constant(obs_row), noise);
    out.action = s.action.value().row(0).transpose();
    out.log_prob = s.log_prob.scalar();
  }
  if (!out.action.allFinite() || (!deterministic && !std::isfinite(out.log_prob))) {
    std::ostringstream msg;
    msg << "policy produced non-finite output; obs=[" << obs.transpose() << "] action=["
        << out.action.transpose() << "] log_prob=" << out.log_prob;
    throw TrainingDivergence(msg.str());
  }
  return out;
}

}  // namespace vfield::agent
