#include <cmath>
#include <limits>
#include <numbers>

#include "doctest.h"
#include "vfield/errors.hpp"
#include "vfield/policy.hpp"

using namespace vfield;
using namespace vfield::agent;

namespace {

PolicySpec small_spec(PolicyKind kind, int action_dim, int obs_dim = 3) {
  PolicySpec spec;
  spec.kind = kind;
  spec.obs_dim = obs_dim;
  spec.action_dim = action_dim;
  spec.action_limit = 0.1;
  spec.hidden_width = 8;
  spec.hidden_layers = 2;
  spec.flow_blocks = 3;
  return spec;
}

// Moves every parameter off its initial value so zero-initialised flow
// blocks are not the identity.
void perturb(Policy& policy, Rng& rng, double scale) {
  for (nn::Parameter* p : policy.parameters()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += scale * rng.normal();
  }
}

Matrix obs_row(double a, double b, double c) {
  Matrix m(1, 3);
  m << a, b, c;
  return m;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

TEST_CASE("zero output layer gives a centred deterministic action") {
  for (PolicyKind kind : {PolicyKind::gaussian, PolicyKind::flow}) {
    Rng rng(1);
    auto policy = make_policy(small_spec(kind, 2), rng);
    policy->zero_output_layers();
    const auto r = act(*policy, Vec::Constant(3, 0.4), rng, true);
    CHECK(r.action.norm() == 0.0);
    CHECK(std::isnan(r.log_prob));
  }
}

TEST_CASE("samples stay strictly inside the action box with finite log-density") {
  for (PolicyKind kind : {PolicyKind::gaussian, PolicyKind::flow}) {
    Rng rng(2);
    auto policy = make_policy(small_spec(kind, 2), rng);
    perturb(*policy, rng, 0.3);
    for (int i = 0; i < 2000; ++i) {
      const Vec obs = Vec::Random(3);
      const auto r = act(*policy, obs, rng, false);
      CHECK(r.action.cwiseAbs().maxCoeff() < 0.1);
      CHECK(std::isfinite(r.log_prob));
    }
  }
}

TEST_CASE("sampled log-density equals the exact density of the action") {
  for (PolicyKind kind : {PolicyKind::gaussian, PolicyKind::flow}) {
    CAPTURE(to_string(kind));
    Rng rng(3);
    auto policy = make_policy(small_spec(kind, 2), rng);
    perturb(*policy, rng, 0.2);
    Matrix obs(16, 3), noise(16, 2);
    for (Eigen::Index i = 0; i < obs.size(); ++i) obs.data()[i] = rng.uniform(0, 1);
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.normal();
    nn::Tape tape;
    const auto s = policy->sample(tape, tape.constant(obs), noise);
    const Vec exact = policy->log_prob(obs, s.action.value());
    for (Eigen::Index i = 0; i < exact.size(); ++i) {
      CHECK(exact[i] == doctest::Approx(s.log_prob.value()(i, 0)).epsilon(1e-7));
    }
  }
}

TEST_CASE("log-density outside the box is -inf") {
  Rng rng(4);
  auto policy = make_policy(small_spec(PolicyKind::gaussian, 1), rng);
  Matrix a(1, 1);
  a << 0.1;
  CHECK(policy->log_prob(obs_row(0.1, 0.2, 0.3), a)[0] == -std::numeric_limits<double>::infinity());
}

TEST_CASE("gaussian log-density matches the derivative of its CDF on 1-d slices") {
  Rng rng(5);
  auto base = make_policy(small_spec(PolicyKind::gaussian, 1), rng);
  auto& policy = dynamic_cast<GaussianPolicy&>(*base);
  perturb(policy, rng, 0.3);
  const double limit = 0.1;
  for (int k = 0; k < 5; ++k) {
    const Matrix obs = obs_row(rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1));
    const auto [mu, log_std] = policy.distribution(obs);
    const double m = mu(0, 0), sd = std::exp(log_std(0, 0));
    auto cdf = [&](double a) { return normal_cdf((std::atanh(a / limit) - m) / sd); };
    for (double frac : {-0.9, -0.5, -0.1, 0.0, 0.3, 0.7, 0.95}) {
      const double a = frac * limit;
      const double h = 1e-7;
      const double numeric = (cdf(a + h) - cdf(a - h)) / (2 * h);
      Matrix act_m(1, 1);
      act_m << a;
      const double density = std::exp(policy.log_prob(obs, act_m)[0]);
      if (numeric < 1e-6) continue;
      CHECK(std::abs(density - numeric) / numeric < 1e-3);
    }
  }
}

TEST_CASE("1-d densities integrate to one") {
  for (PolicyKind kind : {PolicyKind::gaussian, PolicyKind::flow}) {
    CAPTURE(to_string(kind));
    Rng rng(6);
    auto policy = make_policy(small_spec(kind, 1), rng);
    perturb(*policy, rng, 0.25);
    const Matrix obs = obs_row(0.3, 0.6, 0.5);
    // Midpoint rule in the pre-squash coordinate, where the density is smooth.
    const int n = 20000;
    const double lo = -12.0, hi = 12.0, du = (hi - lo) / n;
    Matrix obs_b = obs.replicate(n, 1);
    Matrix acts(n, 1);
    Vec jac(n);
    for (int i = 0; i < n; ++i) {
      const double u = lo + (i + 0.5) * du;
      acts(i, 0) = 0.1 * std::tanh(u);
      jac[i] = 0.1 * (1 - std::tanh(u) * std::tanh(u));
    }
    const Vec lp = policy->log_prob(obs_b, acts);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      if (std::isfinite(lp[i])) total += std::exp(lp[i]) * jac[i] * du;
    }
    CHECK(std::abs(total - 1.0) < 0.02);
  }
}

TEST_CASE("2-d densities integrate to one") {
  for (PolicyKind kind : {PolicyKind::gaussian, PolicyKind::flow}) {
    CAPTURE(to_string(kind));
    Rng rng(7);
    auto policy = make_policy(small_spec(kind, 2), rng);
    perturb(*policy, rng, 0.2);
    const int n = 600;
    const double lo = -16.0, hi = 16.0, du = (hi - lo) / n;
    Matrix obs = obs_row(0.2, 0.8, 0.4).replicate(n * n, 1);
    Matrix acts(n * n, 2);
    Vec jac(n * n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double u = lo + (i + 0.5) * du, v = lo + (j + 0.5) * du;
        acts.row(i * n + j) << 0.1 * std::tanh(u), 0.1 * std::tanh(v);
        jac[i * n + j] = 0.01 * (1 - std::tanh(u) * std::tanh(u)) * (1 - std::tanh(v) * std::tanh(v));
      }
    }
    const Vec lp = policy->log_prob(obs, acts);
    double total = 0.0;
    for (Eigen::Index k = 0; k < lp.size(); ++k) {
      if (std::isfinite(lp[k])) total += std::exp(lp[k]) * jac[k] * du * du;
    }
    CHECK(std::abs(total - 1.0) < 0.02);
  }
}

TEST_CASE("policy sample gradients match finite differences") {
  for (PolicyKind kind : {PolicyKind::gaussian, PolicyKind::flow}) {
    CAPTURE(to_string(kind));
    Rng rng(8);
    auto policy = make_policy(small_spec(kind, 2), rng);
    perturb(*policy, rng, 0.2);
    Matrix obs(6, 3), noise(6, 2);
    for (Eigen::Index i = 0; i < obs.size(); ++i) obs.data()[i] = rng.uniform(0, 1);
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.normal();
    auto loss = [&](bool backward) {
      nn::Tape tape;
      const auto s = policy->sample(tape, tape.constant(obs), noise);
      const nn::Var l = nn::mean(s.log_prob) + 30.0 * nn::mean(nn::square(s.action));
      if (backward) tape.backward(l);
      return l.scalar();
    };
    auto params = policy->parameters();
    nn::zero_grad(params);
    loss(true);
    const double h = 1e-5;
    for (nn::Parameter* p : params) {
      CAPTURE(p->name);
      Matrix numeric(p->value.rows(), p->value.cols());
      for (Eigen::Index i = 0; i < p->value.size(); ++i) {
        const double keep = p->value.data()[i];
        p->value.data()[i] = keep + h;
        const double up = loss(false);
        p->value.data()[i] = keep - h;
        const double down = loss(false);
        p->value.data()[i] = keep;
        numeric.data()[i] = (up - down) / (2 * h);
      }
      CHECK((p->grad - numeric).norm() / std::max(1e-8, numeric.norm()) < 1e-4);
    }
  }
}

TEST_CASE("act rejects bad observations and reports divergence") {
  Rng rng(9);
  auto policy = make_policy(small_spec(PolicyKind::gaussian, 2), rng);
  CHECK_THROWS_AS(act(*policy, Vec::Zero(2), rng, false), InvalidInput);
  policy->parameters().front()->value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(act(*policy, Vec::Constant(3, 0.5), rng, false), TrainingDivergence);
  CHECK_THROWS_AS(act(*policy, Vec::Constant(3, 0.5), rng, true), TrainingDivergence);
}

TEST_CASE("policy kinds parse") {
  CHECK(parse_policy_kind("flow") == PolicyKind::flow);
  CHECK_THROWS_AS(parse_policy_kind("mixture"), InvalidInput);
}
