#include <cmath>
#include <numbers>

#include "doctest.h"
#include "vfield/errors.hpp"
#include "vfield/shaping.hpp"

using namespace vfield;
using namespace vfield::shaping;
using oracle::Box;

namespace {

Vec v2(double x, double y) {
  Vec v(2);
  v << x, y;
  return v;
}

UncertaintyField centered(double sigma = 0.15) {
  return UncertaintyField(2, {{1.0, v2(0.5, 0.5), sigma}});
}

// tanh from the exponential, kept apart from std::tanh.
double tanh_ref(double x) { return std::expm1(2 * x) / (std::exp(2 * x) + 1); }

// Points on the u_mid level of a single centered bump.
std::vector<Vec> circle_loop(double radius, int n, bool ccw) {
  std::vector<Vec> pts;
  for (int i = 0; i <= n; ++i) {
    const double th = 2 * std::numbers::pi * (i % n) / n * (ccw ? 1 : -1);
    pts.push_back(v2(0.5 + radius * std::cos(th), 0.5 + radius * std::sin(th)));
  }
  return pts;
}

}  // namespace

TEST_CASE("skew generator construction") {
  const auto w = SkewGenerator::symplectic();
  CHECK(w.matrix()(0, 1) == 1.0);
  CHECK(w.matrix()(1, 0) == -1.0);
  CHECK(w.is_skew());
  CHECK(SkewGenerator::symplectic(-1).matrix()(0, 1) == -1.0);

  const std::vector<double> upper{0.3, -1.2, 2.5};
  const auto w3 = SkewGenerator::from_upper(3, upper);
  CHECK(w3.is_skew());
  CHECK(w3.matrix()(0, 2) == -1.2);
  CHECK(w3.matrix()(2, 1) == -2.5);
  CHECK_THROWS_AS(SkewGenerator::from_upper(3, std::vector<double>{1.0}), InvalidInput);

  Mat bad(2, 2);
  bad << 0, 1, 1, 0;
  CHECK_FALSE(SkewGenerator::from_matrix(bad).is_skew());
}

TEST_CASE("alpha examples") {
  ShapingConfig cfg;
  CHECK(alpha(cfg, cfg.u_mid) == 0.0);
  CHECK(alpha(cfg, cfg.u_mid - 0.5) == doctest::Approx(tanh_ref(0.5)).epsilon(1e-14));
  CHECK(alpha(cfg, cfg.u_mid - 0.5) == doctest::Approx(0.46211715726000974).epsilon(1e-14));
  CHECK(alpha(cfg, cfg.u_mid + 0.5) == doctest::Approx(-0.46211715726000974).epsilon(1e-14));
  CHECK(std::abs(alpha(cfg, 1e6)) < 1.0 + 1e-15);
}

TEST_CASE("beta examples") {
  ShapingConfig cfg;
  CHECK(beta(cfg, cfg.u_mid) == 1.0);
  CHECK(beta(cfg, cfg.u_mid + 0.5) == doctest::Approx(1 - tanh_ref(0.5)).epsilon(1e-14));
  CHECK(beta(cfg, cfg.u_mid - 0.5) == doctest::Approx(0.53788284273999026).epsilon(1e-14));
  CHECK(beta(cfg, 40.0) < 1e-15);
}

TEST_CASE("alpha is odd and beta even about u_mid, exactly") {
  ShapingConfig cfg;
  cfg.u_mid = 0.625;
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    // Dyadic offsets keep u_mid +- x exact.
    const double x = std::ldexp(static_cast<double>(rng.index(1u << 20)), -20) * 3.0;
    CHECK(alpha(cfg, cfg.u_mid + x) == -alpha(cfg, cfg.u_mid - x));
    CHECK(beta(cfg, cfg.u_mid + x) == beta(cfg, cfg.u_mid - x));
  }
}

TEST_CASE("rotational field") {
  ShapingConfig cfg;
  CHECK(rotational_field(cfg, v2(1, 0)) == v2(0, -1));
  CHECK(rotational_field(cfg, v2(0, 0)).norm() == 0.0);
  CHECK_THROWS_AS(rotational_field(cfg, Vec::Zero(3)), InvalidInput);

  const auto field = UncertaintyField(2, {{1.0, v2(0.3, 0.6), 0.12}, {0.6, v2(0.7, 0.3), 0.2}});
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const Vec g = field.gradient(Box::unit(2).sample(rng));
    CHECK(std::abs(rotational_field(cfg, g).dot(g)) < 1e-12);
  }

  ShapingConfig cfg3;
  const std::vector<double> upper{0.4, -0.7, 1.3};
  cfg3.w = SkewGenerator::from_upper(3, upper);
  for (int i = 0; i < 1000; ++i) {
    Vec g(3);
    g << rng.normal(), rng.normal(), rng.normal();
    CHECK(std::abs(rotational_field(cfg3, g).dot(g)) < 1e-12);
  }
}

TEST_CASE("shaping reward examples") {
  ShapingConfig cfg;
  const auto field = centered();
  const Vec s = v2(0.3, 0.45);
  const auto still = shaping_reward(cfg, field, s, s);
  CHECK(still.total == 0.0);
  CHECK(still.grad_term == 0.0);
  CHECK(still.rot_term == 0.0);

  // A point exactly on the level set: alpha is 0, so only the rotation counts.
  const double r = 0.15 * std::sqrt(2 * std::log(2.0));
  const Vec on = v2(0.5 + r, 0.5);
  ShapingConfig at = cfg;
  at.u_mid = field.value(on);
  const auto terms = shaping_reward(at, field, on, on + v2(0.01, 0.03));
  CHECK(terms.grad_term == 0.0);
  CHECK(terms.total == terms.rot_term);

  // Below u_mid, stepping up the gradient is rewarded.
  const Vec low = v2(0.15, 0.2);
  REQUIRE(field.value(low) < cfg.u_mid);
  const auto up = shaping_reward(cfg, field, low, low + 1e-3 * field.gradient(low));
  CHECK(up.grad_term > 0.0);

  // Scales enter linearly.
  ShapingConfig scaled = cfg;
  scaled.c_grad = 2.0;
  scaled.c_rot = 0.5;
  const Vec step = v2(0.02, -0.01);
  const auto a = shaping_reward(cfg, field, s, s + step);
  const auto b = shaping_reward(scaled, field, s, s + step);
  CHECK(b.grad_term == doctest::Approx(2.0 * a.grad_term));
  CHECK(b.rot_term == doctest::Approx(0.5 * a.rot_term));
  CHECK_THROWS_AS(shaping_reward(cfg, field, s, Vec::Zero(3)), InvalidInput);
}

TEST_CASE("shaping reward gradient matches finite differences") {
  ShapingConfig cfg;
  cfg.c_grad = 0.7;
  cfg.c_rot = 1.3;
  const auto field = UncertaintyField(2, {{1.0, v2(0.4, 0.55), 0.14}});
  Rng rng(4);
  const double h = 1e-6;
  for (int i = 0; i < 500; ++i) {
    const Vec s = Box::unit(2).sample(rng);
    const Vec sn = s + v2(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
    const Vec g = shaping_reward_gradient(cfg, field, s);
    Vec fd(2);
    for (int k = 0; k < 2; ++k) {
      Vec p = sn, m = sn;
      p[k] += h;
      m[k] -= h;
      fd[k] = (shaping_reward(cfg, field, s, p).total - shaping_reward(cfg, field, s, m).total) /
              (2 * h);
    }
    if (fd.norm() < 1e-6) continue;
    CHECK((g - fd).norm() / fd.norm() < 1e-6);
  }
}

TEST_CASE("psi values and stability") {
  ShapingConfig cfg;
  CHECK(psi(cfg, cfg.u_mid) == 0.0);
  CHECK(psi(cfg, cfg.u_mid + 1.0) ==
        doctest::Approx(std::log(std::cosh(1.0))).epsilon(1e-14));
  CHECK(psi(cfg, cfg.u_mid + 1.0) == doctest::Approx(0.43378083048302705).epsilon(1e-14));
  CHECK(psi(cfg, cfg.u_mid + 0.375) == psi(cfg, cfg.u_mid - 0.375));
  const double big = psi(cfg, 2000.0);
  CHECK(std::isfinite(big));
  CHECK(big == doctest::Approx(1999.5 - std::log(2.0)).epsilon(1e-14));
  CHECK(psi(cfg, cfg.u_mid + 1e-9) >= 0.0);
}

TEST_CASE("decomposition residual is second order") {
  ShapingConfig cfg;
  cfg.u_mid = 0.0;
  // A very wide bump is close to linear over the unit square.
  const auto field = UncertaintyField(2, {{1.0, v2(-3.0, 0.5), 3.0}});
  Rng rng(7);
  int checked = 0;
  for (int i = 0; i < 200; ++i) {
    const Vec s = Box::unit(2).sample(rng);
    Vec dir = v2(rng.normal(), rng.normal());
    dir.normalize();
    const double e1 = decomposition_residual(cfg, field, s, s + 0.02 * dir);
    const double e2 = decomposition_residual(cfg, field, s, s + 0.01 * dir);
    if (std::abs(e1) < 1e-13) continue;
    CHECK(std::abs(e1) / std::abs(e2) > 3.0);
    ++checked;
  }
  CHECK(checked > 150);
  CHECK(decomposition_residual(cfg, field, v2(0.2, 0.2), v2(0.2, 0.2)) == 0.0);
}

TEST_CASE("decomposition residual within the curvature bound") {
  ShapingConfig cfg;
  const auto field = UncertaintyField(2, {{1.0, v2(0.35, 0.65), 0.12}, {0.8, v2(0.7, 0.35), 0.1}});
  Rng rng(10);
  const double curvature = oracle::curvature_bound(field, cfg.u_mid, Box::unit(2), 100000, rng);
  for (int i = 0; i < 10000; ++i) {
    const Vec s = Box::unit(2).sample(rng);
    Vec dir = v2(rng.normal(), rng.normal());
    const Vec sn = (s + rng.uniform(0, 0.1) * dir.normalized()).cwiseMax(0.0).cwiseMin(1.0);
    CHECK(std::abs(decomposition_residual(cfg, field, s, sn)) <=
          0.5 * curvature * (sn - s).squaredNorm());
  }
}

TEST_CASE("telescoping of psi along random trajectories") {
  ShapingConfig cfg;
  const auto field = centered();
  Rng rng(3);
  for (int traj = 0; traj < 100; ++traj) {
    Vec s = Box::unit(2).sample(rng);
    const double p0 = psi(cfg, field.value(s));
    double sum = 0.0;
    double prev = p0;
    for (int t = 0; t < 60; ++t) {
      s = (s + v2(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1))).cwiseMax(0.0).cwiseMin(1.0);
      const double next = psi(cfg, field.value(s));
      sum += -(next - prev);
      prev = next;
    }
    CHECK(std::abs(sum - (p0 - prev)) <= 1e-9);
  }
}

TEST_CASE("baseline reward") {
  ShapingConfig cfg;
  cfg.lambda_unsafe = 100.0;
  const auto field = centered();
  CHECK(baseline_reward(cfg, field, v2(40, 40)) == 0.0);

  // Place s_next where U equals the threshold exactly by choosing u_mid.
  const Vec s = v2(0.55, 0.48);
  const double u = field.value(s);
  ShapingConfig edge = cfg;
  edge.u_mid = u - edge.eps_unsafe;
  if (edge.u_mid + edge.eps_unsafe == u) {
    CHECK(baseline_reward(edge, field, s) == u);
  }
  ShapingConfig over = cfg;
  over.u_mid = u - 2 * over.eps_unsafe;
  CHECK(baseline_reward(over, field, s) == doctest::Approx(u - 100.0));
}

TEST_CASE("closed loop integrals on the level circle") {
  ShapingConfig cfg;
  const auto field = centered();
  const double r = 0.15 * std::sqrt(2 * std::log(1.0 / cfg.u_mid));

  const auto coarse = closed_loop_integrals(cfg, field, circle_loop(r, 90, true));
  const auto fine = closed_loop_integrals(cfg, field, circle_loop(r, 720, true));
  const auto back = closed_loop_integrals(cfg, field, circle_loop(r, 720, false));
  CHECK(std::abs(fine.gradient_field_sum) < std::abs(coarse.gradient_field_sum));
  CHECK(std::abs(fine.grad_sum) < 0.05 * std::abs(fine.rot_sum));
  CHECK(fine.rot_sum > 0.0);
  CHECK(back.rot_sum < 0.0);
  CHECK(back.rot_sum == doctest::Approx(-fine.rot_sum).epsilon(1e-3));

  // The rotational return approaches the circulation |grad U| * 2 pi r.
  const double circulation = field.gradient(v2(0.5 + r, 0.5)).norm() * 2 * std::numbers::pi * r;
  CHECK(fine.rot_sum == doctest::Approx(circulation).epsilon(1e-3));

  const std::vector<Vec> point{v2(0.2, 0.3), v2(0.2, 0.3)};
  const auto zero = closed_loop_integrals(cfg, field, point);
  CHECK(zero.grad_sum == 0.0);
  CHECK(zero.rot_sum == 0.0);

  const std::vector<Vec> open{v2(0.2, 0.3), v2(0.25, 0.3)};
  CHECK_THROWS_AS(closed_loop_integrals(cfg, field, open), InvalidInput);
}

TEST_CASE("closed loop off the level set keeps a vanishing gradient return") {
  ShapingConfig cfg;
  const auto field = centered();
  // A circle inside the level set: alpha is constant, so grad_sum shrinks
  // with refinement like the plain gradient return.
  const auto coarse = closed_loop_integrals(cfg, field, circle_loop(0.1, 90, true));
  const auto fine = closed_loop_integrals(cfg, field, circle_loop(0.1, 720, true));
  CHECK(std::abs(fine.grad_sum) < std::abs(coarse.grad_sum));
}
