#include "vfield/shaping.hpp"

#include <cmath>
#include <numbers>

#include "vfield/errors.hpp"

namespace vfield::shaping {

namespace {

double sign(double x) { return (x > 0.0) - (x < 0.0); }

void check_same_dimension(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw InvalidInput("state dimension mismatch");
}

}  // namespace

SkewGenerator SkewGenerator::symplectic(int orientation) {
  const double o = orientation < 0 ? -1.0 : 1.0;
  const double upper[] = {o};
  return from_upper(2, upper);
}

SkewGenerator SkewGenerator::from_upper(int dimension, std::span<const double> upper) {
  if (dimension < 2) throw InvalidInput("skew generator needs dimension >= 2");
  const auto expected = static_cast<std::size_t>(dimension * (dimension - 1) / 2);
  if (upper.size() != expected) {
    throw InvalidInput("skew generator of dimension " + std::to_string(dimension) + " needs " +
                       std::to_string(expected) + " upper-triangular entries");
  }
  Mat m = Mat::Zero(dimension, dimension);
  std::size_t k = 0;
  for (int i = 0; i < dimension; ++i) {
    for (int j = i + 1; j < dimension; ++j) {
      m(i, j) = upper[k];
      m(j, i) = -upper[k];
      ++k;
    }
  }
  return SkewGenerator(std::move(m));
}

SkewGenerator SkewGenerator::from_matrix(Mat matrix) {
  if (matrix.rows() != matrix.cols() || matrix.rows() < 1) {
    throw InvalidInput("skew generator must be square");
  }
  return SkewGenerator(std::move(matrix));
}

double alpha(const ShapingConfig& cfg, double u_s) {
  const double d = u_s - cfg.u_mid;
  return -sign(d) * std::tanh(std::abs(d));
}

double beta(const ShapingConfig& cfg, double u_s) {
  return 1.0 - std::abs(std::tanh(u_s - cfg.u_mid));
}

Vec rotational_field(const ShapingConfig& cfg, const Vec& grad_u) {
  if (grad_u.size() != cfg.w.dimension()) {
    throw InvalidInput("gradient dimension does not match skew generator");
  }
  return cfg.w.matrix() * grad_u;
}

ShapingTerms shaping_reward(const ShapingConfig& cfg, const UncertaintyField& field, const Vec& s,
                            const Vec& s_next) {
  check_same_dimension(s, s_next);
  const Vec step = s_next - s;
  const double u = field.value(s);
  const Vec g = field.gradient(s);
  ShapingTerms terms;
  terms.grad_term = cfg.c_grad * alpha(cfg, u) * g.dot(step);
  terms.rot_term = cfg.c_rot * beta(cfg, u) * rotational_field(cfg, g).dot(step);
  terms.total = terms.grad_term + terms.rot_term;
  return terms;
}

Vec shaping_reward_gradient(const ShapingConfig& cfg, const UncertaintyField& field,
                            const Vec& s) {
  const double u = field.value(s);
  const Vec g = field.gradient(s);
  return cfg.c_grad * alpha(cfg, u) * g + cfg.c_rot * beta(cfg, u) * rotational_field(cfg, g);
}

double psi(const ShapingConfig& cfg, double u_s) {
  const double x = std::abs(u_s - cfg.u_mid);
  // log cosh x = x + log((1 + e^{-2x}) / 2)
  return x + std::log1p(std::exp(-2.0 * x)) - std::numbers::ln2;
}

double decomposition_residual(const ShapingConfig& cfg, const UncertaintyField& field,
                              const Vec& s, const Vec& s_next) {
  check_same_dimension(s, s_next);
  const double u = field.value(s);
  const double u_next = field.value(s_next);
  const double normal_term = alpha(cfg, u) * field.gradient(s).dot(s_next - s);
  return normal_term + (psi(cfg, u_next) - psi(cfg, u));
}

double baseline_reward(const ShapingConfig& cfg, const UncertaintyField& field,
                       const Vec& s_next) {
  const double u = field.value(s_next);
  const bool unsafe = u > cfg.u_mid + cfg.eps_unsafe;
  return u - (unsafe ? cfg.lambda_unsafe : 0.0);
}

LoopIntegrals closed_loop_integrals(const ShapingConfig& cfg, const UncertaintyField& field,
                                    std::span<const Vec> loop) {
  if (loop.empty()) throw InvalidInput("loop is empty");
  if (loop.front().size() != loop.back().size() || loop.front() != loop.back()) {
    throw InvalidInput("loop is not closed: last point must equal the first");
  }
  LoopIntegrals sums;
  for (std::size_t i = 0; i + 1 < loop.size(); ++i) {
    check_same_dimension(loop[i], loop[i + 1]);
    const Vec step = loop[i + 1] - loop[i];
    const double u = field.value(loop[i]);
    const Vec g = field.gradient(loop[i]);
    const double along_gradient = g.dot(step);
    sums.gradient_field_sum += along_gradient;
    sums.grad_sum += alpha(cfg, u) * along_gradient;
    sums.rot_sum += beta(cfg, u) * rotational_field(cfg, g).dot(step);
  }
  return sums;
}

}  // namespace vfield::shaping
