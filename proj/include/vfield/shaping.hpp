#pragma once

#include <span>
#include <vector>

#include "vfield/oracle.hpp"

namespace vfield::shaping {

using oracle::Mat;
using oracle::UncertaintyField;
using oracle::Vec;

/// Constant skew-symmetric matrix that rotates grad U into the tangent space
/// of the level set. The checked constructors build the matrix from its
/// strictly upper triangle, so W + W^T == 0 holds exactly.
class SkewGenerator {
 public:
  /// 2-d standard symplectic matrix [[0, 1], [-1, 0]], negated when
  /// orientation < 0.
  static SkewGenerator symplectic(int orientation = 1);

  /// Row-major strictly upper triangle, d(d-1)/2 entries.
  static SkewGenerator from_upper(int dimension, std::span<const double> upper);

  /// Arbitrary square matrix, not checked. is_skew() reports whether it
  /// actually is; the verification suite uses this to exercise failures.
  static SkewGenerator from_matrix(Mat matrix);

  const Mat& matrix() const { return matrix_; }
  int dimension() const { return static_cast<int>(matrix_.rows()); }
  bool is_skew() const { return (matrix_ + matrix_.transpose()).cwiseAbs().maxCoeff() == 0.0; }

 private:
  explicit SkewGenerator(Mat m) : matrix_(std::move(m)) {}
  Mat matrix_;
};

struct ShapingConfig {
  double u_mid = 0.5;
  SkewGenerator w = SkewGenerator::symplectic();
  double c_grad = 1.0;
  double c_rot = 1.0;
  double lambda_unsafe = 20.0;
  double eps_unsafe = 0.1;
};

/// sign(u_mid - u) * tanh(|u - u_mid|), with sign(0) = 0.
double alpha(const ShapingConfig& cfg, double u_s);

/// 1 - |tanh(u - u_mid)|; peaks at 1 on the target level.
double beta(const ShapingConfig& cfg, double u_s);

/// W * grad_u.
Vec rotational_field(const ShapingConfig& cfg, const Vec& grad_u);

struct ShapingTerms {
  double total = 0.0;
  double grad_term = 0.0;
  double rot_term = 0.0;
};

/// Vector-field shaping reward for the step s -> s_next:
///   c_grad * alpha(s) <grad U(s), ds> + c_rot * beta(s) <W grad U(s), ds>.
ShapingTerms shaping_reward(const ShapingConfig& cfg, const UncertaintyField& field, const Vec& s,
                            const Vec& s_next);

/// Derivative of shaping_reward with respect to s_next (constant in s_next).
Vec shaping_reward_gradient(const ShapingConfig& cfg, const UncertaintyField& field,
                            const Vec& s);

/// log cosh(|u - u_mid|), evaluated without overflow for large arguments.
double psi(const ShapingConfig& cfg, double u_s);

/// Remainder of the potential decomposition,
///   alpha(s) <grad U(s), ds> + psi(s_next) - psi(s),
/// always with the unscaled gradient term (c_grad is ignored).
double decomposition_residual(const ShapingConfig& cfg, const UncertaintyField& field,
                              const Vec& s, const Vec& s_next);

/// State-based baseline: U(s_next) - lambda * [U(s_next) > u_mid + eps].
double baseline_reward(const ShapingConfig& cfg, const UncertaintyField& field,
                       const Vec& s_next);

struct LoopIntegrals {
  double grad_sum = 0.0;            // sum of alpha <grad U, ds>
  double rot_sum = 0.0;             // sum of beta <W grad U, ds>
  double gradient_field_sum = 0.0;  // sum of <grad U, ds>, the pure gradient-field return
};

/// Accumulates the unscaled gradient and rotational terms around a closed
/// polyline (left-endpoint rule). The last point must equal the first.
/// On an exact level-set loop alpha vanishes, so grad_sum is rounding noise;
/// gradient_field_sum is the discretisation error of a conservative field
/// and shrinks as the loop is refined.
LoopIntegrals closed_loop_integrals(const ShapingConfig& cfg, const UncertaintyField& field,
                                    std::span<const Vec> loop);

}  // namespace vfield::shaping
