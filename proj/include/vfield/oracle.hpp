#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "vfield/rng.hpp"

namespace vfield::oracle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// One isotropic Gaussian bump, A * exp(-|s - c|^2 / (2 sigma^2)).
struct GaussianBump {
  double amplitude = 1.0;
  Vec center;
  double sigma = 0.1;
};

/// Axis-aligned box [lo, hi] in state space.
struct Box {
  Vec lo;
  Vec hi;

  static Box unit(int dimension);
  int dimension() const { return static_cast<int>(lo.size()); }
  Vec sample(Rng& rng) const;
};

/// Analytic uncertainty landscape: a sum of Gaussian bumps with exact first
/// and second derivatives. A field with no bumps is identically zero.
class UncertaintyField {
 public:
  UncertaintyField(int dimension, std::vector<GaussianBump> bumps);

  int dimension() const { return dimension_; }
  const std::vector<GaussianBump>& bumps() const { return bumps_; }
  bool empty() const { return bumps_.empty(); }

  double value(const Vec& s) const;
  Vec gradient(const Vec& s) const;
  Mat hessian(const Vec& s) const;

  /// Sum of amplitudes; an upper bound on value().
  double total_amplitude() const;
  /// Smallest amplitude, or 0 for an empty field.
  double min_amplitude() const;
  /// Index of the bump whose center is closest to s.
  std::size_t nearest_bump(const Vec& s) const;

 private:
  void check_dimension(const Vec& s) const;

  int dimension_;
  std::vector<GaussianBump> bumps_;
};

/// Hessian of the level potential log cosh(U(s) - u_mid). Since log cosh is
/// even this equals the Hessian of log cosh(|U - u_mid|):
///   sech^2(U - u_mid) grad U grad U^T + tanh(U - u_mid) hess U.
Mat level_potential_hessian(const UncertaintyField& field, double u_mid, const Vec& s);

/// Spectral norm of a symmetric matrix.
double symmetric_operator_norm(const Mat& m);

/// Sampled estimate of the maximum curvature of the level potential over a
/// region, inflated by a 1.01 safety factor. Samples are drawn sequentially
/// from rng, so the sample sets for n and 2n with the same seed are nested.
double curvature_bound(const UncertaintyField& field, double u_mid, const Box& region,
                       int n_samples, Rng& rng);

struct RegularValueProbe {
  double min_gradient_norm = 0.0;
  std::size_t band_points = 0;
  bool vacuous = false;  // no sampled point fell inside the band
};

/// Smallest |grad U| over sampled points with |U - u_mid| < delta_band.
RegularValueProbe regular_value_probe(const UncertaintyField& field, double u_mid,
                                      double delta_band, const Box& region, int n_samples,
                                      Rng& rng);

}  // namespace vfield::oracle
