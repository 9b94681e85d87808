#include "vfield/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "vfield/errors.hpp"

namespace vfield::oracle {

Box Box::unit(int dimension) {
  return Box{Vec::Zero(dimension), Vec::Ones(dimension)};
}

Vec Box::sample(Rng& rng) const {
  Vec s(lo.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = rng.uniform(lo[i], hi[i]);
  return s;
}

UncertaintyField::UncertaintyField(int dimension, std::vector<GaussianBump> bumps)
    : dimension_(dimension), bumps_(std::move(bumps)) {
  if (dimension_ < 1) throw InvalidInput("field dimension must be positive");
  for (std::size_t i = 0; i < bumps_.size(); ++i) {
    const auto& b = bumps_[i];
    const std::string where = "bump " + std::to_string(i) + ": ";
    if (!(b.amplitude > 0.0)) throw InvalidInput(where + "amplitude must be > 0");
    if (!(b.sigma > 0.0)) throw InvalidInput(where + "sigma must be > 0");
    if (b.center.size() != dimension_) throw InvalidInput(where + "center dimension mismatch");
  }
}

void UncertaintyField::check_dimension(const Vec& s) const {
  if (s.size() != dimension_) {
    throw InvalidInput("state has dimension " + std::to_string(s.size()) + ", field expects " +
                       std::to_string(dimension_));
  }
}

double UncertaintyField::value(const Vec& s) const {
  check_dimension(s);
  double u = 0.0;
  for (const auto& b : bumps_) {
    const double r2 = (s - b.center).squaredNorm();
    u += b.amplitude * std::exp(-r2 / (2.0 * b.sigma * b.sigma));
  }
  return u;
}

Vec UncertaintyField::gradient(const Vec& s) const {
  check_dimension(s);
  Vec g = Vec::Zero(dimension_);
  for (const auto& b : bumps_) {
    const Vec diff = s - b.center;
    const double inv_var = 1.0 / (b.sigma * b.sigma);
    const double bump = b.amplitude * std::exp(-0.5 * diff.squaredNorm() * inv_var);
    g -= bump * inv_var * diff;
  }
  return g;
}

Mat UncertaintyField::hessian(const Vec& s) const {
  check_dimension(s);
  Mat h = Mat::Zero(dimension_, dimension_);
  for (const auto& b : bumps_) {
    const Vec diff = s - b.center;
    const double inv_var = 1.0 / (b.sigma * b.sigma);
    const double bump = b.amplitude * std::exp(-0.5 * diff.squaredNorm() * inv_var);
    // A e (d d^T / sigma^4 - I / sigma^2)
    const Mat outer = diff * diff.transpose();
    h += (bump * inv_var * inv_var) * outer;
    h.diagonal().array() -= bump * inv_var;
  }
  return h;
}

double UncertaintyField::total_amplitude() const {
  double total = 0.0;
  for (const auto& b : bumps_) total += b.amplitude;
  return total;
}

double UncertaintyField::min_amplitude() const {
  if (bumps_.empty()) return 0.0;
  double m = bumps_.front().amplitude;
  for (const auto& b : bumps_) m = std::min(m, b.amplitude);
  return m;
}

std::size_t UncertaintyField::nearest_bump(const Vec& s) const {
  check_dimension(s);
  if (bumps_.empty()) throw InvalidInput("field has no bumps");
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < bumps_.size(); ++i) {
    const double d2 = (s - bumps_[i].center).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return best;
}

Mat level_potential_hessian(const UncertaintyField& field, double u_mid, const Vec& s) {
  const double d = field.value(s) - u_mid;
  const Vec g = field.gradient(s);
  const double th = std::tanh(d);
  const double sech2 = 1.0 - th * th;
  return sech2 * (g * g.transpose()) + th * field.hessian(s);
}

double symmetric_operator_norm(const Mat& m) {
  if (m.rows() == 2) {
    // closed form for the 2x2 case, which dominates the sampling loop
    const double a = m(0, 0), b = 0.5 * (m(0, 1) + m(1, 0)), c = m(1, 1);
    const double mean = 0.5 * (a + c);
    const double rad = std::hypot(0.5 * (a - c), b);
    return std::max(std::abs(mean + rad), std::abs(mean - rad));
  }
  Eigen::SelfAdjointEigenSolver<Mat> solver(m, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

double curvature_bound(const UncertaintyField& field, double u_mid, const Box& region,
                       int n_samples, Rng& rng) {
  if (n_samples < 1) throw InvalidInput("curvature_bound needs at least one sample");
  if (region.lo.size() != field.dimension() || region.hi.size() != field.dimension()) {
    throw InvalidInput("region dimension mismatch");
  }
  if ((region.hi.array() < region.lo.array()).any()) throw InvalidInput("empty region");
  constexpr double kSafetyFactor = 1.01;
  double worst = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const Vec s = region.sample(rng);
    worst = std::max(worst, symmetric_operator_norm(level_potential_hessian(field, u_mid, s)));
  }
  return kSafetyFactor * worst;
}

RegularValueProbe regular_value_probe(const UncertaintyField& field, double u_mid,
                                      double delta_band, const Box& region, int n_samples,
                                      Rng& rng) {
  RegularValueProbe probe;
  probe.min_gradient_norm = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n_samples; ++i) {
    const Vec s = region.sample(rng);
    if (std::abs(field.value(s) - u_mid) >= delta_band) continue;
    ++probe.band_points;
    probe.min_gradient_norm = std::min(probe.min_gradient_norm, field.gradient(s).norm());
  }
  if (probe.band_points == 0) {
    probe.vacuous = true;
    probe.min_gradient_norm = 0.0;
  }
  return probe;
}

}  // namespace vfield::oracle
