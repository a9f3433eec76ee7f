#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace wongreduce::rot {

using V3 = Eigen::Vector3d;
using M3 = Eigen::Matrix3d;

inline M3 hat(const V3& v) {
  M3 m;
  m << 0, -v(2), v(1), v(2), 0, -v(0), -v(1), v(0), 0;
  return m;
}

// Coefficients of the exponential-chart series, with Taylor expansions near 0.
inline double sinc_a(double t) { return t < 1e-4 ? 1.0 - t * t / 6.0 : std::sin(t) / t; }
inline double coef_b(double t) {
  return t < 1e-3 ? 0.5 - t * t / 24.0 + t * t * t * t / 720.0 : (1.0 - std::cos(t)) / (t * t);
}
inline double coef_c(double t) {
  return t < 1e-3 ? 1.0 / 6.0 - t * t / 120.0 + t * t * t * t / 5040.0 : (t - std::sin(t)) / (t * t * t);
}
inline double coef_d(double t) {
  return t < 1e-3 ? 1.0 / 12.0 + t * t / 720.0 + t * t * t * t / 30240.0
                  : 1.0 / (t * t) - (1.0 + std::cos(t)) / (2.0 * t * std::sin(t));
}

inline M3 exp(const V3& v) {
  const double t = v.norm();
  const M3 h = hat(v);
  return M3::Identity() + sinc_a(t) * h + coef_b(t) * h * h;
}

/// Principal logarithm; valid for rotation angles below pi.
inline V3 log(const M3& r) {
  const double cos_t = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  const double t = std::acos(cos_t);
  const V3 axial(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return axial / (2.0 * sinc_a(t));
}

/// Logarithm that also handles angles at or near pi.
inline V3 log_any(const M3& r) {
  const double cos_t = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  if (cos_t > -0.99) return log(r);
  const double t = std::acos(cos_t);
  // r + r^T = 2 cos t I + 2 (1 - cos t) n n^T
  const M3 s = 0.5 * (r + r.transpose()) - cos_t * M3::Identity();
  int k;
  s.diagonal().maxCoeff(&k);
  V3 n = s.col(k) / std::sqrt(std::max(s(k, k), 1e-300));
  n.normalize();
  const V3 axial(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  if (axial.dot(n) < 0) n = -n;
  return t * n;
}

/// Left Jacobian: d(exp theta) exp(theta)^-1 = hat(J_l dtheta).
inline M3 left_jacobian(const V3& v) {
  const M3 h = hat(v);
  const double t = v.norm();
  return M3::Identity() + coef_b(t) * h + coef_c(t) * h * h;
}

/// Inverse of the right Jacobian J_r(theta) = J_l(-theta).
inline M3 right_jacobian_inverse(const V3& v) {
  const M3 h = hat(v);
  const double t = v.norm();
  return M3::Identity() + 0.5 * h + coef_d(t) * h * h;
}

}  // namespace wongreduce::rot
