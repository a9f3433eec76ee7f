#pragma once

#include <Eigen/Dense>

#include "wongreduce/system.hpp"
#include "wongreduce/tensor.hpp"

namespace oracle {

using wongreduce::Mat;
using wongreduce::Vec;

// Harmonic two-vector system: Q(t) = Q0 cos t + Qd0 sin t, gauge-fixed by an
// explicit frame (x1 on +z, x2 in the x-z half-plane with x > 0).
struct TwoVectorHarmonic {
  Vec Q0, Qd0;

  Vec Q(double t) const { return Q0 * std::cos(t) + Qd0 * std::sin(t); }
  Vec Qd(double t) const { return -Q0 * std::sin(t) + Qd0 * std::cos(t); }

  static Eigen::Matrix3d frame(const Vec& Q) {
    const Eigen::Vector3d x1 = Q.head<3>(), x2 = Q.tail<3>();
    const Eigen::Vector3d ez = x1.normalized();
    const Eigen::Vector3d ex = (x2 - x2.dot(ez) * ez).normalized();
    Eigen::Matrix3d r;
    r.row(0) = ex;
    r.row(1) = ez.cross(ex);
    r.row(2) = ez;
    return r;
  }

  static Vec rotate(const Eigen::Matrix3d& r, const Vec& v) {
    Vec out(6);
    out.head<3>() = r * v.head<3>();
    out.tail<3>() = r * v.tail<3>();
    return out;
  }

  Vec q(double t) const { return rotate(frame(Q(t)), Q(t)); }

  // Velocity of the gauge-fixed curve, by a 4th-order time difference.
  Vec q_dot(double t, double h = 1e-4) const {
    return (q(t - 2 * h) - q(t + 2 * h) + 8.0 * (q(t + h) - q(t - h))) / (12.0 * h);
  }
  Vec q_ddot(double t, double h = 1e-3) const {
    return (-q(t - 2 * h) - q(t + 2 * h) + 16.0 * (q(t + h) + q(t - h)) - 30.0 * q(t)) / (12.0 * h * h);
  }

  // p_m = sum_v (e_m x x_v) . W_v with W the rotated velocity.
  Vec p(double t) const {
    const Eigen::Matrix3d r = frame(Q(t));
    const Vec x = rotate(r, Q(t)), w = rotate(r, Qd(t));
    Vec out = Vec::Zero(3);
    for (int m = 0; m < 3; ++m)
      for (int v = 0; v < 2; ++v)
        out(m) += Eigen::Vector3d::Unit(m).cross(Eigen::Vector3d(x.segment<3>(3 * v))).dot(w.segment<3>(3 * v));
    return out;
  }
  Vec p_dot(double t, double h = 1e-4) const {
    return (p(t - 2 * h) - p(t + 2 * h) + 8.0 * (p(t + h) - p(t - h))) / (12.0 * h);
  }
};

// Closed-form curvature of the Kaluza-Klein connection on the gauge surface:
// only base-base components, dA - dA + [A, A].
inline wongreduce::Tensor3 kk_curvature(const wongreduce::ConnectionField& conn, const Vec& x, int np) {
  const int d = static_cast<int>(x.size());
  wongreduce::Tensor3 F(3, np, np);
  const Mat A = conn.value(x);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) {
      const Eigen::Vector3d ab = Eigen::Vector3d(A.col(a)).cross(Eigen::Vector3d(A.col(b)));
      const Mat da = conn.derivative(x, a), db = conn.derivative(x, b);
      for (int al = 0; al < 3; ++al) F(al, a, b) = da(al, b) - db(al, a) + ab(al);
    }
  return F;
}

}  // namespace oracle
