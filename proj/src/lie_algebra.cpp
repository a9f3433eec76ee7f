#include "wongreduce/lie_algebra.hpp"

#include <cmath>

#include "wongreduce/errors.hpp"

namespace wongreduce {

Mat LieAlgebra::ad(const Vec& x) const {
  Mat out = Mat::Zero(dim_, dim_);
  for (int g = 0; g < dim_; ++g)
    for (int a = 0; a < dim_; ++a)
      for (int b = 0; b < dim_; ++b) out(g, b) += c_(g, a, b) * x(a);
  return out;
}

Vec LieAlgebra::bracket(const Vec& x, const Vec& y) const { return ad(x) * y; }

double jacobi_residual(const Tensor3& c) {
  const int n = c.dim(0);
  double worst = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int g = 0; g < n; ++g)
        for (int s = 0; s < n; ++s) {
          double acc = 0.0;
          for (int m = 0; m < n; ++m)
            acc += c(m, a, b) * c(s, m, g) + c(m, b, g) * c(s, m, a) + c(m, g, a) * c(s, m, b);
          worst = std::max(worst, std::abs(acc));
        }
  return worst;
}

double ad_antisymmetry_residual(const Tensor3& c, const Mat& k_inv) {
  const int n = c.dim(0);
  double worst = 0.0;
  for (int s = 0; s < n; ++s)
    for (int m = 0; m < n; ++m)
      for (int e = 0; e < n; ++e) {
        double lhs = 0.0;
        double rhs = 0.0;
        for (int v = 0; v < n; ++v) {
          lhs += c(m, s, v) * k_inv(v, e);
          rhs += c(e, s, v) * k_inv(v, m);
        }
        worst = std::max(worst, std::abs(lhs + rhs));
      }
  return worst;
}

bool ad_antisymmetry_check(const LieAlgebra& algebra) {
  return ad_antisymmetry_residual(algebra.structure(), algebra.killing_inv()) < kAlgebraTolerance;
}

LieAlgebra make_algebra(const Tensor3& c, double kk_scale, std::string name) {
  const int n = c.dim(0);
  if (n <= 0 || c.dim(1) != n || c.dim(2) != n) throw Error("structure constants must be n x n x n");
  for (double v : c.data())
    if (!std::isfinite(v)) throw Error("structure constants must be finite");

  for (int g = 0; g < n; ++g)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (std::abs(c(g, a, b) + c(g, b, a)) > kAlgebraTolerance)
          throw NotAntisymmetric("c^" + std::to_string(g) + "_{" + std::to_string(a) + std::to_string(b) +
                                 "} is not antisymmetric in its lower indices");

  const double jac = jacobi_residual(c);
  if (jac > kAlgebraTolerance) throw JacobiViolation("Jacobi identity violated by " + std::to_string(jac));

  Mat k = Mat::Zero(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int t = 0; t < n; ++t)
        for (int m = 0; m < n; ++m) k(a, b) += c(t, m, a) * c(m, t, b);

  Eigen::SelfAdjointEigenSolver<Mat> eig(-k);
  if (eig.eigenvalues().minCoeff() <= kAlgebraTolerance)
    throw IndefiniteKilling("-k is not positive definite (min eigenvalue " +
                            std::to_string(eig.eigenvalues().minCoeff()) + ")");

  LieAlgebra out;
  out.dim_ = n;
  out.c_ = c;
  out.k_ = k;
  out.k_inv_ = k.inverse();
  out.kk_scale_ = kk_scale > 0.0 ? kk_scale : eig.eigenvalues().mean();
  out.khat_ = -k / out.kk_scale_;
  out.khat_inv_ = out.khat_.inverse();
  out.name_ = std::move(name);
  for (int g = 0; g < n; ++g)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (c(g, a, b) != 0.0) out.nonzeros_.push_back({g, a, b, c(g, a, b)});
  return out;
}

LieAlgebra direct_sum(const LieAlgebra& a, int copies) {
  if (copies < 1) throw Error("direct sum needs at least one copy");
  const int m = a.dim(), n = m * copies;
  LieAlgebra out;
  out.dim_ = n;
  out.c_ = Tensor3(n, n, n);
  out.k_ = Mat::Zero(n, n);
  out.k_inv_ = Mat::Zero(n, n);
  out.khat_ = Mat::Zero(n, n);
  out.khat_inv_ = Mat::Zero(n, n);
  for (int s = 0; s < copies; ++s) {
    const int o = s * m;
    for (const auto& e : a.nonzeros()) {
      out.c_(o + e.g, o + e.a, o + e.b) = e.value;
      out.nonzeros_.push_back({o + e.g, o + e.a, o + e.b, e.value});
    }
    out.k_.block(o, o, m, m) = a.killing();
    out.k_inv_.block(o, o, m, m) = a.killing_inv();
    out.khat_.block(o, o, m, m) = a.khat();
    out.khat_inv_.block(o, o, m, m) = a.khat_inv();
  }
  out.kk_scale_ = a.kk_scale();
  out.name_ = a.name() + "^" + std::to_string(copies);
  return out;
}

LieAlgebra so3() {
  Tensor3 c(3, 3, 3);
  for (int a = 0; a < 3; ++a) {
    const int b = (a + 1) % 3;
    const int g = (a + 2) % 3;
    c(g, a, b) = 1.0;
    c(g, b, a) = -1.0;
  }
  return make_algebra(c, 2.0, "so3");
}

LieAlgebra builtin_algebra(const std::string& name) {
  // su(2) with generators -i sigma/2 has the same structure constants as so(3).
  if (name == "so3" || name == "su2") return so3();
  throw Error("unknown built-in algebra '" + name + "'");
}

}  // namespace wongreduce
