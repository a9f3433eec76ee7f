#pragma once

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <type_traits>

#include "wongreduce/lie_algebra.hpp"
#include "wongreduce/tensor.hpp"

namespace wongreduce {

enum class DerivativeMode { Analytic, FiniteDifference };

/// Numerical tolerances shared by the geometry, dynamics and equilibrium code.
struct Tolerances {
  double sigma = 1e-10;          ///< |chi| accepted as "on the gauge surface"
  double killing = 1e-7;         ///< Killing / equivariance / invariance checks
  double fp_condition = 1e12;    ///< condition number above which Phi is singular
  double pinv_relative = 1e-10;  ///< singular values below this * sigma_max are dropped
  double identity = 1e-9;        ///< projector and orthogonality identities
};

/// A finite-dimensional mechanical system with a symmetry, described by fields
/// on one coordinate chart of the configuration space.
///
/// The Killing fields satisfy [K_mu, K_nu] = bracket_sign * c^s_{mu nu} K_s.
/// Every bundle formula is written for the right-action convention
/// [K_mu, K_nu] = +c^s_{mu nu} K_s, so they consume connection_structure(),
/// which is bracket_sign * c.
///
/// Optional derivative callbacks may be left empty; derivatives then fall back
/// to 4th-order central differences of the primitive field with step fd_step.
struct MechanicalSystem {
  std::string name;
  int n_p = 0;
  std::shared_ptr<const LieAlgebra> algebra;
  int bracket_sign = 1;

  std::function<Mat(const Vec&)> metric;
  std::function<Mat(const Vec&, int)> metric_derivative;
  std::function<Mat(const Vec&)> killing;
  std::function<Mat(const Vec&, int)> killing_derivative;
  std::function<Vec(const Vec&)> constraint;
  std::function<Mat(const Vec&)> constraint_jacobian;
  bool constraint_is_linear = false;
  std::function<double(const Vec&)> potential;
  std::function<Vec(const Vec&)> potential_gradient;
  /// Exact action of exp(xi) on q, when known. Without it the Killing flow is
  /// integrated numerically.
  std::function<Vec(const Vec&, const Vec&)> group_action;
  /// Differential of group_action in q applied to v, when known.
  std::function<Vec(const Vec&, const Vec&, const Vec&)> action_tangent;
  /// Group element (exponential coordinates) taking q near its canonical
  /// representative on the gauge surface. Selects among Gribov copies;
  /// Newton iteration from the identity is used without it.
  std::function<Vec(const Vec&)> gauge_guess;
  /// Draws a point on the gauge surface where the action is free.
  std::function<Vec(std::mt19937_64&)> sampler;

  /// Number of symmetry directions the constraints leave unfixed (the rank
  /// deficiency of Phi). Zero for a proper gauge fixing; their singular values
  /// are deflated instead of being reported as a singular Faddeev-Popov matrix.
  int residual_symmetry_dim = 0;

  DerivativeMode derivative_mode = DerivativeMode::Analytic;
  double fd_step = 1e-5;
  Tolerances tol;

  int n_g() const { return algebra->dim(); }

  /// Structure constants in the convention the bundle formulas expect.
  Tensor3 connection_structure() const;

  Mat metric_at(const Vec& q) const { return metric(q); }
  Mat killing_at(const Vec& q) const { return killing(q); }
  Vec chi(const Vec& q) const { return constraint(q); }
  Mat d_metric(const Vec& q, int e) const;
  Mat d_killing(const Vec& q, int e) const;
  Mat chi_jacobian(const Vec& q) const;
  Vec grad_potential(const Vec& q) const;
  /// Second derivative of chi contracted twice with v.
  Vec chi_hessian(const Vec& q, const Vec& v) const;
  Vec act(const Vec& q, const Vec& xi) const;
};

/// A configuration on the gauge surface chi = 0.
struct PointOnSigma {
  Vec q;
};

/// Validates |chi(q)| < tol.sigma. Throws NotOnSigma.
PointOnSigma on_sigma(const MechanicalSystem& sys, const Vec& q);

/// 4th-order central difference of f along coordinate e.
template <class F>
auto central_difference(F&& f, const Vec& q, int e, double h) -> std::decay_t<decltype(f(q))> {
  Vec qp1 = q, qm1 = q, qp2 = q, qm2 = q;
  qp1(e) += h;
  qm1(e) -= h;
  qp2(e) += 2 * h;
  qm2(e) -= 2 * h;
  return ((f(qm2) - f(qp2)) + 8.0 * (f(qp1) - f(qm1))) / (12.0 * h);
}

/// Invariant potential for the two-vector system, polynomial in the invariants
/// s = (|x1|^2, |x2|^2, x1.x2):  V = sum_i linear_i s_i + sum_{i<=j} quadratic_ij s_i s_j.
struct InvariantPotential {
  Eigen::Vector3d linear{0.5, 0.5, 0.0};
  Eigen::Matrix3d quadratic = Eigen::Matrix3d::Zero();  ///< only the upper triangle is read

  double value(const Eigen::Vector3d& s) const;
  Eigen::Vector3d gradient(const Eigen::Vector3d& s) const;
  /// The harmonic default 1/2 (|x1|^2 + |x2|^2).
  static InvariantPotential harmonic() { return {}; }
  /// 1/2 (|x1|^2 - 1)^2 + 1/2 (|x2|^2 - 1)^2 + 1/2 (x1.x2)^2, minimized on
  /// orthonormal pairs such as (0,0,1, 1,0,0).
  static InvariantPotential orthonormal_well();
};

/// Two vectors in R^3 with the diagonal SO(3) action, flat metric,
/// K^{(s,i)}_mu = eps_{i mu k} x^{(s)k}, and the gauge that puts x1 on the
/// z-axis and x2 in the x-z half-plane (x > 0).
MechanicalSystem builtin_two_vector_so3(const InvariantPotential& potential = InvariantPotential::harmonic());

/// A connection A^mu_a(x) on the base chart, given with its x-derivatives.
struct ConnectionField {
  std::function<Mat(const Vec&)> value;              ///< 3 x base_dim
  std::function<Mat(const Vec&, int)> derivative;    ///< d/dx^b, optional
  static ConnectionField zero(int base_dim);
  static ConnectionField constant(const Mat& a);
  /// A(x) = a0 + sum_b x_b slope[b].
  static ConnectionField linear(const Mat& a0, const std::vector<Mat>& slope);
};

struct KaluzaKleinOptions {
  int base_dim = 2;
  Eigen::Vector3d fiber_metric{1.0, 2.0, 3.0};  ///< diagonal gamma on so(3)
  double chart_radius = 3.0;                    ///< |theta| limit of the exponential chart
  double base_frequency = 1.0;                  ///< V = 1/2 w^2 |x|^2
};

/// A fixed non-abelian connection with nonzero curvature, used by default.
ConnectionField default_kaluza_klein_connection(int base_dim);

/// P = R^base_dim x SO(3) in exponential coordinates theta, metric
/// |dx|^2 + gamma(w + A dx, w + A dx) with w the right-invariant Maurer-Cartan
/// form, symmetry by right multiplication, gauge theta = 0.
MechanicalSystem builtin_kaluza_klein(const ConnectionField& connection, const KaluzaKleinOptions& options = {});

/// Moves q along its group orbit until chi = 0 (Newton on xi = -Phi^-1 chi).
/// Throws NoConvergence or SingularFP.
PointOnSigma project_to_sigma(const MechanicalSystem& sys, const Vec& q, int max_iterations = 50);

/// As project_to_sigma, also transporting tangent vectors at q with the
/// differential of the accumulated group action.
struct TransportedProjection {
  PointOnSigma point;
  std::vector<Vec> vectors;
};
TransportedProjection project_to_sigma_transport(const MechanicalSystem& sys, const Vec& q,
                                                 const std::vector<Vec>& vectors, int max_iterations = 50);

/// Pointwise checks of the system's structural assumptions.
struct SystemCheck {
  double metric_asymmetry = 0.0;
  double metric_min_eigenvalue = 0.0;
  double killing = 0.0;       ///< max |L_K G|
  double equivariance = 0.0;  ///< max |[K_mu,K_nu] - sign c K|
  double invariance = 0.0;    ///< max |K^T dV|
};
SystemCheck check_system(const MechanicalSystem& sys, const Vec& q);

/// Resolves a built-in system by name: "two_vector_so3", "kaluza_klein".
MechanicalSystem builtin_system(const std::string& name);

}  // namespace wongreduce
