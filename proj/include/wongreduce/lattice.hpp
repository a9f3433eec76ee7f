#pragma once

#include <array>
#include <memory>
#include <vector>

#include "wongreduce/dynamics.hpp"
#include "wongreduce/equilibria.hpp"

namespace wongreduce {

/// Periodic L^3 lattice carrying a gauge field with values in a compact algebra
/// whose normalized form khat is the identity (so(3) = su(2)).
///
/// Field index (a, i, x) -> (x * 3 + i) * n_color + a; gauge index (m, x) ->
/// x * n_color + m; site x = (x0 * L + x1) * L + x2.
/// Lattice derivatives are forward differences d_i f(x) = f(x + e_i) - f(x).
struct GaugeLattice {
  int L = 2;
  double spacing = 1.0;
  std::shared_ptr<const LieAlgebra> algebra;

  int n_color() const { return algebra->dim(); }
  int n_sites() const { return L * L * L; }
  int flat_dim() const { return 3 * n_color() * n_sites(); }
  int gauge_dim() const { return n_color() * n_sites(); }
  double volume_weight() const { return spacing * spacing * spacing; }

  int site(int x0, int x1, int x2) const;
  std::array<int, 3> coords(int site) const;
  /// Neighbour of `site` at offset `step` in direction `dir`, periodically wrapped.
  int shift(int site, int dir, int step) const;
  int flat_index(int color, int dir, int site) const { return (site * 3 + dir) * n_color() + color; }
  int gauge_index(int color, int site) const { return site * n_color() + color; }
};

/// Throws Error for L outside [2, 6], non-positive spacing, or khat != I.
GaugeLattice make_lattice(int L, double spacing = 1.0, const LieAlgebra& algebra = so3());

struct GaugeField {
  GaugeLattice lattice;
  Vec a;
  bool coulomb_fixed = false;
};

struct FieldMomentum {
  GaugeLattice lattice;
  Vec p;
};

/// Lattice gradient d_i, flat_dim x gauge_dim.
Mat gradient_operator(const GaugeLattice& lat);
/// (D w)^{a,i,x} = d_i w^a(x) + c^a_{nb} A^{n,i,x} w^b(x).
Mat cov_deriv_operator(const GaugeLattice& lat, const Vec& a);
/// Backward divergence sum_k (A_k(x) - A_k(x - e_k)); its Jacobian is -d^T.
Vec divergence(const GaugeLattice& lat, const Vec& a);
Mat divergence_operator(const GaugeLattice& lat);

/// gamma = a^3 D^T D.
Mat fp_operator(const GaugeLattice& lat, const Vec& a);

struct GreenFunction {
  Mat inverse;
  int kernel_dim = 0;
  double condition = 0.0;
};
/// Eigen pseudo-inverse of the FP operator with eigenvalues below 1e-10 * lambda_max
/// removed. Throws IllConditioned above condition 1e12.
GreenFunction green_function(const GaugeLattice& lat, const Vec& a);

/// gamma^- D^T a^3, gauge_dim x flat_dim.
Mat coulomb_connection(const GaugeLattice& lat, const Vec& a);

/// Removes the longitudinal part by a discrete Fourier solve.
GaugeField coulomb_project(const GaugeLattice& lat, const Vec& a_raw);

/// F^a_{ij}(x), indexed like a field with the direction pair (0,1), (0,2), (1,2) in place of i.
Vec field_strength(const GaugeLattice& lat, const Vec& a);

/// V = a^3 sum_x sum_{i<j} |F_ij(x)|^2 and its gradient.
std::pair<double, Vec> potential_and_gradient(const GaugeLattice& lat, const Vec& a);

/// Operators at one configuration, applied without forming N_P x N_P matrices.
struct LatticeOperators {
  const GaugeLattice* lat = nullptr;
  Vec a;
  Mat D;            ///< cov_deriv_operator
  Mat gamma0_inv;   ///< (D^T D)^+
  Mat phi_inv;      ///< (J D)^+ with the global modes removed
  int kernel_dim = 0;
  double condition = 0.0;

  Vec apply_Pi(const Vec& v) const;   ///< v - D gamma0^+ D^T v
  Vec apply_N(const Vec& v) const;    ///< v - D Phi^+ J v
  Vec apply_Nt(const Vec& v) const;
  Vec apply_J(const Vec& v) const;    ///< backward divergence
  Vec apply_Jt(const Vec& w) const;
  /// C(u) w: (a,i,x) -> c^a_{nb} u^{n,i,x} w^b(x).
  Vec C(const Vec& u, const Vec& w) const;
  /// C(u)^T v: (b,x) -> sum c^a_{nb} u^{n,i,x} v^{a,i,x}.
  Vec Ct(const Vec& u, const Vec& v) const;
  /// B(v, w): (n,i,x) -> sum c^a_{nb} v^{a,i,x} w^b(x).
  Vec B(const Vec& v, const Vec& w) const;
  /// Per-site bracket term (s,x) -> sum c^k_{ms} u^m(x) p_k(x).
  Vec coadjoint(const Vec& u, const Vec& p) const;
};
LatticeOperators lattice_operators(const GaugeLattice& lat, const Vec& a);

/// Terms of the horizontal equation, each in force (covector) form unless noted.
struct YmTerms {
  Vec christoffel;                ///< N Pi Gamma(A_dot, A_dot), acceleration form
  std::array<Vec, 6> curvature;   ///< the six pieces of F(A_dot, .) p
  Vec p_quadratic;                ///< acceleration form, before the final N
  Vec potential_gradient;
};

Vec ym_curvature_term1(const LatticeOperators& ops, const Vec& a_dot, const Vec& p);
Vec ym_curvature_term2(const LatticeOperators& ops, const Vec& a_dot, const Vec& p);
Vec ym_curvature_term3(const LatticeOperators& ops, const Vec& a_dot, const Vec& p);
Vec ym_curvature_term4(const LatticeOperators& ops, const Vec& a_dot, const Vec& p);
Vec ym_curvature_term5(const LatticeOperators& ops, const Vec& a_dot, const Vec& p);
Vec ym_curvature_term6(const LatticeOperators& ops, const Vec& a_dot, const Vec& p);
Vec ym_christoffel_term(const LatticeOperators& ops, const Vec& a_dot);
Vec ym_p_quadratic_term(const LatticeOperators& ops, const Vec& p);

YmTerms ym_terms(const LatticeOperators& ops, const Vec& a_dot, const Vec& p);

/// Reduced equations of motion on the lattice.
WongRates ym_rhs(const GaugeLattice& lat, const Vec& a, const Vec& a_dot, const Vec& p);
WongRates ym_rhs(const LatticeOperators& ops, const Vec& a_dot, const Vec& p);

double ym_energy(const GaugeLattice& lat, const Vec& a, const Vec& a_dot, const Vec& p);

struct YmResiduals {
  Vec horizontal;
  Vec vertical;
};
YmResiduals ym_equilibrium_residuals(const GaugeLattice& lat, const Vec& a, const Vec& p);

/// Eigenpairs of k gamma^- on the kernel complement, ascending in lambda.
std::vector<EigenPair> ym_momentum_eigenproblem(const GaugeLattice& lat, const Vec& a);

struct LatticeEquilibrium {
  Vec a;
  Vec p;
  double lambda = 0.0;
  double scale = 0.0;
  double residual_h = 0.0;
  double residual_v = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> residual_history;
};

/// Levenberg-Marquardt over the transverse field components and the scale of p.
/// Returns the best iterate with converged = false on failure.
LatticeEquilibrium ym_attempt_equilibrium(const GaugeLattice& lat, const Vec& a_guess, int eigen_index,
                                          double scale_guess, const EquilibriumOptions& opt = {});
/// Throws NoConvergence, EigenCrossing.
LatticeEquilibrium ym_solve_equilibrium(const GaugeLattice& lat, const Vec& a_guess, int eigen_index,
                                        double scale_guess, const EquilibriumOptions& opt = {});

struct LatticeState {
  Vec a, a_dot, p;
  double t = 0.0;
};
struct LatticeTrajectory {
  std::vector<LatticeState> samples;
  std::vector<double> energy;
  std::vector<double> divergence;  ///< max |div A|
};
/// RK4 on ym_rhs with Coulomb re-projection of A and N re-projection of A_dot.
LatticeTrajectory ym_integrate(const GaugeLattice& lat, const LatticeState& s0, const IntegrateOptions& opt);

/// The lattice as a generic mechanical system over the extended gauge algebra,
/// for cross-checking. Only for L <= 3.
MechanicalSystem lattice_system(const GaugeLattice& lat);

/// Global rotation exp(xi) applied to every color vector of a field.
Vec rotate_field_globally(const GaugeLattice& lat, const Vec& a, const Eigen::Vector3d& xi);

/// Random Coulomb-fixed field with entries of the given amplitude.
Vec random_coulomb_field(const GaugeLattice& lat, double amplitude, std::mt19937_64& rng);

}  // namespace wongreduce
