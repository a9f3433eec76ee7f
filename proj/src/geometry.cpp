#include "wongreduce/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wongreduce/errors.hpp"
#include "wongreduce/linalg.hpp"

namespace wongreduce {

namespace {

double max_abs(const Mat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

}  // namespace

OrbitFields orbit_fields(const MechanicalSystem& sys, const Vec& q) {
  const int np = sys.n_p, ng = sys.n_g();
  const int r = sys.residual_symmetry_dim;
  OrbitFields f;
  f.G = sys.metric_at(q);
  Eigen::LLT<Mat> llt(f.G);
  if (llt.info() != Eigen::Success) throw IllConditioned("metric is not positive definite", 0.0);
  f.G_inv = llt.solve(Mat::Identity(np, np));
  f.K = sys.killing_at(q);
  f.J = sys.chi_jacobian(q);
  f.Phi = f.J * f.K;

  const PseudoInverse phi = pseudo_inverse(f.Phi, r, 0.0);
  f.fp_condition = phi.condition;
  if (phi.rank < ng - r || !(phi.condition < sys.tol.fp_condition))
    throw SingularFP("Faddeev-Popov matrix is singular (condition " + std::to_string(phi.condition) + ")",
                     phi.condition);
  f.Phi_inv = phi.inverse;

  f.gamma = f.K.transpose() * f.G * f.K;
  const PseudoInverse gi = spd_pseudo_inverse(f.gamma, 0, sys.tol.pinv_relative);
  if (gi.rank < ng - r) throw SingularFP("orbit metric is singular: the action is not free", gi.condition);
  f.gamma_inv = gi.inverse;

  const Mat I = Mat::Identity(np, np);
  f.A_conn = f.gamma_inv * f.K.transpose() * f.G;
  f.Pi_proj = I - f.K * f.A_conn;
  f.N_proj = I - f.K * f.Phi_inv * f.J;
  f.chiT = f.G_inv * f.J.transpose() * f.gamma;
  const PseudoInverse jc = pseudo_inverse(f.J * f.chiT, r, 0.0);
  f.P_perp = I - f.chiT * jc.inverse * f.J;
  f.G_H = f.Pi_proj.transpose() * f.G * f.Pi_proj;
  return f;
}

FieldDerivatives field_derivatives(const MechanicalSystem& sys, const Vec& q, const OrbitFields& f) {
  return field_derivatives(sys, q, f, sys.derivative_mode);
}

FieldDerivatives field_derivatives(const MechanicalSystem& sys, const Vec& q, const OrbitFields& f,
                                   DerivativeMode mode) {
  const int np = sys.n_p;
  FieldDerivatives d;
  d.A_conn.resize(np);
  d.gamma.resize(np);
  d.G_H.resize(np);
  if (mode == DerivativeMode::FiniteDifference) {
    const double h = sys.fd_step;
    for (int e = 0; e < np; ++e) {
      OrbitFields s[4];
      const double offs[4] = {-2 * h, -h, h, 2 * h};
      for (int i = 0; i < 4; ++i) {
        Vec x = q;
        x(e) += offs[i];
        s[i] = orbit_fields(sys, x);
      }
      auto diff = [&](auto member) -> Mat {
        return ((s[0].*member - s[3].*member) + 8.0 * (s[2].*member - s[1].*member)) / (12.0 * h);
      };
      d.A_conn[e] = diff(&OrbitFields::A_conn);
      d.gamma[e] = diff(&OrbitFields::gamma);
      d.G_H[e] = diff(&OrbitFields::G_H);
    }
    return d;
  }
  const Mat KtG = f.K.transpose() * f.G;
  for (int e = 0; e < np; ++e) {
    const Mat dG = sys.d_metric(q, e);
    const Mat dK = sys.d_killing(q, e);
    const Mat dKtG = dK.transpose() * f.G;
    d.gamma[e] = dKtG * f.K + f.K.transpose() * dG * f.K + KtG * dK;
    const Mat dgi = -f.gamma_inv * d.gamma[e] * f.gamma_inv;
    d.A_conn[e] = dgi * KtG + f.gamma_inv * (dKtG + f.K.transpose() * dG);
    const Mat dPi = -dK * f.A_conn - f.K * d.A_conn[e];
    const Mat GPi = f.G * f.Pi_proj;
    d.G_H[e] = dPi.transpose() * GPi + f.Pi_proj.transpose() * (dG * f.Pi_proj + f.G * dPi);
  }
  return d;
}

Tensor3 curvature_from(const Tensor3& c, const Mat& A, const std::vector<Mat>& dA) {
  const int ng = static_cast<int>(A.rows()), np = static_cast<int>(A.cols());
  Tensor3 F(ng, np, np);
  for (int a = 0; a < ng; ++a)
    for (int e = 0; e < np; ++e)
      for (int p = 0; p < np; ++p) F(a, e, p) = dA[e](a, p) - dA[p](a, e);
  for (int a = 0; a < ng; ++a)
    for (int n = 0; n < ng; ++n)
      for (int s = 0; s < ng; ++s) {
        const double v = c(a, n, s);
        if (v == 0.0) continue;
        for (int e = 0; e < np; ++e) {
          const double w = v * A(n, e);
          if (w == 0.0) continue;
          for (int p = 0; p < np; ++p) F(a, e, p) += w * A(s, p);
        }
      }
  return F;
}

Tensor3 curvature(const MechanicalSystem& sys, const Vec& q) {
  const OrbitFields f = orbit_fields(sys, q);
  const FieldDerivatives d = field_derivatives(sys, q, f);
  return curvature_from(sys.connection_structure(), f.A_conn, d.A_conn);
}

std::pair<Tensor3, Tensor3> covariant_derivative_gamma_from(const Tensor3& c, const OrbitFields& f,
                                                            const std::vector<Mat>& dgamma) {
  const int ng = static_cast<int>(f.gamma.rows()), np = static_cast<int>(f.A_conn.cols());
  Tensor3 D(np, ng, ng), Dinv(np, ng, ng);
  for (int e = 0; e < np; ++e) {
    Mat C = Mat::Zero(ng, ng);  // C(s, a) = c^s_{ma} A^m_E
    for (int s = 0; s < ng; ++s)
      for (int m = 0; m < ng; ++m) {
        const double am = f.A_conn(m, e);
        if (am == 0.0) continue;
        for (int a = 0; a < ng; ++a) C(s, a) += c(s, m, a) * am;
      }
    const Mat De = dgamma[e] - C.transpose() * f.gamma - f.gamma * C;
    const Mat Die = -f.gamma_inv * De * f.gamma_inv;
    for (int a = 0; a < ng; ++a)
      for (int b = 0; b < ng; ++b) {
        D(e, a, b) = De(a, b);
        Dinv(e, a, b) = Die(a, b);
      }
  }
  return {D, Dinv};
}

std::pair<Tensor3, Tensor3> covariant_derivative_gamma(const MechanicalSystem& sys, const Vec& q) {
  const OrbitFields f = orbit_fields(sys, q);
  const FieldDerivatives d = field_derivatives(sys, q, f);
  return covariant_derivative_gamma_from(sys.connection_structure(), f, d.gamma);
}

Tensor3 christoffel_horizontal_from(const MechanicalSystem& sys, const OrbitFields& f, const std::vector<Mat>& dGH,
                                    double* condition) {
  const int np = sys.n_p;
  Mat first(np, np * np);  // column C * np + D
  for (int a = 0; a < np; ++a)
    for (int c = 0; c < np; ++c)
      for (int d = 0; d < np; ++d)
        first(a, c * np + d) = 0.5 * (dGH[d](a, c) + dGH[c](a, d) - dGH[a](c, d));
  const PseudoInverse gh = spd_pseudo_inverse(f.G_H, 0, sys.tol.pinv_relative);
  if (gh.rank == 0) return Tensor3(np, np, np);  // no horizontal directions
  if (condition) *condition = gh.condition;
  if (!(gh.condition < sys.tol.fp_condition))
    throw IllConditioned("horizontal metric is ill-conditioned on its range", gh.condition);
  const Mat sol = f.N_proj * gh.inverse * first;
  Tensor3 out(np, np, np);
  for (int a = 0; a < np; ++a)
    for (int c = 0; c < np; ++c)
      for (int d = 0; d < np; ++d) out(a, c, d) = sol(a, c * np + d);
  return out;
}

Tensor3 christoffel_horizontal(const MechanicalSystem& sys, const Vec& q) {
  const OrbitFields f = orbit_fields(sys, q);
  const FieldDerivatives d = field_derivatives(sys, q, f);
  return christoffel_horizontal_from(sys, f, d.G_H);
}

GeometryAtPoint evaluate_geometry(const MechanicalSystem& sys, const PointOnSigma& p) {
  const PointOnSigma q = on_sigma(sys, p.q);
  GeometryAtPoint g;
  static_cast<OrbitFields&>(g) = orbit_fields(sys, q.q);
  g.q = q;
  const FieldDerivatives d = field_derivatives(sys, q.q, g);
  const Tensor3 c = sys.connection_structure();
  g.F_curv = curvature_from(c, g.A_conn, d.A_conn);
  std::tie(g.D_gamma, g.D_gamma_inv) = covariant_derivative_gamma_from(c, g, d.gamma);
  g.christoffel_H = christoffel_horizontal_from(sys, g, d.G_H, &g.G_H_condition);
  return g;
}

MetricBlocks pseudoinverse_blocks(const OrbitFields& f) {
  const int np = static_cast<int>(f.G.rows()), ng = static_cast<int>(f.K.cols());
  MetricBlocks b;
  const Mat& P = f.P_perp;
  b.metric.resize(np + ng, np + ng);
  b.metric << P.transpose() * f.G * P, P.transpose() * f.G * f.K, f.K.transpose() * f.G * P, f.gamma;
  const Mat NGi = f.N_proj * f.G_inv;
  const Mat PhiJGi = f.Phi_inv * f.J * f.G_inv;
  b.inverse.resize(np + ng, np + ng);
  b.inverse << NGi * f.N_proj.transpose(), NGi * f.J.transpose() * f.Phi_inv.transpose(),
      PhiJGi * f.N_proj.transpose(), PhiJGi * f.J.transpose() * f.Phi_inv.transpose();
  b.expected = Mat::Zero(np + ng, np + ng);
  b.expected.topLeftCorner(np, np) = P;
  b.expected.bottomRightCorner(ng, ng) = f.Phi_inv * f.Phi;
  b.orthogonality_residual = max_abs(b.inverse * b.metric - b.expected);
  return b;
}

MetricBlocks pseudoinverse_blocks(const MechanicalSystem& sys, const PointOnSigma& q) {
  return pseudoinverse_blocks(orbit_fields(sys, on_sigma(sys, q.q).q));
}

DualBasisResidual dual_basis_check(const OrbitFields& f) {
  const int np = static_cast<int>(f.G.rows()), ng = static_cast<int>(f.K.cols());
  // Chart (dQ, da) at a = e: H_A = (N e_A, -A N e_A), L_b = (0, e_b).
  Mat H(np + ng, np);
  H << f.N_proj, -f.A_conn * f.N_proj;
  Mat L = Mat::Zero(np + ng, ng);
  L.bottomRows(ng).setIdentity();
  // omega^A = P_perp dQ, omega^a = da + A P_perp dQ.
  Mat omega(np + ng, np + ng);
  omega << f.P_perp, Mat::Zero(np, ng), f.A_conn * f.P_perp, Mat::Identity(ng, ng);
  const Mat oH = omega * H;
  const Mat oL = omega * L;
  DualBasisResidual r;
  r.horizontal = max_abs(oH.topRows(np) - f.N_proj);
  r.vertical = max_abs(oH.bottomRows(ng));
  Mat expect = Mat::Zero(np + ng, ng);
  expect.bottomRows(ng).setIdentity();
  r.orbit = max_abs(oL - expect);
  return r;
}

double InvariantReport::max() const {
  double m = 0.0;
  for (const auto& [name, v] : entries) m = std::max(m, v);
  return m;
}

double InvariantReport::get(const std::string& name) const {
  for (const auto& [n, v] : entries)
    if (n == name) return v;
  throw Error("no invariant named '" + name + "'");
}

InvariantReport geometry_invariants(const MechanicalSystem& sys, const GeometryAtPoint& g) {
  const int np = sys.n_p, ng = sys.n_g();
  InvariantReport rep;
  auto add = [&](const char* name, double v) { rep.entries.emplace_back(name, v); };
  const Mat& N = g.N_proj;
  const Mat& Pi = g.Pi_proj;
  const Mat& P = g.P_perp;
  // Gauge directions actually fixed by the constraints.
  const Mat fixed = g.Phi_inv * g.Phi;
  add("phi_assembly", max_abs(g.Phi - g.J * g.K));
  add("N_idempotent", max_abs(N * N - N));
  add("N_annihilates_K", max_abs(N * g.K * fixed));
  add("N_Pperp", max_abs(N * P - P));
  add("Pperp_N", max_abs(P * N - N));
  add("Pperp_idempotent", max_abs(P * P - P));
  add("Pi_idempotent", max_abs(Pi * Pi - Pi));
  add("Pi_N", max_abs(Pi * N - Pi));
  add("N_Pi", max_abs(N * Pi - N));
  add("A_annihilates_horizontal", max_abs(g.A_conn * Pi));
  add("A_reproduces_K", max_abs(g.A_conn * g.K - Mat::Identity(ng, ng)));
  add("gamma_symmetry", max_abs(g.gamma - g.gamma.transpose()));
  const double lmin = Eigen::SelfAdjointEigenSolver<Mat>(g.gamma).eigenvalues().minCoeff();
  add("gamma_positivity", std::max(0.0, -lmin));
  add("GH_symmetry", max_abs(g.G_H - g.G_H.transpose()));
  add("GH_annihilates_K", max_abs(g.G_H * g.K));
  double f_anti = 0.0, chr_sym = 0.0, deriv = 0.0;
  for (int a = 0; a < ng; ++a)
    for (int e = 0; e < np; ++e)
      for (int p = 0; p < np; ++p) f_anti = std::max(f_anti, std::abs(g.F_curv(a, e, p) + g.F_curv(a, p, e)));
  for (int a = 0; a < np; ++a)
    for (int c = 0; c < np; ++c)
      for (int d = 0; d < np; ++d)
        chr_sym = std::max(chr_sym, std::abs(g.christoffel_H(a, c, d) - g.christoffel_H(a, d, c)));
  for (int e = 0; e < np; ++e) {
    const Mat D = g.D_gamma.slice(e), Di = g.D_gamma_inv.slice(e);
    deriv = std::max(deriv, max_abs(D * g.gamma_inv + g.gamma * Di));
  }
  add("F_antisymmetry", f_anti);
  add("christoffel_symmetry", chr_sym);
  add("D_gamma_derivation", deriv);
  add("block_orthogonality", pseudoinverse_blocks(g).orthogonality_residual);
  const DualBasisResidual dual = dual_basis_check(g);
  add("dual_basis", std::max({dual.horizontal, dual.vertical, dual.orbit}));
  return rep;
}

}  // namespace wongreduce
