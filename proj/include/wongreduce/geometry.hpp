#pragma once

#include <string>
#include <utility>
#include <vector>

#include "wongreduce/system.hpp"

namespace wongreduce {

/// Pointwise orbit data. Defined at any chart point where the action is free,
/// not only on the gauge surface.
struct OrbitFields {
  Mat G, G_inv;
  Mat K;          ///< N_P x N_G
  Mat J;          ///< dchi, N_G x N_P
  Mat Phi, Phi_inv;
  Mat gamma, gamma_inv;
  Mat A_conn;     ///< N_G x N_P
  Mat Pi_proj;    ///< I - K A
  Mat N_proj;     ///< I - K Phi^-1 J
  Mat chiT;       ///< G^-1 J^T gamma, N_P x N_G
  Mat P_perp;     ///< I - chiT (J chiT)^-1 J
  Mat G_H;        ///< Pi^T G Pi
  double fp_condition = 0.0;
};

/// Throws SingularFP when Phi or gamma is singular beyond the system's residual symmetry.
OrbitFields orbit_fields(const MechanicalSystem& sys, const Vec& q);

/// Coordinate derivatives d/dQ^E of the derived fields, one matrix per E.
struct FieldDerivatives {
  std::vector<Mat> A_conn;
  std::vector<Mat> gamma;
  std::vector<Mat> G_H;
};

/// Analytic mode differentiates through the primitive fields by the chain rule;
/// FiniteDifference mode differences the derived fields themselves.
FieldDerivatives field_derivatives(const MechanicalSystem& sys, const Vec& q, const OrbitFields& f);
FieldDerivatives field_derivatives(const MechanicalSystem& sys, const Vec& q, const OrbitFields& f,
                                   DerivativeMode mode);

struct GeometryAtPoint : OrbitFields {
  PointOnSigma q;
  Tensor3 F_curv;         ///< (alpha, E, P)
  Tensor3 D_gamma;        ///< (E, alpha, beta)
  Tensor3 D_gamma_inv;    ///< (E, kappa, sigma)
  Tensor3 christoffel_H;  ///< (A, C, D)
  double G_H_condition = 0.0;
};

/// All fields at a point of the gauge surface. Throws NotOnSigma, SingularFP.
GeometryAtPoint evaluate_geometry(const MechanicalSystem& sys, const PointOnSigma& q);

/// F^a_{EP} = d_E A^a_P - d_P A^a_E + c^a_{ns} A^n_E A^s_P.
Tensor3 curvature(const MechanicalSystem& sys, const Vec& q);
Tensor3 curvature_from(const Tensor3& c_eff, const Mat& A_conn, const std::vector<Mat>& dA);

/// D_E gamma_{ab} = d_E gamma_{ab} - c^s_{ma} A^m_E gamma_{sb} - c^s_{mb} A^m_E gamma_{sa},
/// and D_E gamma^{-1} = -gamma^-1 (D_E gamma) gamma^-1.
std::pair<Tensor3, Tensor3> covariant_derivative_gamma(const MechanicalSystem& sys, const Vec& q);
std::pair<Tensor3, Tensor3> covariant_derivative_gamma_from(const Tensor3& c_eff, const OrbitFields& f,
                                                            const std::vector<Mat>& dgamma);

/// Horizontal Christoffel symbols: pseudo-inverse solution of the defining
/// system with the degenerate G_H, projected with N.
Tensor3 christoffel_horizontal(const MechanicalSystem& sys, const Vec& q);
Tensor3 christoffel_horizontal_from(const MechanicalSystem& sys, const OrbitFields& f, const std::vector<Mat>& dGH,
                                    double* condition = nullptr);

/// Block form of the metric in the (horizontal, vertical) frame at a = e, and
/// its pseudo-inverse.
struct MetricBlocks {
  Mat metric;       ///< [[P^T G P, P^T G K], [K^T G P, gamma]]
  Mat inverse;      ///< [[N G^-1 N^T, N G^-1 J^T Phi^-T], [Phi^-1 J G^-1 N^T, Phi^-1 J G^-1 J^T Phi^-T]]
  Mat expected;     ///< diag(P_perp, I)
  double orthogonality_residual = 0.0;  ///< max |inverse * metric - expected|
};
MetricBlocks pseudoinverse_blocks(const MechanicalSystem& sys, const PointOnSigma& q);
MetricBlocks pseudoinverse_blocks(const OrbitFields& f);

/// omega^A(H_B) - N^A_B and omega^a(H_B), for the frame H_A = N^E_A (d_E - A^a_E d_a).
struct DualBasisResidual {
  double horizontal = 0.0;
  double vertical = 0.0;
  double orbit = 0.0;  ///< omega(L) - (0, I)
};
DualBasisResidual dual_basis_check(const OrbitFields& f);

/// Named residuals of every pointwise identity.
struct InvariantReport {
  std::vector<std::pair<std::string, double>> entries;
  double max() const;
  double get(const std::string& name) const;
};
InvariantReport geometry_invariants(const MechanicalSystem& sys, const GeometryAtPoint& g);

}  // namespace wongreduce
