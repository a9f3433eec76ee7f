#pragma once

#include <vector>

#include "wongreduce/geometry.hpp"

namespace wongreduce {

struct EigenPair {
  double lambda;
  Vec e;  ///< normalized with e^T khat^-1 e = 1, largest-magnitude entry positive
};

/// Eigenpairs of k gamma^-1 acting on covectors, sorted by ascending lambda.
/// Throws SingularFP.
std::vector<EigenPair> momentum_eigenproblem(const MechanicalSystem& sys, const Vec& q);
std::vector<EigenPair> momentum_eigenproblem(const LieAlgebra& algebra, const Mat& gamma_inv);

/// c^m_{sn} gamma^{nk} p_m p_k, with the connection-convention constants.
Vec vertical_residual(const MechanicalSystem& sys, const Vec& q, const Vec& p);

/// N (1/2 G^-1 N^T (D gamma^-1)(p, p) + G^-1 dV): the reduced acceleration at
/// rest, with opposite sign.
Vec horizontal_residual(const MechanicalSystem& sys, const Vec& q, const Vec& p);

struct RelativeEquilibrium {
  PointOnSigma q;
  Vec p;
  double lambda = 0.0;
  double scale = 0.0;
  double residual_h = 0.0;
  double residual_v = 0.0;
  int eigen_index = 0;
  int cluster_size = 1;  ///< dimension of the eigenspace p was sought in
  int iterations = 0;
  bool converged = false;
  std::vector<double> residual_history;  ///< accepted iterates only
};

struct EquilibriumOptions {
  int max_iterations = 200;
  double tolerance = 1e-8;
  double degeneracy = 1e-8;  ///< relative eigenvalue gap treated as a degenerate cluster
  double min_overlap = 0.5;
};

/// Levenberg-Marquardt on [horizontal_residual; chi] over (q, coordinates of p
/// in the tracked eigenspace). Throws NoConvergence, EigenCrossing.
RelativeEquilibrium solve_equilibrium(const MechanicalSystem& sys, const Vec& q_guess, int eigen_index,
                                      double scale_guess, const EquilibriumOptions& opt = {});

/// As solve_equilibrium, but returns the best iterate with converged = false
/// instead of throwing NoConvergence.
RelativeEquilibrium attempt_equilibrium(const MechanicalSystem& sys, const Vec& q_guess, int eigen_index,
                                        double scale_guess, const EquilibriumOptions& opt = {});

}  // namespace wongreduce
