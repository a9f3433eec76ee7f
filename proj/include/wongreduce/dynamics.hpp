#pragma once

#include <vector>

#include "wongreduce/geometry.hpp"

namespace wongreduce {

/// Reduced state: a point of the gauge surface, the velocity of that point
/// (tangent to the surface) and the internal momentum.
struct ReducedState {
  PointOnSigma q;
  Vec q_dot;
  Vec p;
  double t = 0.0;
};

struct InvariantSample {
  double energy = 0.0;
  double chi = 0.0;          ///< |chi(q)|
  double tangency = 0.0;     ///< |J q_dot|
  double vertical = 0.0;     ///< |A q_dot|
  double p_norm = 0.0;       ///< khat-norm of p
};

struct Trajectory {
  std::vector<ReducedState> samples;
  std::vector<InvariantSample> invariants_log;
};

struct WongRates {
  Vec q_ddot;
  Vec p_dot;
};

/// Right-hand side of the reduced equations. Throws NotOnSigma, SingularFP.
WongRates wong_rhs(const MechanicalSystem& sys, const ReducedState& state);
/// Same, without the gauge-surface check (used at intermediate RK stages).
WongRates wong_rhs_unchecked(const MechanicalSystem& sys, const Vec& q, const Vec& q_dot, const Vec& p);

/// E = 1/2 G_H(q_dot, q_dot) + 1/2 p gamma^-1 p + V.
double energy(const MechanicalSystem& sys, const ReducedState& state);

InvariantSample sample_invariants(const MechanicalSystem& sys, const ReducedState& state);

enum class Method { RK4 };

struct IntegrateOptions {
  double t_end = 1.0;
  double dt = 1e-3;
  Method method = Method::RK4;
  int sample_every = 1;  ///< record every n-th step (the final step is always recorded)
  double blow_up = 1e12;
};

/// RK4 with projection onto the gauge surface after each step and
/// re-projection of q_dot onto its tangent space. Throws StepFailure, BlowUp.
Trajectory integrate(const MechanicalSystem& sys, const ReducedState& state0, const IntegrateOptions& opt);

/// Gauge-fixes a full-space state: q = projection of Q, q_dot = N (transported Q_dot),
/// p = K^T G (transported Q_dot).
ReducedState reduce_state(const MechanicalSystem& sys, const Vec& Q, const Vec& Q_dot, double t = 0.0);

struct FullSample {
  double t;
  Vec Q, Q_dot;
};

struct OracleResult {
  std::vector<FullSample> full;
  Trajectory gauge_fixed;
};

/// Integrates the unreduced geodesic-with-potential equations in the chart,
/// and gauge-fixes every recorded sample.
OracleResult full_space_oracle(const MechanicalSystem& sys, const Vec& Q0, const Vec& Q0_dot,
                               const IntegrateOptions& opt);

}  // namespace wongreduce
