#include "wongreduce/dynamics.hpp"

#include <cmath>

#include "wongreduce/errors.hpp"
#include "wongreduce/linalg.hpp"

namespace wongreduce {

namespace {

struct Nonzero {
  int g, a, b;
  double v;
};

std::vector<Nonzero> sparse(const Tensor3& c) {
  std::vector<Nonzero> out;
  for (int g = 0; g < c.dim(0); ++g)
    for (int a = 0; a < c.dim(1); ++a)
      for (int b = 0; b < c.dim(2); ++b)
        if (c(g, a, b) != 0.0) out.push_back({g, a, b, c(g, a, b)});
  return out;
}

bool finite(const Vec& v) { return v.allFinite(); }

}  // namespace

WongRates wong_rhs_unchecked(const MechanicalSystem& sys, const Vec& q, const Vec& qd, const Vec& p) {
  const int np = sys.n_p, ng = sys.n_g();
  const OrbitFields f = orbit_fields(sys, q);
  const FieldDerivatives d = field_derivatives(sys, q, f);
  const Tensor3 c = sys.connection_structure();
  const Vec pi = f.gamma_inv * p;
  const Vec w = f.A_conn * qd;

  // Christoffel term, contracted with qd twice.
  Vec first = Vec::Zero(np);
  for (int e = 0; e < np; ++e) {
    first += qd(e) * (d.G_H[e] * qd);
    first(e) -= 0.5 * qd.dot(d.G_H[e] * qd);
  }
  const PseudoInverse gh = spd_pseudo_inverse(f.G_H, 0, sys.tol.pinv_relative);
  const Vec gamma_term = f.N_proj * (gh.inverse * first);

  // f_F = F^n_{EF} qd^E p_n, with F = dA - dA + c A A.
  Mat dAqd = Mat::Zero(ng, np);
  for (int e = 0; e < np; ++e) dAqd += qd(e) * d.A_conn[e];
  Vec fv = dAqd.transpose() * p;
  for (int ff = 0; ff < np; ++ff) fv(ff) -= p.dot(d.A_conn[ff] * qd);
  Vec z = Vec::Zero(ng);  // z_s = c^n_{rs} w^r p_n
  for (const auto& [n, r, s, v] : sparse(c)) z(s) += v * w(r) * p(n);
  fv += f.A_conn.transpose() * z;

  // g_E = (D_E gamma^{ks}) p_s p_k = -pi^T (D_E gamma) pi.
  const auto [Dg, Dgi] = covariant_derivative_gamma_from(c, f, d.gamma);
  Vec gv(np);
  for (int e = 0; e < np; ++e) gv(e) = -pi.dot(Dg.slice(e) * pi);

  Vec inner = -gamma_term - f.G_inv * (f.N_proj.transpose() * fv) -
              0.5 * f.G_inv * (f.N_proj.transpose() * gv) - f.G_inv * sys.grad_potential(q);
  WongRates out;
  out.q_ddot = f.N_proj * inner;
  if (!sys.constraint_is_linear) out.q_ddot -= f.K * (f.Phi_inv * sys.chi_hessian(q, qd));

  out.p_dot = Vec::Zero(ng);
  for (const auto& [g, a, b, v] : sparse(c)) {
    out.p_dot(b) += v * w(a) * p(g);   // c^k_{ms} w^m p_k
    out.p_dot(a) += v * pi(b) * p(g);  // c^m_{sn} pi^n p_m
  }
  return out;
}

WongRates wong_rhs(const MechanicalSystem& sys, const ReducedState& s) {
  on_sigma(sys, s.q.q);
  if (s.q_dot.size() != sys.n_p || s.p.size() != sys.n_g()) throw Error("state has wrong dimensions");
  return wong_rhs_unchecked(sys, s.q.q, s.q_dot, s.p);
}

double energy(const MechanicalSystem& sys, const ReducedState& s) {
  const OrbitFields f = orbit_fields(sys, s.q.q);
  return 0.5 * s.q_dot.dot(f.G_H * s.q_dot) + 0.5 * s.p.dot(f.gamma_inv * s.p) + sys.potential(s.q.q);
}

InvariantSample sample_invariants(const MechanicalSystem& sys, const ReducedState& s) {
  const OrbitFields f = orbit_fields(sys, s.q.q);
  InvariantSample r;
  r.energy = 0.5 * s.q_dot.dot(f.G_H * s.q_dot) + 0.5 * s.p.dot(f.gamma_inv * s.p) + sys.potential(s.q.q);
  r.chi = sys.chi(s.q.q).norm();
  r.tangency = (f.J * s.q_dot).norm();
  r.vertical = (f.A_conn * s.q_dot).norm();
  r.p_norm = std::sqrt(std::max(0.0, s.p.dot(sys.algebra->khat_inv() * s.p)));
  return r;
}

ReducedState reduce_state(const MechanicalSystem& sys, const Vec& Q, const Vec& Q_dot, double t) {
  const TransportedProjection tp = project_to_sigma_transport(sys, Q, {Q_dot});
  const OrbitFields f = orbit_fields(sys, tp.point.q);
  const Vec& W = tp.vectors[0];
  return ReducedState{tp.point, f.N_proj * W, f.K.transpose() * f.G * W, t};
}

namespace {

struct Deriv {
  Vec dq, dqd, dp;
};

Deriv reduced_deriv(const MechanicalSystem& sys, const Vec& q, const Vec& qd, const Vec& p) {
  const WongRates r = wong_rhs_unchecked(sys, q, qd, p);
  return {qd, r.q_ddot, r.p_dot};
}

void check_step(const Vec& q, const Vec& qd, const Vec& p, double t, double limit) {
  if (!finite(q) || !finite(qd) || !finite(p)) throw StepFailure("non-finite state", t);
  const double m = std::max({q.cwiseAbs().maxCoeff(), qd.cwiseAbs().maxCoeff(),
                             p.size() ? p.cwiseAbs().maxCoeff() : 0.0});
  if (m > limit) throw BlowUp("state exceeded the blow-up bound", t);
}

}  // namespace

Trajectory integrate(const MechanicalSystem& sys, const ReducedState& s0, const IntegrateOptions& opt) {
  if (!(opt.dt > 0.0)) throw Error("dt must be positive");
  if (opt.sample_every < 1) throw Error("sample_every must be positive");
  on_sigma(sys, s0.q.q);
  Trajectory tr;
  ReducedState s = s0;
  tr.samples.push_back(s);
  tr.invariants_log.push_back(sample_invariants(sys, s));
  const long steps = std::lround((opt.t_end - s0.t) / opt.dt);
  const double dt = opt.dt;
  for (long i = 1; i <= steps; ++i) {
    const Vec& q = s.q.q;
    Vec qd = s.q_dot, p = s.p, qn;
    try {
      const Deriv k1 = reduced_deriv(sys, q, qd, p);
      const Deriv k2 = reduced_deriv(sys, q + 0.5 * dt * k1.dq, qd + 0.5 * dt * k1.dqd, p + 0.5 * dt * k1.dp);
      const Deriv k3 = reduced_deriv(sys, q + 0.5 * dt * k2.dq, qd + 0.5 * dt * k2.dqd, p + 0.5 * dt * k2.dp);
      const Deriv k4 = reduced_deriv(sys, q + dt * k3.dq, qd + dt * k3.dqd, p + dt * k3.dp);
      qn = q + dt / 6.0 * (k1.dq + 2 * k2.dq + 2 * k3.dq + k4.dq);
      qd += dt / 6.0 * (k1.dqd + 2 * k2.dqd + 2 * k3.dqd + k4.dqd);
      p += dt / 6.0 * (k1.dp + 2 * k2.dp + 2 * k3.dp + k4.dp);
    } catch (const StepFailure&) {
      throw;
    } catch (const Error& e) {
      throw StepFailure(std::string("step failed: ") + e.what(), s.t);
    }
    const double t = s0.t + i * dt;
    check_step(qn, qd, p, t, opt.blow_up);
    if (sys.chi(qn).norm() >= sys.tol.sigma * 1e-2) {
      const TransportedProjection tp = project_to_sigma_transport(sys, qn, {qd});
      qn = tp.point.q;
      qd = tp.vectors[0];
    }
    qd = orbit_fields(sys, qn).N_proj * qd;
    s = ReducedState{PointOnSigma{qn}, qd, p, t};
    if (i % opt.sample_every == 0 || i == steps) {
      tr.samples.push_back(s);
      tr.invariants_log.push_back(sample_invariants(sys, s));
    }
  }
  return tr;
}

namespace {

// Qdd = -G^-1 (dG(Qd) Qd - 1/2 grad(Qd^T G Qd)) - G^-1 dV.
Vec full_acceleration(const MechanicalSystem& sys, const Vec& Q, const Vec& Qd) {
  const int np = sys.n_p;
  Vec rhs = -sys.grad_potential(Q);
  for (int e = 0; e < np; ++e) {
    const Mat dG = sys.d_metric(Q, e);
    rhs -= Qd(e) * (dG * Qd);
    rhs(e) += 0.5 * Qd.dot(dG * Qd);
  }
  return sys.metric_at(Q).llt().solve(rhs);
}

}  // namespace

OracleResult full_space_oracle(const MechanicalSystem& sys, const Vec& Q0, const Vec& Q0_dot,
                               const IntegrateOptions& opt) {
  if (!(opt.dt > 0.0)) throw Error("dt must be positive");
  OracleResult out;
  Vec Q = Q0, Qd = Q0_dot;
  auto record = [&](double t) {
    out.full.push_back({t, Q, Qd});
    ReducedState r = reduce_state(sys, Q, Qd, t);
    out.gauge_fixed.invariants_log.push_back(sample_invariants(sys, r));
    out.gauge_fixed.samples.push_back(std::move(r));
  };
  record(0.0);
  const long steps = std::lround(opt.t_end / opt.dt);
  const double dt = opt.dt;
  for (long i = 1; i <= steps; ++i) {
    const Vec a1 = full_acceleration(sys, Q, Qd);
    const Vec v2 = Qd + 0.5 * dt * a1;
    const Vec a2 = full_acceleration(sys, Q + 0.5 * dt * Qd, v2);
    const Vec v3 = Qd + 0.5 * dt * a2;
    const Vec a3 = full_acceleration(sys, Q + 0.5 * dt * v2, v3);
    const Vec v4 = Qd + dt * a3;
    const Vec a4 = full_acceleration(sys, Q + dt * v3, v4);
    Q += dt / 6.0 * (Qd + 2 * v2 + 2 * v3 + v4);
    Qd += dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4);
    check_step(Q, Qd, Vec(), i * dt, opt.blow_up);
    if (i % opt.sample_every == 0 || i == steps) record(i * dt);
  }
  return out;
}

}  // namespace wongreduce
