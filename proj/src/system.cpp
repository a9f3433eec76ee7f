#include "wongreduce/system.hpp"

#include <cmath>
#include <numbers>

#include "rotation_chart.hpp"
#include "wongreduce/errors.hpp"
#include "wongreduce/linalg.hpp"

namespace wongreduce {

Tensor3 MechanicalSystem::connection_structure() const {
  Tensor3 c = algebra->structure();
  if (bracket_sign != 1)
    for (double& v : c.data()) v *= bracket_sign;
  return c;
}

Mat MechanicalSystem::d_metric(const Vec& q, int e) const {
  if (metric_derivative) return metric_derivative(q, e);
  return central_difference([&](const Vec& x) -> Mat { return metric(x); }, q, e, fd_step);
}

Mat MechanicalSystem::d_killing(const Vec& q, int e) const {
  if (killing_derivative) return killing_derivative(q, e);
  return central_difference([&](const Vec& x) -> Mat { return killing(x); }, q, e, fd_step);
}

Mat MechanicalSystem::chi_jacobian(const Vec& q) const {
  if (constraint_jacobian) return constraint_jacobian(q);
  Mat j(n_g(), n_p);
  for (int e = 0; e < n_p; ++e)
    j.col(e) = central_difference([&](const Vec& x) -> Vec { return constraint(x); }, q, e, fd_step);
  return j;
}

Vec MechanicalSystem::grad_potential(const Vec& q) const {
  if (potential_gradient) return potential_gradient(q);
  Vec g(n_p);
  for (int e = 0; e < n_p; ++e)
    g(e) = central_difference([&](const Vec& x) { return potential(x); }, q, e, fd_step);
  return g;
}

Vec MechanicalSystem::chi_hessian(const Vec& q, const Vec& v) const {
  if (constraint_is_linear) return Vec::Zero(n_g());
  const double h = fd_step;
  auto jv = [&](double t) -> Vec { return chi_jacobian(q + t * v) * v; };
  return ((jv(-2 * h) - jv(2 * h)) + 8.0 * (jv(h) - jv(-h))) / (12.0 * h);
}

Vec MechanicalSystem::act(const Vec& q, const Vec& xi) const {
  if (group_action) return group_action(q, xi);
  // Time-one flow of the fundamental field K xi.
  const int steps = 64;
  const double dt = 1.0 / steps;
  Vec x = q;
  auto f = [&](const Vec& y) -> Vec { return killing(y) * xi; };
  for (int s = 0; s < steps; ++s) {
    const Vec k1 = f(x);
    const Vec k2 = f(x + 0.5 * dt * k1);
    const Vec k3 = f(x + 0.5 * dt * k2);
    const Vec k4 = f(x + dt * k3);
    x += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return x;
}

PointOnSigma on_sigma(const MechanicalSystem& sys, const Vec& q) {
  if (q.size() != sys.n_p) throw Error("configuration has wrong dimension");
  const double r = sys.chi(q).norm();
  if (!(r < sys.tol.sigma)) throw NotOnSigma("configuration is off the gauge surface, |chi| = " + std::to_string(r), r);
  return PointOnSigma{q};
}

// ---------------------------------------------------------------- two vectors

double InvariantPotential::value(const Eigen::Vector3d& s) const {
  double v = linear.dot(s);
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) v += quadratic(i, j) * s(i) * s(j);
  return v;
}

Eigen::Vector3d InvariantPotential::gradient(const Eigen::Vector3d& s) const {
  Eigen::Vector3d g = linear;
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) {
      g(i) += quadratic(i, j) * s(j);
      g(j) += quadratic(i, j) * s(i);
    }
  return g;
}

InvariantPotential InvariantPotential::orthonormal_well() {
  InvariantPotential p;
  p.linear = Eigen::Vector3d(-1.0, -1.0, 0.0);
  p.quadratic = Eigen::Vector3d(0.5, 0.5, 0.5).asDiagonal();
  return p;
}

namespace {

double levi_civita(int i, int j, int k) {
  return 0.5 * (i - j) * (j - k) * (k - i);
}

}  // namespace

MechanicalSystem builtin_two_vector_so3(const InvariantPotential& potential) {
  MechanicalSystem s;
  s.name = "two_vector_so3";
  s.n_p = 6;
  s.algebra = std::make_shared<const LieAlgebra>(so3());
  // K_mu = e_mu x x is a left action: [K_mu, K_nu] = -eps K.
  s.bracket_sign = -1;
  s.metric = [](const Vec&) -> Mat { return Mat::Identity(6, 6); };
  s.metric_derivative = [](const Vec&, int) -> Mat { return Mat::Zero(6, 6); };
  s.killing = [](const Vec& q) -> Mat {
    Mat k = Mat::Zero(6, 3);
    for (int v = 0; v < 2; ++v)
      for (int i = 0; i < 3; ++i)
        for (int m = 0; m < 3; ++m)
          for (int kk = 0; kk < 3; ++kk) k(3 * v + i, m) += levi_civita(i, m, kk) * q(3 * v + kk);
    return k;
  };
  s.killing_derivative = [](const Vec&, int e) -> Mat {
    Mat d = Mat::Zero(6, 3);
    const int v = e / 3, kk = e % 3;
    for (int i = 0; i < 3; ++i)
      for (int m = 0; m < 3; ++m) d(3 * v + i, m) = levi_civita(i, m, kk);
    return d;
  };
  s.constraint = [](const Vec& q) -> Vec { return Eigen::Vector3d(q(0), q(1), q(4)); };
  s.constraint_jacobian = [](const Vec&) -> Mat {
    Mat j = Mat::Zero(3, 6);
    j(0, 0) = j(1, 1) = j(2, 4) = 1.0;
    return j;
  };
  s.constraint_is_linear = true;
  auto invariants = [](const Vec& q) {
    const Eigen::Vector3d x1 = q.head<3>(), x2 = q.tail<3>();
    return Eigen::Vector3d(x1.squaredNorm(), x2.squaredNorm(), x1.dot(x2));
  };
  s.potential = [potential, invariants](const Vec& q) { return potential.value(invariants(q)); };
  s.potential_gradient = [potential, invariants](const Vec& q) -> Vec {
    const Eigen::Vector3d g = potential.gradient(invariants(q));
    const Eigen::Vector3d x1 = q.head<3>(), x2 = q.tail<3>();
    Vec out(6);
    out.head<3>() = 2.0 * g(0) * x1 + g(2) * x2;
    out.tail<3>() = 2.0 * g(1) * x2 + g(2) * x1;
    return out;
  };
  s.group_action = [](const Vec& q, const Vec& xi) -> Vec {
    const rot::M3 r = rot::exp(xi.head<3>());
    Vec out(6);
    out.head<3>() = r * q.head<3>();
    out.tail<3>() = r * q.tail<3>();
    return out;
  };
  s.action_tangent = [](const Vec&, const Vec& xi, const Vec& v) -> Vec {
    const rot::M3 r = rot::exp(xi.head<3>());
    Vec out(6);
    out.head<3>() = r * v.head<3>();
    out.tail<3>() = r * v.tail<3>();
    return out;
  };
  // Frame with x1 along +z and x2 in the x > 0 half of the x-z plane.
  s.gauge_guess = [](const Vec& q) -> Vec {
    const Eigen::Vector3d x1 = q.head<3>(), x2 = q.tail<3>();
    const Eigen::Vector3d t = x2 - x2.dot(x1) / x1.squaredNorm() * x1;
    if (x1.norm() == 0.0 || t.norm() <= 1e-12 * x2.norm()) return Vec::Zero(3);
    rot::M3 r;
    r.row(2) = x1.normalized();
    r.row(0) = t.normalized();
    r.row(1) = Eigen::Vector3d(r.row(2)).cross(Eigen::Vector3d(r.row(0)));
    return Vec(rot::log_any(r));
  };
  s.sampler = [](std::mt19937_64& rng) -> Vec {
    std::uniform_real_distribution<double> len(0.5, 2.0), off(-1.0, 1.0);
    Vec q = Vec::Zero(6);
    q(2) = len(rng);
    q(3) = len(rng);
    q(5) = off(rng);
    return q;
  };
  return s;
}

// --------------------------------------------------------------- Kaluza-Klein

ConnectionField ConnectionField::zero(int base_dim) { return constant(Mat::Zero(3, base_dim)); }

ConnectionField ConnectionField::constant(const Mat& a) {
  ConnectionField f;
  f.value = [a](const Vec&) -> Mat { return a; };
  f.derivative = [a](const Vec&, int) -> Mat { return Mat::Zero(a.rows(), a.cols()); };
  return f;
}

ConnectionField ConnectionField::linear(const Mat& a0, const std::vector<Mat>& slope) {
  ConnectionField f;
  f.value = [a0, slope](const Vec& x) -> Mat {
    Mat a = a0;
    for (size_t b = 0; b < slope.size(); ++b) a += x(static_cast<int>(b)) * slope[b];
    return a;
  };
  f.derivative = [a0, slope](const Vec&, int b) -> Mat {
    return b < static_cast<int>(slope.size()) ? slope[b] : Mat::Zero(a0.rows(), a0.cols());
  };
  return f;
}

MechanicalSystem builtin_kaluza_klein(const ConnectionField& connection, const KaluzaKleinOptions& options) {
  const int d = options.base_dim;
  const double radius = options.chart_radius;
  const Eigen::Vector3d gamma0 = options.fiber_metric;
  if (d < 1) throw Error("Kaluza-Klein base dimension must be positive");
  if (gamma0.minCoeff() <= 0.0) throw Error("Kaluza-Klein fiber metric must be positive definite");
  if (!(radius > 0.0 && radius < std::numbers::pi)) throw Error("chart radius must lie in (0, pi)");

  MechanicalSystem s;
  s.name = "kaluza_klein";
  s.n_p = d + 3;
  s.algebra = std::make_shared<const LieAlgebra>(so3());
  s.bracket_sign = 1;
  auto check_chart = [radius](const Vec& q) {
    if (q.tail<3>().norm() >= radius)
      throw ChartOutOfRange("SO(3) exponential coordinate outside the chart, |theta| = " +
                            std::to_string(q.tail<3>().norm()));
  };
  auto frame = [connection, d](const Vec& q) -> Mat {
    Mat b(3, d + 3);
    b.leftCols(d) = connection.value(q.head(d));
    b.rightCols(3) = rot::left_jacobian(q.tail<3>());
    return b;
  };
  s.metric = [frame, gamma0, d, check_chart](const Vec& q) -> Mat {
    check_chart(q);
    const Mat b = frame(q);
    Mat g = b.transpose() * gamma0.asDiagonal() * b;
    g.topLeftCorner(d, d) += Mat::Identity(d, d);
    return g;
  };
  s.killing = [d, check_chart](const Vec& q) -> Mat {
    check_chart(q);
    Mat k = Mat::Zero(d + 3, 3);
    k.bottomRows(3) = rot::right_jacobian_inverse(q.tail<3>());
    return k;
  };
  s.constraint = [d](const Vec& q) -> Vec { return q.tail<3>(); };
  s.constraint_jacobian = [d](const Vec&) -> Mat {
    Mat j = Mat::Zero(3, d + 3);
    j.rightCols(3).setIdentity();
    return j;
  };
  s.constraint_is_linear = true;
  const double w2 = options.base_frequency * options.base_frequency;
  s.potential = [d, w2](const Vec& q) { return 0.5 * w2 * q.head(d).squaredNorm(); };
  s.potential_gradient = [d, w2](const Vec& q) -> Vec {
    Vec g = Vec::Zero(d + 3);
    g.head(d) = w2 * q.head(d);
    return g;
  };
  s.group_action = [d, radius](const Vec& q, const Vec& xi) -> Vec {
    const rot::M3 r = rot::exp(q.tail<3>()) * rot::exp(xi.head<3>());
    if (0.5 * (r.trace() - 1.0) <= std::cos(radius))
      throw ChartOutOfRange("group action leaves the exponential chart");
    Vec out = q;
    out.tail<3>() = rot::log(r);
    return out;
  };
  s.gauge_guess = [d](const Vec& q) -> Vec { return -q.tail<3>(); };
  s.sampler = [d](std::mt19937_64& rng) -> Vec {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vec q = Vec::Zero(d + 3);
    for (int i = 0; i < d; ++i) q(i) = u(rng);
    return q;
  };
  return s;
}

MechanicalSystem builtin_system(const std::string& name) {
  if (name == "two_vector_so3") return builtin_two_vector_so3();
  if (name == "kaluza_klein") return builtin_kaluza_klein(default_kaluza_klein_connection(2));
  throw Error("unknown built-in system '" + name + "'");
}

ConnectionField default_kaluza_klein_connection(int base_dim) {
  Mat a0 = Mat::Zero(3, base_dim);
  std::vector<Mat> slope(base_dim, Mat::Zero(3, base_dim));
  for (int b = 0; b < base_dim; ++b) {
    a0(b % 3, b) = 0.3 + 0.1 * b;
    a0((b + 1) % 3, b) = -0.2;
    for (int a = 0; a < base_dim; ++a) slope[b]((a + b + 2) % 3, a) = 0.25 * (a - b) + 0.1;
  }
  return ConnectionField::linear(a0, slope);
}

// ----------------------------------------------------------------- projection

namespace {

// Differential of the group action in q, by central differences.
Vec action_pushforward(const MechanicalSystem& sys, const Vec& q, const Vec& xi, const Vec& v) {
  if (sys.action_tangent) return sys.action_tangent(q, xi, v);
  const double n = v.norm();
  if (n == 0.0) return Vec::Zero(v.size());
  const Vec u = v / n;
  const double h = 1e-5;
  auto f = [&](double t) -> Vec { return sys.act(q + t * u, xi); };
  return n * ((f(-2 * h) - f(2 * h)) + 8.0 * (f(h) - f(-h))) / (12.0 * h);
}

}  // namespace

TransportedProjection project_to_sigma_transport(const MechanicalSystem& sys, const Vec& q0,
                                                 const std::vector<Vec>& vectors, int max_iterations) {
  Vec q = q0;
  std::vector<Vec> vs = vectors;
  double r = sys.chi(q).norm();
  if (r >= sys.tol.sigma && sys.gauge_guess) {
    const Vec xi = sys.gauge_guess(q);
    for (Vec& v : vs) v = action_pushforward(sys, q, xi, v);
    q = sys.act(q, xi);
    r = sys.chi(q).norm();
  }
  for (int it = 0; it <= max_iterations; ++it) {
    if (r < sys.tol.sigma) return {PointOnSigma{q}, vs};
    if (it == max_iterations) break;
    const Mat phi = sys.chi_jacobian(q) * sys.killing(q);
    const PseudoInverse pinv = pseudo_inverse(phi, sys.residual_symmetry_dim, 0.0);
    if (pinv.rank < sys.n_g() - sys.residual_symmetry_dim || pinv.condition > sys.tol.fp_condition)
      throw SingularFP("Faddeev-Popov matrix is singular along the projection", pinv.condition);
    const Vec xi = -pinv.inverse * sys.chi(q);
    for (Vec& v : vs) v = action_pushforward(sys, q, xi, v);
    q = sys.act(q, xi);
    r = sys.chi(q).norm();
  }
  throw NoConvergence("projection to the gauge surface did not converge", max_iterations, r);
}

PointOnSigma project_to_sigma(const MechanicalSystem& sys, const Vec& q, int max_iterations) {
  return project_to_sigma_transport(sys, q, {}, max_iterations).point;
}

SystemCheck check_system(const MechanicalSystem& sys, const Vec& q) {
  const int n = sys.n_p, m = sys.n_g();
  SystemCheck out;
  const Mat g = sys.metric_at(q);
  const Mat k = sys.killing_at(q);
  out.metric_asymmetry = (g - g.transpose()).cwiseAbs().maxCoeff();
  out.metric_min_eigenvalue = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (g + g.transpose())).eigenvalues().minCoeff();

  std::vector<Mat> dk(n), dg(n);
  for (int e = 0; e < n; ++e) {
    dk[e] = sys.d_killing(q, e);
    dg[e] = sys.d_metric(q, e);
  }
  for (int mu = 0; mu < m; ++mu) {
    // (L_K G)_AB = K^E d_E G_AB + G_EB d_A K^E + G_AE d_B K^E
    Mat lie = Mat::Zero(n, n);
    Mat dks(n, n);  // dks(E, A) = d_A K^E
    for (int a = 0; a < n; ++a) dks.col(a) = dk[a].col(mu);
    for (int e = 0; e < n; ++e) lie += k(e, mu) * dg[e];
    lie += dks.transpose() * g + g * dks;
    out.killing = std::max(out.killing, lie.cwiseAbs().maxCoeff());
  }
  const Tensor3& c = sys.algebra->structure();
  for (int mu = 0; mu < m; ++mu)
    for (int nu = mu + 1; nu < m; ++nu) {
      Vec br = Vec::Zero(n);
      for (int e = 0; e < n; ++e) br += k(e, mu) * dk[e].col(nu) - k(e, nu) * dk[e].col(mu);
      for (int s = 0; s < m; ++s) br -= sys.bracket_sign * c(s, mu, nu) * k.col(s);
      out.equivariance = std::max(out.equivariance, br.cwiseAbs().maxCoeff());
    }
  out.invariance = (k.transpose() * sys.grad_potential(q)).cwiseAbs().maxCoeff();
  return out;
}

}  // namespace wongreduce
