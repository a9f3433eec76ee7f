#include <doctest.h>

#include <cmath>
#include <numbers>

#include "wongreduce/dynamics.hpp"
#include "wongreduce/errors.hpp"
#include "wongreduce/geometry.hpp"
#include "wongreduce/lattice.hpp"

using namespace wongreduce;

namespace {

Vec random_vec(int n, double amp, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-amp, amp);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

double max_abs(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }
double max_abs(const Mat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

TEST_CASE("lattice construction validates its inputs") {
  CHECK_THROWS_AS(make_lattice(1), Error);
  CHECK_THROWS_AS(make_lattice(7), Error);
  CHECK_THROWS_AS(make_lattice(3, 0.0), Error);
  const GaugeLattice lat = make_lattice(3, 0.5);
  CHECK(lat.n_sites() == 27);
  CHECK(lat.flat_dim() == 243);
  CHECK(lat.gauge_dim() == 81);
  CHECK(lat.volume_weight() == doctest::Approx(0.125));
  for (int s = 0; s < lat.n_sites(); ++s)
    for (int d = 0; d < 3; ++d) CHECK(lat.shift(lat.shift(s, d, 1), d, -1) == s);
  CHECK_THROWS_AS(lattice_operators(lat, Vec::Zero(5)), Error);
}

TEST_CASE("covariant derivative matches a hand-written stencil") {
  const GaugeLattice lat = make_lattice(3);
  std::mt19937_64 rng(11);
  const Vec a = random_vec(lat.flat_dim(), 0.7, rng);
  const Vec w = random_vec(lat.gauge_dim(), 1.0, rng);
  const Vec dw = cov_deriv_operator(lat, a) * w;
  for (int x0 = 0; x0 < 3; ++x0)
    for (int x1 = 0; x1 < 3; ++x1)
      for (int x2 = 0; x2 < 3; ++x2) {
        const int x = lat.site(x0, x1, x2);
        const Eigen::Vector3d wx = w.segment<3>(3 * x);
        for (int i = 0; i < 3; ++i) {
          int c[3] = {x0, x1, x2};
          c[i] = (c[i] + 1) % 3;
          const Eigen::Vector3d wn = w.segment<3>(3 * lat.site(c[0], c[1], c[2]));
          const Eigen::Vector3d ai = a.segment<3>(lat.flat_index(0, i, x));
          const Eigen::Vector3d expect = wn - wx + ai.cross(wx);
          CHECK((dw.segment<3>(lat.flat_index(0, i, x)) - expect).norm() < 1e-14);
        }
      }
  CHECK(max_abs(Vec(divergence_operator(lat) * a - divergence(lat, a))) < 1e-14);
}

TEST_CASE("vacuum Green function is the inverse lattice Laplacian") {
  const GaugeLattice lat = make_lattice(4, 0.5);
  const GreenFunction g = green_function(lat, Vec::Zero(lat.flat_dim()));
  CHECK(g.kernel_dim == 3);
  std::vector<double> expect;
  for (int k = 0; k < lat.n_sites(); ++k) {
    const auto kc = lat.coords(k);
    double l = 0.0;
    for (int i = 0; i < 3; ++i) l += 2.0 - 2.0 * std::cos(2.0 * std::numbers::pi * kc[i] / lat.L);
    if (l > 1e-12)
      for (int c = 0; c < 3; ++c) expect.push_back(1.0 / (lat.volume_weight() * l));
  }
  for (int c = 0; c < 3; ++c) expect.push_back(0.0);
  std::sort(expect.begin(), expect.end());
  Eigen::SelfAdjointEigenSolver<Mat> es(g.inverse);
  for (int i = 0; i < lat.gauge_dim(); ++i) CHECK(std::abs(es.eigenvalues()(i) - expect[i]) < 1e-10);
}

TEST_CASE("lattice pseudo-inverse identities") {
  const GaugeLattice lat = make_lattice(3);
  std::mt19937_64 rng(3);
  for (const double amp : {0.0, 0.4}) {
    const Vec a = random_coulomb_field(lat, amp, rng);
    const LatticeOperators ops = lattice_operators(lat, a);
    const Mat gamma = ops.D.transpose() * ops.D;
    CHECK(max_abs(Mat(gamma * ops.gamma0_inv * gamma - gamma)) < 1e-10 * max_abs(gamma));
    const Vec v = random_vec(lat.flat_dim(), 1.0, rng);
    const Vec nv = ops.apply_N(v);
    CHECK(max_abs(ops.apply_J(nv)) < 1e-11);
    CHECK(max_abs(Vec(ops.apply_N(nv) - nv)) < 1e-11);
    const Vec piv = ops.apply_Pi(v);
    CHECK(max_abs(Vec(ops.D.transpose() * piv)) < 1e-10);
    const Vec w = random_vec(lat.gauge_dim(), 1.0, rng);
    CHECK(std::abs(ops.apply_J(v).dot(w) - v.dot(ops.apply_Jt(w))) < 1e-11);
    CHECK(std::abs(ops.apply_N(v).dot(nv) - v.dot(ops.apply_Nt(nv))) < 1e-10);
  }
}

TEST_CASE("Faddeev-Popov spectrum is invariant under global rotations") {
  const GaugeLattice lat = make_lattice(3);
  std::mt19937_64 rng(5);
  const Vec a = random_coulomb_field(lat, 0.5, rng);
  const Vec ar = rotate_field_globally(lat, a, Eigen::Vector3d(0.3, -1.1, 0.7));
  CHECK(max_abs(divergence(lat, ar)) < 1e-12);
  Eigen::SelfAdjointEigenSolver<Mat> e1(fp_operator(lat, a)), e2(fp_operator(lat, ar));
  CHECK(max_abs(Vec(e1.eigenvalues() - e2.eigenvalues())) < 1e-10);
  CHECK(potential_and_gradient(lat, a).first == doctest::Approx(potential_and_gradient(lat, ar).first).epsilon(1e-12));
}

TEST_CASE("potential gradient matches finite differences") {
  const GaugeLattice lat = make_lattice(2, 0.7);
  std::mt19937_64 rng(9);
  const Vec a = random_vec(lat.flat_dim(), 0.8, rng);
  const Vec g = potential_and_gradient(lat, a).second;
  const double h = 1e-5;
  for (int e = 0; e < lat.flat_dim(); ++e) {
    Vec ap = a, am = a, ap2 = a, am2 = a;
    ap(e) += h, am(e) -= h, ap2(e) += 2 * h, am2(e) -= 2 * h;
    auto V = [&](const Vec& x) { return potential_and_gradient(lat, x).first; };
    const double fd = (-V(ap2) + 8 * V(ap) - 8 * V(am) + V(am2)) / (12 * h);
    CHECK(std::abs(fd - g(e)) < 1e-8);
  }
}

TEST_CASE("single-color plane wave has the free-field energy") {
  const int L = 4;
  const double eps = 0.3, sp = 0.8;
  const GaugeLattice lat = make_lattice(L, sp);
  Vec a = Vec::Zero(lat.flat_dim());
  const double th = 2.0 * std::numbers::pi / L;
  for (int x = 0; x < lat.n_sites(); ++x) a(lat.flat_index(0, 1, x)) = eps * std::cos(th * lat.coords(x)[0]);
  CHECK(max_abs(divergence(lat, a)) < 1e-15);
  const double expect = std::pow(sp, 3) * eps * eps * L * L * L * (1.0 - std::cos(th));
  CHECK(potential_and_gradient(lat, a).first == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("Coulomb projection removes a pure gauge component") {
  const GaugeLattice lat = make_lattice(3);
  std::mt19937_64 rng(21);
  const Vec t = random_coulomb_field(lat, 0.5, rng);
  const Vec phi = random_vec(lat.gauge_dim(), 1.0, rng);
  const GaugeField f = coulomb_project(lat, t + gradient_operator(lat) * phi);
  CHECK(f.coulomb_fixed);
  CHECK(max_abs(divergence(lat, f.a)) < 1e-12);
  CHECK(max_abs(Vec(f.a - t)) < 1e-12);
  CHECK(max_abs(Vec(coulomb_project(lat, f.a).a - f.a)) < 1e-13);
}

TEST_CASE("closed-form lattice dynamics agree with the generic reduction") {
  const GaugeLattice lat = make_lattice(2, 0.9);
  const MechanicalSystem sys = lattice_system(lat);
  std::mt19937_64 rng(31);
  const SystemCheck chk = check_system(sys, random_coulomb_field(lat, 0.4, rng));
  MESSAGE("killing ", chk.killing, " equivariance ", chk.equivariance, " invariance ", chk.invariance);
  CHECK(chk.killing < 1e-12);
  for (int trial = 0; trial < 3; ++trial) {
    const Vec a = random_coulomb_field(lat, 0.4, rng);
    const LatticeOperators ops = lattice_operators(lat, a);
    const OrbitFields f = orbit_fields(sys, a);
    CHECK(max_abs(Mat(f.gamma - lat.volume_weight() * ops.D.transpose() * ops.D)) < 1e-12);
    CHECK(max_abs(Mat(f.A_conn - ops.gamma0_inv * ops.D.transpose())) < 1e-9);
    const Vec ad = ops.apply_N(random_vec(lat.flat_dim(), 0.6, rng));
    const Vec p = random_vec(lat.gauge_dim(), 0.6, rng);
    const Vec zero_p = Vec::Zero(lat.gauge_dim()), zero_v = Vec::Zero(lat.flat_dim());
    for (const auto& [v, m] : {std::pair{ad, zero_p}, std::pair{zero_v, p}, std::pair{ad, p}}) {
      const WongRates g = wong_rhs_unchecked(sys, a, v, m);
      const WongRates y = ym_rhs(ops, v, m);
      CHECK(max_abs(Vec(g.q_ddot - y.q_ddot)) < 1e-8);
      CHECK(max_abs(Vec(g.p_dot - y.p_dot)) < 1e-10);
    }
    CHECK(energy(sys, {on_sigma(sys, a), ad, p}) == doctest::Approx(ym_energy(lat, a, ad, p)).epsilon(1e-10));
  }
}

TEST_CASE("vacuum is a lattice equilibrium") {
  const GaugeLattice lat = make_lattice(2);
  const LatticeEquilibrium r = ym_solve_equilibrium(lat, Vec::Zero(lat.flat_dim()), 0, 0.0);
  CHECK(r.converged);
  CHECK(r.iterations == 0);
  CHECK(r.residual_h < 1e-14);
  CHECK(max_abs(divergence(lat, r.a)) < 1e-14);
}

TEST_CASE("Green-function eigenvectors solve the vertical equation") {
  const GaugeLattice lat = make_lattice(3);
  std::mt19937_64 rng(41);
  const Vec a = random_coulomb_field(lat, 0.5, rng);
  const auto pairs = ym_momentum_eigenproblem(lat, a);
  CHECK(pairs.size() == static_cast<size_t>(lat.gauge_dim()));
  for (size_t i = 1; i < pairs.size(); ++i) CHECK(pairs[i - 1].lambda <= pairs[i].lambda);
  for (const int i : {0, 10, 40, 80}) {
    CHECK(std::abs(pairs[i].e.norm() - 1.0) < 1e-12);
    CHECK(max_abs(ym_equilibrium_residuals(lat, a, 2.5 * pairs[i].e).vertical) < 1e-10);
  }
}

TEST_CASE("lattice equilibrium search decreases its residual or reports failure") {
  const GaugeLattice lat = make_lattice(2);
  std::mt19937_64 rng(51);
  const Vec a = random_coulomb_field(lat, 0.2, rng);
  EquilibriumOptions opt;
  opt.max_iterations = 15;
  try {
    const LatticeEquilibrium r = ym_attempt_equilibrium(lat, a, 3, 0.3, opt);
    for (size_t i = 1; i < r.residual_history.size(); ++i)
      CHECK(r.residual_history[i] <= r.residual_history[i - 1]);
    CHECK(max_abs(divergence(lat, r.a)) < 1e-10);
    if (!r.converged) CHECK_THROWS_AS(ym_solve_equilibrium(lat, a, 3, 0.3, opt), NoConvergence);
  } catch (const EigenCrossing&) {
    CHECK(true);
  }
  CHECK_THROWS_AS(ym_attempt_equilibrium(lat, a, 999, 0.1, opt), Error);
}

TEST_CASE("lattice integration keeps the gauge condition and converges in dt") {
  // Forward differences break local gauge symmetry, so energy varies along the flow.
  const GaugeLattice lat = make_lattice(2);
  std::mt19937_64 rng(61);
  const Vec a = random_coulomb_field(lat, 0.3, rng);
  const LatticeOperators ops = lattice_operators(lat, a);
  LatticeState s{a, ops.apply_N(random_vec(lat.flat_dim(), 0.3, rng)), random_vec(lat.gauge_dim(), 0.3, rng), 0.0};
  IntegrateOptions opt;
  opt.t_end = 0.2;
  opt.dt = 1e-2;
  const LatticeTrajectory coarse = ym_integrate(lat, s, opt);
  opt.dt = 5e-3;
  opt.sample_every = 2;
  const LatticeTrajectory fine = ym_integrate(lat, s, opt);
  REQUIRE(coarse.samples.size() == fine.samples.size());
  for (size_t i = 0; i < fine.samples.size(); ++i) {
    CHECK(fine.divergence[i] < 1e-12);
    CHECK(std::abs(fine.energy[i] - coarse.energy[i]) < 1e-6);
    CHECK(max_abs(Vec(fine.samples[i].a - coarse.samples[i].a)) < 1e-7);
  }
  const double drift = std::abs(fine.energy.back() - fine.energy.front());
  MESSAGE("lattice energy variation over t = 0.2: ", drift);
}

TEST_CASE("vacuum Coulomb connection splits pure gauge from transverse directions") {
  const GaugeLattice lat = make_lattice(3);
  std::mt19937_64 rng(71);
  const Vec zero = Vec::Zero(lat.flat_dim());
  const Mat conn = coulomb_connection(lat, zero);
  const Vec t = coulomb_project(lat, random_vec(lat.flat_dim(), 1.0, rng)).a;
  CHECK(max_abs(Vec(conn * t)) < 1e-10);
  Vec w = random_vec(lat.gauge_dim(), 1.0, rng);
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (int x = 0; x < lat.n_sites(); ++x) mean += w(lat.gauge_index(c, x)) / lat.n_sites();
    for (int x = 0; x < lat.n_sites(); ++x) w(lat.gauge_index(c, x)) -= mean;
  }
  const Mat d = cov_deriv_operator(lat, zero);
  CHECK(max_abs(Vec(conn * (d * w) - w)) < 1e-10);
  const Vec cst = Vec::Ones(lat.gauge_dim());
  CHECK(max_abs(Vec(d * cst)) < 1e-15);
  const Vec a = random_coulomb_field(make_lattice(2), 0.1, rng);
  Eigen::SelfAdjointEigenSolver<Mat> es(fp_operator(make_lattice(2), a));
  CHECK(es.eigenvalues().minCoeff() > -1e-10);
}
