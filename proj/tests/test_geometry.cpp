#include <doctest.h>

#include "oracles.hpp"
#include "wongreduce/errors.hpp"
#include "wongreduce/geometry.hpp"

using namespace wongreduce;

namespace {

double max_abs(const Mat& m) { return m.cwiseAbs().maxCoeff(); }

double max_diff(const Tensor3& a, const Tensor3& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

Vec canonical_two_vector() {
  Vec q(6);
  q << 0, 0, 1, 1, 0, 0;
  return q;
}

// SO(3) alone: the Kaluza-Klein fiber with no base.
MechanicalSystem pure_orbit() {
  auto kk = std::make_shared<MechanicalSystem>(builtin_kaluza_klein(ConnectionField::zero(1)));
  MechanicalSystem s = *kk;
  s.name = "pure_orbit";
  s.n_p = 3;
  auto lift = [](const Vec& t) {
    Vec q(4);
    q << 0.0, t;
    return q;
  };
  s.metric = [kk, lift](const Vec& t) -> Mat { return kk->metric(lift(t)).bottomRightCorner(3, 3); };
  s.metric_derivative = nullptr;
  s.killing = [kk, lift](const Vec& t) -> Mat { return kk->killing(lift(t)).bottomRows(3); };
  s.killing_derivative = nullptr;
  s.constraint = [](const Vec& t) -> Vec { return t; };
  s.constraint_jacobian = [](const Vec&) -> Mat { return Mat::Identity(3, 3); };
  s.potential = [](const Vec&) { return 0.0; };
  s.potential_gradient = [](const Vec&) -> Vec { return Vec::Zero(3); };
  s.group_action = nullptr;
  return s;
}

}  // namespace

TEST_CASE("two-vector geometry at the canonical point") {
  const MechanicalSystem sys = builtin_two_vector_so3();
  const GeometryAtPoint g = evaluate_geometry(sys, on_sigma(sys, canonical_two_vector()));
  // brute force: gamma_{mn} = sum over both vectors of (e_m x x).(e_n x x)
  Mat gamma(3, 3);
  for (int m = 0; m < 3; ++m)
    for (int n = 0; n < 3; ++n) {
      double acc = 0.0;
      for (int v = 0; v < 2; ++v) {
        const Eigen::Vector3d x = canonical_two_vector().segment<3>(3 * v);
        acc += Eigen::Vector3d::Unit(m).cross(x).dot(Eigen::Vector3d::Unit(n).cross(x));
      }
      gamma(m, n) = acc;
    }
  CHECK(max_abs(g.gamma - gamma) < 1e-14);
  CHECK(max_abs(g.gamma - Eigen::Vector3d(1, 2, 1).asDiagonal().toDenseMatrix()) < 1e-14);
  Eigen::JacobiSVD<Mat> svd(g.G_H);
  const Vec s = svd.singularValues();
  CHECK(s(2) > 0.1);
  CHECK(s(3) < 1e-12);
  CHECK(geometry_invariants(sys, g).max() < 1e-10);
}

TEST_CASE("Kaluza-Klein geometry with vanishing connection") {
  const MechanicalSystem sys = builtin_kaluza_klein(ConnectionField::zero(2));
  Vec q = Vec::Zero(5);
  q.head(2) << 0.4, -0.7;
  const GeometryAtPoint g = evaluate_geometry(sys, on_sigma(sys, q));
  CHECK(max_abs(g.A_conn.leftCols(2)) < 1e-14);
  CHECK(max_abs(g.A_conn.rightCols(3) - Mat::Identity(3, 3)) < 1e-14);
  const Mat base = Mat::Identity(2, 2);
  CHECK(max_abs(g.N_proj.topLeftCorner(2, 2) - base) < 1e-14);
  CHECK(max_abs(g.P_perp.topLeftCorner(2, 2) - base) < 1e-14);
  CHECK(max_abs(g.Pi_proj.topLeftCorner(2, 2) - base) < 1e-14);
  CHECK(g.F_curv.max_abs() < 1e-8);
  CHECK(g.christoffel_H.max_abs() < 1e-8);
  const MetricBlocks b = pseudoinverse_blocks(g);
  CHECK(max_abs(b.inverse.topRightCorner(5, 3)) < 1e-12);
  CHECK(max_abs(b.inverse.bottomLeftCorner(3, 5)) < 1e-12);
}

TEST_CASE("pure orbit has no horizontal directions") {
  const MechanicalSystem sys = pure_orbit();
  const GeometryAtPoint g = evaluate_geometry(sys, on_sigma(sys, Vec::Zero(3)));
  CHECK(max_abs(g.G_H) < 1e-12);
  CHECK(max_abs(g.Pi_proj) < 1e-12);
  CHECK(max_abs(pseudoinverse_blocks(g).inverse.topLeftCorner(3, 3)) < 1e-12);
}

TEST_CASE("Kaluza-Klein curvature matches the closed form") {
  Mat a0(3, 2);
  a0 << 0.3, -0.1, 0.2, 0.5, -0.4, 0.25;
  Mat s0(3, 2), s1(3, 2);
  s0 << 0.1, 0.2, -0.3, 0.0, 0.05, 0.4;
  s1 << -0.2, 0.1, 0.15, -0.25, 0.3, 0.0;
  const std::vector<ConnectionField> conns = {ConnectionField::constant(a0), ConnectionField::linear(a0, {s0, s1})};
  for (const auto& conn : conns) {
    for (DerivativeMode mode : {DerivativeMode::Analytic, DerivativeMode::FiniteDifference}) {
      MechanicalSystem sys = builtin_kaluza_klein(conn);
      sys.derivative_mode = mode;
      Vec q = Vec::Zero(5);
      q.head(2) << 0.6, -0.3;
      const GeometryAtPoint g = evaluate_geometry(sys, on_sigma(sys, q));
      CHECK(max_abs(g.A_conn.leftCols(2) - conn.value(q.head(2))) < 1e-12);
      CHECK(max_diff(g.F_curv, oracle::kk_curvature(conn, q.head(2), 5)) < 1e-6);
    }
  }
}

TEST_CASE("bi-invariant fiber metric has vanishing covariant derivative") {
  KaluzaKleinOptions opt;
  opt.fiber_metric = Eigen::Vector3d(1, 1, 1);
  const MechanicalSystem sys = builtin_kaluza_klein(default_kaluza_klein_connection(2), opt);
  Vec q = Vec::Zero(5);
  q.head(2) << -0.2, 0.9;
  const GeometryAtPoint g = evaluate_geometry(sys, on_sigma(sys, q));
  CHECK(g.D_gamma.max_abs() < 1e-8);
  // c^m_{sn} gamma^{nk} p_m p_k = 0 for all p
  const Tensor3 c = sys.connection_structure();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (int t = 0; t < 10; ++t) {
    Eigen::Vector3d p(n(rng), n(rng), n(rng));
    const Vec pi = g.gamma_inv * p;
    for (int s = 0; s < 3; ++s) {
      double acc = 0.0;
      for (int m = 0; m < 3; ++m)
        for (int v = 0; v < 3; ++v) acc += c(m, s, v) * pi(v) * p(m);
      CHECK(std::abs(acc) < 1e-14);
    }
  }
}

TEST_CASE("analytic and difference routes agree") {
  std::mt19937_64 rng(5);
  for (const auto& base : {builtin_two_vector_so3(), builtin_system("kaluza_klein")}) {
    CAPTURE(base.name);
    for (int i = 0; i < 3; ++i) {
      const Vec q = base.sampler(rng);
      MechanicalSystem fd = base;
      fd.derivative_mode = DerivativeMode::FiniteDifference;
      const GeometryAtPoint a = evaluate_geometry(base, on_sigma(base, q));
      const GeometryAtPoint b = evaluate_geometry(fd, on_sigma(fd, q));
      CHECK(max_diff(a.F_curv, b.F_curv) < 1e-6 * std::max(1.0, a.F_curv.max_abs()));
      CHECK(max_diff(a.D_gamma, b.D_gamma) < 1e-6 * std::max(1.0, a.D_gamma.max_abs()));
      CHECK(max_diff(a.christoffel_H, b.christoffel_H) < 1e-6 * std::max(1.0, a.christoffel_H.max_abs()));
    }
  }
}

TEST_CASE("identity suite holds at random points") {
  std::mt19937_64 rng(9);
  for (const auto& sys : {builtin_two_vector_so3(), builtin_system("kaluza_klein")}) {
    CAPTURE(sys.name);
    for (int i = 0; i < 20; ++i) {
      const GeometryAtPoint g = evaluate_geometry(sys, on_sigma(sys, sys.sampler(rng)));
      const InvariantReport r = geometry_invariants(sys, g);
      for (const auto& [name, v] : r.entries) {
        CAPTURE(name);
        CHECK(v < 1e-9);
      }
    }
  }
}

TEST_CASE("curvature is antisymmetric at the canonical two-vector point") {
  const Tensor3 F = curvature(builtin_two_vector_so3(), canonical_two_vector());
  double worst = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int e = 0; e < 6; ++e)
      for (int p = 0; p < 6; ++p) worst = std::max(worst, std::abs(F(a, e, p) + F(a, p, e)));
  CHECK(worst < 1e-8);
}

TEST_CASE("geometry rejects invalid points") {
  const MechanicalSystem sys = builtin_two_vector_so3();
  Vec q = canonical_two_vector();
  q(1) = 1e-3;
  CHECK_THROWS_AS(evaluate_geometry(sys, PointOnSigma{q}), NotOnSigma);
  Vec par = Vec::Zero(6);
  par(2) = 1.0;
  par(5) = 2.0;
  CHECK_THROWS_AS(evaluate_geometry(sys, PointOnSigma{par}), SingularFP);
}
