#include "wongreduce/lattice.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

#include "rotation_chart.hpp"
#include "wongreduce/errors.hpp"
#include "wongreduce/linalg.hpp"

namespace wongreduce {

int GaugeLattice::site(int x0, int x1, int x2) const { return (x0 * L + x1) * L + x2; }

std::array<int, 3> GaugeLattice::coords(int s) const { return {s / (L * L), (s / L) % L, s % L}; }

int GaugeLattice::shift(int s, int dir, int step) const {
  auto c = coords(s);
  c[dir] = ((c[dir] + step) % L + L) % L;
  return site(c[0], c[1], c[2]);
}

GaugeLattice make_lattice(int L, double spacing, const LieAlgebra& algebra) {
  if (L < 2 || L > 6) throw Error("lattice size L must lie in [2, 6]");
  if (!(spacing > 0.0)) throw Error("lattice spacing must be positive");
  const int n = algebra.dim();
  if ((algebra.khat() - Mat::Identity(n, n)).cwiseAbs().maxCoeff() > 1e-12)
    throw Error("lattice module requires an algebra with khat = I");
  GaugeLattice lat;
  lat.L = L;
  lat.spacing = spacing;
  lat.algebra = std::make_shared<const LieAlgebra>(algebra);
  return lat;
}

Mat gradient_operator(const GaugeLattice& lat) {
  const int nc = lat.n_color();
  Mat g = Mat::Zero(lat.flat_dim(), lat.gauge_dim());
  for (int x = 0; x < lat.n_sites(); ++x)
    for (int i = 0; i < 3; ++i)
      for (int a = 0; a < nc; ++a) {
        g(lat.flat_index(a, i, x), lat.gauge_index(a, lat.shift(x, i, 1))) += 1.0;
        g(lat.flat_index(a, i, x), lat.gauge_index(a, x)) -= 1.0;
      }
  return g;
}

Mat cov_deriv_operator(const GaugeLattice& lat, const Vec& a) {
  Mat d = gradient_operator(lat);
  for (int x = 0; x < lat.n_sites(); ++x)
    for (int i = 0; i < 3; ++i)
      for (const auto& e : lat.algebra->nonzeros())  // c^a_{nb}: g = a, a = n, b = b
        d(lat.flat_index(e.g, i, x), lat.gauge_index(e.b, x)) += e.value * a(lat.flat_index(e.a, i, x));
  return d;
}

Vec divergence(const GaugeLattice& lat, const Vec& a) {
  const int nc = lat.n_color();
  Vec out = Vec::Zero(lat.gauge_dim());
  for (int x = 0; x < lat.n_sites(); ++x)
    for (int k = 0; k < 3; ++k) {
      const int xm = lat.shift(x, k, -1);
      for (int c = 0; c < nc; ++c) out(lat.gauge_index(c, x)) += a(lat.flat_index(c, k, x)) - a(lat.flat_index(c, k, xm));
    }
  return out;
}

Mat divergence_operator(const GaugeLattice& lat) { return -gradient_operator(lat).transpose(); }

Mat fp_operator(const GaugeLattice& lat, const Vec& a) {
  const Mat d = cov_deriv_operator(lat, a);
  return lat.volume_weight() * (d.transpose() * d);
}

namespace {

constexpr double kGreenCutoff = 1e-10;

GreenFunction green_from(const Mat& gamma) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (gamma + gamma.transpose()));
  const Vec& ev = es.eigenvalues();
  const double lmax = ev.maxCoeff();
  GreenFunction g;
  g.inverse = Mat::Zero(gamma.rows(), gamma.cols());
  double lmin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < ev.size(); ++i) {
    if (ev(i) <= kGreenCutoff * lmax) {
      ++g.kernel_dim;
      continue;
    }
    lmin = std::min(lmin, ev(i));
    g.inverse += es.eigenvectors().col(i) * (1.0 / ev(i)) * es.eigenvectors().col(i).transpose();
  }
  g.condition = lmax / lmin;
  if (!(g.condition < 1e12)) throw IllConditioned("FP operator is ill-conditioned on its range", g.condition);
  return g;
}

}  // namespace

GreenFunction green_function(const GaugeLattice& lat, const Vec& a) { return green_from(fp_operator(lat, a)); }

Mat coulomb_connection(const GaugeLattice& lat, const Vec& a) {
  const Mat d = cov_deriv_operator(lat, a);
  return green_from(lat.volume_weight() * (d.transpose() * d)).inverse * d.transpose() * lat.volume_weight();
}

GaugeField coulomb_project(const GaugeLattice& lat, const Vec& a_raw) {
  if (a_raw.size() != lat.flat_dim()) throw Error("field has wrong dimension");
  const int n = lat.n_sites(), nc = lat.n_color(), L = lat.L;
  // b = d^T A = -div A, then solve (d^T d) phi = b in Fourier space.
  const Vec b = -divergence(lat, a_raw);
  using cplx = std::complex<double>;
  const double two_pi = 2.0 * std::numbers::pi / L;
  std::vector<double> lambda(n);
  for (int k = 0; k < n; ++k) {
    const auto kc = lat.coords(k);
    double l = 0.0;
    for (int i = 0; i < 3; ++i) l += 2.0 - 2.0 * std::cos(two_pi * kc[i]);
    lambda[k] = l;
  }
  auto phase = [&](int k, int x) {
    const auto kc = lat.coords(k), xc = lat.coords(x);
    return two_pi * (kc[0] * xc[0] + kc[1] * xc[1] + kc[2] * xc[2]);
  };
  Vec phi = Vec::Zero(lat.gauge_dim());
  for (int c = 0; c < nc; ++c) {
    std::vector<cplx> hat(n);
    for (int k = 0; k < n; ++k) {
      cplx acc = 0.0;
      for (int x = 0; x < n; ++x) acc += b(lat.gauge_index(c, x)) * std::polar(1.0, -phase(k, x));
      hat[k] = lambda[k] > 1e-12 ? acc / lambda[k] : 0.0;
    }
    for (int x = 0; x < n; ++x) {
      cplx acc = 0.0;
      for (int k = 0; k < n; ++k) acc += hat[k] * std::polar(1.0, phase(k, x));
      phi(lat.gauge_index(c, x)) = acc.real() / n;
    }
  }
  GaugeField out{lat, a_raw - gradient_operator(lat) * phi, true};
  return out;
}

namespace {

constexpr int kPairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};

}  // namespace

Vec field_strength(const GaugeLattice& lat, const Vec& a) {
  const int nc = lat.n_color();
  Vec f = Vec::Zero(lat.flat_dim());
  for (int x = 0; x < lat.n_sites(); ++x)
    for (int p = 0; p < 3; ++p) {
      const int i = kPairs[p][0], j = kPairs[p][1];
      const int xi = lat.shift(x, i, 1), xj = lat.shift(x, j, 1);
      for (int c = 0; c < nc; ++c)
        f(lat.flat_index(c, p, x)) = a(lat.flat_index(c, j, xi)) - a(lat.flat_index(c, j, x)) -
                                     a(lat.flat_index(c, i, xj)) + a(lat.flat_index(c, i, x));
      for (const auto& e : lat.algebra->nonzeros())
        f(lat.flat_index(e.g, p, x)) += e.value * a(lat.flat_index(e.a, i, x)) * a(lat.flat_index(e.b, j, x));
    }
  return f;
}

std::pair<double, Vec> potential_and_gradient(const GaugeLattice& lat, const Vec& a) {
  const int nc = lat.n_color();
  const double w = lat.volume_weight();
  const Vec f = field_strength(lat, a);
  const double v = w * f.squaredNorm();
  // grad_j(x) = 2 w sum_i (-(F_ij(x) - F_ij(x - e_i)) - [A_i, F_ij](x)), with F_ji = -F_ij.
  Vec g = Vec::Zero(lat.flat_dim());
  auto F = [&](int c, int i, int j, int x) -> double {
    if (i == j) return 0.0;
    for (int p = 0; p < 3; ++p) {
      if (kPairs[p][0] == i && kPairs[p][1] == j) return f(lat.flat_index(c, p, x));
      if (kPairs[p][0] == j && kPairs[p][1] == i) return -f(lat.flat_index(c, p, x));
    }
    return 0.0;
  };
  for (int x = 0; x < lat.n_sites(); ++x)
    for (int j = 0; j < 3; ++j)
      for (int i = 0; i < 3; ++i) {
        if (i == j) continue;
        const int xm = lat.shift(x, i, -1);
        for (int c = 0; c < nc; ++c) g(lat.flat_index(c, j, x)) -= F(c, i, j, x) - F(c, i, j, xm);
        for (const auto& e : lat.algebra->nonzeros())
          g(lat.flat_index(e.g, j, x)) -= e.value * a(lat.flat_index(e.a, i, x)) * F(e.b, i, j, x);
      }
  g *= 2.0 * w;
  return {v, g};
}

// ------------------------------------------------------------------ operators

LatticeOperators lattice_operators(const GaugeLattice& lat, const Vec& a) {
  if (a.size() != lat.flat_dim()) throw Error("field has wrong dimension");
  LatticeOperators ops;
  ops.lat = &lat;
  ops.a = a;
  ops.D = cov_deriv_operator(lat, a);
  const GreenFunction g = green_from(ops.D.transpose() * ops.D);
  ops.gamma0_inv = g.inverse;
  ops.kernel_dim = g.kernel_dim;
  ops.condition = g.condition;
  const Mat phi = divergence_operator(lat) * ops.D;
  const PseudoInverse pi = pseudo_inverse(phi, lat.n_color(), 0.0);
  if (!(pi.condition < 1e12)) throw IllConditioned("lattice Faddeev-Popov matrix is singular", pi.condition);
  ops.phi_inv = pi.inverse;
  return ops;
}

Vec LatticeOperators::apply_J(const Vec& v) const { return divergence(*lat, v); }

Vec LatticeOperators::apply_Jt(const Vec& w) const {
  const int nc = lat->n_color();
  Vec out = Vec::Zero(lat->flat_dim());
  for (int x = 0; x < lat->n_sites(); ++x)
    for (int i = 0; i < 3; ++i)
      for (int c = 0; c < nc; ++c)
        out(lat->flat_index(c, i, x)) = w(lat->gauge_index(c, x)) - w(lat->gauge_index(c, lat->shift(x, i, 1)));
  return out;
}

Vec LatticeOperators::apply_Pi(const Vec& v) const { return v - D * (gamma0_inv * (D.transpose() * v)); }
Vec LatticeOperators::apply_N(const Vec& v) const { return v - D * (phi_inv * apply_J(v)); }
Vec LatticeOperators::apply_Nt(const Vec& v) const { return v - apply_Jt(phi_inv.transpose() * (D.transpose() * v)); }

Vec LatticeOperators::C(const Vec& u, const Vec& w) const {
  Vec out = Vec::Zero(lat->flat_dim());
  for (int x = 0; x < lat->n_sites(); ++x)
    for (int i = 0; i < 3; ++i)
      for (const auto& e : lat->algebra->nonzeros())
        out(lat->flat_index(e.g, i, x)) += e.value * u(lat->flat_index(e.a, i, x)) * w(lat->gauge_index(e.b, x));
  return out;
}

Vec LatticeOperators::Ct(const Vec& u, const Vec& v) const {
  Vec out = Vec::Zero(lat->gauge_dim());
  for (int x = 0; x < lat->n_sites(); ++x)
    for (int i = 0; i < 3; ++i)
      for (const auto& e : lat->algebra->nonzeros())
        out(lat->gauge_index(e.b, x)) += e.value * u(lat->flat_index(e.a, i, x)) * v(lat->flat_index(e.g, i, x));
  return out;
}

Vec LatticeOperators::B(const Vec& v, const Vec& w) const {
  Vec out = Vec::Zero(lat->flat_dim());
  for (int x = 0; x < lat->n_sites(); ++x)
    for (int i = 0; i < 3; ++i)
      for (const auto& e : lat->algebra->nonzeros())
        out(lat->flat_index(e.a, i, x)) += e.value * v(lat->flat_index(e.g, i, x)) * w(lat->gauge_index(e.b, x));
  return out;
}

Vec LatticeOperators::coadjoint(const Vec& u, const Vec& p) const {
  Vec out = Vec::Zero(lat->gauge_dim());
  for (int x = 0; x < lat->n_sites(); ++x)
    for (const auto& e : lat->algebra->nonzeros())  // c^k_{ms}: g = k, a = m, b = s
      out(lat->gauge_index(e.b, x)) += e.value * u(lat->gauge_index(e.a, x)) * p(lat->gauge_index(e.g, x));
  return out;
}

// ------------------------------------------------------------------ YM terms

namespace {

struct Common {
  Vec w;    // A qdot = gamma0^+ D^T qdot
  Vec pi0;  // gamma0^+ p
};

Common common(const LatticeOperators& ops, const Vec& a_dot, const Vec& p) {
  return {ops.gamma0_inv * (ops.D.transpose() * a_dot), ops.gamma0_inv * p};
}

// y_s = c^m_{sn} pi0^n p_m
Vec y_term(const LatticeOperators& ops, const Vec& pi0, const Vec& p) {
  const GaugeLattice& lat = *ops.lat;
  Vec out = Vec::Zero(lat.gauge_dim());
  for (int x = 0; x < lat.n_sites(); ++x)
    for (const auto& e : lat.algebra->nonzeros())  // c^m_{sn}: g = m, a = s, b = n
      out(lat.gauge_index(e.a, x)) += e.value * pi0(lat.gauge_index(e.b, x)) * p(lat.gauge_index(e.g, x));
  return out;
}

}  // namespace

Vec ym_curvature_term1(const LatticeOperators& ops, const Vec& a_dot, const Vec& p) {
  const Common c = common(ops, a_dot, p);
  return -ops.D * (ops.gamma0_inv * ops.Ct(a_dot, ops.D * c.pi0));
}

Vec ym_curvature_term2(const LatticeOperators& ops, const Vec& a_dot, const Vec& p) {
  const Common c = common(ops, a_dot, p);
  return -ops.D * (ops.gamma0_inv * (ops.D.transpose() * ops.C(a_dot, c.pi0)));
}

Vec ym_curvature_term3(const LatticeOperators& ops, const Vec& a_dot, const Vec& p) {
  const Common c = common(ops, a_dot, p);
  return ops.C(a_dot, c.pi0) - ops.B(a_dot, c.pi0);
}

Vec ym_curvature_term4(const LatticeOperators& ops, const Vec& a_dot, const Vec& p) {
  const Common c = common(ops, a_dot, p);
  return ops.B(ops.D * c.w, c.pi0);
}

Vec ym_curvature_term5(const LatticeOperators& ops, const Vec& a_dot, const Vec& p) {
  const Common c = common(ops, a_dot, p);
  return ops.B(ops.D * c.pi0, c.w);
}

Vec ym_curvature_term6(const LatticeOperators& ops, const Vec& a_dot, const Vec& p) {
  const Common c = common(ops, a_dot, p);
  return ops.D * (ops.gamma0_inv * ops.coadjoint(c.w, p));
}

Vec ym_christoffel_term(const LatticeOperators& ops, const Vec& a_dot) {
  const Vec w = ops.gamma0_inv * (ops.D.transpose() * a_dot);
  const Vec h = a_dot - ops.D * w;
  const Vec gamma = -ops.apply_Pi(ops.C(a_dot, w)) - ops.D * (ops.gamma0_inv * ops.Ct(a_dot, h)) + ops.B(h, w);
  return ops.apply_N(ops.apply_Pi(gamma));
}

Vec ym_p_quadratic_term(const LatticeOperators& ops, const Vec& p) {
  const double g0 = ops.lat->volume_weight();
  const Vec pi0 = ops.gamma0_inv * p;
  const Vec y = y_term(ops, pi0, p);
  return ops.apply_Nt(-ops.B(ops.D * pi0, pi0) + ops.D * (ops.gamma0_inv * y)) / (g0 * g0);
}

YmTerms ym_terms(const LatticeOperators& ops, const Vec& a_dot, const Vec& p) {
  YmTerms t;
  t.christoffel = ym_christoffel_term(ops, a_dot);
  t.curvature = {ym_curvature_term1(ops, a_dot, p), ym_curvature_term2(ops, a_dot, p),
                 ym_curvature_term3(ops, a_dot, p), ym_curvature_term4(ops, a_dot, p),
                 ym_curvature_term5(ops, a_dot, p), ym_curvature_term6(ops, a_dot, p)};
  t.p_quadratic = ym_p_quadratic_term(ops, p);
  t.potential_gradient = potential_and_gradient(*ops.lat, ops.a).second;
  return t;
}

WongRates ym_rhs(const LatticeOperators& ops, const Vec& a_dot, const Vec& p) {
  const GaugeLattice& lat = *ops.lat;
  if (a_dot.size() != lat.flat_dim() || p.size() != lat.gauge_dim()) throw Error("state has wrong dimensions");
  const double g0 = lat.volume_weight();
  const YmTerms t = ym_terms(ops, a_dot, p);
  Vec f = Vec::Zero(lat.flat_dim());
  for (const Vec& term : t.curvature) f += term;
  WongRates r;
  r.q_ddot = ops.apply_N(-t.christoffel - ops.apply_Nt(f) / g0 - t.p_quadratic - t.potential_gradient / g0);
  const Common c = common(ops, a_dot, p);
  r.p_dot = ops.coadjoint(c.w, p) + y_term(ops, c.pi0, p) / g0;
  return r;
}

WongRates ym_rhs(const GaugeLattice& lat, const Vec& a, const Vec& a_dot, const Vec& p) {
  return ym_rhs(lattice_operators(lat, a), a_dot, p);
}

double ym_energy(const GaugeLattice& lat, const Vec& a, const Vec& a_dot, const Vec& p) {
  const LatticeOperators ops = lattice_operators(lat, a);
  const double g0 = lat.volume_weight();
  return 0.5 * g0 * a_dot.dot(ops.apply_Pi(a_dot)) + 0.5 * p.dot(ops.gamma0_inv * p) / g0 +
         potential_and_gradient(lat, a).first;
}

YmResiduals ym_equilibrium_residuals(const GaugeLattice& lat, const Vec& a, const Vec& p) {
  const LatticeOperators ops = lattice_operators(lat, a);
  const double g0 = lat.volume_weight();
  YmResiduals r;
  r.horizontal = ops.apply_N(ym_p_quadratic_term(ops, p) + potential_and_gradient(lat, a).second / g0);
  r.vertical = y_term(ops, ops.gamma0_inv * p, p) / g0;
  return r;
}

namespace {

std::vector<EigenPair> eigen_from(const LatticeOperators& ops) {
  const GaugeLattice& lat = *ops.lat;
  const double g0 = lat.volume_weight();
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (ops.gamma0_inv + ops.gamma0_inv.transpose()) / g0);
  const int n = lat.gauge_dim();
  std::vector<std::pair<double, int>> order;
  for (int i = 0; i < n; ++i) order.push_back({std::abs(es.eigenvalues()(i)), i});
  std::sort(order.begin(), order.end());
  std::vector<EigenPair> out;
  for (int k = ops.kernel_dim; k < n; ++k) {  // skip the kernel, which has the smallest |mu|
    const int i = order[k].second;
    Vec e = es.eigenvectors().col(i);
    Eigen::Index m;
    e.cwiseAbs().maxCoeff(&m);
    if (e(m) < 0) e = -e;
    out.push_back({-lat.algebra->kk_scale() * es.eigenvalues()(i), e});
  }
  std::stable_sort(out.begin(), out.end(), [](const EigenPair& a, const EigenPair& b) { return a.lambda < b.lambda; });
  return out;
}

}  // namespace

std::vector<EigenPair> ym_momentum_eigenproblem(const GaugeLattice& lat, const Vec& a) {
  return eigen_from(lattice_operators(lat, a));
}

// ---------------------------------------------------------------- equilibrium

namespace {

// Eigenvector at `index` best aligned with `ref`, allowing for near-degenerate neighbours.
double tracked_vector(const std::vector<EigenPair>& pairs, int index, const Vec& ref, Vec& e, double& lambda) {
  const int n = static_cast<int>(pairs.size());
  auto close = [&](int i, int j) {
    return std::abs(pairs[i].lambda - pairs[j].lambda) <= 1e-6 * std::max(1.0, std::abs(pairs[i].lambda));
  };
  int a = index, b = index;
  while (a > 0 && close(a - 1, a)) --a;
  while (b < n - 1 && close(b + 1, b)) ++b;
  Vec proj = Vec::Zero(ref.size());
  for (int j = a; j <= b; ++j) proj += pairs[j].e.dot(ref) * pairs[j].e;
  const double ov = proj.norm();
  e = ov > 0 ? Vec(proj / ov) : pairs[index].e;
  lambda = pairs[index].lambda;
  return ov;
}

}  // namespace

LatticeEquilibrium ym_attempt_equilibrium(const GaugeLattice& lat, const Vec& a_guess, int eigen_index,
                                          double scale_guess, const EquilibriumOptions& opt) {
  const int nf = lat.flat_dim(), ng = lat.gauge_dim();
  Vec a0 = divergence(lat, a_guess).cwiseAbs().maxCoeff() < 1e-12 ? a_guess : coulomb_project(lat, a_guess).a;
  const auto pairs0 = ym_momentum_eigenproblem(lat, a0);
  if (eigen_index < 0 || eigen_index >= static_cast<int>(pairs0.size())) throw Error("eigen_index out of range");
  Vec ref = pairs0[eigen_index].e;

  auto residual = [&](const Vec& x, const Vec& reference, Vec* e_out, double* l_out) -> Vec {
    const Vec a = x.head(nf);
    const LatticeOperators ops = lattice_operators(lat, a);
    Vec e;
    double lambda;
    const double ov = tracked_vector(eigen_from(ops), eigen_index, reference, e, lambda);
    if (ov < opt.min_overlap && x(nf) != 0.0) throw EigenCrossing("tracked Green-function eigenvector crossed", ov);
    if (e_out) *e_out = e;
    if (l_out) *l_out = lambda;
    const Vec p = x(nf) * e;
    Vec r(nf + ng);
    r.head(nf) = ops.apply_N(ym_p_quadratic_term(ops, p) + potential_and_gradient(lat, a).second / lat.volume_weight());
    r.tail(ng) = divergence(lat, a);
    return r;
  };

  Vec x(nf + 1);
  x << a0, scale_guess;
  Vec e;
  double lambda;
  Vec r = residual(x, ref, &e, &lambda);
  ref = e;
  double rn = r.norm();
  LatticeEquilibrium out;
  out.residual_history.push_back(rn);
  double mu = 1e-3;
  int it = 0;
  for (; it < opt.max_iterations && rn >= opt.tolerance; ++it) {
    Mat Jm(nf + ng, nf + 1);
    for (int i = 0; i <= nf; ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(x(i)));
      Vec xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      Jm.col(i) = (residual(xp, ref, nullptr, nullptr) - residual(xm, ref, nullptr, nullptr)) / (2 * h);
    }
    const Mat JtJ = Jm.transpose() * Jm;
    const Vec g = Jm.transpose() * r;
    bool accepted = false;
    double crossing = -1.0;
    for (int tries = 0; tries < 30 && !accepted; ++tries) {
      Mat A = JtJ;
      A.diagonal().array() += mu * (1.0 + JtJ.diagonal().array());
      Vec xn = x - A.ldlt().solve(g);
      xn.head(nf) = coulomb_project(lat, xn.head(nf)).a;
      try {
        Vec en;
        double ln;
        const Vec rv = residual(xn, ref, &en, &ln);
        if (rv.norm() < rn) {
          x = xn;
          r = rv;
          rn = rv.norm();
          ref = en;
          lambda = ln;
          mu = std::max(mu / 3.0, 1e-12);
          accepted = true;
        } else {
          mu *= 4.0;
        }
      } catch (const EigenCrossing& ex) {
        crossing = ex.overlap();
        mu *= 4.0;
      } catch (const Error&) {
        mu *= 4.0;
      }
    }
    if (!accepted) {
      if (crossing >= 0.0) throw EigenCrossing("tracked Green-function eigenvector crossed", crossing);
      break;
    }
    out.residual_history.push_back(rn);
  }
  out.iterations = it;
  out.a = x.head(nf);
  out.scale = x(nf);
  out.p = out.scale * ref;
  out.lambda = lambda;
  const YmResiduals res = ym_equilibrium_residuals(lat, out.a, out.p);
  out.residual_h = res.horizontal.norm();
  out.residual_v = res.vertical.norm();
  out.converged = rn < opt.tolerance;
  return out;
}

LatticeEquilibrium ym_solve_equilibrium(const GaugeLattice& lat, const Vec& a_guess, int eigen_index,
                                        double scale_guess, const EquilibriumOptions& opt) {
  LatticeEquilibrium r = ym_attempt_equilibrium(lat, a_guess, eigen_index, scale_guess, opt);
  if (!r.converged)
    throw NoConvergence("lattice equilibrium solve did not converge", r.iterations, r.residual_history.back());
  return r;
}

// ---------------------------------------------------------------- integration

LatticeTrajectory ym_integrate(const GaugeLattice& lat, const LatticeState& s0, const IntegrateOptions& opt) {
  if (!(opt.dt > 0.0)) throw Error("dt must be positive");
  if (opt.sample_every < 1) throw Error("sample_every must be positive");
  LatticeTrajectory tr;
  auto record = [&](const LatticeState& s) {
    tr.samples.push_back(s);
    tr.energy.push_back(ym_energy(lat, s.a, s.a_dot, s.p));
    tr.divergence.push_back(divergence(lat, s.a).cwiseAbs().maxCoeff());
  };
  LatticeState s = s0;
  record(s);
  const long steps = std::lround((opt.t_end - s0.t) / opt.dt);
  const double dt = opt.dt;
  struct D3 {
    Vec a, ad, p;
  };
  auto f = [&](const Vec& a, const Vec& ad, const Vec& p) -> D3 {
    const WongRates r = ym_rhs(lat, a, ad, p);
    return {ad, r.q_ddot, r.p_dot};
  };
  for (long i = 1; i <= steps; ++i) {
    const double t = s0.t + i * dt;
    D3 k1, k2, k3, k4;
    try {
      k1 = f(s.a, s.a_dot, s.p);
      k2 = f(s.a + 0.5 * dt * k1.a, s.a_dot + 0.5 * dt * k1.ad, s.p + 0.5 * dt * k1.p);
      k3 = f(s.a + 0.5 * dt * k2.a, s.a_dot + 0.5 * dt * k2.ad, s.p + 0.5 * dt * k2.p);
      k4 = f(s.a + dt * k3.a, s.a_dot + dt * k3.ad, s.p + dt * k3.p);
    } catch (const Error& e) {
      throw StepFailure(std::string("lattice step failed: ") + e.what(), s.t);
    }
    Vec a = s.a + dt / 6.0 * (k1.a + 2 * k2.a + 2 * k3.a + k4.a);
    Vec ad = s.a_dot + dt / 6.0 * (k1.ad + 2 * k2.ad + 2 * k3.ad + k4.ad);
    Vec p = s.p + dt / 6.0 * (k1.p + 2 * k2.p + 2 * k3.p + k4.p);
    if (!a.allFinite() || !ad.allFinite() || !p.allFinite()) throw StepFailure("non-finite lattice state", t);
    if (std::max({a.cwiseAbs().maxCoeff(), ad.cwiseAbs().maxCoeff(), p.cwiseAbs().maxCoeff()}) > opt.blow_up)
      throw BlowUp("lattice state exceeded the blow-up bound", t);
    if (divergence(lat, a).cwiseAbs().maxCoeff() > 1e-13) a = coulomb_project(lat, a).a;
    ad = lattice_operators(lat, a).apply_N(ad);
    s = LatticeState{a, ad, p, t};
    if (i % opt.sample_every == 0 || i == steps) record(s);
  }
  return tr;
}

// ------------------------------------------------------------- generic system

MechanicalSystem lattice_system(const GaugeLattice& lat) {
  if (lat.L > 3) throw Error("the generic lattice system is only built for L <= 3");
  const int nf = lat.flat_dim(), ng = lat.gauge_dim(), nc = lat.n_color();
  const double w = lat.volume_weight();
  MechanicalSystem s;
  s.name = "lattice_L" + std::to_string(lat.L);
  s.n_p = nf;
  s.algebra = std::make_shared<const LieAlgebra>(direct_sum(*lat.algebra, lat.n_sites()));
  s.bracket_sign = 1;
  s.metric = [nf, w](const Vec&) -> Mat { return w * Mat::Identity(nf, nf); };
  s.metric_derivative = [nf](const Vec&, int) -> Mat { return Mat::Zero(nf, nf); };
  s.killing = [lat](const Vec& a) -> Mat { return cov_deriv_operator(lat, a); };
  s.killing_derivative = [lat, nf, ng, nc](const Vec&, int e) -> Mat {
    Mat d = Mat::Zero(nf, ng);
    const int n = e % nc, i = (e / nc) % 3, x = e / (3 * nc);
    for (const auto& t : lat.algebra->nonzeros())
      if (t.a == n) d(lat.flat_index(t.g, i, x), lat.gauge_index(t.b, x)) += t.value;
    return d;
  };
  s.constraint = [lat](const Vec& a) -> Vec { return divergence(lat, a); };
  const Mat jac = divergence_operator(lat);
  s.constraint_jacobian = [jac](const Vec&) -> Mat { return jac; };
  s.constraint_is_linear = true;
  s.potential = [lat](const Vec& a) { return potential_and_gradient(lat, a).first; };
  s.potential_gradient = [lat](const Vec& a) -> Vec { return potential_and_gradient(lat, a).second; };
  s.sampler = [lat](std::mt19937_64& rng) -> Vec { return random_coulomb_field(lat, 0.3, rng); };
  s.residual_symmetry_dim = nc;
  return s;
}

Vec rotate_field_globally(const GaugeLattice& lat, const Vec& a, const Eigen::Vector3d& xi) {
  if (lat.n_color() != 3) throw Error("global rotations are implemented for three colors");
  const rot::M3 r = rot::exp(xi);
  Vec out = a;
  for (int k = 0; k < a.size() / 3; ++k) out.segment<3>(3 * k) = r * a.segment<3>(3 * k);
  return out;
}

Vec random_coulomb_field(const GaugeLattice& lat, double amplitude, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  Vec a(lat.flat_dim());
  for (int i = 0; i < a.size(); ++i) a(i) = u(rng);
  return coulomb_project(lat, a).a;
}

}  // namespace wongreduce
